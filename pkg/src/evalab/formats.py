"""JSON file formats for distributions, families, tests, bundles, configs and reports.

Every document carries ``schema_version``. ``+inf`` is written as the string
``"inf"`` (JSON has no infinity) and read back as ``math.inf``. Floats are
written with ``repr`` precision, so writing and re-reading is lossless.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import re
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .constructions import AnalyticFact, ConstructionBundle, build, verify_bundle
from .distributions import Dataset, DiscreteDistribution, make_distribution, uniform
from .errors import InvalidInput, InvalidParameters
from .experiments import (
    Comparison,
    Estimand,
    Fixed,
    MetricSpec,
    TrialConfig,
    TrialReport,
    UniformOver,
)
from .families import (
    FunctionFamily,
    all_binary_family,
    no_taxonomy_family,
    singleton_family,
    small_subsets_family,
    threshold_family,
)
from .scores import NLL, Coverage, EmpiricalIPM, FixedTest, ScheffeIPM, TestFunction

SCHEMA_VERSION = 1
_NO_DECODE = {"labels", "points", "domain_labels", "args"}


class FormatError(InvalidInput):
    pass


# -- low level -----------------------------------------------------------------


def encode_floats(obj: Any) -> Any:
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            raise FormatError("NaN cannot be serialized")
        return obj
    if isinstance(obj, dict):
        return {k: encode_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [encode_floats(v) for v in obj]
    return obj


def decode_floats(obj: Any, key: str | None = None) -> Any:
    if key in _NO_DECODE:
        return obj
    if obj == "inf":
        return math.inf
    if obj == "-inf":
        return -math.inf
    if isinstance(obj, dict):
        return {k: decode_floats(v, k) for k, v in obj.items()}
    if isinstance(obj, list):
        return [decode_floats(v) for v in obj]
    return obj


def dumps(doc: dict) -> str:
    return json.dumps(encode_floats(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: str | Path, doc: dict) -> None:
    Path(path).write_text(dumps(doc), encoding="utf-8")


def read_json(path: str | Path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from None
    return loads(text, source=str(path))


def loads(text: str, source: str = "<string>") -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{source}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{source}: expected a JSON object")
    return decode_floats(doc)


def sha256_of(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _need(doc: dict, key: str, where: str):
    if key not in doc:
        raise FormatError(f"{where}: missing field {key!r}")
    return doc[key]


# -- distributions, samples, tests, families -------------------------------------


def distribution_to_dict(d: DiscreteDistribution) -> dict:
    return {"schema_version": SCHEMA_VERSION, "labels": list(d.domain_labels), "probs": [float(p) for p in d.probs]}


def distribution_from_dict(doc: dict) -> DiscreteDistribution:
    return make_distribution(
        [str(x) for x in _need(doc, "labels", "distribution")],
        _need(doc, "probs", "distribution"),
        renormalize=False,
    )


def dataset_to_dict(S: Dataset) -> dict:
    return {"schema_version": SCHEMA_VERSION, "labels": list(S.domain_labels), "points": list(S.points)}


def dataset_from_dict(doc: dict, domain=None) -> Dataset:
    labels = doc.get("labels", domain)
    if labels is None:
        raise FormatError("sample: no 'labels' and no domain to resolve points against")
    return Dataset.from_points([str(p) for p in _need(doc, "points", "sample")], [str(x) for x in labels])


def test_function_to_dict(g: TestFunction) -> dict:
    return {"schema_version": SCHEMA_VERSION, "labels": list(g.domain_labels), "values": [float(v) for v in g.values]}


def test_function_from_dict(doc: dict) -> TestFunction:
    return TestFunction.from_values(
        [str(x) for x in _need(doc, "labels", "test function")], _need(doc, "values", "test function")
    )


def family_to_dict(F: FunctionFamily) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "labels": list(F.domain_labels),
        "rows": [[float(v) for v in row] for row in F.values],
    }


def family_from_dict(doc: dict) -> FunctionFamily:
    return FunctionFamily.from_rows(
        [str(x) for x in _need(doc, "labels", "family")], _need(doc, "rows", "family")
    )


_BUILTIN = re.compile(r"^(all_binary|threshold|singleton|small_subsets|no_taxonomy)((?:_\d+)+)$")


def builtin_family(name: str, labels=None) -> FunctionFamily:
    """Families by name: ``all_binary_4``, ``threshold_5``, ``singleton_3``,
    ``small_subsets_64_3`` (subsets of size <= 3 on 64 points) or ``no_taxonomy_2_3``.

    When ``labels`` is given the trailing point count may be omitted
    (``all_binary``) and the family is built over those labels.
    """
    m = _BUILTIN.match(name) if re.search(r"\d$", name) else None
    base, nums = (m.group(1), [int(x) for x in m.group(2).split("_")[1:]]) if m else (name, [])
    if base == "no_taxonomy":
        if len(nums) != 2:
            raise FormatError("no_taxonomy needs k and n_k, e.g. no_taxonomy_2_3")
        return no_taxonomy_family(*nums)
    if base == "small_subsets":
        if labels is not None and len(nums) == 1:
            return small_subsets_family(labels, nums[0])
        if len(nums) != 2:
            raise FormatError("small_subsets needs a point count and a size, e.g. small_subsets_64_3")
        return small_subsets_family([f"x{i}" for i in range(nums[0])], nums[1])
    builders = {"all_binary": all_binary_family, "threshold": threshold_family, "singleton": singleton_family}
    if base not in builders:
        raise FormatError(f"unknown builtin family {name!r}")
    if nums:
        if len(nums) != 1:
            raise FormatError(f"malformed builtin family {name!r}")
        if labels is not None and len(labels) != nums[0]:
            raise FormatError(f"{name} has {nums[0]} points but the domain has {len(labels)}")
        labels = labels if labels is not None else [f"x{i}" for i in range(nums[0])]
    elif labels is None:
        raise FormatError(f"builtin family {name!r} needs a point count")
    return builders[base](labels)


def resolve_family(ref: Any, base: Path, labels=None) -> FunctionFamily:
    if isinstance(ref, str):
        path = base / ref
        if path.is_file():
            return family_from_dict(read_json(path))
        return builtin_family(ref, labels)
    if isinstance(ref, dict):
        if "file" in ref:
            return family_from_dict(read_json(base / ref["file"]))
        if "builtin" in ref:
            return builtin_family(ref["builtin"], ref.get("labels", labels))
        return family_from_dict(ref)
    raise FormatError(f"cannot interpret family reference {ref!r}")


def resolve_test_function(ref: Any, base: Path) -> TestFunction:
    if isinstance(ref, str):
        return test_function_from_dict(read_json(base / ref))
    if isinstance(ref, dict):
        if "file" in ref:
            return test_function_from_dict(read_json(base / ref["file"]))
        return test_function_from_dict(ref)
    raise FormatError(f"cannot interpret test function reference {ref!r}")


_UNIFORM = re.compile(r"^u(\d+)$")


def load_distribution(ref: str | Path) -> DiscreteDistribution:
    """A distribution file, or the builtin ``uN`` (uniform on ``x0..x{N-1}``)."""
    path = Path(ref)
    if not path.is_file():
        m = _UNIFORM.match(str(ref))
        if m:
            return uniform([f"x{i}" for i in range(int(m.group(1)))])
    doc = read_json(path)
    if "probs" not in doc and "distributions" in doc:
        raise FormatError(f"{ref} is a construction bundle; pass a single distribution")
    return distribution_from_dict(doc)


# -- construction bundles ----------------------------------------------------------


def bundle_to_dict(b: ConstructionBundle) -> dict:
    checks = verify_bundle(b)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "construction_bundle",
        "recipe": b.recipe,
        "parameters": dict(b.parameters),
        "distributions": {
            role: {"labels": list(d.domain_labels), "probs": [float(p) for p in d.probs]}
            for role, d in b.distributions.items()
        },
        "facts": [
            {
                "quantity": c.fact.quantity,
                "args": list(c.fact.args),
                "params": dict(c.fact.params),
                "kind": c.fact.kind,
                "value": c.fact.value,
                "computed": c.computed,
                "holds": c.ok,
                "statement": c.fact.describe(),
            }
            for c in checks
        ],
    }
    if b.test_function is not None:
        doc["test_function"] = {
            "labels": list(b.test_function.domain_labels),
            "values": [float(v) for v in b.test_function.values],
        }
    return doc


def bundle_from_dict(doc: dict, verify: bool = True) -> ConstructionBundle:
    dists = {
        role: distribution_from_dict(d) for role, d in _need(doc, "distributions", "bundle").items()
    }
    g = test_function_from_dict(doc["test_function"]) if "test_function" in doc else None
    facts = tuple(
        AnalyticFact(f["quantity"], tuple(f["args"]), f["value"], f["kind"], dict(f.get("params", {})))
        for f in _need(doc, "facts", "bundle")
    )
    b = ConstructionBundle(doc.get("recipe", "custom"), dists, dict(doc.get("parameters", {})), facts, g)
    if verify:
        bad = [c for c in verify_bundle(b) if not c.ok]
        if bad:
            lines = "; ".join(f"{c.fact.describe()} (computed {c.computed!r})" for c in bad)
            raise FormatError(f"bundle facts do not re-verify: {lines}")
    return b


def load_bundle(path: str | Path) -> ConstructionBundle:
    return bundle_from_dict(read_json(path))


# -- experiment configs --------------------------------------------------------------


def resolve_distribution(ref: Any, base: Path, cache: dict) -> DiscreteDistribution:
    """Inline ``{labels, probs}``, ``{file}``, ``{bundle, role}`` or ``{recipe, params, role}``."""
    if isinstance(ref, str):
        return load_distribution(base / ref if (base / ref).is_file() else ref)
    if not isinstance(ref, dict):
        raise FormatError(f"cannot interpret distribution reference {ref!r}")
    if "probs" in ref:
        return distribution_from_dict(ref)
    if "file" in ref:
        return load_distribution(base / ref["file"])
    if "role" in ref:
        if "bundle" in ref:
            key = ("bundle", str(base / ref["bundle"]))
            if key not in cache:
                cache[key] = load_bundle(base / ref["bundle"])
        elif "recipe" in ref:
            key = ("recipe", ref["recipe"], json.dumps(ref.get("params", {}), sort_keys=True))
            if key not in cache:
                cache[key] = build(ref["recipe"], dict(ref.get("params", {})))
        else:
            raise FormatError("a 'role' reference needs 'bundle' or 'recipe'")
        bundle = cache[key]
        if ref["role"] not in bundle.distributions:
            raise FormatError(f"bundle has no role {ref['role']!r}; roles: {sorted(bundle.distributions)}")
        return bundle.distributions[ref["role"]]
    raise FormatError(f"cannot interpret distribution reference {ref!r}")


def metric_from_dict(doc: dict, base: Path, labels=None) -> MetricSpec:
    kind = _need(doc, "kind", "metric")
    kw = {}
    for k in ("alpha", "N", "beta"):
        if k in doc:
            kw[k] = float(doc[k])
    if "family" in doc:
        kw["family"] = resolve_family(doc["family"], base, labels)
    if "g" in doc:
        kw["g"] = resolve_test_function(doc["g"], base)
    return MetricSpec(kind, **kw)


def metric_to_dict(mt: MetricSpec) -> dict:
    doc = {"kind": mt.kind}
    for k in ("alpha", "N", "beta"):
        v = getattr(mt, k)
        if v is not None:
            doc[k] = v
    if mt.family is not None:
        doc["family"] = {k: v for k, v in family_to_dict(mt.family).items() if k != "schema_version"}
    if mt.g is not None:
        doc["g"] = {k: v for k, v in test_function_to_dict(mt.g).items() if k != "schema_version"}
    return doc


def score_from_dict(doc: dict, base: Path, labels=None):
    kind = _need(doc, "kind", "score")
    if kind == "nll":
        return NLL()
    if kind == "empirical_ipm":
        return EmpiricalIPM(resolve_family(_need(doc, "family", "score"), base, labels))
    if kind == "scheffe_ipm":
        return ScheffeIPM(resolve_family(_need(doc, "family", "score"), base, labels))
    if kind == "coverage":
        return Coverage(float(_need(doc, "N", "score")))
    if kind == "fixed_test":
        return FixedTest(resolve_test_function(_need(doc, "g", "score"), base))
    raise FormatError(f"unknown score kind {kind!r}")


def score_to_dict(spec) -> dict:
    doc = {"kind": spec.kind}
    if isinstance(spec, (EmpiricalIPM, ScheffeIPM)):
        doc["family"] = {k: v for k, v in family_to_dict(spec.family).items() if k != "schema_version"}
    elif isinstance(spec, Coverage):
        doc["N"] = spec.N
    elif isinstance(spec, FixedTest):
        doc["g"] = {k: v for k, v in test_function_to_dict(spec.g).items() if k != "schema_version"}
    return doc


def _inline(d: DiscreteDistribution) -> dict:
    return {"labels": list(d.domain_labels), "probs": [float(p) for p in d.probs]}


def selector_from_dict(doc: dict, base: Path, cache: dict):
    mode = doc.get("mode", "fixed")
    if mode == "fixed":
        ref = _need(doc, "distribution", "ground_truth")
        return Fixed(resolve_distribution(ref, base, cache), doc.get("tag", "qstar"))
    if mode == "uniform":
        choices = []
        for i, ref in enumerate(_need(doc, "choices", "ground_truth")):
            tag = ref.get("tag") if isinstance(ref, dict) else None
            if tag is None:
                tag = ref.get("role", f"gt{i}") if isinstance(ref, dict) else f"gt{i}"
            choices.append((str(tag), resolve_distribution(ref, base, cache)))
        return UniformOver(tuple(choices))
    raise FormatError(f"unknown ground-truth mode {mode!r}")


def selector_to_dict(sel) -> dict:
    if isinstance(sel, Fixed):
        return {"mode": "fixed", "tag": sel.tag, "distribution": _inline(sel.distribution)}
    return {"mode": "uniform", "choices": [{"tag": t, **_inline(d)} for t, d in sel.choices]}


def trial_config_from_dict(doc: dict, base: Path = Path("."), seed: int | None = None) -> TrialConfig:
    cache: dict = {}
    cands = _need(doc, "candidates", "config")
    q1 = resolve_distribution(_need(cands, "q1", "candidates"), base, cache)
    q2 = resolve_distribution(_need(cands, "q2", "candidates"), base, cache)
    labels = q1.domain_labels
    try:
        return TrialConfig(
            q1=q1,
            q2=q2,
            selector=selector_from_dict(_need(doc, "ground_truth", "config"), base, cache),
            metric=metric_from_dict(_need(doc, "metric", "config"), base, labels),
            score=score_from_dict(_need(doc, "score", "config"), base, labels),
            m=int(_need(doc, "m", "config")),
            T=int(_need(doc, "T", "config")),
            c=float(doc.get("c", 1.0)),
            eps=float(doc.get("eps", 0.1)),
            master_seed=int(seed if seed is not None else doc.get("master_seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidInput):
            raise
        raise FormatError(f"config: {exc}") from None


def trial_config_to_dict(cfg: TrialConfig) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "candidates": {"q1": _inline(cfg.q1), "q2": _inline(cfg.q2)},
        "ground_truth": selector_to_dict(cfg.selector),
        "metric": metric_to_dict(cfg.metric),
        "score": score_to_dict(cfg.score),
        "m": cfg.m,
        "T": cfg.T,
        "c": cfg.c,
        "eps": cfg.eps,
        "master_seed": cfg.master_seed,
    }


def probe_config_from_dict(doc: dict, base: Path = Path("."), seed: int | None = None) -> dict:
    """Resolve a probe config into keyword arguments for ``sample_complexity_probe``."""
    cache: dict = {}
    mode = doc.get("mode", "estimate")
    if mode == "estimate":
        qstar = resolve_distribution(_need(doc, "qstar", "probe config"), base, cache)
        q = resolve_distribution(_need(doc, "q", "probe config"), base, cache)
        instance = Estimand(qstar, q)
        labels = q.domain_labels
    elif mode == "evaluate":
        cands = _need(doc, "candidates", "probe config")
        q1 = resolve_distribution(_need(cands, "q1", "candidates"), base, cache)
        q2 = resolve_distribution(_need(cands, "q2", "candidates"), base, cache)
        sel = selector_from_dict(_need(doc, "ground_truth", "probe config"), base, cache)
        instance = Comparison(q1, q2, sel, float(doc.get("c", 1.0)))
        labels = q1.domain_labels
    else:
        raise FormatError(f"unknown probe mode {mode!r}")
    return {
        "metric": metric_from_dict(_need(doc, "metric", "probe config"), base, labels),
        "score": score_from_dict(_need(doc, "score", "probe config"), base, labels),
        "instance": instance,
        "eps": float(_need(doc, "eps", "probe config")),
        "delta": float(_need(doc, "delta", "probe config")),
        "T": int(_need(doc, "T", "probe config")),
        "seed": int(seed if seed is not None else doc.get("master_seed", 0)),
    }


# -- reports -------------------------------------------------------------------------

CSV_HEADER = [
    "trial",
    "ground_truth",
    "score_q1",
    "score_q2",
    "metric_q1",
    "metric_q2",
    "fail_forward",
    "fail_reverse",
    "misrank",
    "tie",
]


def report_to_dict(rep: TrialReport) -> dict:
    counts = rep.ground_truth_counts()
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "trial_report",
        "tool_version": __version__,
        "T": rep.T,
        "implication_failure": rep.implication_failure.to_dict(),
        "reverse_failure": rep.reverse_failure.to_dict(),
        "symmetric_failure": rep.symmetric_failure.to_dict(),
        "misrank": rep.misrank.to_dict(),
        "tie": rep.tie.to_dict(),
        "q1_preferred": rep.q1_preferred.to_dict(),
        "ground_truths": {
            tag: {"metric_q1": f1, "metric_q2": f2, "draws": counts[tag]}
            for tag, (f1, f2) in rep.metric_values.items()
        },
        "scores": rep.score_summary(),
        "config": trial_config_to_dict(rep.config),
    }


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def write_report_csv(path: str | Path, rep: TrialReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        w.writerow(CSV_HEADER)
        for r in rep.rows:
            w.writerow([
                r.index, r.ground_truth, _fmt(r.score_q1), _fmt(r.score_q2),
                _fmt(r.metric_q1), _fmt(r.metric_q2),
                int(r.fail_forward), int(r.fail_reverse), int(r.misrank), int(r.tie),
            ])


def read_report_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append({
            "trial": int(r["trial"]),
            "ground_truth": r["ground_truth"],
            **{k: float(r[k]) for k in ("score_q1", "score_q2", "metric_q1", "metric_q2")},
            **{k: bool(int(r[k])) for k in ("fail_forward", "fail_reverse", "misrank", "tie")},
        })
    return out


def parse_params(text: str) -> dict:
    """Parse ``--params``: a JSON file path, JSON text, or the loose ``{alpha:2, M:4}`` form."""
    path = Path(text)
    if path.is_file():
        return read_json(path)
    try:
        return loads(text, source="--params")
    except FormatError:
        pass
    body = text.strip()
    if body.startswith("{") and body.endswith("}"):
        body = body[1:-1]
    out = {}
    for part in filter(None, (p.strip() for p in body.split(","))):
        if ":" not in part and "=" not in part:
            raise InvalidParameters(f"cannot parse parameter {part!r}")
        k, v = re.split(r"[:=]", part, maxsplit=1)
        try:
            out[k.strip().strip("'\"")] = json.loads(v.strip())
        except json.JSONDecodeError:
            raise InvalidParameters(f"cannot parse value in {part!r}") from None
    return out
