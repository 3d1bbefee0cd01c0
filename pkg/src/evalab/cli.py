"""Command-line interface: ``evalab {metric,score,dims,construct,trial,probe}``.

Exit codes: 0 on success, 2 for invalid input, 3 for requests that are valid
but exceed an exhaustive-search cap.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

from . import __version__
from . import formats as fmt
from .constructions import build, verify_bundle
from .errors import Infeasible, InvalidInput, InvalidParameters, NotBinary
from .experiments import MetricSpec, run_trials, sample_complexity_probe
from .families import fat_shattering_dim, vc_dimension
from .scores import ScheffeIPM, evaluate_score, scheffe_score

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE = 0, 2, 3
SEED_ENV = "EVALAB_SEED"


def format_value(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.12f}"


def _resolve_seed(cli_seed, config_seed) -> tuple[int, str]:
    if cli_seed is not None:
        return cli_seed, "--seed"
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env), SEED_ENV
        except ValueError:
            raise InvalidParameters(f"{SEED_ENV}={env!r} is not an integer") from None
    return int(config_seed), "config"


def _inputs(**paths) -> dict:
    out = {}
    for name, p in paths.items():
        if p is not None and Path(p).is_file():
            out[name] = {"path": str(p), "sha256": fmt.sha256_of(p)}
        elif p is not None:
            out[name] = {"builtin": str(p)}
    return out


def write_manifests(args, outputs: list, inputs: dict, parameters: dict, seed=None, seed_source=None):
    doc = {
        "schema_version": fmt.SCHEMA_VERSION,
        "kind": "run_manifest",
        "tool_version": __version__,
        "command": args.command,
        "argv": args.argv,
        "inputs": inputs,
        "parameters": parameters,
        "master_seed": seed,
        "seed_source": seed_source,
        "seed_flag": getattr(args, "seed", None),
        "seed_env": os.environ.get(SEED_ENV),
        "outputs": [{"path": str(p), "sha256": fmt.sha256_of(p)} for p in outputs],
    }
    for p in outputs:
        fmt.write_json(f"{p}.manifest.json", doc)


# -- subcommands -----------------------------------------------------------------------


def cmd_metric(args) -> int:
    p = fmt.load_distribution(args.p)
    q = fmt.load_distribution(args.q)
    kw = {"alpha": args.alpha, "N": args.n, "beta": args.beta}
    if args.family is not None:
        kw["family"] = fmt.resolve_family(args.family, Path("."), p.domain_labels)
    if args.g is not None:
        kw["g"] = fmt.resolve_test_function(args.g, Path("."))
    metric = MetricSpec(args.kind, **kw)
    print(format_value(metric(q, p)))
    return EXIT_OK


def cmd_score(args) -> int:
    spec_path = Path(args.spec)
    doc = fmt.read_json(spec_path)
    base = spec_path.parent
    q = fmt.load_distribution(args.q)
    spec = fmt.score_from_dict(doc, base, q.domain_labels)
    S = fmt.dataset_from_dict(fmt.read_json(args.sample), q.domain_labels)
    if isinstance(spec, ScheffeIPM):
        pair = doc.get("pair")
        if not isinstance(pair, dict) or "q1" not in pair or "q2" not in pair:
            raise InvalidParameters("a scheffe_ipm spec needs 'pair': {'q1': ..., 'q2': ...}")
        cache: dict = {}
        q1 = fmt.resolve_distribution(pair["q1"], base, cache)
        q2 = fmt.resolve_distribution(pair["q2"], base, cache)
        value = scheffe_score(q, (q1, q2, S, spec.family))
    else:
        value = evaluate_score(spec, q, S)
    print(format_value(value))
    return EXIT_OK


def cmd_dims(args) -> int:
    F = fmt.resolve_family(args.family, Path("."))
    if F.is_binary:
        print(f"vc={vc_dimension(F)}")
    elif args.gamma is None:
        raise NotBinary("family is not {0,1}-valued; pass --gamma for the fat-shattering dimension")
    if args.gamma is not None:
        print(f"fat[{args.gamma:g}]={fat_shattering_dim(F, args.gamma)}")
    return EXIT_OK


def cmd_construct(args) -> int:
    params = fmt.parse_params(args.params)
    bundle = build(args.recipe, params)
    checks = verify_bundle(bundle)
    fmt.write_json(args.out, fmt.bundle_to_dict(bundle))
    for c in checks:
        print(f"{'ok  ' if c.ok else 'FAIL'} {c.fact.describe()}  computed={format_value(c.computed)}")
    write_manifests(
        args, [args.out], _inputs(params=args.params if Path(args.params).is_file() else None),
        {"recipe": args.recipe, **params},
    )
    if not all(c.ok for c in checks):
        print("error: construction facts do not verify", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def cmd_trial(args) -> int:
    doc = fmt.read_json(args.config)
    seed, source = _resolve_seed(args.seed, doc.get("master_seed", 0))
    cfg = fmt.trial_config_from_dict(doc, Path(args.config).parent, seed)
    report = run_trials(cfg, workers=args.threads)
    fmt.write_json(args.out_report, fmt.report_to_dict(report))
    fmt.write_report_csv(args.out_csv, report)
    for name in ("implication_failure", "reverse_failure", "symmetric_failure", "misrank", "tie"):
        r = getattr(report, name)
        print(f"{name}={r.value:.6f} ({r.count}/{r.n}) 95% CI [{r.ci_low:.6f}, {r.ci_high:.6f}]")
    write_manifests(
        args, [args.out_report, args.out_csv], _inputs(config=args.config),
        {"threads": args.threads, "T": cfg.T, "m": cfg.m}, seed, source,
    )
    return EXIT_OK


def _parse_grid(text: str) -> list[int]:
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise InvalidParameters(f"cannot parse --m-grid {text!r}") from None


def cmd_probe(args) -> int:
    doc = fmt.read_json(args.config)
    seed, source = _resolve_seed(args.seed, doc.get("master_seed", 0))
    kw = fmt.probe_config_from_dict(doc, Path(args.config).parent, seed)
    grid = _parse_grid(args.m_grid)
    result = sample_complexity_probe(m_grid=grid, workers=args.threads, **kw)
    fmt.write_json(
        args.out,
        {
            "schema_version": fmt.SCHEMA_VERSION,
            "kind": "probe_result",
            "tool_version": __version__,
            "mode": doc.get("mode", "estimate"),
            "eps": kw["eps"],
            "delta": kw["delta"],
            "T": kw["T"],
            "master_seed": seed,
            "m_star": result.m_star,
            "rows": result.table(),
        },
    )
    for row in result.rows:
        print(f"m={row.m} failure={row.failure.value:.6f} ({row.failure.count}/{row.failure.n})")
    print(f"m_star={result.m_star if result.m_star is not None else 'none'}")
    write_manifests(
        args, [args.out], _inputs(config=args.config),
        {"m_grid": grid, "threads": args.threads}, seed, source,
    )
    return EXIT_OK


# -- parser ------------------------------------------------------------------------------


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evalab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"evalab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("metric", help="evaluate a metric f(q, p) with p as the reference")
    p.add_argument("--kind", required=True, choices=["tv", "kl", "renyi", "hellinger2", "coverage", "rkl", "ipm", "fixed"])
    p.add_argument("--p", required=True, help="reference distribution file, or uN")
    p.add_argument("--q", required=True, help="model distribution file, or uN")
    p.add_argument("--alpha", type=float)
    p.add_argument("--n", type=float, help="coverage threshold N")
    p.add_argument("--beta", type=float)
    p.add_argument("--family", help="family file or builtin name")
    p.add_argument("--g", help="test function file")
    p.set_defaults(func=cmd_metric)

    p = sub.add_parser("score", help="evaluate a score s(q, S)")
    p.add_argument("--spec", required=True, help="score spec JSON")
    p.add_argument("--q", required=True)
    p.add_argument("--sample", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("dims", help="VC or fat-shattering dimension of a family")
    p.add_argument("--family", required=True, help="family file or builtin, e.g. all_binary_4")
    p.add_argument("--gamma", type=float)
    p.set_defaults(func=cmd_dims)

    p = sub.add_parser("construct", help="build and verify a named construction")
    p.add_argument("--recipe", required=True)
    p.add_argument("--params", required=True, help="JSON file or inline JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("trial", help="run Monte-Carlo trials from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-report", required=True)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, help=f"master seed; overrides ${SEED_ENV} and the config")
    p.set_defaults(func=cmd_trial)

    p = sub.add_parser("probe", help="failure rate across a grid of sample sizes")
    p.add_argument("--config", required=True)
    p.add_argument("--m-grid", required=True, help="comma-separated ascending sample sizes")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_probe)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else [str(a) for a in argv]
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    args.argv = argv
    try:
        return args.func(args)
    except Infeasible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InvalidInput, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
