"""Builders for the adversarial distribution families used in the evaluability demos.

Each builder returns a :class:`ConstructionBundle`: the distributions, the
parameters that produced them (including derived free parameters such as
``eta``), and a list of analytic facts. A fact is a closed-form value or bound
on some quantity of the bundle, and :func:`verify_bundle` recomputes each one
numerically, so golden tests and CLI output share a single source of truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np

from . import distributions as dist
from .distributions import DiscreteDistribution, check_delta_close, make_distribution
from .errors import AlphaOutOfRange, InvalidParameters
from .scores import TestFunction, fixed_test_metric

FactKind = Literal["exact", "lower", "upper"]
EXACT_TOL = 1e-10
BOUND_RTOL = 1e-12


@dataclass(frozen=True)
class AnalyticFact:
    """``quantity(*args, **params)`` equals / is at least / is at most ``value``."""

    quantity: str
    args: tuple
    value: float
    kind: FactKind
    params: dict = field(default_factory=dict, compare=False)

    def describe(self) -> str:
        extra = "".join(f", {k}={v!r}" for k, v in sorted(self.params.items()))
        op = {"exact": "=", "lower": ">=", "upper": "<="}[self.kind]
        return f"{self.quantity}({', '.join(self.args)}{extra}) {op} {self.value!r}"


@dataclass(frozen=True)
class ConstructionBundle:
    recipe: str
    distributions: dict
    parameters: dict
    facts: tuple
    test_function: TestFunction | None = None

    def __getitem__(self, role: str) -> DiscreteDistribution:
        return self.distributions[role]

    @property
    def domain_labels(self) -> tuple:
        return next(iter(self.distributions.values())).domain_labels


def evaluate_quantity(bundle: ConstructionBundle, fact: AnalyticFact) -> float:
    d = [bundle.distributions[a] for a in fact.args]
    p = fact.params
    q = fact.quantity
    if q == "tv":
        return dist.tv(*d)
    if q == "kl":
        return dist.kl(*d)
    if q == "renyi":
        return dist.renyi(*d, p["alpha"])
    if q == "hellinger2":
        return dist.hellinger_sq(*d)
    if q == "coverage":
        return dist.coverage_profile(d[0], d[1], p["N"])
    if q == "rkl":
        return dist.restricted_kl(d[0], d[1], p["beta"])
    if q == "fixed":
        return fixed_test_metric(d[0], d[1], bundle.test_function)
    if q == "tv_gap":
        # tv(a, ref) - c * tv(b, ref) - eps
        return dist.tv(d[0], d[2]) - p["c"] * dist.tv(d[1], d[2]) - p["eps"]
    if q == "mass_off":
        return 1.0 - d[0].prob(p["label"])
    if q == "miss_prob":
        return (1.0 - d[0].prob(p["label"])) ** p["m"]
    if q == "hit_prob":
        return 1.0 - (1.0 - d[0].prob(p["label"])) ** p["m"]
    raise InvalidParameters(f"unknown fact quantity {q!r}")


@dataclass(frozen=True)
class FactCheck:
    fact: AnalyticFact
    computed: float
    ok: bool


def verify_bundle(bundle: ConstructionBundle) -> list[FactCheck]:
    out = []
    for fact in bundle.facts:
        got = evaluate_quantity(bundle, fact)
        # bounds can be tight (e.g. M/2 once eta * e^{(alpha-1)M} dominates), so
        # they get a purely relative rounding allowance that stays meaningful
        # for tiny bounds
        tol = 0.0 if math.isinf(fact.value) else BOUND_RTOL * abs(fact.value)
        if fact.kind == "exact":
            if math.isinf(fact.value) or math.isinf(got):
                ok = got == fact.value
            else:
                ok = abs(got - fact.value) <= EXACT_TOL * max(1.0, abs(fact.value))
        elif fact.kind == "lower":
            ok = got >= fact.value - tol
        else:
            ok = got <= fact.value + tol
        out.append(FactCheck(fact, got, ok))
    return out


def _labels(n: int, start: int = 0) -> tuple:
    return tuple(f"x{i}" for i in range(start, start + n))


def renyi_pair(alpha: float, M: float) -> ConstructionBundle:
    """Three-point pair that agrees on ``x0`` and swaps tiny masses on ``x1``/``x2``.

    ``eta = exp(-(alpha - 1) M / 2)`` pushes the divergence above ``M / 2``
    while leaving at most ``2 eta`` mass off ``x0``.
    """
    if not alpha > 1:
        raise AlphaOutOfRange(f"alpha must exceed 1, got {alpha}")
    if not M >= 2:
        raise InvalidParameters(f"M must be >= 2, got {M}")
    eta = math.exp(-(alpha - 1) * M / 2)
    small = eta * math.exp(-M)
    head = 1 - eta - small
    if head < 0:
        raise InvalidParameters(f"alpha={alpha}, M={M} leave negative mass on x0")
    labels = _labels(3)
    q1 = make_distribution(labels, [head, small, eta])
    q2 = make_distribution(labels, [head, eta, small])
    div = math.log(head + eta * math.exp(-alpha * M) + eta * math.exp((alpha - 1) * M)) / (alpha - 1)
    facts = (
        AnalyticFact("renyi", ("q2", "q1"), div, "exact", {"alpha": alpha}),
        AnalyticFact("renyi", ("q1", "q2"), div, "exact", {"alpha": alpha}),
        AnalyticFact("renyi", ("q2", "q1"), M / 2, "lower", {"alpha": alpha}),
        AnalyticFact("renyi", ("q1", "q2"), M / 2, "lower", {"alpha": alpha}),
        AnalyticFact("tv", ("q1", "q2"), eta * (1 - math.exp(-M)), "exact"),
        AnalyticFact("mass_off", ("q1",), 2 * eta, "upper", {"label": "x0"}),
        AnalyticFact("mass_off", ("q2",), 2 * eta, "upper", {"label": "x0"}),
    )
    return ConstructionBundle(
        "renyi", {"q1": q1, "q2": q2}, {"alpha": alpha, "M": M, "eta": eta}, facts
    )


def kl_pair(M: float) -> ConstructionBundle:
    """The Renyi layout with ``eta = 2 / M``, which makes both KL directions ``2(1 - e^-M)``."""
    if not M > 0:
        raise InvalidParameters(f"M must be positive, got {M}")
    eta = 2.0 / M
    small = eta * math.exp(-M)
    head = 1 - eta - small
    if head < 0:
        raise InvalidParameters(f"M={M} gives eta={eta} and negative mass on x0")
    labels = _labels(3)
    q1 = make_distribution(labels, [head, small, eta])
    q2 = make_distribution(labels, [head, eta, small])
    value = eta * M * (1 - math.exp(-M))
    facts = (
        AnalyticFact("kl", ("q1", "q2"), value, "exact"),
        AnalyticFact("kl", ("q2", "q1"), value, "exact"),
        AnalyticFact("tv", ("q1", "q2"), eta * (1 - math.exp(-M)), "exact"),
    )
    return ConstructionBundle("kl", {"q1": q1, "q2": q2}, {"M": M, "eta": eta}, facts)


def coverage_triple(N: float, gamma: float, eta: float) -> ConstructionBundle:
    """Candidate ``q1`` sitting exactly on the coverage threshold of ``q2``, just below it for ``q3``.

    ``q3`` also serves as a second candidate, with zero coverage against
    either ground truth.
    """
    if not N >= 2:
        raise InvalidParameters(f"N must be >= 2, got {N}")
    if not 0 < gamma < 1:
        raise InvalidParameters(f"gamma must lie in (0, 1), got {gamma}")
    if not 0 < eta < gamma / 10:
        raise InvalidParameters(f"eta must lie in (0, gamma/10), got {eta}")
    labels = _labels(2)
    lo = (1 - gamma) / N
    q1 = make_distribution(labels, [lo, 1 - lo])
    q2 = make_distribution(labels, [1 - gamma, gamma])
    q3 = make_distribution(labels, [1 - gamma - eta, gamma + eta])
    facts = (
        AnalyticFact("coverage", ("q1", "q2"), 1 - gamma, "lower", {"N": N}),
        AnalyticFact("coverage", ("q1", "q3"), 0.0, "exact", {"N": N}),
        AnalyticFact("coverage", ("q3", "q2"), 0.0, "exact", {"N": N}),
        AnalyticFact("coverage", ("q3", "q3"), 0.0, "exact", {"N": N}),
        AnalyticFact("tv", ("q2", "q3"), eta, "exact"),
    )
    return ConstructionBundle(
        "coverage",
        {"q1": q1, "q2": q2, "q3": q3},
        {"N": N, "gamma": gamma, "eta": eta},
        facts,
    )


def fixed_test_pair(B: float, g2: float, m: int = 100) -> ConstructionBundle:
    """Two-point pair where a rarely seen point carries a huge test value.

    ``q1`` puts ``1/sqrt(B)`` on ``x1``; ``q2`` never visits it. With
    ``g(x1) = (B + 1) g2`` the metric between them is ``sqrt(B) |g2|``.
    ``m`` only parameterises the all-``x2`` sample probability facts.
    """
    if not B > 1:
        raise InvalidParameters(f"B must exceed 1, got {B}")
    if g2 == 0 or not math.isfinite(g2):
        raise InvalidParameters("g2 must be finite and non-zero")
    labels = ("x1", "x2")
    w = 1 / math.sqrt(B)
    q1 = make_distribution(labels, [w, 1 - w])
    q2 = make_distribution(labels, [0.0, 1.0])
    g = TestFunction.from_values(labels, [(B + 1) * g2, g2])
    spread = abs(g.values[0] - g.values[1])
    facts = (
        AnalyticFact("fixed", ("q1", "q2"), w * spread, "exact"),
        AnalyticFact("fixed", ("q1", "q2"), (B - 1) / math.sqrt(B) * abs(g2), "lower"),
        AnalyticFact("miss_prob", ("q1",), (1 - w) ** m, "exact", {"label": "x1", "m": m}),
        AnalyticFact("miss_prob", ("q1",), 1 - m * w, "lower", {"label": "x1", "m": m}),
        AnalyticFact("miss_prob", ("q2",), 1.0, "exact", {"label": "x1", "m": m}),
    )
    return ConstructionBundle(
        "fixedtest", {"q1": q1, "q2": q2}, {"B": B, "g2": g2, "m": m}, facts, test_function=g
    )


def tv_nll_bound(c: float, eps: float) -> float:
    """Smallest admissible ``M`` (exclusive) for :func:`tv_nll_triple`."""
    p = (1 - eps) / (4 * c)
    r = (1 + eps) / 2 - p / 2
    return 2 * abs(math.log(1 - p - r)) / p


def tv_nll_triple(c: float, eps: float, M: float | None = None) -> ConstructionBundle:
    """Ground truth plus two models where nll prefers the model that is far worse in TV."""
    if not c >= 1:
        raise InvalidParameters(f"c must be >= 1, got {c}")
    if not 0 < eps < 1:
        raise InvalidParameters(f"eps must lie in (0, 1), got {eps}")
    bound = tv_nll_bound(c, eps)
    if M is None:
        M = bound + 1
    if not M > bound:
        raise InvalidParameters(f"M must exceed {bound:.6g}, got {M}")
    p = (1 - eps) / (4 * c)
    r = (1 + eps) / 2 - p / 2
    labels = _labels(3)
    qstar = make_distribution(labels, [1 - p, p, 0.0])
    q1 = make_distribution(labels, [1 - p - r, p, r])
    q2 = make_distribution(labels, [1 - p * math.exp(-M), p * math.exp(-M), 0.0])
    tv2 = p * (1 - math.exp(-M))
    gap = r - c * tv2 - eps
    if not gap > 0:
        raise InvalidParameters("parameters do not separate the candidates")
    facts = (
        AnalyticFact("tv", ("q1", "qstar"), r, "exact"),
        AnalyticFact("tv", ("q2", "qstar"), tv2, "exact"),
        AnalyticFact("tv_gap", ("q1", "q2", "qstar"), gap, "exact", {"c": c, "eps": eps}),
        AnalyticFact("tv", ("q1", "qstar"), (3 + 5 * eps) / 8, "lower"),
        AnalyticFact("tv", ("q2", "qstar"), p, "upper"),
    )
    return ConstructionBundle(
        "tvnll",
        {"qstar": qstar, "q1": q1, "q2": q2},
        {"c": c, "eps": eps, "M": M, "p": p, "r": r},
        facts,
    )


def restricted_kl_bound(beta: float) -> float:
    return 2 * (1 / (1 - beta) + math.log(2))


def restricted_kl_triple(beta: float, M: float | None = None, m: int = 50) -> ConstructionBundle:
    """Ground truth with a ``beta``-mass point that ``q2`` ignores and ``q1`` copies.

    The restricted divergence forgives ``q2`` entirely, while any sample that
    hits ``x2`` sends ``nll(q2)`` to infinity. For ``beta >= 1/3`` further
    subsets qualify and the closed-form lower bound on ``q1`` no longer holds,
    so it is only emitted below that.
    """
    if not 0 < beta < 0.5:
        raise InvalidParameters(f"beta must lie in (0, 1/2), got {beta}")
    bound = restricted_kl_bound(beta)
    if M is None:
        M = bound + 1
    if not M > bound:
        raise InvalidParameters(f"M must exceed {bound:.6g}, got {M}")
    labels = _labels(3)
    half = (1 - beta) / 2
    qstar = make_distribution(labels, [half, half, beta])
    q1 = make_distribution(labels, [(1 - beta) * math.exp(-M), (1 - beta) * (1 - math.exp(-M)), beta])
    q2 = make_distribution(labels, [0.5, 0.5, 0.0])
    block = M / 2 - math.log(2) - 0.5 * math.log(1 - math.exp(-M))
    facts = [
        AnalyticFact("rkl", ("qstar", "q2"), 0.0, "exact", {"beta": beta}),
        AnalyticFact("kl", ("qstar", "q1"), (1 - beta) * block, "exact"),
        AnalyticFact("kl", ("qstar", "q2"), math.inf, "exact"),
        AnalyticFact("hit_prob", ("qstar",), 1 - (1 - beta) ** m, "exact", {"label": "x2", "m": m}),
    ]
    if beta < 1 / 3:
        facts += [
            AnalyticFact("rkl", ("qstar", "q1"), (1 - beta) * block, "exact", {"beta": beta}),
            AnalyticFact("rkl", ("qstar", "q1"), (1 - beta) * (M / 2 - math.log(2)), "lower", {"beta": beta}),
        ]
    return ConstructionBundle(
        "rkl",
        {"qstar": qstar, "q1": q1, "q2": q2},
        {"beta": beta, "M": M, "m": m},
        tuple(facts),
    )


def delta_close_pair(qstar: DiscreteDistribution, delta: float, seed: int, max_tries: int = 10_000) -> DiscreteDistribution:
    """Random model whose pointwise ratio to ``qstar`` stays in ``[1 - delta, 1 + delta]``.

    Multipliers are drawn from the half-width band and the result is
    renormalized; the rare draw that renormalization pushes out of the full
    band is rejected.
    """
    if not 0 < delta < 0.5:
        raise InvalidParameters(f"delta must lie in (0, 1/2), got {delta}")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        u = rng.uniform(1 - delta / 2, 1 + delta / 2, size=qstar.n)
        w = qstar.probs * u
        cand = DiscreteDistribution(qstar.domain_labels, w / w.sum())
        if check_delta_close(qstar, cand, delta):
            return cand
    raise InvalidParameters(f"no delta-close model found in {max_tries} draws")


RECIPES = {
    "renyi": renyi_pair,
    "kl": kl_pair,
    "coverage": coverage_triple,
    "fixedtest": fixed_test_pair,
    "tvnll": tv_nll_triple,
    "rkl": restricted_kl_triple,
}


def build(recipe: str, params: dict[str, Any]) -> ConstructionBundle:
    """Build a bundle by recipe name; ``params`` are the builder's keyword arguments."""
    try:
        builder = RECIPES[recipe]
    except KeyError:
        raise InvalidParameters(f"unknown recipe {recipe!r}; choose from {sorted(RECIPES)}") from None
    try:
        return builder(**params)
    except TypeError as exc:
        raise InvalidParameters(f"bad parameters for {recipe}: {exc}") from None
