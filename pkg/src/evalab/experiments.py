"""Monte-Carlo harness for evaluability and estimability experiments.

A trial draws a ground truth, samples an evaluation set from it, scores both
candidates and checks the ranking implication

    s(q1, S) <= s(q2, S)  =>  f(q1, q*) <= c * f(q2, q*) + eps.

Trials are seeded from ``(master_seed, trial_index)`` alone, so results do not
depend on how trials are spread over workers; aggregation always runs in
trial-index order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy.stats import binomtest

from . import distributions as dist
from .distributions import DiscreteDistribution, sample
from .errors import DomainMismatch, EmptyGrid, InvalidParameters
from .families import FunctionFamily, ipm_exact
from .scores import ScheffeIPM, ScoreSpec, TestFunction, evaluate_score, fixed_test_metric, score_pair

SEED_MASK = (1 << 64) - 1

METRIC_KINDS = ("tv", "kl", "renyi", "hellinger2", "coverage", "rkl", "ipm", "fixed")


@dataclass(frozen=True)
class MetricSpec:
    """Evaluation metric ``f(q, q*)``; the ground truth is always the reference.

    ``kind`` is one of ``tv``, ``kl``, ``renyi`` (needs ``alpha``), ``hellinger2``,
    ``coverage`` (needs ``N``), ``rkl`` (needs ``beta``), ``ipm`` (needs
    ``family``) or ``fixed`` (needs ``g``).
    """

    kind: str
    alpha: float | None = None
    N: float | None = None
    beta: float | None = None
    family: FunctionFamily | None = None
    g: TestFunction | None = None

    def __post_init__(self):
        need = {"renyi": "alpha", "coverage": "N", "rkl": "beta", "ipm": "family", "fixed": "g"}
        if self.kind not in METRIC_KINDS:
            raise InvalidParameters(f"unknown metric kind {self.kind!r}")
        if self.kind in need and getattr(self, need[self.kind]) is None:
            raise InvalidParameters(f"metric {self.kind!r} needs {need[self.kind]!r}")

    def __call__(self, q: DiscreteDistribution, qstar: DiscreteDistribution) -> float:
        k = self.kind
        if k == "tv":
            return dist.tv(qstar, q)
        if k == "kl":
            return dist.kl(qstar, q)
        if k == "renyi":
            return dist.renyi(qstar, q, self.alpha)
        if k == "hellinger2":
            return dist.hellinger_sq(qstar, q)
        if k == "coverage":
            return dist.coverage_profile(q, qstar, self.N)
        if k == "rkl":
            return dist.restricted_kl(qstar, q, self.beta)
        if k == "ipm":
            return ipm_exact(qstar, q, self.family).value
        return fixed_test_metric(qstar, q, self.g)


@dataclass(frozen=True)
class Fixed:
    distribution: DiscreteDistribution
    tag: str = "qstar"

    @property
    def options(self) -> tuple:
        return ((self.tag, self.distribution),)


@dataclass(frozen=True)
class UniformOver:
    """Ground truth re-drawn uniformly from ``choices`` at every trial."""

    choices: tuple  # of (tag, distribution)

    def __post_init__(self):
        if not self.choices:
            raise InvalidParameters("UniformOver needs at least one distribution")
        tags = [t for t, _ in self.choices]
        if len(set(tags)) != len(tags):
            raise InvalidParameters("ground-truth tags must be distinct")

    @property
    def options(self) -> tuple:
        return self.choices


GroundTruthSelector = Union[Fixed, UniformOver]


@dataclass(frozen=True)
class TrialConfig:
    q1: DiscreteDistribution
    q2: DiscreteDistribution
    selector: GroundTruthSelector
    metric: MetricSpec
    score: ScoreSpec
    m: int
    T: int
    c: float = 1.0
    eps: float = 0.1
    master_seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.T < 1:
            raise InvalidParameters("m and T must be at least 1")
        if not self.c >= 1:
            raise InvalidParameters(f"c must be >= 1, got {self.c}")
        if not 0 < self.eps < 1:
            raise InvalidParameters(f"eps must lie in (0, 1), got {self.eps}")
        labels = self.q1.domain_labels
        if self.q2.domain_labels != labels or any(
            d.domain_labels != labels for _, d in self.selector.options
        ):
            raise DomainMismatch("candidates and ground truths must share one domain")


def trial_seeds(master_seed: int, index: int, n: int = 2) -> list[int]:
    """Stateless per-trial seeds mixed from the master seed and the trial index."""
    ss = np.random.SeedSequence([master_seed & SEED_MASK, index])
    return [int(s) for s in ss.generate_state(n, dtype=np.uint64)]


def wilson_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    ci = binomtest(k, n).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class Rate:
    count: int
    n: int
    ci_low: float
    ci_high: float

    @property
    def value(self) -> float:
        return self.count / self.n

    @classmethod
    def of(cls, flags: Sequence[bool]) -> "Rate":
        k, n = int(sum(flags)), len(flags)
        lo, hi = wilson_interval(k, n)
        return cls(k, n, lo, hi)

    def to_dict(self) -> dict:
        return {"rate": self.value, "count": self.count, "n": self.n, "ci95": [self.ci_low, self.ci_high]}


@dataclass(frozen=True)
class TrialRow:
    index: int
    ground_truth: str
    score_q1: float
    score_q2: float
    metric_q1: float
    metric_q2: float
    fail_forward: bool
    fail_reverse: bool
    misrank: bool
    tie: bool


def _leq(a: float, b: float) -> bool:
    # inf <= inf holds, which is the tie convention
    return a <= b


def _violates(fa: float, fb: float, c: float, eps: float) -> bool:
    return fa > c * fb + eps


def _summary(xs: Sequence[float]) -> dict:
    arr = np.asarray(xs, dtype=float)
    finite = arr[np.isfinite(arr)]
    return {
        "mean_finite": float(finite.mean()) if finite.size else None,
        "min": float(arr.min()),
        "max": float(arr.max()),
        "inf_count": int(np.isinf(arr).sum()),
    }


@dataclass
class TrialReport:
    config: TrialConfig
    rows: list = field(repr=False)
    metric_values: dict  # tag -> (f(q1, q*), f(q2, q*))
    implication_failure: Rate  # s(q1) <= s(q2) but f(q1) too large, candidates as named
    reverse_failure: Rate  # the same with the candidates swapped
    symmetric_failure: Rate  # either ordering fails
    misrank: Rate
    tie: Rate
    q1_preferred: Rate  # s(q1) <= s(q2), ties included

    @property
    def T(self) -> int:
        return self.config.T

    @property
    def implication_failure_rate(self) -> float:
        return self.implication_failure.value

    @property
    def misrank_rate(self) -> float:
        return self.misrank.value

    @property
    def tie_rate(self) -> float:
        return self.tie.value

    def ground_truth_counts(self) -> dict:
        out = {tag: 0 for tag in self.metric_values}
        for r in self.rows:
            out[r.ground_truth] += 1
        return out

    def score_summary(self) -> dict:
        return {
            "q1": _summary([r.score_q1 for r in self.rows]),
            "q2": _summary([r.score_q2 for r in self.rows]),
        }


def _run_chunk(fn: Callable[[int], object], indices: range) -> list:
    return [fn(i) for i in indices]


def map_trials(fn: Callable[[int], object], T: int, workers: int = 1) -> list:
    """``[fn(0), ..., fn(T-1)]``, optionally spread over a thread pool.

    Each call must depend only on its index, which keeps the output identical
    for every worker count.
    """
    if workers <= 1 or T < 2:
        return _run_chunk(fn, range(T))
    bounds = np.linspace(0, T, min(workers, T) + 1).astype(int)
    chunks = [range(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda r: _run_chunk(fn, r), chunks))
    return [x for part in parts for x in part]


def run_trials(config: TrialConfig, workers: int = 1) -> TrialReport:
    cfg = config
    options = cfg.selector.options
    # metric values depend only on the ground truth, never on the sample
    table = [(cfg.metric(cfg.q1, qs), cfg.metric(cfg.q2, qs)) for _, qs in options]

    def one(t: int) -> TrialRow:
        sel_seed, sample_seed = trial_seeds(cfg.master_seed, t)
        k = 0 if len(options) == 1 else int(np.random.default_rng(sel_seed).integers(len(options)))
        tag, qstar = options[k]
        S = sample(qstar, cfg.m, sample_seed)
        s1, s2 = score_pair(cfg.score, cfg.q1, cfg.q2, S)
        f1, f2 = table[k]
        return TrialRow(
            index=t,
            ground_truth=tag,
            score_q1=s1,
            score_q2=s2,
            metric_q1=f1,
            metric_q2=f2,
            fail_forward=_leq(s1, s2) and _violates(f1, f2, cfg.c, cfg.eps),
            fail_reverse=_leq(s2, s1) and _violates(f2, f1, cfg.c, cfg.eps),
            misrank=(s1 < s2 and f1 > f2) or (s2 < s1 and f2 > f1),
            tie=s1 == s2,
        )

    rows = map_trials(one, cfg.T, workers)
    return TrialReport(
        config=cfg,
        rows=rows,
        metric_values={tag: table[i] for i, (tag, _) in enumerate(options)},
        implication_failure=Rate.of([r.fail_forward for r in rows]),
        reverse_failure=Rate.of([r.fail_reverse for r in rows]),
        symmetric_failure=Rate.of([r.fail_forward or r.fail_reverse for r in rows]),
        misrank=Rate.of([r.misrank for r in rows]),
        tie=Rate.of([r.tie for r in rows]),
        q1_preferred=Rate.of([_leq(r.score_q1, r.score_q2) for r in rows]),
    )


def estimate_misranking(
    q1: DiscreteDistribution,
    q2: DiscreteDistribution,
    selector: GroundTruthSelector,
    score: ScoreSpec,
    m: int,
    T: int,
    seed: int,
    metric: MetricSpec,
    workers: int = 1,
) -> Rate:
    """Share of trials where the score strictly prefers the strictly worse model."""
    cfg = TrialConfig(q1, q2, selector, metric, score, m, T, c=1.0, eps=0.5, master_seed=seed)
    return run_trials(cfg, workers).misrank


def _deviation(s: float, f: float) -> float:
    if math.isinf(s) or math.isinf(f):
        return 0.0 if s == f else math.inf
    return abs(s - f)


@dataclass(frozen=True)
class EstimabilityResult:
    exceedance: Rate
    metric_value: float
    max_deviation: float
    mean_deviation: float

    @property
    def rate(self) -> float:
        return self.exceedance.value


def check_estimability(
    metric: MetricSpec,
    score: ScoreSpec,
    qstar: DiscreteDistribution,
    q: DiscreteDistribution,
    m: int,
    T: int,
    eps: float,
    seed: int,
    workers: int = 1,
) -> EstimabilityResult:
    """Share of trials where ``|s(q, S) - f(q, q*)| > eps``."""
    if isinstance(score, ScheffeIPM):
        raise InvalidParameters("the Scheffe score compares two candidates; it does not estimate")
    if m < 1 or T < 1:
        raise InvalidParameters("m and T must be at least 1")
    f = metric(q, qstar)

    def one(t: int) -> float:
        _, sample_seed = trial_seeds(seed, t)
        return _deviation(evaluate_score(score, q, sample(qstar, m, sample_seed)), f)

    devs = map_trials(one, T, workers)
    return EstimabilityResult(
        exceedance=Rate.of([d > eps for d in devs]),
        metric_value=f,
        max_deviation=max(devs),
        mean_deviation=float(np.mean(devs)),
    )


@dataclass(frozen=True)
class Estimand:
    """Probe instance for estimability: how well does ``s(q, .)`` track ``f(q, qstar)``."""

    qstar: DiscreteDistribution
    q: DiscreteDistribution


@dataclass(frozen=True)
class Comparison:
    """Probe instance for evaluability of a candidate pair (both orderings checked)."""

    q1: DiscreteDistribution
    q2: DiscreteDistribution
    selector: GroundTruthSelector
    c: float = 1.0


@dataclass(frozen=True)
class ProbeRow:
    m: int
    failure: Rate


@dataclass(frozen=True)
class ProbeResult:
    m_star: int | None
    rows: tuple

    def table(self) -> list[dict]:
        return [{"m": r.m, **r.failure.to_dict()} for r in self.rows]


def sample_complexity_probe(
    metric: MetricSpec,
    score: ScoreSpec,
    instance: Estimand | Comparison,
    eps: float,
    delta: float,
    m_grid: Sequence[int],
    T: int,
    seed: int,
    workers: int = 1,
) -> ProbeResult:
    """Failure rate across ``m_grid``; ``m_star`` is the first ``m`` with rate <= ``delta``."""
    grid = [int(m) for m in m_grid]
    if not grid:
        raise EmptyGrid("m_grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidParameters("m_grid must be strictly ascending")
    rows = []
    for m in grid:
        if isinstance(instance, Estimand):
            rate = check_estimability(metric, score, instance.qstar, instance.q, m, T, eps, seed, workers).exceedance
        else:
            cfg = TrialConfig(
                instance.q1, instance.q2, instance.selector, metric, score, m, T,
                c=instance.c, eps=eps, master_seed=seed,
            )
            rate = run_trials(cfg, workers).symmetric_failure
        rows.append(ProbeRow(m, rate))
    m_star = next((r.m for r in rows if r.failure.value <= delta), None)
    return ProbeResult(m_star, tuple(rows))


def _upper_tail_gap(a: np.ndarray, b: np.ndarray) -> float:
    """``sup_t |P_a[s >= t] - P_b[s >= t]|`` for two score samples."""
    a = np.sort(a)
    b = np.sort(b)
    ts = np.union1d(a, b)
    pa = 1.0 - np.searchsorted(a, ts, side="left") / a.size
    pb = 1.0 - np.searchsorted(b, ts, side="left") / b.size
    return float(np.max(np.abs(pa - pb))) if ts.size else 0.0


@dataclass(frozen=True)
class ScoreLawDistance:
    estimate: float
    bound: float
    slack: float

    @property
    def within_bound(self) -> bool:
        return self.estimate <= self.bound + self.slack


def score_distribution_distance(
    score: ScoreSpec,
    q: DiscreteDistribution,
    p1: DiscreteDistribution,
    p2: DiscreteDistribution,
    m: int,
    T: int,
    seed: int,
    workers: int = 1,
) -> ScoreLawDistance:
    """Distance between the laws of ``s(q, S)`` under ``S ~ p1^m`` and ``S ~ p2^m``.

    The estimate is the largest gap between the two empirical upper-tail
    functions, and is compared with ``m * tv(p1, p2)`` plus a two-sample
    Monte-Carlo slack of ``2 sqrt(ln(4 / 0.05) / (2 T))``.
    """
    if isinstance(score, ScheffeIPM):
        raise InvalidParameters("the Scheffe score needs a candidate pair")
    if m < 1 or T < 1:
        raise InvalidParameters("m and T must be at least 1")
    if not (q.domain_labels == p1.domain_labels == p2.domain_labels):
        raise DomainMismatch("model and both ground truths must share one domain")

    def one(t: int) -> tuple[float, float]:
        s1, s2 = trial_seeds(seed, t)
        return (
            evaluate_score(score, q, sample(p1, m, s1)),
            evaluate_score(score, q, sample(p2, m, s2)),
        )

    pairs = map_trials(one, T, workers)
    est = _upper_tail_gap(np.array([a for a, _ in pairs]), np.array([b for _, b in pairs]))
    bound = min(1.0, m * dist.tv(p1, p2))
    slack = 2 * math.sqrt(math.log(4 / 0.05) / (2 * T))
    return ScoreLawDistance(est, bound, slack)
