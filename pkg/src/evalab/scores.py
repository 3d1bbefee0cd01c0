"""Score functions ``s(q, S)`` computable from a model and an evaluation sample.

Every score here is "smaller is better". Ties between two candidates are read
as ``s(q1) <= s(q2)`` holding, and ``+inf`` ties with ``+inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Union

import numpy as np

from .distributions import (
    Dataset,
    DiscreteDistribution,
    _ratio_at_least,
    empirical_distribution,
)
from .errors import CandidateNotInPair, DomainMismatch, InvalidParameters
from .families import FunctionFamily, ipm_exact


@dataclass(frozen=True, eq=False)
class TestFunction:
    """A single real-valued (possibly unbounded) test ``g`` over the domain."""

    __test__ = False  # not a pytest class

    domain_labels: tuple
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.shape != (len(self.domain_labels),):
            raise InvalidParameters("one test value per domain point is required")
        if not np.all(np.isfinite(self.values)):
            raise InvalidParameters("test function values must be finite")
        self.values.setflags(write=False)

    @classmethod
    def from_values(cls, labels: Iterable[Hashable], values: Iterable[float]) -> "TestFunction":
        return cls(tuple(labels), np.array([float(v) for v in values], dtype=float))

    def __eq__(self, other):
        if not isinstance(other, TestFunction):
            return NotImplemented
        return self.domain_labels == other.domain_labels and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.domain_labels, self.values.tobytes()))


@dataclass(frozen=True)
class NLL:
    kind = "nll"


@dataclass(frozen=True)
class EmpiricalIPM:
    family: FunctionFamily
    kind = "empirical_ipm"


@dataclass(frozen=True)
class ScheffeIPM:
    family: FunctionFamily
    kind = "scheffe_ipm"


@dataclass(frozen=True)
class Coverage:
    N: float
    kind = "coverage"

    def __post_init__(self):
        if not self.N >= 1:
            raise InvalidParameters(f"coverage threshold must be >= 1, got {self.N}")


@dataclass(frozen=True)
class FixedTest:
    g: TestFunction
    kind = "fixed_test"


ScoreSpec = Union[NLL, EmpiricalIPM, ScheffeIPM, Coverage, FixedTest]


def _counts_for(q: DiscreteDistribution, S: Dataset) -> np.ndarray:
    return S.counts(q.domain_labels)


def nll_score(q: DiscreteDistribution, S: Dataset) -> float:
    """Average negative log-likelihood of the sample; ``+inf`` on any null point."""
    counts = _counts_for(q, S)
    seen = counts > 0
    if np.any(q.probs[seen] == 0):
        return math.inf
    return -math.fsum(counts[seen] * np.log(q.probs[seen])) / S.m


def perplexity(q: DiscreteDistribution, S: Dataset) -> float:
    """``exp(nll)``; same ordering as base-2 perplexity."""
    v = nll_score(q, S)
    return math.inf if v == math.inf else math.exp(v)


def empirical_ipm_score(q: DiscreteDistribution, S: Dataset, F: FunctionFamily) -> float:
    if q.domain_labels != F.domain_labels:
        raise DomainMismatch("model and family must share one domain")
    return ipm_exact(q, empirical_distribution(S, q.domain_labels), F).value


@dataclass(frozen=True)
class ScheffeChoice:
    winner: str  # "q1" or "q2"
    distribution: DiscreteDistribution
    witness_index: int
    gap_q1: float
    gap_q2: float


def scheffe_select(
    q1: DiscreteDistribution, q2: DiscreteDistribution, S: Dataset, F: FunctionFamily
) -> ScheffeChoice:
    """Two-candidate minimum-distance selection.

    The witness is the row of ``F`` that best separates the candidates; the
    winner is whichever candidate's mean on that row sits closer to the
    sample mean. Ties go to ``q1``.
    """
    witness = ipm_exact(q1, q2, F).witness_index
    phi = F.values[witness]
    counts = _counts_for(q1, S)
    sample_mean = math.fsum(counts * phi) / S.m
    gap1 = abs(float(phi @ q1.probs) - sample_mean)
    gap2 = abs(float(phi @ q2.probs) - sample_mean)
    if gap1 <= gap2:
        return ScheffeChoice("q1", q1, witness, gap1, gap2)
    return ScheffeChoice("q2", q2, witness, gap1, gap2)


def scheffe_score(
    q: DiscreteDistribution,
    context: tuple[DiscreteDistribution, DiscreteDistribution, Dataset, FunctionFamily],
) -> float:
    """``d_F(winner, q)`` where the winner comes from :func:`scheffe_select`."""
    q1, q2, S, F = context
    if q != q1 and q != q2:
        raise CandidateNotInPair("scheffe_score is only defined for the two compared candidates")
    chosen = scheffe_select(q1, q2, S, F)
    return ipm_exact(chosen.distribution, q, F).value


def coverage_score(q: DiscreteDistribution, S: Dataset, N: float) -> float:
    """Plug-in coverage: empirical mass on observed points with ``q_hat(x)/q(x) >= N``."""
    counts = _counts_for(q, S)
    q_hat = counts / S.m
    hit = (counts > 0) & _ratio_at_least(q_hat, q.probs, N)
    return math.fsum(q_hat[hit])


def fixed_test_score(q: DiscreteDistribution, S: Dataset, g: TestFunction) -> float:
    if q.domain_labels != g.domain_labels:
        raise DomainMismatch("model and test function must share one domain")
    counts = _counts_for(q, S)
    return abs(math.fsum(counts * g.values) / S.m - math.fsum(q.probs * g.values))


def fixed_test_metric(p: DiscreteDistribution, q: DiscreteDistribution, g: TestFunction) -> float:
    if not (p.domain_labels == q.domain_labels == g.domain_labels):
        raise DomainMismatch("distributions and test function must share one domain")
    return abs(math.fsum(p.probs * g.values) - math.fsum(q.probs * g.values))


def evaluate_score(spec: ScoreSpec, q: DiscreteDistribution, S: Dataset, pair=None) -> float:
    """Dispatch a :data:`ScoreSpec` on one model.

    ``pair`` is the ``(q1, q2)`` candidate pair, required by the Scheffe score only.
    """
    if isinstance(spec, NLL):
        return nll_score(q, S)
    if isinstance(spec, EmpiricalIPM):
        return empirical_ipm_score(q, S, spec.family)
    if isinstance(spec, ScheffeIPM):
        if pair is None:
            raise InvalidParameters("the Scheffe score needs the candidate pair")
        return scheffe_score(q, (pair[0], pair[1], S, spec.family))
    if isinstance(spec, Coverage):
        return coverage_score(q, S, spec.N)
    if isinstance(spec, FixedTest):
        return fixed_test_score(q, S, spec.g)
    raise InvalidParameters(f"unknown score spec {spec!r}")


def score_pair(spec: ScoreSpec, q1: DiscreteDistribution, q2: DiscreteDistribution, S: Dataset) -> tuple[float, float]:
    if isinstance(spec, ScheffeIPM):
        # one selection serves both candidates
        chosen = scheffe_select(q1, q2, S, spec.family)
        return (
            ipm_exact(chosen.distribution, q1, spec.family).value,
            ipm_exact(chosen.distribution, q2, spec.family).value,
        )
    return evaluate_score(spec, q1, S), evaluate_score(spec, q2, S)
