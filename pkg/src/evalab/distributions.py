"""Finite discrete distributions, sampling, and direct divergences.

All logarithms are natural. Perplexity-style base-2 conventions only rescale
values and never change an ordering.

Conventions shared by every divergence here:

* ``0 * ln 0 = 0``;
* a point with ``p(x) > 0 = q(x)`` makes a likelihood ratio ``+inf``;
* ``math.inf`` is an ordinary value and compares above every finite number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import (
    AlphaOutOfRange,
    DomainMismatch,
    DuplicateLabel,
    InvalidParameters,
    NegativeProbability,
    NotNormalized,
    SupportTooLarge,
    UnknownLabel,
)

INPUT_SLACK = 1e-9
MAX_RESTRICTED_SUPPORT = 22
# feasibility slack for p(E) >= 1 - beta; subset sums round differently
MASS_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Probability vector over an ordered, finite set of labels.

    Build instances with :func:`make_distribution`, which validates and
    renormalizes; the constructor itself trusts its input.
    """

    domain_labels: tuple
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.probs.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.domain_labels)

    @property
    def support(self) -> tuple:
        return tuple(lab for lab, p in zip(self.domain_labels, self.probs) if p > 0)

    def prob(self, label) -> float:
        try:
            return float(self.probs[self.domain_labels.index(label)])
        except ValueError:
            raise UnknownLabel(f"label {label!r} not in domain") from None

    def as_dict(self) -> dict:
        return {lab: float(p) for lab, p in zip(self.domain_labels, self.probs)}

    def __eq__(self, other):
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return self.domain_labels == other.domain_labels and np.array_equal(
            self.probs, other.probs
        )

    def __hash__(self):
        return hash((self.domain_labels, self.probs.tobytes()))

    def __repr__(self):
        inner = ", ".join(f"{lab!r}: {p:.6g}" for lab, p in zip(self.domain_labels, self.probs))
        return f"DiscreteDistribution({{{inner}}})"


def make_distribution(
    labels: Iterable[Hashable], probs: Iterable[float], renormalize: bool = True
) -> DiscreteDistribution:
    """Validate ``probs`` over ``labels`` and return a distribution.

    Sums within ``1e-9`` of one are renormalized; anything further off is
    rejected rather than silently rescaled. Loaders pass ``renormalize=False``
    so that stored values come back bit for bit.
    """
    labels = tuple(labels)
    arr = np.array([float(p) for p in probs], dtype=float)
    if len(labels) != arr.size:
        raise InvalidParameters(f"{len(labels)} labels but {arr.size} probabilities")
    if arr.size == 0:
        raise InvalidParameters("empty domain")
    if len(set(labels)) != len(labels):
        dupes = sorted({str(lab) for lab in labels if labels.count(lab) > 1})
        raise DuplicateLabel(f"duplicate labels: {', '.join(dupes)}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameters("probabilities must be finite")
    if np.any(arr < 0):
        raise NegativeProbability(f"negative entry {arr.min()!r}")
    total = math.fsum(arr)
    if abs(total - 1.0) > INPUT_SLACK:
        raise NotNormalized(f"probabilities sum to {total!r}")
    return DiscreteDistribution(labels, arr / total if renormalize else arr)


def uniform(labels: Iterable[Hashable]) -> DiscreteDistribution:
    labels = tuple(labels)
    return make_distribution(labels, [1.0 / len(labels)] * len(labels))


def point_mass(labels: Iterable[Hashable], at) -> DiscreteDistribution:
    labels = tuple(labels)
    if at not in labels:
        raise UnknownLabel(f"label {at!r} not in domain")
    return make_distribution(labels, [1.0 if lab == at else 0.0 for lab in labels])


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ordered sample, stored as indices into ``domain_labels``."""

    domain_labels: tuple
    indices: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.indices.size < 1:
            raise InvalidParameters("a dataset needs at least one point")
        self.indices.setflags(write=False)

    @classmethod
    def from_points(cls, points: Sequence[Hashable], domain: Sequence[Hashable]) -> "Dataset":
        domain = tuple(domain)
        lookup = {lab: i for i, lab in enumerate(domain)}
        try:
            idx = np.array([lookup[pt] for pt in points], dtype=np.int64)
        except KeyError as exc:
            raise UnknownLabel(f"sample point {exc.args[0]!r} not in domain") from None
        return cls(domain, idx)

    @property
    def m(self) -> int:
        return int(self.indices.size)

    @property
    def points(self) -> tuple:
        return tuple(self.domain_labels[i] for i in self.indices)

    def counts(self, domain: Sequence[Hashable] | None = None) -> np.ndarray:
        """Occurrence counts aligned with ``domain`` (defaults to the sample's own)."""
        own = np.bincount(self.indices, minlength=len(self.domain_labels))
        if domain is None or tuple(domain) == self.domain_labels:
            return own
        lookup = {lab: i for i, lab in enumerate(domain)}
        out = np.zeros(len(lookup), dtype=own.dtype)
        for lab, c in zip(self.domain_labels, own):
            if c == 0:
                continue
            if lab not in lookup:
                raise UnknownLabel(f"sample point {lab!r} not in domain")
            out[lookup[lab]] += c
        return out

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.points == other.points

    def __hash__(self):
        return hash(self.points)


def sample(q: DiscreteDistribution, m: int, seed: int) -> Dataset:
    """Draw ``m`` i.i.d. points from ``q`` by inverse CDF over the label order."""
    if m < 1:
        raise InvalidParameters(f"sample size must be >= 1, got {m}")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(q.probs)
    idx = np.searchsorted(cdf, rng.random(m), side="right")
    # cumsum may fall a hair short of 1; the overflow goes to the last charged label
    last = int(np.flatnonzero(q.probs > 0)[-1])
    np.minimum(idx, last, out=idx)
    return Dataset(q.domain_labels, idx.astype(np.int64))


def empirical_distribution(S: Dataset, domain: Sequence[Hashable]) -> DiscreteDistribution:
    counts = S.counts(domain)
    return DiscreteDistribution(tuple(domain), counts / S.m)


def _aligned(p: DiscreteDistribution, q: DiscreteDistribution) -> tuple[np.ndarray, np.ndarray]:
    if p.domain_labels != q.domain_labels:
        raise DomainMismatch("distributions are defined over different label lists")
    return p.probs, q.probs


def tv(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    a, b = _aligned(p, q)
    return 0.5 * math.fsum(np.abs(a - b))


def kl(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    """KL(p || q); ``+inf`` when p is not absolutely continuous w.r.t. q."""
    a, b = _aligned(p, q)
    on = a > 0
    if np.any(b[on] == 0):
        return math.inf
    return max(0.0, math.fsum(a[on] * (np.log(a[on]) - np.log(b[on]))))


def renyi(p: DiscreteDistribution, q: DiscreteDistribution, alpha: float) -> float:
    """Order-``alpha`` Renyi divergence of ``p`` from ``q`` (``p`` is the reference).

    Evaluated in log space so that very skewed pairs do not overflow.
    """
    if not alpha > 1:
        raise AlphaOutOfRange(f"alpha must exceed 1, got {alpha}")
    a, b = _aligned(p, q)
    if np.array_equal(a, b):
        return 0.0
    on = a > 0
    if np.any(b[on] == 0):
        return math.inf
    log_terms = alpha * np.log(a[on]) + (1.0 - alpha) * np.log(b[on])
    return max(0.0, float(logsumexp(log_terms)) / (alpha - 1.0))


def hellinger_sq(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    a, b = _aligned(p, q)
    return min(1.0, max(0.0, 1.0 - math.fsum(np.sqrt(a * b))))


def _ratio_at_least(num: np.ndarray, den: np.ndarray, N: float) -> np.ndarray:
    # num/den >= N, written multiplicatively so den = 0 < num reads as +inf.
    # The relative slack keeps constructions that sit exactly on the threshold
    # (e.g. num = (1-g), den = (1-g)/N) on the counted side after rounding.
    return num >= N * den * (1.0 - 1e-12)


def coverage_profile(q: DiscreteDistribution, qstar: DiscreteDistribution, N: float) -> float:
    """Mass of ``qstar`` on points where ``qstar(x)/q(x) >= N`` (inclusive)."""
    if not N >= 1:
        raise InvalidParameters(f"N must be >= 1, got {N}")
    model, ref = _aligned(q, qstar)
    hit = (ref > 0) & _ratio_at_least(ref, model, N)
    return math.fsum(ref[hit])


def _restricted_table(a: np.ndarray, b: np.ndarray, beta: float) -> float:
    n = a.size
    zero_q = (b == 0).astype(float)
    with np.errstate(divide="ignore"):
        log_ratio = np.where(b > 0, np.log(a) - np.log(np.where(b > 0, b, 1.0)), 0.0)
    best = math.inf
    chunk_bits = min(n, 16)
    low = np.arange(1 << chunk_bits, dtype=np.int64)
    low_bits = ((low[:, None] >> np.arange(chunk_bits)) & 1).astype(float)
    for hi in range(1 << (n - chunk_bits)):
        hi_bits = np.array([(hi >> j) & 1 for j in range(n - chunk_bits)], dtype=float)
        bits = np.hstack([low_bits, np.broadcast_to(hi_bits, (low_bits.shape[0], hi_bits.size))])
        pE = bits @ a
        feasible = (pE >= 1.0 - beta - MASS_SLACK) & (bits @ zero_q == 0)
        if not feasible.any():
            continue
        bits = bits[feasible]
        pE = pE[feasible]
        qE = bits @ b
        val = (bits @ (a * log_ratio)) / pE + np.log(qE) - np.log(pE)
        best = min(best, float(val.min()))
    return max(0.0, best)


def restricted_kl(p: DiscreteDistribution, q: DiscreteDistribution, beta: float) -> float:
    """Smallest conditional KL over subsets carrying at least ``1 - beta`` of ``p``.

    For a subset ``E`` the restricted divergence is ``KL(p(.|E) || q(.|E))``.
    Only subsets of ``supp(p)`` need to be searched: adding a point that ``p``
    does not charge can only raise ``q(E)`` and with it the divergence.
    The search is exhaustive, so supports above 22 points are refused.
    """
    if not 0 < beta < 0.5:
        raise InvalidParameters(f"beta must lie in (0, 1/2), got {beta}")
    a, b = _aligned(p, q)
    on = a > 0
    if int(on.sum()) > MAX_RESTRICTED_SUPPORT:
        raise SupportTooLarge(
            f"support of size {int(on.sum())} exceeds the exhaustive cap {MAX_RESTRICTED_SUPPORT}"
        )
    return _restricted_table(a[on], b[on], beta)


def check_lower_bound(qstar: DiscreteDistribution, gamma: float) -> bool:
    on = qstar.probs > 0
    return bool(np.all(qstar.probs[on] >= gamma))


def check_margin(qstar: DiscreteDistribution, q: DiscreteDistribution, N: float, alpha: float) -> bool:
    ref, model = _aligned(qstar, q)
    for r, m_ in zip(ref, model):
        if r <= 0 or m_ == 0:
            continue
        if abs(r / m_ - N) < alpha:
            return False
    return True


def check_delta_close(qstar: DiscreteDistribution, q: DiscreteDistribution, delta: float) -> bool:
    ref, model = _aligned(qstar, q)
    return bool(np.all((1 - delta) * ref <= model) and np.all(model <= (1 + delta) * ref))

