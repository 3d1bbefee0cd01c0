"""Tabular families of [0, 1]-valued test functions.

A family is an explicit matrix: one row per member function, one column per
domain point. Keeping families tabular makes integral probability metrics,
VC dimension and fat-shattering dimension exactly computable; the price is
exponential size, which every builder and search guards with a hard cap.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from .distributions import DiscreteDistribution
from .errors import (
    DomainMismatch,
    DomainTooLarge,
    GammaOutOfRange,
    InvalidParameters,
    NotBinary,
    TooManyFunctions,
)

MAX_ENUMERATED_POINTS = 16
MAX_VC_DOMAIN = 24
MAX_FAT_DOMAIN = 16
# separation slack for value gaps that equal 2*gamma exactly (e.g. 1/k vs 1/(2k))
GAP_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class FunctionFamily:
    domain_labels: tuple
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[1] != len(self.domain_labels):
            raise InvalidParameters(
                f"value table has shape {v.shape}, expected (rows, {len(self.domain_labels)})"
            )
        if v.shape[0] < 1:
            raise InvalidParameters("a family needs at least one function")
        if not np.all(np.isfinite(v)) or v.min() < 0 or v.max() > 1:
            raise InvalidParameters("family values must lie in [0, 1]")
        if np.unique(v, axis=0).shape[0] != v.shape[0]:
            raise InvalidParameters("family contains duplicate rows")
        if len(set(self.domain_labels)) != len(self.domain_labels):
            raise InvalidParameters("duplicate domain labels")
        v.setflags(write=False)

    @classmethod
    def from_rows(cls, labels: Iterable[Hashable], rows: Iterable[Sequence[float]]) -> "FunctionFamily":
        labels = tuple(labels)
        return cls(labels, np.array([[float(x) for x in r] for r in rows], dtype=float).reshape(-1, len(labels)))

    @property
    def size(self) -> int:
        return int(self.values.shape[0])

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.values == 0) | (self.values == 1)))

    def __eq__(self, other):
        if not isinstance(other, FunctionFamily):
            return NotImplemented
        return self.domain_labels == other.domain_labels and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.domain_labels, self.values.tobytes()))


@dataclass(frozen=True)
class IpmResult:
    value: float
    witness_index: int


def ipm_exact(p: DiscreteDistribution, q: DiscreteDistribution, F: FunctionFamily) -> IpmResult:
    """Largest mean gap ``|E_p f - E_q f|`` over the rows of ``F``.

    Ties go to the lowest row index.
    """
    if not (p.domain_labels == q.domain_labels == F.domain_labels):
        raise DomainMismatch("distributions and family must share one domain")
    gaps = np.abs(F.values @ p.probs - F.values @ q.probs)
    w = int(np.argmax(gaps))
    return IpmResult(float(gaps[w]), w)


def _sorted_rows(labels, rows) -> FunctionFamily:
    rows = sorted(tuple(r) for r in rows)
    return FunctionFamily(tuple(labels), np.array(rows, dtype=float).reshape(len(rows), len(labels)))


def all_binary_family(domain: Sequence[Hashable]) -> FunctionFamily:
    domain = tuple(domain)
    if len(domain) > MAX_ENUMERATED_POINTS:
        raise TooManyFunctions(f"2^{len(domain)} functions exceeds the cap 2^{MAX_ENUMERATED_POINTS}")
    return _sorted_rows(domain, itertools.product((0.0, 1.0), repeat=len(domain)))


def threshold_family(domain: Sequence[Hashable]) -> FunctionFamily:
    """Rows ``1[x >= t]`` along the domain order, for every cut including both extremes."""
    domain = tuple(domain)
    n = len(domain)
    return _sorted_rows(domain, ([0.0] * t + [1.0] * (n - t) for t in range(n + 1)))


def singleton_family(domain: Sequence[Hashable]) -> FunctionFamily:
    domain = tuple(domain)
    n = len(domain)
    return _sorted_rows(domain, ([1.0 if j == i else 0.0 for j in range(n)] for i in range(n)))


def small_subsets_family(domain: Sequence[Hashable], max_size: int) -> FunctionFamily:
    """Indicators of every subset with at most ``max_size`` points (VC dimension ``max_size``)."""
    domain = tuple(domain)
    n = len(domain)
    rows = []
    for k in range(max_size + 1):
        for combo in itertools.combinations(range(n), k):
            r = [0.0] * n
            for i in combo:
                r[i] = 1.0
            rows.append(r)
    if len(rows) > 1 << 20:
        raise TooManyFunctions(f"{len(rows)} functions exceeds the cap 2^20")
    return _sorted_rows(domain, rows)


def no_taxonomy_family(k: int, n_k: int) -> FunctionFamily:
    """Scaled copy ``{h / k}`` of all binary functions on a fresh ``n_k``-point block."""
    if k < 1 or n_k < 1:
        raise InvalidParameters("k and n_k must be positive")
    if n_k > MAX_ENUMERATED_POINTS:
        raise TooManyFunctions(f"2^{n_k} functions exceeds the cap 2^{MAX_ENUMERATED_POINTS}")
    labels = tuple(f"k{k}_{i}" for i in range(n_k))
    return _sorted_rows(
        labels, (tuple(v / k for v in h) for h in itertools.product((0.0, 1.0), repeat=n_k))
    )


def _row_masks(F: FunctionFamily) -> np.ndarray:
    weights = np.left_shift(np.int64(1), np.arange(F.values.shape[1], dtype=np.int64))
    return (F.values.astype(np.int64) * weights).sum(axis=1)


def vc_dimension(F: FunctionFamily) -> int:
    """Size of the largest subset of the domain shattered by a binary family.

    Shattering is hereditary, so candidate ``d``-sets are grown only from
    shattered ``(d-1)``-sets and the search stops at the first empty level.
    """
    if not F.is_binary:
        raise NotBinary("VC dimension needs a {0,1}-valued family")
    n = len(F.domain_labels)
    if n > MAX_VC_DOMAIN:
        raise DomainTooLarge(f"domain of {n} points exceeds the exhaustive cap {MAX_VC_DOMAIN}")
    rows = _row_masks(F)
    level = [()]
    best = 0
    for d in range(1, n + 1):
        if (1 << d) > F.size:
            break
        shattered = set(level)
        nxt = []
        seen = set()
        for base in level:
            start = base[-1] + 1 if base else 0
            for j in range(start, n):
                cand = base + (j,)
                if cand in seen:
                    continue
                seen.add(cand)
                # every (d-1)-subset must already be shattered
                if d > 1 and any(cand[:i] + cand[i + 1:] not in shattered for i in range(d)):
                    continue
                mask = 0
                for i in cand:
                    mask |= 1 << i
                if np.unique(rows & mask).size == (1 << d):
                    nxt.append(cand)
        if not nxt:
            break
        best = d
        level = nxt
    return best


def _cuts(column: np.ndarray, gamma: float) -> list[tuple[np.ndarray, np.ndarray]]:
    """Undominated threshold choices for one domain point.

    A threshold ``r`` splits the attained values into a low side (``<= r - gamma``)
    and a high side (``>= r + gamma``). For a given largest low value ``a`` the
    high side is largest when it starts at the smallest attained ``b >= a + 2 gamma``,
    which the midpoint ``(a + b) / 2`` realises. Every other threshold, whether an
    attained value or another midpoint, yields a low/high pair contained in one
    of these.
    """
    vals = np.unique(column)
    out = []
    for a in vals:
        above = vals[vals >= a + 2 * gamma - GAP_SLACK]
        if above.size == 0:
            continue
        b = above[0]
        out.append((column <= a, column >= b))
    return out


def fat_shattering_dim(F: FunctionFamily, gamma: float) -> int:
    """Size of the largest ``gamma``-fat-shattered subset of the domain."""
    if not 0 < gamma <= 0.5:
        raise GammaOutOfRange(f"gamma must lie in (0, 1/2], got {gamma}")
    n = len(F.domain_labels)
    if n > MAX_FAT_DOMAIN:
        raise DomainTooLarge(f"domain of {n} points exceeds the exhaustive cap {MAX_FAT_DOMAIN}")
    cuts = [_cuts(F.values[:, j], gamma) for j in range(n)]

    def shattered_by(points: tuple, choice: tuple) -> bool:
        d = len(points)
        decided = np.ones(F.size, dtype=bool)
        code = np.zeros(F.size, dtype=np.int64)
        for bit, (j, c) in enumerate(zip(points, choice)):
            low, high = cuts[j][c]
            decided &= low | high
            code |= high.astype(np.int64) << bit
        return np.unique(code[decided]).size == (1 << d)

    # level entries: (points, list of threshold choices that shatter them)
    level = [((), [()])]
    best = 0
    for d in range(1, n + 1):
        if (1 << d) > F.size:
            break
        nxt = []
        for base, choices in level:
            start = base[-1] + 1 if base else 0
            for j in range(start, n):
                pts = base + (j,)
                good = [
                    ch + (c,)
                    for ch in choices
                    for c in range(len(cuts[j]))
                    if shattered_by(pts, ch + (c,))
                ]
                if good:
                    nxt.append((pts, good))
        if not nxt:
            break
        best = d
        level = nxt
    return best
