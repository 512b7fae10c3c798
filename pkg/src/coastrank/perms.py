"""Core permutation types and Kendall-tau machinery.

Rankings are full (no ties). A permutation maps items to ranks; internally
items and ranks are both 0-based, and every external surface (files, JSON,
CLI) is 1-based. Conversions happen only at those boundaries.

Pairwise structure is central: a ranking is equivalently its comparison
vector over the ``C(n,2)`` item pairs in lexicographic order, and the
Kendall tau distance is the Hamming distance between comparison vectors.
Bulk operations exploit that representation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    DimensionMismatchError,
    EnumerationLimitError,
    RejectedInputError,
)

#: Default cap for exact enumerations of the symmetric group.
ENUMERATION_LIMIT = 9


def num_pairs(n: int) -> int:
    return n * (n - 1) // 2


def pair_list(n: int) -> list[tuple[int, int]]:
    """All item pairs (i, j), i < j, in lexicographic order."""
    return list(itertools.combinations(range(n), 2))


@dataclass(frozen=True)
class Permutation:
    """A full ranking of n items; ``ranks[i]`` is the 0-based rank of item i."""

    ranks: tuple[int, ...]

    def __post_init__(self):
        r = self.ranks
        if not isinstance(r, tuple):
            r = tuple(int(x) for x in r)
            object.__setattr__(self, "ranks", r)
        n = len(r)
        if n < 1 or sorted(r) != list(range(n)):
            raise RejectedInputError(f"not a permutation of 0..{n - 1}: {r!r}")

    @property
    def n(self) -> int:
        return len(self.ranks)

    def ordering(self) -> tuple[int, ...]:
        """Items listed from rank 0 to rank n-1 (most preferred first)."""
        out = [0] * self.n
        for item, rank in enumerate(self.ranks):
            out[rank] = item
        return tuple(out)

    @classmethod
    def from_ordering(cls, items) -> "Permutation":
        items = tuple(int(x) for x in items)
        ranks = [0] * len(items)
        seen = set()
        for rank, item in enumerate(items):
            if item < 0 or item >= len(items) or item in seen:
                raise RejectedInputError(f"not an ordering of 0..{len(items) - 1}: {items!r}")
            seen.add(item)
            ranks[item] = rank
        return cls(tuple(ranks))

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    @classmethod
    def reverse(cls, n: int) -> "Permutation":
        return cls(tuple(range(n - 1, -1, -1)))

    @classmethod
    def from_one_based(cls, seq) -> "Permutation":
        return cls(tuple(int(x) - 1 for x in seq))

    def to_one_based(self) -> tuple[int, ...]:
        return tuple(r + 1 for r in self.ranks)

    def compose(self, other: "Permutation") -> "Permutation":
        """Function composition: (self . other)(i) = self(other(i))."""
        if self.n != other.n:
            raise DimensionMismatchError("compose: size mismatch")
        return Permutation(tuple(self.ranks[r] for r in other.ranks))

    def comparison_bits(self) -> tuple[int, ...]:
        """1 where i is ranked before j, over lexicographic pairs (i, j)."""
        r = self.ranks
        return tuple(1 if r[i] < r[j] else 0 for i, j in itertools.combinations(range(self.n), 2))


def enumerate_permutations(n: int, limit: int = ENUMERATION_LIMIT):
    """Yield all n! permutations once, lexicographically by rank vector."""
    if n < 1:
        raise RejectedInputError(f"n must be >= 1, got {n}")
    if n > limit:
        raise EnumerationLimitError(f"n={n} exceeds enumeration limit {limit}")
    for ranks in itertools.permutations(range(n)):
        yield Permutation(ranks)


def _count_inversions(seq: list[int]) -> int:
    """Inversion count by merge sort; O(len log len)."""
    n = len(seq)
    if n < 2:
        return 0
    work = list(seq)
    buf = [0] * n
    count = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if work[i] <= work[j]:
                    buf[k] = work[i]
                    i += 1
                else:
                    # work[j] jumps ahead of every element left in [i, mid)
                    buf[k] = work[j]
                    j += 1
                    count += mid - i
                k += 1
            buf[k:hi] = work[i:mid] if i < mid else work[j:hi]
            work[lo:hi] = buf[lo:hi]
        width *= 2
    return count


def kendall_tau(a: Permutation, b: Permutation) -> int:
    """Kendall tau distance: the number of discordantly ordered item pairs."""
    if a.n != b.n:
        raise DimensionMismatchError(f"kendall_tau: {a.n} vs {b.n} items")
    # Read b's ranks in a's preference order; discordant pairs become inversions.
    seq = [b.ranks[item] for item in a.ordering()]
    return _count_inversions(seq)


def kendall_tau_pairs(a: Permutation, b: Permutation) -> int:
    """O(n^2) pair-enumeration reference implementation, kept for tests."""
    if a.n != b.n:
        raise DimensionMismatchError(f"kendall_tau: {a.n} vs {b.n} items")
    ra, rb = a.ranks, b.ranks
    return sum(
        1
        for i, j in itertools.combinations(range(a.n), 2)
        if (ra[i] - ra[j]) * (rb[i] - rb[j]) < 0
    )


def comparison_matrix(ranks: np.ndarray) -> np.ndarray:
    """Boolean (N, C(n,2)) matrix of 'i before j' bits over lexicographic pairs."""
    n = ranks.shape[1]
    pairs = pair_list(n)
    ii = np.fromiter((i for i, _ in pairs), dtype=np.int64)
    jj = np.fromiter((j for _, j in pairs), dtype=np.int64)
    return ranks[:, ii] < ranks[:, jj]


def hamming_cross(xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
    """Pairwise Hamming distances between rows of two boolean matrices."""
    a = xa.astype(np.float64)
    b = xb.astype(np.float64)
    # disagreements = a(1-b)' + (1-a)b'
    return np.rint(a @ (1.0 - b.T) + (1.0 - a) @ b.T).astype(np.int64)


class RankingSample:
    """An immutable batch of N full rankings over the same n items.

    Caches the rank matrix, the pairwise comparison matrix, and the N x N
    Kendall distance matrix, which back the partitioning and analysis code.
    """

    def __init__(self, rankings, labels=None):
        rankings = tuple(rankings)
        if not rankings:
            raise RejectedInputError("empty sample")
        n = rankings[0].n
        for p in rankings:
            if not isinstance(p, Permutation):
                raise RejectedInputError(f"not a Permutation: {p!r}")
            if p.n != n:
                raise DimensionMismatchError(f"sample mixes n={n} and n={p.n}")
        if labels is not None:
            labels = tuple(labels)
            if len(labels) != len(rankings):
                raise DimensionMismatchError("labels length != sample size")
        self._rankings = rankings
        self._labels = labels
        self._n = n

    @property
    def n(self) -> int:
        return self._n

    @property
    def size(self) -> int:
        return len(self._rankings)

    @property
    def rankings(self) -> tuple[Permutation, ...]:
        return self._rankings

    @property
    def labels(self):
        return self._labels

    def __len__(self) -> int:
        return len(self._rankings)

    def __getitem__(self, i: int) -> Permutation:
        return self._rankings[i]

    @cached_property
    def ranks_matrix(self) -> np.ndarray:
        m = np.array([p.ranks for p in self._rankings], dtype=np.int32)
        m.setflags(write=False)
        return m

    @cached_property
    def comparisons(self) -> np.ndarray:
        x = comparison_matrix(self.ranks_matrix)
        x.setflags(write=False)
        return x

    @cached_property
    def distance_matrix(self) -> np.ndarray:
        x = self.comparisons.astype(np.float64)
        agree = x @ x.T + (1.0 - x) @ (1.0 - x.T)
        d = np.rint(num_pairs(self._n) - agree).astype(np.int64)
        d.setflags(write=False)
        return d

    def subset(self, indices) -> "RankingSample":
        idx = list(indices)
        labels = None if self._labels is None else tuple(self._labels[i] for i in idx)
        return RankingSample(tuple(self._rankings[i] for i in idx), labels)


@dataclass(frozen=True, eq=False)
class PairwiseMatrix:
    """Pairwise order marginals: p[i, j] = P(item i ranked before item j)."""

    n: int
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        object.__setattr__(self, "p", p)
        if p.shape != (self.n, self.n):
            raise DimensionMismatchError(f"marginal matrix shape {p.shape} != ({self.n}, {self.n})")
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise RejectedInputError("marginals outside [0, 1]")
        if np.max(np.abs(p + p.T - 1.0)) > 1e-12:
            raise RejectedInputError("marginals violate p[i,j] + p[j,i] = 1")
        if np.max(np.abs(np.diag(p) - 0.5)) > 0:
            raise RejectedInputError("diagonal must be exactly 1/2 by convention")

    def entry(self, i: int, j: int) -> float:
        return float(self.p[i, j])

    def margin(self) -> float:
        """min over i != j of |p[i,j] - 1/2| (the low-noise margin h)."""
        off = ~np.eye(self.n, dtype=bool)
        return float(np.min(np.abs(self.p[off] - 0.5)))

    @classmethod
    def from_comparisons(cls, n: int, x: np.ndarray, weights=None) -> "PairwiseMatrix":
        """Build from a boolean comparison matrix, optionally weighted.

        The upper triangle is the (weighted) mean of each pair column and the
        lower triangle is its exact complement, so p + p.T == 1 holds exactly.
        """
        if x.shape[0] == 0:
            upper = np.full(num_pairs(n), 0.5)
        elif weights is None:
            upper = x.sum(axis=0) / x.shape[0]
        else:
            w = np.asarray(weights, dtype=np.float64)
            total = w.sum()
            if total <= 0:
                upper = np.full(num_pairs(n), 0.5)
            else:
                upper = (w @ x.astype(np.float64)) / total
        p = np.full((n, n), 0.5)
        for c, (i, j) in enumerate(pair_list(n)):
            p[i, j] = upper[c]
            p[j, i] = 1.0 - upper[c]
        return cls(n, p)


def pairwise_marginals(s: RankingSample) -> PairwiseMatrix:
    """Empirical pairwise marginals of a sample."""
    return PairwiseMatrix.from_comparisons(s.n, s.comparisons)


@dataclass(frozen=True, eq=False)
class DiscreteRankingDistribution:
    """A finitely supported distribution over rankings (distinct support)."""

    n: int
    support: tuple[Permutation, ...]
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if len(self.support) == 0:
            raise RejectedInputError("empty support")
        if len(self.support) != w.shape[0]:
            raise DimensionMismatchError("support/weights length mismatch")
        for p in self.support:
            if p.n != self.n:
                raise DimensionMismatchError("support permutation of wrong size")
        if len({p.ranks for p in self.support}) != len(self.support):
            raise RejectedInputError("support points must be distinct")
        if np.any(w < -1e-15):
            raise RejectedInputError("negative weight")
        if abs(float(w.sum()) - 1.0) > 1e-10:
            raise RejectedInputError(f"weights sum to {w.sum()!r}, not 1")

    @property
    def size(self) -> int:
        return len(self.support)

    @classmethod
    def from_pairs(cls, pairs) -> "DiscreteRankingDistribution":
        """Build from (permutation, weight) pairs, merging duplicates."""
        acc: dict[tuple[int, ...], float] = {}
        n = None
        for perm, w in pairs:
            n = perm.n if n is None else n
            acc[perm.ranks] = acc.get(perm.ranks, 0.0) + float(w)
        items = sorted(acc.items())
        support = tuple(Permutation(r) for r, _ in items)
        weights = np.array([w for _, w in items], dtype=np.float64)
        return cls(n, support, weights)

    @classmethod
    def empirical(cls, s: RankingSample) -> "DiscreteRankingDistribution":
        """The empirical distribution of a sample (support sorted, weights k/N)."""
        counts: dict[tuple[int, ...], int] = {}
        for p in s.rankings:
            counts[p.ranks] = counts.get(p.ranks, 0) + 1
        items = sorted(counts.items())
        support = tuple(Permutation(r) for r, _ in items)
        weights = np.array([c for _, c in items], dtype=np.float64) / s.size
        return cls(s.n, support, weights)

    @cached_property
    def support_comparisons(self) -> np.ndarray:
        ranks = np.array([p.ranks for p in self.support], dtype=np.int32)
        x = comparison_matrix(ranks)
        x.setflags(write=False)
        return x

    def marginals(self) -> PairwiseMatrix:
        return PairwiseMatrix.from_comparisons(self.n, self.support_comparisons, self.weights)

    def condition(self, mask: np.ndarray) -> tuple[float, "DiscreteRankingDistribution | None"]:
        """Restrict to the support points selected by a boolean mask.

        Returns (mass, conditional); the conditional is None when mass is 0.
        """
        mask = np.asarray(mask, dtype=bool)
        mass = float(self.weights[mask].sum())
        if mass <= 0.0:
            return 0.0, None
        support = tuple(p for p, keep in zip(self.support, mask) if keep)
        weights = self.weights[mask] / mass
        return mass, DiscreteRankingDistribution(self.n, support, weights)

    def prob_of(self, sigma: Permutation) -> float:
        for p, w in zip(self.support, self.weights):
            if p.ranks == sigma.ranks:
                return float(w)
        return 0.0


def ranking_risk(d: DiscreteRankingDistribution, sigma: Permutation) -> float:
    """Expected Kendall tau distance from a draw of d to sigma."""
    if d.n != sigma.n:
        raise DimensionMismatchError("ranking_risk: size mismatch")
    return float(sum(w * kendall_tau(p, sigma) for p, w in zip(d.support, d.weights)))


def ranking_depth(d: DiscreteRankingDistribution, sigma: Permutation) -> float:
    """Centrality of sigma under d: n(n-1)/2 minus the ranking risk."""
    return num_pairs(d.n) - ranking_risk(d, sigma)


def risk_from_marginals(m: PairwiseMatrix, sigma: Permutation) -> float:
    """Ranking risk computed from pairwise marginals alone.

    Per pair, the disagreement probability is p[later, earlier]; summing over
    pairs equals the expected Kendall distance because the distance itself
    decomposes over pairs.
    """
    if m.n != sigma.n:
        raise DimensionMismatchError("risk_from_marginals: size mismatch")
    r = sigma.ranks
    total = 0.0
    for i, j in itertools.combinations(range(m.n), 2):
        total += m.p[i, j] if r[i] > r[j] else m.p[j, i]
    return float(total)
