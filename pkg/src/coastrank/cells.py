"""Cells: subsets of rankings carved out by pairwise order constraints.

A cell is the set of permutations satisfying a conjunction of constraints
"item a ranked before item b". Constraints are stored as the raw chosen
pairs; the transitive closure is kept alongside so admissibility checks are
O(1) and cycles are impossible by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    InadmissiblePairError,
    PartitionIntegrityError,
    RejectedInputError,
)
from .perms import (
    PairwiseMatrix,
    Permutation,
    RankingSample,
    enumerate_permutations,
    pair_list,
)


def _closure_of(n: int, edges) -> np.ndarray:
    """Transitive closure of a constraint edge set as a boolean matrix."""
    c = np.zeros((n, n), dtype=bool)
    for a, b in edges:
        c[a, b] = True
    while True:
        nxt = c | ((c.astype(np.uint8) @ c.astype(np.uint8)) > 0)
        if np.array_equal(nxt, c):
            return c
        c = nxt


@dataclass(frozen=True)
class Cell:
    """A pairwise-constraint cell of the symmetric group on n items."""

    n: int
    constraints: frozenset[tuple[int, int]] = frozenset()
    closure: np.ndarray = field(default=None, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if self.n < 1:
            raise RejectedInputError("cell needs n >= 1")
        cons = frozenset((int(a), int(b)) for a, b in self.constraints)
        object.__setattr__(self, "constraints", cons)
        for a, b in cons:
            if not (0 <= a < self.n and 0 <= b < self.n) or a == b:
                raise RejectedInputError(f"bad constraint pair {(a, b)} for n={self.n}")
        if self.closure is None:
            closure = _closure_of(self.n, cons)
            object.__setattr__(self, "closure", closure)
        if bool(np.any(np.diag(self.closure))):
            raise RejectedInputError(f"cyclic constraints: {sorted(cons)}")
        self.closure.setflags(write=False)

    @classmethod
    def root(cls, n: int) -> "Cell":
        return cls(n, frozenset())

    def contains(self, sigma: Permutation) -> bool:
        if sigma.n != self.n:
            raise DimensionMismatchError("cell_contains: size mismatch")
        r = sigma.ranks
        return all(r[a] < r[b] for a, b in self.constraints)

    def membership_mask(self, s: RankingSample) -> np.ndarray:
        """Boolean mask of sample rows lying in this cell (vectorized)."""
        if s.n != self.n:
            raise DimensionMismatchError("membership: size mismatch")
        mask = np.ones(s.size, dtype=bool)
        if not self.constraints:
            return mask
        x = s.comparisons
        col = {pair: c for c, pair in enumerate(pair_list(self.n))}
        for a, b in self.constraints:
            mask &= x[:, col[(a, b)]] if a < b else ~x[:, col[(b, a)]]
        return mask

    def admissible_pairs(self) -> list[tuple[int, int]]:
        """Pairs (i, j), i < j, with neither order implied by the closure."""
        c = self.closure
        return [
            (i, j)
            for i, j in pair_list(self.n)
            if not c[i, j] and not c[j, i]
        ]

    def is_admissible(self, i: int, j: int) -> bool:
        return not self.closure[i, j] and not self.closure[j, i]

    def split(self, pair: tuple[int, int]) -> tuple["Cell", "Cell"]:
        """Split on an admissible pair; child 0 orders i before j."""
        i, j = int(pair[0]), int(pair[1])
        if not (0 <= i < self.n and 0 <= j < self.n) or i == j:
            raise RejectedInputError(f"bad split pair {(i, j)}")
        if not self.is_admissible(i, j):
            raise InadmissiblePairError(f"pair {(i, j)} already ordered by the cell")
        return self._child(i, j), self._child(j, i)

    def _child(self, a: int, b: int) -> "Cell":
        # incremental closure: everything reaching a now reaches past b
        anc = self.closure[:, a].copy()
        anc[a] = True
        desc = self.closure[b, :].copy()
        desc[b] = True
        closure = self.closure | np.outer(anc, desc)
        return Cell(self.n, self.constraints | {(a, b)}, closure)

    def enumerate_members(self, limit: int | None = None):
        """All permutations in the cell (exact enumeration, small n only)."""
        from .perms import ENUMERATION_LIMIT

        lim = ENUMERATION_LIMIT if limit is None else limit
        for sigma in enumerate_permutations(self.n, lim):
            if self.contains(sigma):
                yield sigma

    def to_json_obj(self) -> list[list[int]]:
        """Constraint list with 1-based items, sorted for determinism."""
        return [[a + 1, b + 1] for a, b in sorted(self.constraints)]

    @classmethod
    def from_json_obj(cls, n: int, obj) -> "Cell":
        return cls(n, frozenset((int(a) - 1, int(b) - 1) for a, b in obj))


@dataclass(frozen=True, eq=False)
class LocalStats:
    """Per-cell empirical summary of a sample."""

    cell: Cell
    count: int
    marginals: PairwiseMatrix
    v_hat: float


def v_hat_of_indices(
    s: RankingSample,
    indices: np.ndarray,
    pair_cap: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Cell variability estimate: sum of pairwise distances over N(N-1).

    With ``pair_cap`` set and more member pairs than the cap, a seeded random
    subset of pairs is averaged instead (and halved, matching the estimand
    of half the expected pairwise distance).
    """
    m = int(len(indices))
    if m <= 1:
        return 0.0
    total_pairs = m * (m - 1) // 2
    if pair_cap is not None and total_pairs > pair_cap:
        if rng is None:
            raise RejectedInputError("pair_cap subsampling requires an rng")
        ks = rng.integers(0, m, size=pair_cap)
        ls = rng.integers(0, m - 1, size=pair_cap)
        ls = np.where(ls >= ks, ls + 1, ls)  # ordered pairs, k != l
        vals = (s.comparisons[indices[ks]] != s.comparisons[indices[ls]]).sum(axis=1)
        return float(vals.mean() / 2.0)
    # sum of pairwise distances without forming the m x m matrix: rankings
    # disagreeing on comparison column p come in count_p * (m - count_p) pairs
    counts = s.comparisons[indices].sum(axis=0, dtype=np.int64)
    pair_sum = int((counts * (m - counts)).sum())
    return float(pair_sum / (m * (m - 1)))


def local_stats(
    s: RankingSample,
    c: Cell,
    pair_cap: int | None = None,
    rng: np.random.Generator | None = None,
) -> LocalStats:
    """Count, pairwise marginals, and variability of the sample inside a cell.

    Empty cells are legal: they report neutral marginals (all 1/2) and zero
    variability. Cells with a single member also have zero variability.
    """
    mask = c.membership_mask(s)
    idx = np.flatnonzero(mask)
    marg = PairwiseMatrix.from_comparisons(s.n, s.comparisons[mask])
    v = v_hat_of_indices(s, idx, pair_cap=pair_cap, rng=rng)
    return LocalStats(cell=c, count=int(idx.size), marginals=marg, v_hat=v)


def partition_criterion(s: RankingSample, cells) -> float:
    """Weighted intra-cell variability of a partition: sum (N_c/N) v_hat(c).

    Raises PartitionIntegrityError unless the cells tile the sample (every
    ranking matched by exactly one cell).
    """
    cells = list(cells)
    if not cells:
        raise PartitionIntegrityError("no cells given")
    cover = np.zeros(s.size, dtype=np.int64)
    masks = []
    for c in cells:
        m = c.membership_mask(s)
        masks.append(m)
        cover += m.astype(np.int64)
    if np.any(cover != 1):
        over = int(np.sum(cover > 1))
        under = int(np.sum(cover == 0))
        raise PartitionIntegrityError(
            f"cells do not tile the sample: {over} rankings multiply covered, {under} uncovered"
        )
    total = 0.0
    for mask in masks:
        idx = np.flatnonzero(mask)
        total += (idx.size / s.size) * v_hat_of_indices(s, idx)
    return float(total)
