"""Consensus rankings: transitivity checks, medians, dispersion measures.

All routes to a median are kept separate on purpose: exact enumeration is
the oracle, Copeland is the closed form available under strict stochastic
transitivity, and depth climbing is the general-purpose local search.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import EnumerationLimitError, RejectedInputError, TransitivityError
from .perms import (
    ENUMERATION_LIMIT,
    DiscreteRankingDistribution,
    PairwiseMatrix,
    Permutation,
    RankingSample,
    comparison_matrix,
    num_pairs,
    pair_list,
    pairwise_marginals,
    risk_from_marginals,
)


class SstKind(str, Enum):
    STRICT = "STRICT"
    WEAK = "WEAK"
    NOT_TRANSITIVE = "NOT_TRANSITIVE"


@dataclass(frozen=True)
class SstStatus:
    """Stochastic-transitivity classification of a pairwise matrix."""

    kind: SstKind
    margin: float
    witness: tuple[int, int, int] | None = None  # present iff NOT_TRANSITIVE
    tied_pair: tuple[int, int] | None = None  # a pair with p exactly 1/2, if any


def sst_status(m: PairwiseMatrix, tie_tol: float = 0.0) -> SstStatus:
    """Classify m as strictly/weakly stochastically transitive or neither.

    Weak transitivity: p[i,j] >= 1/2 and p[j,k] >= 1/2 imply p[i,k] >= 1/2
    for all triples of distinct items. Strict additionally requires no
    off-diagonal entry equal to 1/2 (within tie_tol).
    """
    p = m.p
    n = m.n
    ge = p >= 0.5 - tie_tol
    distinct = ~np.eye(n, dtype=bool)
    # viol[i,j,k] for distinct i,j,k with i>=j, j>=k but not i>=k
    viol = ge[:, :, None] & ge[None, :, :] & ~ge[:, None, :]
    viol &= distinct[:, :, None] & distinct[None, :, :] & distinct[:, None, :]
    off = np.abs(p - 0.5) <= tie_tol
    np.fill_diagonal(off, False)
    ties = np.argwhere(off)
    tied_pair = tuple(int(x) for x in ties[0]) if ties.size else None
    margin = m.margin()
    if np.any(viol):
        i, j, k = np.argwhere(viol)[0]
        return SstStatus(SstKind.NOT_TRANSITIVE, margin, witness=(int(i), int(j), int(k)),
                         tied_pair=tied_pair)
    if tied_pair is not None:
        return SstStatus(SstKind.WEAK, margin, tied_pair=tied_pair)
    return SstStatus(SstKind.STRICT, margin)


@dataclass(frozen=True)
class MedianResult:
    """Median ranking(s) with the achieved risk and the producing method."""

    medians: tuple[Permutation, ...]
    risk: float
    method: str

    @property
    def median(self) -> Permutation:
        """The lexicographically smallest median (single-ranking callers)."""
        return self.medians[0]


def copeland_median(m: PairwiseMatrix) -> Permutation:
    """Rank items by their number of pairwise losses.

    Requires a strictly stochastically transitive matrix; under strict SST
    the loss counts are distinct and give the unique Kemeny median.
    """
    status = sst_status(m)
    if status.kind is not SstKind.STRICT:
        raise TransitivityError(
            f"copeland_median needs strict stochastic transitivity, got {status.kind.value}",
            witness=status.witness,
            tied_pair=status.tied_pair,
        )
    losses = (m.p < 0.5).sum(axis=1)
    ranks = tuple(int(x) for x in losses)
    return Permutation(ranks)


def exact_kemeny(
    d: DiscreteRankingDistribution, limit: int = ENUMERATION_LIMIT
) -> MedianResult:
    """Exhaustive Kemeny median set over the whole symmetric group.

    Risks are computed through the pairwise decomposition of the Kendall
    distance, chunked so memory stays flat at n = limit.
    """
    n = d.n
    if n > limit:
        raise EnumerationLimitError(f"exact_kemeny: n={n} exceeds limit {limit}")
    m = d.marginals()
    upper = np.array([m.p[i, j] for i, j in pair_list(n)])
    base = float(upper.sum())
    coef = 1.0 - 2.0 * upper
    best = np.inf
    kept: list[tuple[float, tuple[int, ...]]] = []
    chunk: list[tuple[int, ...]] = []

    def flush():
        nonlocal best, kept
        if not chunk:
            return
        ranks = np.array(chunk, dtype=np.int32)
        risks = comparison_matrix(ranks).astype(np.float64) @ coef + base
        lo = float(risks.min())
        if lo < best:
            best = lo
        sel = np.flatnonzero(risks <= best + 1e-9)
        kept = [kv for kv in kept if kv[0] <= best + 1e-9]
        kept.extend((float(risks[s]), chunk[s]) for s in sel)

    for ranks in itertools.permutations(range(n)):
        chunk.append(ranks)
        if len(chunk) >= 50000:
            flush()
            chunk = []
    flush()
    medians = tuple(
        sorted((Permutation(r) for rv, r in kept if rv <= best + 1e-9), key=lambda p: p.ranks)
    )
    return MedianResult(medians=medians, risk=best, method="exact")


def dispersion_v(m: PairwiseMatrix) -> float:
    """Sum over pairs of min(p, 1-p).

    Lower-bounds the optimal ranking risk (every ranking pays at least the
    minority mass on each pair); attained exactly under strict transitivity.
    """
    return float(sum(min(m.p[i, j], m.p[j, i]) for i, j in pair_list(m.n)))


def dispersion_v_prime(m: PairwiseMatrix) -> float:
    """Sum over pairs of p(1-p): half the expected distance of two draws."""
    return float(sum(m.p[i, j] * m.p[j, i] for i, j in pair_list(m.n)))


def _climb(m: PairwiseMatrix, start: Permutation) -> Permutation:
    """Greedy adjacent-transposition ascent in depth (descent in risk)."""
    order = list(start.ordering())
    n = len(order)
    improved = True
    while improved:
        improved = False
        best_r, best_delta = -1, -1e-15
        for r in range(n - 1):
            w, l = order[r], order[r + 1]
            delta = 2.0 * m.p[w, l] - 1.0  # risk change if w and l swap
            if delta < best_delta:
                best_delta, best_r = delta, r
        if best_r >= 0:
            order[best_r], order[best_r + 1] = order[best_r + 1], order[best_r]
            improved = True
    return Permutation.from_ordering(order)


def depth_climb_median(
    s: RankingSample, restarts: int = 8, rng: np.random.Generator | None = None
) -> MedianResult:
    """Local search for a deep ranking: hill-climb over adjacent swaps.

    From each random start, repeatedly move to the neighboring ranking with
    the largest empirical depth until no neighbor improves. Best endpoint
    over restarts wins; exact ties go to the lexicographically smallest.
    """
    if restarts < 1:
        raise RejectedInputError("restarts must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    m = pairwise_marginals(s)
    best: Permutation | None = None
    best_risk = np.inf
    for _ in range(restarts):
        start = Permutation(tuple(int(x) for x in rng.permutation(s.n)))
        end = _climb(m, start)
        r = risk_from_marginals(m, end)
        if r < best_risk - 1e-12 or (
            abs(r - best_risk) <= 1e-12 and (best is None or end.ranks < best.ranks)
        ):
            best, best_risk = end, r
    return MedianResult(medians=(best,), risk=float(best_risk), method="depth_climb")


#: Names accepted for aggregation strategies.
AGGREGATOR_KINDS = ("auto", "exact", "copeland", "depth-climb")


def make_aggregator(
    kind: str = "auto",
    seed: int = 0,
    exact_n_limit: int = 7,
    restarts: int = 8,
):
    """Build the per-cell consensus routine used by tree growth.

    auto: exact enumeration when n <= exact_n_limit, else Copeland when the
    local marginals are strictly SST, else depth climbing. The explicit
    'copeland' choice also falls back to depth climbing on ties/cycles
    rather than failing mid-fit.
    """
    if kind not in AGGREGATOR_KINDS:
        raise RejectedInputError(f"unknown aggregator {kind!r}; pick from {AGGREGATOR_KINDS}")

    def aggregate(sub: RankingSample, node_id: int = 0) -> Permutation:
        rng = np.random.default_rng([seed, node_id])
        if kind == "exact" or (kind == "auto" and sub.n <= exact_n_limit):
            return exact_kemeny(
                DiscreteRankingDistribution.empirical(sub), limit=max(ENUMERATION_LIMIT, exact_n_limit)
            ).median
        if kind in ("copeland", "auto"):
            m = pairwise_marginals(sub)
            if sst_status(m).kind is SstKind.STRICT:
                return copeland_median(m)
        return depth_climb_median(sub, restarts=restarts, rng=rng).median

    aggregate.kind = kind
    aggregate.seed = seed
    return aggregate
