"""coastrank: consensus ranking distributions from recursive pairwise partitioning.

Learns a tree of pairwise-comparison cells over the symmetric group, summarizes
each cell by a consensus ranking, and quantifies the approximation with exact
transport and dispersion diagnostics.
"""

from .analysis import (
    DepthRecord,
    HomogeneityResult,
    SmoothedCellDistribution,
    SmoothMethod,
    anomaly_scores,
    chain_pmf,
    co_membership,
    ddplot_table,
    homogeneity_test,
    local_depths,
    smooth_cell,
    uniform_cell_marginals,
    uniform_marginal_discrepancy,
)
from .cells import Cell, partition_criterion, v_hat_of_indices
from .fileio import (
    RankingFileFormat,
    RunManifest,
    load_rankings,
    sha256_of,
    write_manifest,
    write_rankings,
)
from .consensus import (
    MedianResult,
    SstStatus,
    copeland_median,
    depth_climb_median,
    dispersion_v,
    dispersion_v_prime,
    exact_kemeny,
    make_aggregator,
    sst_status,
)
from .models import (
    MallowsParams,
    MixtureSpec,
    PlackettLuceParams,
    exponential_worths,
    mallows_distribution,
    mallows_normalizer,
    mallows_pmf,
    random_mallows_mixture_spec,
    random_plackett_luce_mixture_spec,
    sample_mallows,
    sample_mixture,
    sample_plackett_luce,
)
from .perms import (
    ENUMERATION_LIMIT,
    DiscreteRankingDistribution,
    PairwiseMatrix,
    Permutation,
    RankingSample,
    enumerate_permutations,
    kendall_tau,
    kendall_tau_pairs,
    num_pairs,
    pair_list,
    pairwise_marginals,
    ranking_depth,
    ranking_risk,
)
from .transport import (
    DistortionReport,
    TransportPlan,
    distortion_report,
    l2_distance,
    wasserstein,
)
from .tree import (
    CRD,
    CoastNode,
    CoastTree,
    GrowthTrace,
    SplitRule,
    choose_split_balanced,
    choose_split_min_distortion,
    crd_of,
    grow,
    prune_sequence,
    select_subtree,
)

__all__ = [
    "CRD",
    "Cell",
    "CoastNode",
    "CoastTree",
    "DepthRecord",
    "DiscreteRankingDistribution",
    "DistortionReport",
    "ENUMERATION_LIMIT",
    "GrowthTrace",
    "HomogeneityResult",
    "MallowsParams",
    "MedianResult",
    "MixtureSpec",
    "PairwiseMatrix",
    "Permutation",
    "PlackettLuceParams",
    "RankingFileFormat",
    "RankingSample",
    "RunManifest",
    "SmoothMethod",
    "SmoothedCellDistribution",
    "SplitRule",
    "SstStatus",
    "TransportPlan",
    "anomaly_scores",
    "chain_pmf",
    "co_membership",
    "ddplot_table",
    "distortion_report",
    "choose_split_balanced",
    "choose_split_min_distortion",
    "copeland_median",
    "crd_of",
    "depth_climb_median",
    "dispersion_v",
    "dispersion_v_prime",
    "enumerate_permutations",
    "exact_kemeny",
    "exponential_worths",
    "grow",
    "homogeneity_test",
    "kendall_tau",
    "kendall_tau_pairs",
    "l2_distance",
    "load_rankings",
    "local_depths",
    "make_aggregator",
    "mallows_distribution",
    "mallows_normalizer",
    "mallows_pmf",
    "num_pairs",
    "pair_list",
    "pairwise_marginals",
    "partition_criterion",
    "prune_sequence",
    "random_mallows_mixture_spec",
    "random_plackett_luce_mixture_spec",
    "ranking_depth",
    "ranking_risk",
    "sample_mallows",
    "sample_mixture",
    "sample_plackett_luce",
    "select_subtree",
    "sha256_of",
    "smooth_cell",
    "sst_status",
    "uniform_cell_marginals",
    "uniform_marginal_discrepancy",
    "v_hat_of_indices",
    "wasserstein",
    "write_manifest",
    "write_rankings",
]

__version__ = "0.1.0"
