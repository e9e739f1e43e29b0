"""Spatial queues with nearest-neighbour shift strategies.

Servers sit uniformly at random in the unit cube; customers arriving at a
server may shift to one of its nearest neighbours.  The package builds the
directed k-NN graph of the servers, turns in-degrees into effective arrival
rates, and measures the fraction of overloaded servers together with its
asymptotic constants.
"""

from nnshift.geometry import PointSet, brute_force_knn, k_nearest, sample_points
from nnshift.nngraph import (
    DegreeCounts,
    KnnGraph,
    StarCounts,
    build_knn_graph,
    counts_from_stars,
    in_degree_counts,
    mutual_pairs,
    star_counts,
    weak_components,
)
from nnshift.strategy import (
    KPNNS,
    LRNNS,
    LoadReport,
    a_coefficients,
    classify_overload,
    effective_rates,
    overload_via_indegree,
    theta,
)
from nnshift.asymptotics import (
    ConstantsTable,
    alpha,
    empirical_constants,
    known_constants,
    known_variance,
    limit_overload,
    mc_constants,
    mc_table,
    union_integral,
)
from nnshift.experiment import (
    CltDiagnostics,
    EventSimResult,
    ExperimentConfig,
    ReplicationSummary,
    clt_check,
    event_simulation,
    run_replications,
    small_n_expectation,
    spatial_export,
)

__version__ = "0.1.0"
