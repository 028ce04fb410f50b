"""Coalescing random walks, their voter-model dual and non-backtracking variants on trees."""
from .bounds import (BoundCheck, OccupancyIntegral, griffeath_upper, gw_lower_bound_form,
                     lower_bound_bounded_degree, sigma_tail_bound_degree, sigma_tail_bound_general)
from .crw import (CrwState, SigmaSample, crw_init, crw_occupancy_series, crw_step, run_until,
                  sigma_samples)
from .dual import (ClusterState, JumpTrace, cluster_init, cluster_step, martingale_trace,
                   survival_series)
from .experiments import ExperimentConfig, parse_grid, run
from .graphs import (ConfigurationError, ExposureStats, FiniteGraph, GraphOracle, GraphUsageError,
                     LazyTree, OffspringDistribution, exposed_max_degree, make_graph, neighbors)
from .nbtree import (InvariantViolation, NbClusterState, NbParticle, NbState, RootedTree, ZapState,
                     nb_cluster_init, nb_cluster_step, nb_init, nb_rate_audit, nb_step, root_occupation,
                     zap_init, zap_step)
from .oracle import (branching_survival, cluster_exact_survival, constant_rate_survival,
                     crw_exact_pt, duality_gap)
from .rng import rng_stream
from .stats import EstimateSeries, wilson_interval

__version__ = "0.1.0"
