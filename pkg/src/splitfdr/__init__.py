"""FDR-controlled feature selection after clustering, via data splitting.

Splits samples in half, clusters and tests each half separately, and combines
the halves' signed statistics into mirror statistics whose null distribution
is symmetric about zero; multiple splits are aggregated through inclusion
rates. Simulation generators and the matching closed-form theory are included
as built-in verification oracles.
"""

from ._kernels import BACKEND
from .bench import ExperimentGrid, MethodSpec, double_dip_baseline, fdp, power, run_grid
from .cluster import (
    CovarianceSpec,
    LatentLabels,
    empirical_covariance,
    first_pc_pseudotime,
    kmeans2,
    whiten,
)
from .data import DataMatrix, GroundTruth, RngHandle, SplitPlan, load_matrix, random_split
from .errors import ConfigError, DataError, NumericError, SplitFdrError
from .mds import MdsResult, inclusion_simple, inclusion_weighted, mds_cutoff, select_mds
from .mirror import DsConfig, MirrorResult, fdp_cutoff, label_switch_bound, mirror_stats, select_ds
from .simulate import (
    GaussianSimCfg,
    PoissonSimCfg,
    SimOutput,
    TrajectorySimCfg,
    gaussian_copula_uniforms,
    gen_gaussian,
    gen_poisson,
    gen_trajectory,
    poisson_quantile,
)
from .stats import SignedStatVector, TestConfig, test_all_features
from .theory import (
    TwoClusterSpec,
    asymptotic_power,
    exact_power,
    misclustering_error,
    power_loss_bounds,
    split_imbalance_bound,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "__version__",
    "ConfigError",
    "DataError",
    "NumericError",
    "SplitFdrError",
    "DataMatrix",
    "GroundTruth",
    "SplitPlan",
    "RngHandle",
    "load_matrix",
    "random_split",
    "LatentLabels",
    "CovarianceSpec",
    "kmeans2",
    "whiten",
    "first_pc_pseudotime",
    "empirical_covariance",
    "TestConfig",
    "SignedStatVector",
    "test_all_features",
    "DsConfig",
    "MirrorResult",
    "mirror_stats",
    "fdp_cutoff",
    "select_ds",
    "label_switch_bound",
    "MdsResult",
    "inclusion_simple",
    "inclusion_weighted",
    "mds_cutoff",
    "select_mds",
    "GaussianSimCfg",
    "PoissonSimCfg",
    "TrajectorySimCfg",
    "SimOutput",
    "gen_gaussian",
    "gen_poisson",
    "gen_trajectory",
    "gaussian_copula_uniforms",
    "poisson_quantile",
    "TwoClusterSpec",
    "misclustering_error",
    "exact_power",
    "asymptotic_power",
    "power_loss_bounds",
    "split_imbalance_bound",
    "MethodSpec",
    "ExperimentGrid",
    "fdp",
    "power",
    "double_dip_baseline",
    "run_grid",
]
