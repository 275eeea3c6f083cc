"""Asymptotic variances for estimators that reuse historical nuisance estimates."""

from .anova import (
    AnovaHistorical,
    DesignXi,
    aggregate_historical,
    emit_table1,
    emit_table2,
    optimal_design,
    upsilon_of_design,
    var_theta_A,
    var_theta_B,
    var_theta_D,
)
from .asymvar import (
    HierarchyReport,
    ProblemSpec,
    compare_hierarchy,
    delta_variance,
    theorem6_preconditions,
    variance_A,
    variance_B,
    variance_C,
)
from .bliss import Allocation, BlissInstance, bliss_variance, emit_table3, find_nmin, greedy_allocate
from .errors import HistfuseError
from .fusion import (
    Estimate,
    HistoricalSet,
    JointEstimate,
    combine_eta,
    combine_theta_C,
    fusion_weights,
    scalar_efficiency,
)
from .linalg import VarianceBlocks, cholesky, invert, loewner_leq, min_eigenvalue
from .montecarlo import McReport, SimConfig, simulate, simulate_anova, simulate_bliss, verify_coincidence

SCHEMA = "histfuse/1"

__version__ = "0.1.0"
