"""Low-rank exponential-family decomposition of partially observed grids.

The package fits models of the form ``link(mean_ij) = gamma_j +
sum_r alpha_ir beta_jr`` to the observed cells of a data grid by
alternating maximum likelihood, selects the rank by information
criteria or cross-validation, rotates fits into orthonormal principal
components, predicts unobserved cells, and ships a Monte Carlo harness
for studying the selection rules.
"""

from .dataset import (
    ObservationSet,
    SplitSet,
    apply_missing_mechanism,
    compact,
    load_coordinate_csv,
    load_dense_csv,
    random_split,
    window_minus_window,
    write_coordinate_csv,
)
from .decomposition import (
    Decomposition,
    ExplainedG2,
    PredictionSet,
    explained_g2,
    orthogonalize,
    predict_cells,
)
from .errors import (
    CoverageError,
    DataError,
    DomainError,
    FlexpcaError,
    NonConvergenceError,
    SaturatedModelError,
    SingularDesignError,
)
from .families import Bernoulli, Family, Gaussian, Poisson, QuasiPoisson, family_from_name
from .fitting import (
    FpcaConfig,
    FpcaFit,
    col_step,
    estimate_dispersion,
    fit_fpca,
    init_beta,
    row_step,
)
from .glm import GlmFit, GlmProblem, fit_glm, predict_eta
from .selection import (
    CvResult,
    GicResult,
    degrees_of_freedom,
    gic,
    select_k_cv,
    select_k_gic,
)
from .simulate import SimDesign, SimReport, generate_dataset, run_k_recovery, run_rmsep

__version__ = "0.1.0"

__all__ = [
    "ObservationSet",
    "SplitSet",
    "load_coordinate_csv",
    "write_coordinate_csv",
    "load_dense_csv",
    "window_minus_window",
    "apply_missing_mechanism",
    "random_split",
    "compact",
    "Family",
    "Gaussian",
    "Poisson",
    "Bernoulli",
    "QuasiPoisson",
    "family_from_name",
    "GlmProblem",
    "GlmFit",
    "fit_glm",
    "predict_eta",
    "FpcaConfig",
    "FpcaFit",
    "init_beta",
    "row_step",
    "col_step",
    "fit_fpca",
    "estimate_dispersion",
    "degrees_of_freedom",
    "gic",
    "GicResult",
    "CvResult",
    "select_k_gic",
    "select_k_cv",
    "Decomposition",
    "ExplainedG2",
    "PredictionSet",
    "orthogonalize",
    "explained_g2",
    "predict_cells",
    "SimDesign",
    "SimReport",
    "generate_dataset",
    "run_k_recovery",
    "run_rmsep",
    "FlexpcaError",
    "DataError",
    "DomainError",
    "CoverageError",
    "SingularDesignError",
    "NonConvergenceError",
    "SaturatedModelError",
    "__version__",
]
