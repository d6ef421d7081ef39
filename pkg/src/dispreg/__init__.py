"""Dispersion-model regression with dispersion covariates.

Maximum likelihood estimation for densities of the form
exp{phi * t(y, mu) + a(phi, y)} with regression structures on both the
position parameter mu and the precision parameter phi, plus second-order
bias-corrected estimates via analytic matrix formulas and via bootstrap
resampling, and a Monte Carlo study harness.
"""

from .bias import (
    BiasMatrices,
    BiasReport,
    bias_beta,
    bias_matrices,
    bias_mu_phi,
    bias_report,
    bias_theta,
    corrected_parameters,
)
from .bootstrap import BootstrapPlan, BootstrapResult, bootstrap_bias
from .errors import (
    ConfigError,
    DataError,
    DispregError,
    DomainError,
    NonConvergenceError,
    NumericsWarning,
    RankDeficiencyError,
    UnsupportedFamilyOperation,
)
from .families import CumulantEval, Family, family_by_name
from .fit import FitResult, fit_mle, information, loglik, score, wald_intervals
from .links import Link, LinkEval, link_by_name
from .model import (
    Dataset,
    DesignState,
    ModelSpec,
    PredictorSpec,
    Term,
    build_model,
    design_build,
    parse_predictor,
    predictor_eval,
)
from .simulate import StudyConfig, StudyReport, run_study

__version__ = "0.1.0"

__all__ = [
    "BiasMatrices",
    "BiasReport",
    "BootstrapPlan",
    "BootstrapResult",
    "ConfigError",
    "CumulantEval",
    "DataError",
    "Dataset",
    "DesignState",
    "DispregError",
    "DomainError",
    "Family",
    "FitResult",
    "Link",
    "LinkEval",
    "ModelSpec",
    "NonConvergenceError",
    "NumericsWarning",
    "PredictorSpec",
    "RankDeficiencyError",
    "StudyConfig",
    "StudyReport",
    "Term",
    "UnsupportedFamilyOperation",
    "bias_beta",
    "bias_matrices",
    "bias_mu_phi",
    "bias_report",
    "bias_theta",
    "bootstrap_bias",
    "build_model",
    "corrected_parameters",
    "design_build",
    "family_by_name",
    "fit_mle",
    "information",
    "link_by_name",
    "loglik",
    "parse_predictor",
    "predictor_eval",
    "run_study",
    "score",
    "wald_intervals",
]
