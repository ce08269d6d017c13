"""Quantile regression on two-way clustered arrays.

Fits linear quantile regression by an interior-point method, estimates
the kernel Jacobian with a rule-of-thumb bandwidth, and builds
cluster-robust sandwich variances whose meat sums score cross-products
within rows, within columns, and on the diagonal, with eigenvalue
correction keeping the pieces positive semidefinite. A Monte Carlo
engine reproduces size experiments and the non-Gaussian interaction
regime.
"""

from .crve import (
    CrveKind,
    OmegaComponents,
    TestResult,
    VarianceEstimate,
    evc,
    omega_ctw,
    omega_variant,
    sandwich,
    t_test,
)
from .errors import (
    InputError,
    InvalidConfig,
    InvalidTau,
    NumericError,
    RankDeficient,
    SingularJacobian,
    TwqrError,
)
from .jacobian import (
    BandwidthDiagnostics,
    JacobianEstimate,
    alpha,
    amse_optimal_bandwidth,
    powell_jacobian,
    rule_of_thumb_bandwidth,
)
from .montecarlo import (
    DgpWeights,
    MonteCarloConfig,
    NonGaussianDemo,
    RejectionReport,
    VarianceOracle,
    direct_score_variance,
    generate_dgp,
    nongaussian_demo,
    oracle_variance_components,
    rejection_experiment,
    true_beta,
    true_bread,
)
from .panel import PanelArray, ValidationReport, load_csv, validate, write_csv
from .solver import QuantileFit, ScoreMatrix, check_loss, fit_qr, score_matrix

__version__ = "0.1.0"

__all__ = [
    "PanelArray",
    "ValidationReport",
    "load_csv",
    "write_csv",
    "validate",
    "check_loss",
    "fit_qr",
    "score_matrix",
    "QuantileFit",
    "ScoreMatrix",
    "alpha",
    "rule_of_thumb_bandwidth",
    "powell_jacobian",
    "amse_optimal_bandwidth",
    "BandwidthDiagnostics",
    "JacobianEstimate",
    "CrveKind",
    "OmegaComponents",
    "VarianceEstimate",
    "TestResult",
    "evc",
    "omega_ctw",
    "omega_variant",
    "sandwich",
    "t_test",
    "DgpWeights",
    "MonteCarloConfig",
    "RejectionReport",
    "VarianceOracle",
    "NonGaussianDemo",
    "generate_dgp",
    "true_beta",
    "rejection_experiment",
    "oracle_variance_components",
    "direct_score_variance",
    "true_bread",
    "nongaussian_demo",
    "TwqrError",
    "InputError",
    "NumericError",
    "InvalidConfig",
    "InvalidTau",
    "RankDeficient",
    "SingularJacobian",
]
