"""Density estimation and sampling under adversarial losses.

Densities on ``[0, 1]^d`` are finite orthonormal series (Fourier or Haar),
losses are suprema over generalized ellipses of discriminators and have a
closed form, and the bounds module tabulates the matching minimax upper and
lower bounds.
"""

from .basis import (
    CONSTANT,
    FOURIER,
    HAAR,
    BasisIndex,
    CoefficientVector,
    SobolevWeights,
    SpectrumWeights,
    TableWeights,
    TruncationSet,
    design_matrix,
    enumerate_truncation,
    eval_basis,
    fourier,
    haar,
    sup_norm,
    weight,
)
from .bounds import (
    BoundReport,
    LowerBoundReport,
    ParametricConstant,
    RateSpec,
    lower_bound,
    oracle_zeta,
    parametric_constant,
    sobolev_rate,
    upper_bound_risk,
)
from .density import (
    NonnegCertificate,
    PackingFamily,
    SeriesDensity,
    eval_density,
    kl_divergence,
    l2_distance,
    make_density,
    nonneg_check,
    packing_densities,
    uniform,
    varshamov_gilbert,
)
from .estimator import Dataset, adaptive_zeta, cv_score, cv_scores, empirical_coefficient, series_estimate
from .loss import (
    EllipseClass,
    KernelSpectrum,
    adversarial_distance,
    adversarial_loss,
    ellipse_membership,
    mmd_spectral,
    mmd_vstat,
    optimal_discriminator,
    sobolev_ball,
)
from .montecarlo import (
    ExperimentConfig,
    RiskCurve,
    ZetaRule,
    estimate_risk,
    fit_rate,
    rejection_sample,
    run_risk_curve,
    sampling_equivalence_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "adaptive_zeta",
    "adversarial_distance",
    "adversarial_loss",
    "BasisIndex",
    "BoundReport",
    "CoefficientVector",
    "CONSTANT",
    "cv_score",
    "cv_scores",
    "Dataset",
    "design_matrix",
    "ellipse_membership",
    "EllipseClass",
    "empirical_coefficient",
    "enumerate_truncation",
    "estimate_risk",
    "eval_basis",
    "eval_density",
    "ExperimentConfig",
    "fit_rate",
    "FOURIER",
    "fourier",
    "HAAR",
    "haar",
    "KernelSpectrum",
    "kl_divergence",
    "l2_distance",
    "lower_bound",
    "LowerBoundReport",
    "make_density",
    "mmd_spectral",
    "mmd_vstat",
    "nonneg_check",
    "NonnegCertificate",
    "optimal_discriminator",
    "oracle_zeta",
    "packing_densities",
    "PackingFamily",
    "parametric_constant",
    "ParametricConstant",
    "RateSpec",
    "rejection_sample",
    "RiskCurve",
    "run_risk_curve",
    "sampling_equivalence_experiment",
    "series_estimate",
    "SeriesDensity",
    "sobolev_ball",
    "sobolev_rate",
    "SobolevWeights",
    "SpectrumWeights",
    "sup_norm",
    "TableWeights",
    "TruncationSet",
    "uniform",
    "upper_bound_risk",
    "varshamov_gilbert",
    "weight",
    "ZetaRule",
]
