"""Simulation and verification tools for fast-slow SDEs driven by fractional
Brownian motion with Hurst index H > 1/2."""

from .bounds import (
    FORMULAS,
    BoundInputs,
    BoundReport,
    bernstein_exit_bound,
    md_general_bound,
    md_symmetric_bound,
    nonlinear_variant1_bound,
    single_time_bound,
    variant1_bound,
    variant2_bound,
)
from .errors import (
    AccuracyError,
    BlowUpError,
    ConfigurationError,
    DomainError,
    EmbeddingError,
    FracSlowError,
    HTooLargeError,
    NumericalError,
    SingularityError,
    StabilityError,
    StiffnessError,
)
from .fbm import (
    FbmPath,
    HurstIndex,
    MultiFbmPath,
    TimeGrid,
    fbm_covariance,
    fgn_autocovariance,
    kernel_phi,
    sample_fbm,
    sample_mfbm,
)
from .frac_ou import (
    AlphaIntegral,
    LinearCoeffs,
    check_variance_relation,
    fou_covariance,
    fou_variance,
    sample_fou_exact,
    variance_ode_solve,
)
from .manifold import (
    MdCriticalCovariance,
    ZetaManifold,
    constant_zeta,
    hurst_factor,
    lyapunov_solve,
    md_critical_covariance,
    neighborhood_contains,
    q_matrix,
    zeta_critical,
    zeta_manifold,
)
from .montecarlo import McConfig, McEstimate, dominance_report, estimate_exit_prob
from .presets import climate_full_preset, climate_reduced_preset
from .sim import SystemSpec, Trajectory, detect_exit, integrate

__version__ = "0.1.0"
