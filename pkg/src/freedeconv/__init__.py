"""Free multiplicative deconvolution of empirical covariance spectra.

Estimates the population spectral measure behind an observed sample
covariance spectrum by inverting the moment map on its Riemann surface,
forming the S-transform ratio against the Marchenko-Pastur law, extracting
moments of the estimate by contour integration, and reconstructing a
discrete measure through Hankel/Jacobi recovery.
"""

from .contours import (
    ContourRepresentation,
    choose_m_contour,
    contour_moment,
    contour_rep_from_s,
    moments_from_contour,
)
from .errors import (
    BaselineFailureError,
    DegenerateRamificationError,
    DomainViolationError,
    ForwardSolverError,
    IncompleteRootsError,
    InvalidMomentsError,
    LiftFailureError,
    NoContourError,
    NoisyContourError,
    NumericalError,
    PoleError,
)
from .experiments import (
    SCENARIOS,
    RunReport,
    Scenario,
    baseline_subordination,
    run_scenario,
    sample_spectrum,
    toeplitz_spectrum,
    write_report_csv,
)
from .inversion import (
    LiftConfig,
    SlitDomain,
    critical_points,
    lift_many,
    lift_path,
    s_transform,
    second_kind_zeros,
    slit_domain,
)
from .measures import (
    DiscreteMeasure,
    MarchenkoPastur,
    MomentSequence,
    wasserstein_1,
)
from .pipeline import (
    DeconvConfig,
    DeconvResult,
    deconvolve,
    forward_contour,
    forward_measure,
    forward_mp_G,
    ree_assemble,
    t_ratio,
)
from .recovery import (
    JacobiCoefficients,
    is_moment_sequence,
    jacobi_from_moments,
    measure_from_jacobi,
    recover_measure,
    recover_measure_detailed,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BaselineFailureError",
    "ContourRepresentation",
    "DeconvConfig",
    "DeconvResult",
    "DegenerateRamificationError",
    "DiscreteMeasure",
    "DomainViolationError",
    "ForwardSolverError",
    "IncompleteRootsError",
    "InvalidMomentsError",
    "JacobiCoefficients",
    "LiftConfig",
    "LiftFailureError",
    "MarchenkoPastur",
    "MomentSequence",
    "NoContourError",
    "NoisyContourError",
    "NumericalError",
    "PoleError",
    "RunReport",
    "SCENARIOS",
    "Scenario",
    "SlitDomain",
    "baseline_subordination",
    "choose_m_contour",
    "contour_moment",
    "contour_rep_from_s",
    "critical_points",
    "deconvolve",
    "forward_contour",
    "forward_measure",
    "forward_mp_G",
    "is_moment_sequence",
    "jacobi_from_moments",
    "lift_many",
    "lift_path",
    "measure_from_jacobi",
    "moments_from_contour",
    "recover_measure",
    "recover_measure_detailed",
    "ree_assemble",
    "run_scenario",
    "s_transform",
    "sample_spectrum",
    "second_kind_zeros",
    "slit_domain",
    "t_ratio",
    "toeplitz_spectrum",
    "wasserstein_1",
    "write_report_csv",
]
