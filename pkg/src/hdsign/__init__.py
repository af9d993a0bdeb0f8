"""Spatial-sign tests for high-dimensional location with wild-bootstrap calibration."""

__version__ = "0.1.0"

from ._validation import DomainError
from .limits import (
    Kappa4Report,
    SpectralWeights,
    clt_gate,
    kappa4_compound_symmetric,
    kappa4_mc,
    kappa4_spherical,
    sample_Qp,
    sample_T_infinity,
    spectral_weights,
)
from .location_tests import (
    BootstrapDraws,
    TestOutcome,
    WildBootstrapTest,
    WPLTest,
    ZGCZTest,
    bootstrap_draws,
    wild_bootstrap_test,
    wpl_test,
    zgcz_test,
)
from .montecarlo import (
    ExperimentConfig,
    ExperimentReport,
    are_summary,
    default_grid,
    run_experiment,
    run_suite,
)
from .scatter import (
    Dataset,
    DistributionModel,
    build_equicorrelated,
    general_scatter,
    model_covariance_factor,
    power_shift_delta,
    sample,
)
from .signs import (
    MedianResult,
    SignSummary,
    SpatialMedian,
    SpatialSignTransformer,
    sign_summary,
    spatial_median,
    spatial_sign,
    trace2_estimator,
)
