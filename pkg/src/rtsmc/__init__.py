"""rtsmc: joint estimation of time-varying reproduction numbers, daily
infections, and abrupt-change indicators from lagged noisy count series,
via particle filtering and backward smoothing on a renewal-process
state-space model."""

__version__ = "0.1.0"

from .config import RunConfig
from .delays import ContinuousDelaySpec, DelayPMF, convolve, discretize, min_delay
from .engine import (
    EstimateSeries,
    RunOptions,
    RunResult,
    ess,
    filter_step,
    reconstruct_observations,
    resample,
    run,
    smooth,
    summarize,
    weighted_quantile,
)
from .ingest import ingest_csv
from .model import (
    Ensemble,
    LatentState,
    ModelParams,
    advance_J,
    init_ensemble,
    sample_M,
    sample_R,
    transition_density,
)
from .observation import (
    CaseSeries,
    ObservationKernel,
    VarianceSeries,
    add_noise,
    build_kernel,
    empirical_variance,
    likelihood,
    observe_mean,
)
from .renewal import InfectionHistory, invert_rt, renewal_mean, simulate_infections
from .scenario import (
    ChangeHit,
    ErrorMetrics,
    Scenario,
    ScenarioConfig,
    change_detection_score,
    coverage,
    error_metrics,
    generate,
    synthesize_rt,
)

__all__ = [name for name in dir() if not name.startswith("_")]
