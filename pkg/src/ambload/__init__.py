"""Ambient-signal identification of ZIP + induction motor composite loads."""

from .errors import (
    AllStartsFailedError,
    AmbLoadError,
    DivergenceError,
    DomainError,
    InfeasibleError,
    RankDeficientError,
    SamplingError,
)
from .model import (
    IMParamsPhysical,
    IMParamsTransformed,
    IMState,
    MeasurementSeries,
    PhasorDQ,
    SystemConfig,
    ZIPParams,
    im_derivatives,
    im_original_model,
    im_output,
    polar_to_dq,
    transform_params,
    zip_power,
)

__version__ = "0.1.0"
