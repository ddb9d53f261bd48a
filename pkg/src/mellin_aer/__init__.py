"""Speed-invariant video event recognition with a temporal Mellin transform."""

from .correlator import (
    METHODS,
    AggregateSignal,
    CorrelationVolume,
    PeakReading,
    aggregate,
    aggregate_peak,
    aggregate_power,
    auto_peak,
    correlate_cubes,
    peak_of,
    xcorr_full,
)
from .estimators import MellinTransformer, SpeedInvariantDetector, ThresholdCalibrator
from .mellin import MTCube, MTParams, MTStream, Spectrum, default_params, dft_magnitude, mellin_cube, mellin_transform
from .tsm import (
    MatchResult,
    ScaleEstimate,
    SegmentPlan,
    TsmConfig,
    calibrate_threshold,
    estimate_scale,
    localize_event,
    plan_segments,
    run_tsm,
    search_database,
)
from .video import (
    CubeFormatError,
    PixelStream,
    SceneObject,
    SyntheticSpec,
    VideoCube,
    generate_synthetic,
    random_spec,
    read_cube,
    resample_speed,
    subtract_temporal_mean,
    write_cube,
)

__version__ = "0.1.0"
