"""Two-step matching: Mellin-domain detection and scale recovery, then
frame-domain localization of the speed-corrected query.

Scale factors follow the duration-ratio convention: ``alpha`` is the
number of reference frames spanned by the event divided by the number of
query frames, so ``alpha > 1`` means the reference plays the event slower.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .correlator import METHODS, aggregate, auto_peak, correlate_cubes, peak_of
from .mellin import MTCube, MTParams, mellin_cube, resolve_params
from .video import VideoCube, resample_speed, resampled_length, subtract_temporal_mean

DEFAULT_THRESHOLD = 0.5

POLICIES = {
    "min-fp": "min-fp",
    "min-false-positive": "min-fp",
    "min-fn": "min-fn",
    "min-false-negative": "min-fn",
}


@dataclass(frozen=True)
class TsmConfig:
    """Free parameters of the two-step method.

    Unset Mellin cut-offs default to the second DFT bin of the query and
    the Nyquist frequency. ``window`` is the segment length T2 used by
    :func:`search_database` (whole database when ``None``); ``max_alpha``
    sets the segment overlap T1 as the query length at the slowest speed
    to be detected.
    """

    omega_low: float | None = None
    omega_high: float | None = None
    n_tau: int = 512
    method: str = "power"
    threshold: float = DEFAULT_THRESHOLD
    window: int | None = None
    max_alpha: float = 4.0
    n_jobs: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold}")
        if self.window is not None and self.window < 2:
            raise ValueError("window must span at least 2 frames")
        if not self.max_alpha > 0:
            raise ValueError("max_alpha must be positive")

    def mt_params(self, query: VideoCube) -> MTParams:
        return resolve_params(
            query.num_frames, query.frame_rate, self.omega_low, self.omega_high, self.n_tau
        )

    def replace(self, **changes) -> "TsmConfig":
        return TsmConfig(**{**asdict(self), **changes})


@dataclass(frozen=True)
class ScaleEstimate:
    tau_shift: float
    alpha: float
    score: float
    method: str
    matched: bool
    lag: int = 0
    delta_tau: float = 0.0
    threshold: float = DEFAULT_THRESHOLD


@dataclass(frozen=True)
class LocalizationResult:
    event_frame: int
    score: float
    frame_offset: int | None = None


@dataclass(frozen=True)
class MatchResult:
    matched: bool
    alpha: float
    event_frame: int | None = None
    step1_score: float = 0.0
    step2_score: float | None = None
    segment_index: int | None = None
    absolute_frame: int | None = None

    def __post_init__(self):
        if self.event_frame is not None and not self.matched:
            raise ValueError("an unmatched result cannot carry an event frame")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SegmentPlan:
    T1: int
    T2: int
    T3: int
    segments: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"T1": self.T1, "T2": self.T2, "T3": self.T3, "segments": [list(s) for s in self.segments]}


def _check_pair(query: VideoCube, reference: VideoCube) -> None:
    if (query.height, query.width) != (reference.height, reference.width):
        raise ValueError(
            f"spatial size mismatch: query {query.width}x{query.height}, "
            f"reference {reference.width}x{reference.height}"
        )
    if query.frame_rate != reference.frame_rate:
        raise ValueError(
            f"frame rate mismatch: query {query.frame_rate} fps, reference {reference.frame_rate} fps"
        )


def scale_from_mellin(
    query_mt: MTCube,
    reference_mt: MTCube,
    method: str = "peak",
    threshold: float = DEFAULT_THRESHOLD,
    query_auto: float | None = None,
    n_jobs: int = 1,
) -> ScaleEstimate:
    """Step I on precomputed Mellin cubes.

    ``query_auto`` may be passed to reuse the query's auto-correlation peak.
    """
    if query_auto is None:
        query_auto = auto_peak(query_mt, method)
    dtau = query_mt.params.delta_tau
    if query_auto <= 0:
        # query without temporal variation: nothing to detect
        return ScaleEstimate(0.0, 1.0, 0.0, method, False, 0, dtau, threshold)
    signal = aggregate(correlate_cubes(query_mt, reference_mt, n_jobs=n_jobs), method)
    reading = peak_of(signal, query_auto)
    tau_shift = reading.lag * dtau
    return ScaleEstimate(
        tau_shift=tau_shift,
        alpha=math.exp(-tau_shift),
        score=reading.normalized,
        method=method,
        matched=reading.normalized >= threshold,
        lag=reading.lag,
        delta_tau=dtau,
        threshold=threshold,
    )


def estimate_scale(query: VideoCube, reference: VideoCube, config: TsmConfig = TsmConfig()) -> ScaleEstimate:
    """Step I: detect the query in ``reference`` and recover the scale factor."""
    _check_pair(query, reference)
    params = config.mt_params(query)
    params.check_rate(reference.frame_rate)
    mq = mellin_cube(query, params, n_jobs=config.n_jobs)
    mr = mellin_cube(reference, params, n_jobs=config.n_jobs)
    return scale_from_mellin(mq, mr, config.method, config.threshold, n_jobs=config.n_jobs)


def frame_domain_score(query: VideoCube, reference: VideoCube, method: str = "peak", n_jobs: int = 1):
    """Correlate mean-subtracted cubes without any Mellin step.

    Returns ``(lag, normalized score)``; the score is relative to the
    query's own auto-correlation peak.
    """
    _check_pair(query, reference)
    q = subtract_temporal_mean(query)
    r = subtract_temporal_mean(reference)
    auto = auto_peak(q, method)
    if auto <= 0:
        return 0, 0.0
    reading = peak_of(aggregate(correlate_cubes(q, r, n_jobs=n_jobs), method), auto)
    return reading.lag, reading.normalized


def localize_event(
    query_resampled: VideoCube,
    reference: VideoCube,
    config: TsmConfig = TsmConfig(),
    truth: int | None = None,
) -> LocalizationResult:
    """Step II: frame where the (speed-corrected) query starts in ``reference``."""
    lag, score = frame_domain_score(query_resampled, reference, config.method, config.n_jobs)
    offset = None if truth is None else abs(lag - int(truth))
    return LocalizationResult(lag, score, offset)


def run_tsm(query: VideoCube, reference: VideoCube, config: TsmConfig = TsmConfig()) -> MatchResult:
    """Full two-step match of ``query`` against ``reference``."""
    est = estimate_scale(query, reference, config)
    if not est.matched or resampled_length(query.num_frames, est.alpha) < 2:
        return MatchResult(False, est.alpha, step1_score=est.score)
    adjusted = resample_speed(query, est.alpha)
    loc = localize_event(adjusted, reference, config)
    return MatchResult(True, est.alpha, loc.event_frame, est.score, loc.score)


def plan_segments(T3: int, T2: int, T1: int) -> SegmentPlan:
    """Split ``[0, T3)`` into windows of at most ``T2`` frames overlapping by ``T1``.

    Windows start every ``T2 - T1`` frames; the first window reaching the
    end is clamped to ``T3`` and ends the plan.
    """
    T1, T2, T3 = int(T1), int(T2), int(T3)
    if not 0 < T1:
        raise ValueError(f"T1 must be positive, got {T1}")
    if T1 >= T2:
        raise ValueError(f"T1 ({T1}) must be shorter than T2 ({T2}), otherwise segments never advance")
    if T2 > T3:
        raise ValueError(f"T2 ({T2}) cannot exceed T3 ({T3})")
    step = T2 - T1
    segments = []
    start = 0
    while True:
        end = min(start + T2, T3)
        segments.append((start, end))
        if end >= T3:
            break
        start += step
    return SegmentPlan(T1, T2, T3, tuple(segments))


def plan_for(query: VideoCube, database: VideoCube, config: TsmConfig = TsmConfig()) -> SegmentPlan:
    """Segment plan :func:`search_database` uses for this query and database."""
    T3 = database.num_frames
    T2 = T3 if config.window is None else min(config.window, T3)
    T1 = max(1, math.ceil(query.num_frames * config.max_alpha))
    if T2 >= T3:
        return SegmentPlan(min(T1, T3), T3, T3, ((0, T3),))
    return plan_segments(T3, T2, T1)


def search_database(
    query: VideoCube,
    database: VideoCube,
    config: TsmConfig = TsmConfig(),
    plan: SegmentPlan | None = None,
) -> list[MatchResult]:
    """Run the two-step match over every planned segment of ``database``.

    ``plan`` defaults to :func:`plan_for`. Returns the matched segments
    ordered by Step I score (descending), with event frames translated to
    absolute database frames.
    """
    _check_pair(query, database)
    if plan is None:
        plan = plan_for(query, database, config)
    elif plan.T3 != database.num_frames:
        raise ValueError(f"plan covers {plan.T3} frames but the database has {database.num_frames}")
    matches = []
    for index, (start, end) in enumerate(plan.segments):
        segment = VideoCube(database.samples[start:end], database.frame_rate)
        result = run_tsm(query, segment, config)
        if result.matched:
            matches.append(
                MatchResult(
                    True,
                    result.alpha,
                    result.event_frame,
                    result.step1_score,
                    result.step2_score,
                    segment_index=index,
                    absolute_frame=start + result.event_frame,
                )
            )
    matches.sort(key=lambda m: (-m.step1_score, m.segment_index))
    return matches


def calibrate_threshold(matched_scores, unmatched_scores, policy: str = "min-fp") -> float:
    """Detection threshold from labelled score samples.

    ``min-fp`` returns the smallest float above the largest unmatched score,
    ``min-fn`` the smallest matched score; a score matches when it is
    ``>=`` the threshold.
    """
    matched_scores = np.asarray(matched_scores, dtype=np.float64)
    unmatched_scores = np.asarray(unmatched_scores, dtype=np.float64)
    if matched_scores.size == 0 or unmatched_scores.size == 0:
        raise ValueError("both matched and unmatched scores are required for calibration")
    try:
        policy = POLICIES[policy]
    except KeyError:
        raise ValueError(f"unknown policy {policy!r}; choose min-fp or min-fn") from None
    if policy == "min-fp":
        return float(np.nextafter(unmatched_scores.max(), np.inf))
    return float(matched_scores.min())


def rates(matched_scores, unmatched_scores, threshold: float) -> tuple[float | None, float | None]:
    """Detection rate and false-positive rate (percent) at ``threshold``.

    A rate whose denominator is empty is ``None``.
    """
    m = np.asarray(matched_scores, dtype=np.float64)
    u = np.asarray(unmatched_scores, dtype=np.float64)
    det = 100.0 * np.count_nonzero(m >= threshold) / m.size if m.size else None
    fpr = 100.0 * np.count_nonzero(u >= threshold) / u.size if u.size else None
    return det, fpr
