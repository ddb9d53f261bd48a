"""scikit-learn style wrappers around the functional core.

Video inputs may be :class:`~mellin_aer.video.VideoCube` instances or
arrays shaped ``(frames, height, width)``; arrays are sampled at the
estimator's ``frame_rate``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, column_or_1d

from .correlator import METHODS, auto_peak
from .mellin import mellin_cube, resolve_params
from .tsm import (
    DEFAULT_THRESHOLD,
    POLICIES,
    MatchResult,
    ScaleEstimate,
    TsmConfig,
    _check_pair,
    calibrate_threshold,
    localize_event,
    scale_from_mellin,
)
from .video import VideoCube, resample_speed, resampled_length


def as_cube(X, frame_rate: float = 30.0) -> VideoCube:
    """Coerce ``X`` to a :class:`VideoCube`."""
    if isinstance(X, VideoCube):
        return X
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None, None]
    return VideoCube(arr, frame_rate)


def _as_batch(X, frame_rate):
    """Return ``(cubes, single)`` for one cube or a sequence of cubes."""
    if isinstance(X, VideoCube) or (isinstance(X, np.ndarray) and X.ndim <= 3):
        return [as_cube(X, frame_rate)], True
    return [as_cube(x, frame_rate) for x in X], False


class MellinTransformer(TransformerMixin, BaseEstimator):
    """Per-pixel temporal Mellin transform.

    ``fit`` fixes the tau grid from the fitted clip (unset cut-offs follow
    its length and frame rate); ``transform`` maps any clip of the same
    frame rate onto that grid.

    Parameters
    ----------
    omega_low, omega_high : float, optional
        Cut-off frequencies in Hz.
    n_tau : int
        Number of tau samples.
    frame_rate : float
        Sampling rate assumed for plain arrays.
    n_jobs : int
        Threads used per transform.
    """

    def __init__(self, omega_low=None, omega_high=None, n_tau=512, frame_rate=30.0, n_jobs=1):
        self.omega_low = omega_low
        self.omega_high = omega_high
        self.n_tau = n_tau
        self.frame_rate = frame_rate
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        cube = as_cube(X, self.frame_rate)
        self.params_ = resolve_params(
            cube.num_frames, cube.frame_rate, self.omega_low, self.omega_high, self.n_tau
        )
        self.params_.check_rate(cube.frame_rate)
        self.tau_ = self.params_.tau()
        return self

    def transform(self, X):
        """Return the Mellin streams as an array ``(height, width, n_tau)``."""
        check_is_fitted(self, "params_")
        cube = as_cube(X, self.frame_rate)
        return mellin_cube(cube, self.params_, n_jobs=self.n_jobs).values


class SpeedInvariantDetector(BaseEstimator):
    """Detect a query clip in references played at unknown speed.

    ``fit`` takes the query; ``predict``, ``decision_function`` and
    ``estimate`` take one reference or a sequence of references.

    Parameters
    ----------
    method : {"power", "peak"}
        Aggregation across pixels.
    threshold : float
        Minimum normalized Step I score for a match.
    omega_low, omega_high, n_tau, frame_rate, n_jobs
        As for :class:`MellinTransformer`.
    """

    def __init__(
        self,
        method="power",
        threshold=DEFAULT_THRESHOLD,
        omega_low=None,
        omega_high=None,
        n_tau=512,
        frame_rate=30.0,
        n_jobs=1,
    ):
        self.method = method
        self.threshold = threshold
        self.omega_low = omega_low
        self.omega_high = omega_high
        self.n_tau = n_tau
        self.frame_rate = frame_rate
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold}")
        self.query_ = as_cube(X, self.frame_rate)
        self.transformer_ = MellinTransformer(
            self.omega_low, self.omega_high, self.n_tau, self.frame_rate, self.n_jobs
        ).fit(self.query_)
        self.query_mt_ = mellin_cube(self.query_, self.transformer_.params_, n_jobs=self.n_jobs)
        self.query_auto_ = auto_peak(self.query_mt_, self.method)
        return self

    def _estimate_one(self, ref: VideoCube) -> ScaleEstimate:
        _check_pair(self.query_, ref)
        mr = mellin_cube(ref, self.transformer_.params_, n_jobs=self.n_jobs)
        return scale_from_mellin(
            self.query_mt_, mr, self.method, self.threshold, self.query_auto_, self.n_jobs
        )

    def estimate(self, X):
        """Step I estimate(s) for the reference(s) in ``X``."""
        check_is_fitted(self, "query_mt_")
        cubes, single = _as_batch(X, self.frame_rate)
        out = [self._estimate_one(c) for c in cubes]
        return out[0] if single else out

    def decision_function(self, X):
        ests = self.estimate(X)
        if isinstance(ests, ScaleEstimate):
            return ests.score
        return np.array([e.score for e in ests])

    def predict(self, X):
        ests = self.estimate(X)
        if isinstance(ests, ScaleEstimate):
            return ests.matched
        return np.array([e.matched for e in ests])

    def match(self, X) -> MatchResult:
        """Full two-step match against a single reference."""
        check_is_fitted(self, "query_mt_")
        ref = as_cube(X, self.frame_rate)
        est = self._estimate_one(ref)
        if not est.matched or resampled_length(self.query_.num_frames, est.alpha) < 2:
            return MatchResult(False, est.alpha, step1_score=est.score)
        adjusted = resample_speed(self.query_, est.alpha)
        loc = localize_event(adjusted, ref, TsmConfig(method=self.method, n_jobs=self.n_jobs))
        return MatchResult(True, est.alpha, loc.event_frame, est.score, loc.score)


class ThresholdCalibrator(ClassifierMixin, BaseEstimator):
    """Learn a detection threshold from labelled scores.

    ``fit(scores, y)`` takes scores and boolean match labels;
    ``predict`` reports ``score >= threshold_``.

    Parameters
    ----------
    policy : {"min-fp", "min-fn"}
        Minimize false positives or false negatives.
    """

    def __init__(self, policy="min-fp"):
        self.policy = policy

    def fit(self, X, y):
        scores = column_or_1d(check_array(np.asarray(X, dtype=np.float64).reshape(-1, 1)))
        labels = column_or_1d(np.asarray(y)).astype(bool)
        if labels.shape != scores.shape:
            raise ValueError(f"{scores.size} scores but {labels.size} labels")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; choose min-fp or min-fn")
        self.threshold_ = calibrate_threshold(scores[labels], scores[~labels], self.policy)
        self.classes_ = np.array([False, True])
        return self

    def predict(self, X):
        check_is_fitted(self, "threshold_")
        scores = column_or_1d(check_array(np.asarray(X, dtype=np.float64).reshape(-1, 1)))
        return scores >= self.threshold_
