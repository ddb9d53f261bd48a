"""Per-pixel temporal cross-correlation and frame-level aggregation."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft

from .mellin import MTCube
from .video import VideoCube

METHODS = ("power", "peak")


@dataclass(frozen=True, eq=False)
class CorrelationVolume:
    """``values[y, x, i]`` is the correlation at lag ``lags[i]``.

    ``domain`` is ``"tau"`` for Mellin-domain volumes and ``"frame"`` for
    frame-domain ones.
    """

    lags: np.ndarray
    values: np.ndarray
    domain: str = "frame"

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class AggregateSignal:
    lags: np.ndarray
    values: np.ndarray
    method: str
    domain: str = "frame"


@dataclass(frozen=True)
class PeakReading:
    lag: int
    amplitude: float
    normalized: float


def lag_axis(len_a: int, len_b: int) -> np.ndarray:
    return np.arange(-(len_a - 1), len_b)


def _xcorr_last_axis(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    la, lb = a.shape[-1], b.shape[-1]
    n = next_fast_len(la + lb - 1, real=True)
    spec = np.conj(rfft(a, n, axis=-1)) * rfft(b, n, axis=-1)
    full = irfft(spec, n, axis=-1)
    # circular index l mod n holds sum_j a[j] b[j + l]
    return np.concatenate([full[..., n - (la - 1) :], full[..., :lb]], axis=-1)


def xcorr_full(a, b) -> tuple[np.ndarray, np.ndarray]:
    """Full linear cross-correlation ``c[l] = sum_j a[j] * b[j + l]``.

    Lags run from ``-(len(a) - 1)`` to ``len(b) - 1``. Computed with a
    zero-padded FFT.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("xcorr_full expects 1-D sequences")
    if a.size < 2 or b.size < 2:
        raise ValueError(f"sequences need at least 2 samples, got {a.size} and {b.size}")
    return lag_axis(a.size, b.size), _xcorr_last_axis(a, b)


def _streams(cube) -> tuple[np.ndarray, str]:
    """Return per-pixel streams as ``(height, width, length)`` and the domain."""
    if isinstance(cube, MTCube):
        return cube.values, "tau"
    if isinstance(cube, VideoCube):
        return np.moveaxis(cube.samples, 0, -1), "frame"
    raise TypeError(f"expected an MTCube or a VideoCube, got {type(cube).__name__}")


def correlate_cubes(query, reference, n_jobs: int = 1) -> CorrelationVolume:
    """Correlate each query pixel stream with the reference stream at the same pixel.

    Both inputs must be Mellin cubes (tau domain) or both centered video
    cubes (frame domain) with equal spatial size.
    """
    qs, qdom = _streams(query)
    rs, rdom = _streams(reference)
    if qdom != rdom:
        raise ValueError(f"cannot correlate a {qdom}-domain cube with a {rdom}-domain cube")
    if qs.shape[:2] != rs.shape[:2]:
        raise ValueError(
            f"spatial size mismatch: query is {qs.shape[1]}x{qs.shape[0]}, "
            f"reference is {rs.shape[1]}x{rs.shape[0]}"
        )
    if qdom == "tau" and query.params.delta_tau != reference.params.delta_tau:
        raise ValueError("Mellin cubes must share the same tau grid")
    lags = lag_axis(qs.shape[-1], rs.shape[-1])
    if qs.shape[-1] < 2 or rs.shape[-1] < 2:
        raise ValueError("streams need at least 2 samples")
    h = qs.shape[0]
    if n_jobs <= 1 or h < 2:
        values = _xcorr_last_axis(qs, rs)
    else:
        bounds = np.linspace(0, h, min(n_jobs, h) + 1).astype(int)
        strips = [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        values = np.empty(qs.shape[:2] + (lags.size,))
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = pool.map(lambda ab: _xcorr_last_axis(qs[ab[0] : ab[1]], rs[ab[0] : ab[1]]), strips)
            for (a, b), part in zip(strips, parts):
                values[a:b] = part
    return CorrelationVolume(lags, values, qdom)


def aggregate_power(volume: CorrelationVolume) -> AggregateSignal:
    """Sum of the correlation over all pixels at each lag."""
    flat = volume.values.reshape(-1, volume.lags.size)
    # row-major accumulation, one pixel at a time
    total = np.zeros(volume.lags.size)
    for row in flat:
        total += row
    return AggregateSignal(volume.lags, total, "power", volume.domain)


def aggregate_peak(volume: CorrelationVolume) -> AggregateSignal:
    """Maximum of the correlation over all pixels at each lag."""
    flat = volume.values.reshape(-1, volume.lags.size)
    return AggregateSignal(volume.lags, flat.max(axis=0), "peak", volume.domain)


def aggregate(volume: CorrelationVolume, method: str) -> AggregateSignal:
    if method == "power":
        return aggregate_power(volume)
    if method == "peak":
        return aggregate_peak(volume)
    raise ValueError(f"unknown aggregation method {method!r}; choose from {METHODS}")


def peak_of(signal: AggregateSignal, query_auto_peak: float) -> PeakReading:
    """Global maximum of ``signal``; ties resolve to the smallest lag.

    The normalized amplitude divides by ``query_auto_peak``. An all-zero
    signal reads as amplitude 0 at lag 0.
    """
    if signal.values.size == 0:
        raise ValueError("empty aggregate signal")
    if not query_auto_peak > 0:
        raise ValueError(f"query_auto_peak must be positive, got {query_auto_peak}")
    if not np.any(signal.values):
        return PeakReading(0, 0.0, 0.0)
    i = int(np.argmax(signal.values))
    amp = float(signal.values[i])
    return PeakReading(int(signal.lags[i]), amp, max(amp, 0.0) / query_auto_peak)


def auto_peak(cube, method: str) -> float:
    """Peak of the aggregated auto-correlation of ``cube`` with itself."""
    return float(aggregate(correlate_cubes(cube, cube), method).values.max())
