"""Temporal Mellin transform of pixel streams.

The transform is the magnitude spectrum of a mean-subtracted stream
resampled onto a logarithmic frequency axis ``tau = ln(omega / omega_low)``.
A change of playback speed by a factor ``alpha`` (reference duration over
query duration) becomes a shift of ``-ln(alpha)`` along ``tau``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .video import PixelStream, VideoCube

DEFAULT_N_TAU = 512
# tolerance on omega_high > Nyquist checks, relative
_NYQUIST_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class Spectrum:
    """One-sided DFT magnitudes for bins ``0 .. N // 2``."""

    magnitudes: np.ndarray
    bin_spacing: float

    def frequencies(self) -> np.ndarray:
        return np.arange(self.magnitudes.shape[0]) * self.bin_spacing


@dataclass(frozen=True)
class MTParams:
    """Cut-offs (Hz) and grid size of the log-frequency axis."""

    omega_low: float
    omega_high: float
    n_tau: int = DEFAULT_N_TAU

    def __post_init__(self):
        if not (0 < self.omega_low < self.omega_high) or not math.isfinite(self.omega_high):
            raise ValueError(
                f"need 0 < omega_low < omega_high, got {self.omega_low}, {self.omega_high}"
            )
        if int(self.n_tau) != self.n_tau or self.n_tau < 16:
            raise ValueError(f"n_tau must be an integer >= 16, got {self.n_tau}")
        object.__setattr__(self, "n_tau", int(self.n_tau))

    @property
    def tau_max(self) -> float:
        return math.log(self.omega_high / self.omega_low)

    @property
    def delta_tau(self) -> float:
        return self.tau_max / (self.n_tau - 1)

    def tau(self) -> np.ndarray:
        return np.arange(self.n_tau) * self.delta_tau

    def omega(self) -> np.ndarray:
        """Frequencies sampled by the tau grid; endpoints are exact."""
        w = self.omega_low * np.exp(self.tau())
        w[0] = self.omega_low
        w[-1] = self.omega_high
        return w

    def check_rate(self, sample_rate: float) -> None:
        nyquist = sample_rate / 2
        if self.omega_high > nyquist * (1 + _NYQUIST_RTOL):
            raise ValueError(
                f"omega_high={self.omega_high} Hz exceeds the Nyquist frequency {nyquist} Hz"
            )

    def to_dict(self) -> dict:
        return {"omega_low": self.omega_low, "omega_high": self.omega_high, "n_tau": self.n_tau}


def default_params(num_frames: int, frame_rate: float, n_tau: int = DEFAULT_N_TAU) -> MTParams:
    """Second DFT bin to Nyquist for a stream of ``num_frames`` samples."""
    return MTParams(2.0 * frame_rate / num_frames, frame_rate / 2.0, n_tau)


def resolve_params(
    num_frames: int,
    frame_rate: float,
    omega_low: float | None = None,
    omega_high: float | None = None,
    n_tau: int | None = None,
) -> MTParams:
    """Fill unset fields from :func:`default_params`."""
    base = default_params(num_frames, frame_rate, n_tau or DEFAULT_N_TAU)
    return MTParams(
        base.omega_low if omega_low is None else omega_low,
        base.omega_high if omega_high is None else omega_high,
        base.n_tau,
    )


@dataclass(frozen=True, eq=False)
class MTStream:
    values: np.ndarray
    params: MTParams

    @property
    def tau_min(self) -> float:
        return 0.0

    @property
    def tau_max(self) -> float:
        return self.params.tau_max

    @property
    def delta_tau(self) -> float:
        return self.params.delta_tau

    @property
    def is_dead(self) -> bool:
        return not np.any(self.values)

    def tau(self) -> np.ndarray:
        return self.params.tau()


@dataclass(frozen=True, eq=False)
class MTCube:
    """Per-pixel Mellin streams; ``values`` has shape ``(height, width, n_tau)``."""

    values: np.ndarray
    params: MTParams

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def stream(self, x: int, y: int) -> MTStream:
        return MTStream(self.values[y, x], self.params)


def dft_magnitude(stream: PixelStream) -> Spectrum:
    """|DFT| of the stream at bins ``0 .. N // 2``."""
    x = stream.samples
    return Spectrum(np.abs(np.fft.rfft(x)), stream.sample_rate / x.size)


def _log_frequency_resample(mags: np.ndarray, bin_spacing: float, params: MTParams) -> np.ndarray:
    """Map spectra (bins along axis 0) onto the tau grid and max-normalise.

    Linear interpolation in omega between adjacent bins; zero past the last
    bin. Output has the tau axis last.
    """
    n_bins = mags.shape[0]
    pos = params.omega() / bin_spacing
    lo = np.floor(pos).astype(np.intp)
    frac = pos - lo
    inside = lo < n_bins - 1
    exact_last = (lo == n_bins - 1) & (frac == 0)
    lo_c = np.clip(lo, 0, n_bins - 2) if n_bins > 1 else np.zeros_like(lo)
    hi_c = lo_c + 1 if n_bins > 1 else lo_c

    flat = mags.reshape(n_bins, -1)
    out = flat[lo_c] * (1.0 - frac)[:, None] + flat[hi_c] * frac[:, None]
    out[~(inside | exact_last)] = 0.0
    if np.any(exact_last):
        out[exact_last] = flat[n_bins - 1]
    out = out.T.reshape(mags.shape[1:] + (params.n_tau,))

    peak = out.max(axis=-1, keepdims=True)
    live = peak > 0
    np.divide(out, peak, out=out, where=live)
    out[~np.broadcast_to(live, out.shape)] = 0.0
    return out


def _centered(samples: np.ndarray) -> np.ndarray:
    centered = samples - samples.mean(axis=0, keepdims=True)
    centered[..., np.ptp(samples, axis=0) == 0] = 0.0
    return centered


def mellin_transform(stream: PixelStream, params: MTParams) -> MTStream:
    """Mellin transform of a single pixel stream.

    A constant (dead) stream yields an all-zero result.
    """
    params.check_rate(stream.sample_rate)
    x = stream.samples
    # same code path as a 1x1 cube so both agree bit for bit
    values = _mt_rows(x[:, None, None], stream.sample_rate / x.size, params)[0, 0]
    return MTStream(values, params)


def _mt_rows(samples: np.ndarray, bin_spacing: float, params: MTParams) -> np.ndarray:
    mags = np.abs(np.fft.rfft(_centered(samples), axis=0))
    return _log_frequency_resample(mags, bin_spacing, params)


def mellin_cube(cube: VideoCube, params: MTParams | None = None, n_jobs: int = 1) -> MTCube:
    """Apply :func:`mellin_transform` to every pixel of ``cube``.

    ``n_jobs > 1`` processes horizontal strips in threads; the result is
    identical to the sequential one.
    """
    if params is None:
        params = default_params(cube.num_frames, cube.frame_rate)
    params.check_rate(cube.frame_rate)
    spacing = cube.frame_rate / cube.num_frames
    samples = cube.samples
    if n_jobs <= 1 or cube.height < 2:
        values = _mt_rows(samples, spacing, params)
    else:
        bounds = np.linspace(0, cube.height, min(n_jobs, cube.height) + 1).astype(int)
        strips = [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        values = np.empty((cube.height, cube.width, params.n_tau))
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = pool.map(lambda ab: _mt_rows(samples[:, ab[0] : ab[1]], spacing, params), strips)
            for (a, b), part in zip(strips, parts):
                values[a:b] = part
    return MTCube(values, params)
