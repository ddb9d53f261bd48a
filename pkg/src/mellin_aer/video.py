"""Video cube data model, file I/O, resampling and a seeded synthetic generator."""

from __future__ import annotations

import json
import math
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"MTVC"
FORMAT_VERSION = 1
# magic, version, width, height, num_frames, frame_rate, reserved
_HEADER = struct.Struct("<4sIIIIf4s")
HEADER_SIZE = _HEADER.size

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class CubeFormatError(IOError):
    """Raised when a cube file or PGM sequence is malformed."""


@dataclass(frozen=True, eq=False)
class VideoCube:
    """Grayscale frame stack.

    ``samples`` has shape ``(num_frames, height, width)``; raw cubes hold
    intensities in [0, 1], centered cubes may be negative.
    """

    samples: np.ndarray
    frame_rate: float = 30.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 3:
            raise ValueError(f"samples must be 3-D (frames, height, width), got shape {samples.shape}")
        if samples.shape[0] < 2:
            raise ValueError(f"a cube needs at least 2 frames, got {samples.shape[0]}")
        if samples.shape[1] < 1 or samples.shape[2] < 1:
            raise ValueError(f"empty frame size {samples.shape[1:]}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("cube samples must be finite")
        if not (self.frame_rate > 0 and math.isfinite(self.frame_rate)):
            raise ValueError(f"frame_rate must be positive, got {self.frame_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "frame_rate", float(self.frame_rate))

    @property
    def num_frames(self) -> int:
        return self.samples.shape[0]

    @property
    def height(self) -> int:
        return self.samples.shape[1]

    @property
    def width(self) -> int:
        return self.samples.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.samples.shape

    def pixel(self, x: int, y: int) -> "PixelStream":
        return PixelStream(self.samples[:, y, x], self.frame_rate)

    def __eq__(self, other):
        if not isinstance(other, VideoCube):
            return NotImplemented
        return (
            self.frame_rate == other.frame_rate
            and self.samples.shape == other.samples.shape
            and bool(np.array_equal(self.samples, other.samples))
        )

    def __repr__(self):
        return (
            f"VideoCube(width={self.width}, height={self.height}, "
            f"num_frames={self.num_frames}, frame_rate={self.frame_rate})"
        )


@dataclass(frozen=True, eq=False)
class PixelStream:
    """A single pixel's time series."""

    samples: np.ndarray
    sample_rate: float = 30.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size < 2:
            raise ValueError("a pixel stream needs a 1-D sequence of at least 2 samples")
        if not np.all(np.isfinite(samples)):
            raise ValueError("pixel stream samples must be finite")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size


# --------------------------------------------------------------------------
# File I/O
# --------------------------------------------------------------------------


def write_cube(cube: VideoCube, path) -> None:
    """Write ``cube`` in the MTVC binary format (little-endian float32 payload)."""
    path = Path(path)
    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION, cube.width, cube.height, cube.num_frames, cube.frame_rate, b"\0" * 4
    )
    payload = np.ascontiguousarray(cube.samples, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def _read_binary(path: Path) -> VideoCube:
    data = path.read_bytes()
    if len(data) < HEADER_SIZE:
        raise CubeFormatError(f"{path}: file too short for an MTVC header ({len(data)} bytes)")
    magic, version, width, height, frames, fps, _ = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CubeFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise CubeFormatError(f"{path}: unsupported MTVC version {version}")
    if width < 1 or height < 1 or frames < 2:
        raise CubeFormatError(f"{path}: invalid dimensions {width}x{height}x{frames}")
    expected = width * height * frames * 4
    got = len(data) - HEADER_SIZE
    if got != expected:
        raise CubeFormatError(
            f"{path}: payload holds {got} bytes, header announces {expected} "
            f"({frames} frames of {width}x{height})"
        )
    samples = np.frombuffer(data, dtype="<f4", offset=HEADER_SIZE).reshape(frames, height, width)
    try:
        return VideoCube(samples.astype(np.float64), float(fps))
    except ValueError as exc:
        raise CubeFormatError(f"{path}: {exc}") from exc


_PGM_TOKEN = re.compile(rb"(?:\s+|#[^\n]*\n?)*(\S+)")


def _parse_pgm(path: Path) -> tuple[np.ndarray, int]:
    data = path.read_bytes()
    tokens = []
    pos = 0
    for _ in range(4):
        m = _PGM_TOKEN.match(data, pos)
        if m is None:
            raise CubeFormatError(f"{path}: truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    if tokens[0] != b"P5":
        raise CubeFormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise CubeFormatError(f"{path}: malformed PGM header") from exc
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise CubeFormatError(f"{path}: invalid PGM header values {width}x{height} maxval {maxval}")
    pos += 1  # single whitespace after maxval
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    nbytes = width * height * dtype.itemsize
    if len(data) - pos < nbytes:
        raise CubeFormatError(f"{path}: PGM raster truncated")
    raster = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
    return raster.reshape(height, width).astype(np.float64) / maxval, maxval


def _read_pgm_sequence(path: Path) -> VideoCube:
    manifest_path = path / "manifest.json"
    if not manifest_path.is_file():
        raise CubeFormatError(f"{path}: missing manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text())
        fps = float(manifest["fps"])
        n = int(manifest["frames"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CubeFormatError(f"{manifest_path}: malformed manifest ({exc})") from exc
    frames = []
    for i in range(n):
        frame_path = path / f"frame_{i:06d}.pgm"
        if not frame_path.is_file():
            raise CubeFormatError(f"{path}: missing {frame_path.name} (manifest lists {n} frames)")
        frame, _ = _parse_pgm(frame_path)
        if frames and frame.shape != frames[0].shape:
            raise CubeFormatError(
                f"{frame_path}: frame size {frame.shape} differs from first frame {frames[0].shape}"
            )
        frames.append(frame)
    try:
        return VideoCube(np.stack(frames) if frames else np.empty((0, 1, 1)), fps)
    except ValueError as exc:
        raise CubeFormatError(f"{path}: {exc}") from exc


def read_cube(path, format: str | None = None) -> VideoCube:
    """Read a cube from an MTVC file or a PGM-sequence directory.

    ``format`` is ``"cube-binary"`` or ``"pgm-sequence"``; when omitted it is
    inferred (directories are PGM sequences).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such cube: {path}")
    if format is None:
        format = "pgm-sequence" if path.is_dir() else "cube-binary"
    if format == "cube-binary":
        return _read_binary(path)
    if format == "pgm-sequence":
        return _read_pgm_sequence(path)
    raise ValueError(f"unknown cube format {format!r}")


def write_pgm_sequence(cube: VideoCube, path, maxval: int = 255) -> None:
    """Write a raw cube as ``frame_NNNNNN.pgm`` files plus ``manifest.json``."""
    if not 0 < maxval < 65536:
        raise ValueError("maxval must be in [1, 65535]")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    levels = np.rint(np.clip(cube.samples, 0.0, 1.0) * maxval).astype(dtype)
    for i, frame in enumerate(levels):
        header = f"P5\n{cube.width} {cube.height}\n{maxval}\n".encode("ascii")
        (path / f"frame_{i:06d}.pgm").write_bytes(header + frame.tobytes())
    (path / "manifest.json").write_text(json.dumps({"fps": cube.frame_rate, "frames": cube.num_frames}))


def rgb_to_gray(frames: np.ndarray) -> np.ndarray:
    """Rec. 601 luma of an ``(..., 3)`` RGB array."""
    return np.asarray(frames, dtype=np.float64) @ np.asarray(LUMA_WEIGHTS)


# --------------------------------------------------------------------------
# Signal operations
# --------------------------------------------------------------------------


def subtract_temporal_mean(cube: VideoCube) -> VideoCube:
    """Remove each pixel's temporal mean.

    Constant pixels come out as exact zeros so they stay recognisable as
    dead streams downstream.
    """
    s = cube.samples
    centered = s - s.mean(axis=0, keepdims=True)
    flat = np.ptp(s, axis=0) == 0
    centered[:, flat] = 0.0
    return VideoCube(centered, cube.frame_rate)


def resampled_length(num_frames: int, s: float) -> int:
    return int(round(s * num_frames))


def resample_speed(cube: VideoCube, s: float) -> VideoCube:
    """Change the duration of ``cube`` by a factor ``s`` (``s > 1`` plays slower).

    Output frame ``t'`` samples input time ``t' * (N - 1) / (N' - 1)`` with
    linear interpolation between neighbouring frames, so first and last
    frames are preserved. ``frame_rate`` is unchanged.
    """
    if not (s > 0 and math.isfinite(s)):
        raise ValueError(f"speed factor must be positive, got {s}")
    n = cube.num_frames
    n_out = resampled_length(n, s)
    if n_out < 2:
        raise ValueError(f"speed factor {s} leaves {n_out} frame(s) from {n}; need at least 2")
    if n_out == n:
        return cube
    t = np.arange(n_out) * ((n - 1) / (n_out - 1))
    lo = np.minimum(np.floor(t).astype(np.intp), n - 2)
    frac = (t - lo)[:, None, None]
    src = cube.samples
    out = src[lo] * (1.0 - frac) + src[lo + 1] * frac
    return VideoCube(out, cube.frame_rate)


def embed_event(event: VideoCube, total_frames: int, start: int, background: np.ndarray | float = 0.0) -> VideoCube:
    """Place ``event`` at frame ``start`` of a ``total_frames`` long cube.

    Frames outside the event hold ``background`` (a scalar or a single frame).
    """
    if start < 0 or start + event.num_frames > total_frames:
        raise ValueError(
            f"event of {event.num_frames} frames does not fit at {start} in {total_frames} frames"
        )
    frame = np.broadcast_to(np.asarray(background, dtype=np.float64), (event.height, event.width))
    out = np.empty((total_frames, event.height, event.width))
    out[:] = frame
    out[start : start + event.num_frames] = event.samples
    return VideoCube(out, event.frame_rate)


# --------------------------------------------------------------------------
# Synthetic scenes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SceneObject:
    """A moving object.

    ``size`` is the Gaussian sigma for blobs and ``(w, h)`` (or one side)
    for rectangles and grating patches. Positions are in pixels, velocities in pixels per
    frame; objects reflect off the frame borders. ``modulation_freq`` (cycles
    per frame) is the intensity flicker rate, or for a ``"grating"`` patch
    the drift rate of its sinusoidal texture of wave vector ``grating``
    (cycles per pixel).
    """

    kind: str = "blob"
    size: float | tuple[float, float] = 3.0
    start: tuple[float, float] = (8.0, 8.0)
    velocity: tuple[float, float] = (0.5, 0.0)
    intensity: float = 0.8
    modulation_freq: float = 0.0
    modulation_depth: float = 0.0
    modulation_phase: float = 0.0
    grating: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class SyntheticSpec:
    width: int = 32
    height: int = 32
    num_frames: int = 120
    frame_rate: float = 30.0
    objects: tuple[SceneObject, ...] = field(default_factory=lambda: (SceneObject(),))
    background: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "num_frames": self.num_frames,
            "frame_rate": self.frame_rate,
            "background": self.background,
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "objects": [
                {
                    "kind": o.kind,
                    "size": list(o.size) if isinstance(o.size, tuple) else o.size,
                    "start": list(o.start),
                    "velocity": list(o.velocity),
                    "intensity": o.intensity,
                    "modulation_freq": o.modulation_freq,
                    "modulation_depth": o.modulation_depth,
                    "modulation_phase": o.modulation_phase,
                    "grating": list(o.grating),
                }
                for o in self.objects
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        objects = []
        for o in d.get("objects", [{}]):
            o = dict(o)
            for key in ("start", "velocity", "grating"):
                if key in o:
                    o[key] = tuple(o[key])
            if isinstance(o.get("size"), list):
                o["size"] = tuple(o["size"])
            objects.append(SceneObject(**o))
        rest = {k: v for k, v in d.items() if k != "objects"}
        return cls(objects=tuple(objects), **rest)


def _reflect(p: np.ndarray, lo: float, hi: float) -> np.ndarray:
    span = hi - lo
    if span <= 0:
        return np.full_like(p, lo)
    q = np.mod(p - lo, 2 * span)
    return lo + np.where(q > span, 2 * span - q, q)


def _coverage(lo: np.ndarray, hi: np.ndarray, n: int) -> np.ndarray:
    """Fraction of each unit pixel interval [j, j+1) covered by [lo, hi]."""
    edges = np.arange(n)
    return np.clip(np.minimum(hi[:, None], edges + 1) - np.maximum(lo[:, None], edges), 0.0, 1.0)


def _render_object(obj: SceneObject, spec: SyntheticSpec, t: np.ndarray) -> np.ndarray:
    w, h = spec.width, spec.height
    if obj.kind == "blob":
        sigma = float(obj.size)
        if not sigma > 0:
            raise ValueError("blob sigma must be positive")
        half_x = half_y = 0.0
    elif obj.kind in ("rect", "grating"):
        rw, rh = (obj.size, obj.size) if np.isscalar(obj.size) else obj.size
        if not (rw > 0 and rh > 0):
            raise ValueError("rectangle sides must be positive")
        half_x, half_y = rw / 2, rh / 2
    else:
        raise ValueError(f"unknown object kind {obj.kind!r}")

    cx = _reflect(obj.start[0] + obj.velocity[0] * t, half_x, w - half_x)
    cy = _reflect(obj.start[1] + obj.velocity[1] * t, half_y, h - half_y)
    amp = obj.intensity * (
        1.0 + obj.modulation_depth * np.sin(2 * np.pi * obj.modulation_freq * t + obj.modulation_phase)
    )

    if obj.kind == "grating":
        gx = _coverage(cx - half_x, cx + half_x, w)
        gy = _coverage(cy - half_y, cy + half_y, h)
        kx, ky = obj.grating
        xs = np.arange(w) + 0.5
        ys = np.arange(h) + 0.5
        phase = 2 * np.pi * (kx * xs[None, None, :] + ky * ys[None, :, None])
        drift = 2 * np.pi * obj.modulation_freq * t[:, None, None] + obj.modulation_phase
        texture = 0.5 * (1.0 + obj.modulation_depth * np.sin(phase - drift))
        return obj.intensity * texture * gy[:, :, None] * gx[:, None, :]
    if obj.kind == "blob":
        xs = np.arange(w) + 0.5
        ys = np.arange(h) + 0.5
        dx = (xs[None, :] - cx[:, None]) / sigma
        dy = (ys[None, :] - cy[:, None]) / sigma
        # truncated at 3 sigma so untouched pixels stay exactly at background
        gx = np.where(np.abs(dx) <= 3, np.exp(-0.5 * dx**2), 0.0)
        gy = np.where(np.abs(dy) <= 3, np.exp(-0.5 * dy**2), 0.0)
    else:
        gx = _coverage(cx - half_x, cx + half_x, w)
        gy = _coverage(cy - half_y, cy + half_y, h)
    return amp[:, None, None] * gy[:, :, None] * gx[:, None, :]


def generate_synthetic(spec: SyntheticSpec) -> VideoCube:
    """Render ``spec`` deterministically.

    Samples are clipped to [0, 1] and rounded to float32 precision so the
    result survives a binary round trip unchanged.
    """
    if spec.noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    if spec.width < 1 or spec.height < 1 or spec.num_frames < 2:
        raise ValueError("scene needs positive size and at least 2 frames")
    t = np.arange(spec.num_frames, dtype=np.float64)
    frames = np.full((spec.num_frames, spec.height, spec.width), float(spec.background))
    for obj in spec.objects:
        frames += _render_object(obj, spec, t)
    np.clip(frames, 0.0, 1.0, out=frames)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        frames += rng.normal(0.0, spec.noise_sigma, frames.shape)
        np.clip(frames, 0.0, 1.0, out=frames)
    return VideoCube(frames.astype(np.float32).astype(np.float64), spec.frame_rate)


def random_spec(
    seed: int,
    width: int = 32,
    height: int = 32,
    num_frames: int = 300,
    frame_rate: float = 30.0,
    n_objects: tuple[int, int] = (2, 4),
    freq_range: tuple[float, float] = (0.035, 0.095),
    max_speed: float = 0.0,
    noise_sigma: float = 0.0,
) -> SyntheticSpec:
    """Draw a random textured scene from ``seed``.

    Each scene holds flickering blobs and rectangles and drifting grating
    patches with temporal rates drawn from ``freq_range`` (cycles per
    frame). Objects are static unless ``max_speed > 0``. Intensities are
    scaled so overlapping objects never saturate.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_objects[0], n_objects[1] + 1))
    objects = []
    for _ in range(n):
        kind = ("blob", "rect", "grating")[int(rng.integers(3))]
        side = float(rng.uniform(6, 14))
        size = side / 4 if kind == "blob" else (side, float(rng.uniform(6, 14)))
        speed = float(rng.uniform(0, max_speed))
        heading = rng.uniform(0, 2 * np.pi)
        k = rng.uniform(0.05, 0.25)
        k_dir = rng.uniform(0, 2 * np.pi)
        objects.append(
            SceneObject(
                kind=kind,
                size=size,
                start=(float(rng.uniform(0.125, 0.875) * width), float(rng.uniform(0.125, 0.875) * height)),
                velocity=(speed * float(np.cos(heading)), speed * float(np.sin(heading))),
                intensity=float(rng.uniform(0.5, 1.0)) / (2 * n),
                modulation_freq=float(rng.uniform(*freq_range)),
                modulation_depth=float(rng.uniform(0.5, 0.9)),
                modulation_phase=float(rng.uniform(0, 2 * np.pi)),
                grating=(float(k * np.cos(k_dir)), float(k * np.sin(k_dir))),
            )
        )
    return SyntheticSpec(
        width=width,
        height=height,
        num_frames=num_frames,
        frame_rate=frame_rate,
        objects=tuple(objects),
        background=0.0,
        noise_sigma=noise_sigma,
        seed=seed,
    )
