"""Seeded benchmark experiments: scale sweep, detection rates, localization."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .correlator import METHODS, auto_peak
from .mellin import mellin_cube
from .tsm import TsmConfig, calibrate_threshold, frame_domain_score, rates, run_tsm, scale_from_mellin
from .video import (
    SyntheticSpec,
    VideoCube,
    embed_event,
    generate_synthetic,
    random_spec,
    resample_speed,
    write_cube,
)

DEFAULT_SWEEP_SPEEDS = (0.05, 0.1, 0.2, 0.35, 0.5, 0.7, 1.0, 1.4, 2.0, 3.0, 5.0, 10.0, 20.0, 40.0)
DEFAULT_DETECTION_SPEEDS = (0.5, 0.75, 1.0, 1.5, 2.0)
DEFAULT_LOCALIZATION_SCALES = (1.0, 2.0, 3.0, 4.0)


def delta_error(alpha_est: float, alpha_true: float) -> float:
    """Relative scale-factor error in percent."""
    if not alpha_true > 0:
        raise ValueError(f"alpha_true must be positive, got {alpha_true}")
    return abs(alpha_est - alpha_true) / alpha_true * 100.0


@dataclass(frozen=True)
class DistributionSummary:
    count: int
    min: float
    q1: float
    median: float
    q3: float
    max: float
    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]

    def to_dict(self) -> dict:
        return asdict(self)


def summarize_distribution(values, bins: int = 10) -> DistributionSummary:
    """Five-number summary and an equal-width histogram over ``[min, max]``.

    Quartiles interpolate linearly between the closest order statistics
    (the inclusive rule: position ``p * (n - 1)``).
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("cannot summarize an empty sample")
    if int(bins) != bins or bins < 1:
        raise ValueError(f"bins must be a positive integer, got {bins}")
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    lo, hi = float(v.min()), float(v.max())
    counts, edges = np.histogram(v, bins=int(bins), range=(lo, hi))
    return DistributionSummary(
        int(v.size), lo, float(q1), float(med), float(q3), hi,
        tuple(float(e) for e in edges), tuple(int(c) for c in counts),
    )


def corpus_specs(n_clips: int, seed: int = 0, **kwargs) -> list[SyntheticSpec]:
    """``n_clips`` random scenes whose seeds derive from ``seed``."""
    states = np.random.SeedSequence(seed).generate_state(n_clips)
    return [random_spec(int(s), **kwargs) for s in states]


# --------------------------------------------------------------------------
# Speed database
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DatabaseEntry:
    clip_id: int
    speed: float
    path: str | None
    num_frames: int


@dataclass(frozen=True)
class SpeedDatabaseManifest:
    entries: tuple[DatabaseEntry, ...]
    seed: int
    clip_count: int
    speeds: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "clip_count": self.clip_count,
            "speeds": list(self.speeds),
            "entries": [asdict(e) for e in self.entries],
        }

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def _speed_tag(speed: float) -> str:
    return f"{speed:g}".replace(".", "p")


def build_speed_database(clips, speeds, seed: int = 0, out_dir=None):
    """Render every clip and resample it at every speed.

    Samples are rounded to float32 precision. When ``out_dir`` is given
    each cube is written there as
    ``clip{i:03d}_s{speed}.mtvc`` next to ``manifest.json``. Returns the
    manifest and a ``{(clip_id, speed): VideoCube}`` mapping.
    """
    clips = list(clips)
    speeds = tuple(float(s) for s in speeds)
    if not clips or not speeds:
        raise ValueError("need at least one clip and one speed")
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    cubes = {}
    for i, spec in enumerate(clips):
        original = generate_synthetic(spec)
        for s in speeds:
            # float32 precision, so the files hold exactly what the experiments see
            resampled = resample_speed(original, s)
            cube = VideoCube(resampled.samples.astype(np.float32).astype(np.float64), resampled.frame_rate)
            path = None
            if out_dir is not None:
                path = out_dir / f"clip{i:03d}_s{_speed_tag(s)}.mtvc"
                write_cube(cube, path)
                path = str(path)
            entries.append(DatabaseEntry(i, s, path, cube.num_frames))
            cubes[(i, s)] = cube
    manifest = SpeedDatabaseManifest(tuple(entries), int(seed), len(clips), speeds)
    if out_dir is not None:
        manifest.write(out_dir / "manifest.json")
    return manifest, cubes


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, DistributionSummary):
        return obj.to_dict()
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@dataclass
class BenchReport:
    """Records of one experiment plus aggregate metrics and distribution summaries."""

    kind: str
    records: list[dict] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    summaries: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(
            {
                "kind": self.kind,
                "config": self.config,
                "metrics": self.metrics,
                "summaries": self.summaries,
                "records": self.records,
            }
        )

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def write_csv(self, out_dir) -> list[Path]:
        """Write the plot table(s) for this experiment into ``out_dir``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        name, columns = _CSV_TABLES[self.kind]
        path = out_dir / name
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
            writer.writeheader()
            for rec in self.records:
                writer.writerow({k: ("" if rec.get(k) is None else rec.get(k)) for k in columns})
        return [path]


_CSV_TABLES = {
    "sweep": (
        "delta_vs_alpha.csv",
        ["method", "query_id", "reference_id", "speed", "alpha_true", "alpha_est", "delta", "score"],
    ),
    "detection": (
        "score_distributions.csv",
        ["mode", "query_id", "reference_id", "speed", "alpha_true", "true_match", "score", "alpha_est"],
    ),
    "localization": (
        "frame_offsets.csv",
        ["query_id", "scale", "placement", "alpha_est", "matched", "event_frame", "frame_offset", "step1_score", "step2_score"],
    ),
}


def _pmap(fn, items, n_jobs: int):
    if n_jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# Experiments
# --------------------------------------------------------------------------


def run_scale_sweep(clips, speeds=DEFAULT_SWEEP_SPEEDS, config: TsmConfig = TsmConfig(), n_jobs: int = 1) -> BenchReport:
    """Estimate the scale factor of every (clip, speed) pair with both methods.

    The true factor is the frame ratio of the resampled clip to the
    original.
    """
    clips = list(clips)
    speeds = tuple(float(s) for s in speeds)
    if not clips or not speeds:
        raise ValueError("need at least one clip and one speed")

    def one_clip(item):
        i, spec = item
        query = generate_synthetic(spec)
        params = config.mt_params(query)
        mq = mellin_cube(query, params)
        autos = {m: auto_peak(mq, m) for m in METHODS}
        out = []
        for s in speeds:
            ref = resample_speed(query, s)
            mr = mellin_cube(ref, params)
            alpha_true = ref.num_frames / query.num_frames
            for m in METHODS:
                est = scale_from_mellin(mq, mr, m, config.threshold, autos[m])
                out.append(
                    {
                        "method": m,
                        "query_id": i,
                        "reference_id": f"{i}@{s:g}",
                        "speed": s,
                        "alpha_true": alpha_true,
                        "alpha_est": est.alpha,
                        "delta": delta_error(est.alpha, alpha_true),
                        "ln_alpha_error": abs(math.log(est.alpha / alpha_true)),
                        "delta_tau": est.delta_tau,
                        "score": est.score,
                    }
                )
        return out

    records = [r for chunk in _pmap(one_clip, list(enumerate(clips)), n_jobs) for r in chunk]

    metrics: dict = {"curves": {}, "delta_variance": {}, "delta_median": {}}
    summaries = {}
    for m in METHODS:
        rows = [r for r in records if r["method"] == m]
        deltas = np.array([r["delta"] for r in rows])
        metrics["delta_variance"][m] = float(deltas.var())
        metrics["delta_median"][m] = float(np.median(deltas))
        curve = []
        for s in speeds:
            d = np.array([r["delta"] for r in rows if r["speed"] == s])
            curve.append(
                {
                    "speed": s,
                    "alpha_true": float(np.mean([r["alpha_true"] for r in rows if r["speed"] == s])),
                    "median_delta": float(np.median(d)),
                    "mean_delta": float(d.mean()),
                    "max_delta": float(d.max()),
                }
            )
        metrics["curves"][m] = curve
        summaries[f"delta_{m}"] = summarize_distribution(deltas)
    metrics["peak_variance_le_power"] = metrics["delta_variance"]["peak"] <= metrics["delta_variance"]["power"]
    return BenchReport(
        "sweep",
        records,
        metrics,
        summaries,
        {"speeds": list(speeds), "clips": len(clips), "tsm": asdict(config)},
    )


def _mode_metrics(matched: list[float], unmatched: list[float]) -> dict:
    out: dict = {
        "true_matches": len(matched),
        "true_non_matches": len(unmatched),
    }
    if not unmatched:
        raise ValueError("detection experiment produced no non-matching pairs")
    t_fp = float(np.nextafter(max(unmatched), np.inf))
    out["threshold_min_fp"] = t_fp
    det_fp, fpr_fp = rates(matched, unmatched, t_fp)
    out["detection_rate_min_fp"] = det_fp
    out["false_positive_rate_min_fp"] = fpr_fp
    if matched:
        t_fn = calibrate_threshold(matched, unmatched, "min-fn")
        det_fn, fpr_fn = rates(matched, unmatched, t_fn)
        out["threshold_min_fn"] = t_fn
        out["detection_rate_min_fn"] = det_fn
        out["false_positive_rate_min_fn"] = fpr_fn
        out["separation"] = float(min(matched) - max(unmatched))
    else:
        # detection rate is undefined without true matches
        out["threshold_min_fn"] = None
        out["detection_rate_min_fn"] = None
        out["false_positive_rate_min_fn"] = None
        out["separation"] = None
    return out


def run_detection_experiment(
    clips,
    speeds=DEFAULT_DETECTION_SPEEDS,
    config: TsmConfig = TsmConfig(),
    queries=None,
    n_jobs: int = 1,
) -> BenchReport:
    """Correlate every query clip against every clip x speed database entry.

    Scores are recorded with the Mellin step (Step I score) and without it
    (frame-domain correlation of the unadjusted pair). ``queries`` defaults
    to ``clips``; a pair is a true match when the query and the entry come
    from the same scene description.
    """
    clips = list(clips)
    queries = clips if queries is None else list(queries)
    manifest, db = build_speed_database(clips, speeds)
    keys = [(e.clip_id, e.speed) for e in manifest.entries]

    def one_query(item):
        qi, qspec = item
        query = generate_synthetic(qspec)
        params = config.mt_params(query)
        mq = mellin_cube(query, params)
        auto = auto_peak(mq, config.method)
        out = []
        for ci, s in keys:
            ref = db[(ci, s)]
            est = scale_from_mellin(mq, mellin_cube(ref, params), config.method, config.threshold, auto)
            _, plain = frame_domain_score(query, ref, config.method)
            base = {
                "query_id": qi,
                "reference_id": f"{ci}@{s:g}",
                "speed": s,
                "alpha_true": ref.num_frames / query.num_frames,
                "true_match": qspec == clips[ci],
            }
            out.append({**base, "mode": "with_mt", "score": est.score, "alpha_est": est.alpha})
            out.append({**base, "mode": "without_mt", "score": plain, "alpha_est": None})
        return out

    records = [r for chunk in _pmap(one_query, list(enumerate(queries)), n_jobs) for r in chunk]

    metrics = {}
    summaries = {}
    for mode in ("with_mt", "without_mt"):
        rows = [r for r in records if r["mode"] == mode]
        matched = [r["score"] for r in rows if r["true_match"]]
        unmatched = [r["score"] for r in rows if not r["true_match"]]
        metrics[mode] = _mode_metrics(matched, unmatched)
        if matched:
            summaries[f"{mode}_matched"] = summarize_distribution(matched)
        summaries[f"{mode}_unmatched"] = summarize_distribution(unmatched)
        for s in manifest.speeds:
            group = [r["score"] for r in rows if r["speed"] == s and r["true_match"]]
            if group:
                summaries[f"{mode}_matched_speed_{s:g}"] = summarize_distribution(group)
            group = [r["score"] for r in rows if r["speed"] == s and not r["true_match"]]
            if group:
                summaries[f"{mode}_unmatched_speed_{s:g}"] = summarize_distribution(group)
    return BenchReport(
        "detection",
        records,
        metrics,
        summaries,
        {
            "speeds": list(manifest.speeds),
            "clips": len(clips),
            "queries": len(queries),
            "pairings": len(queries) * len(keys),
            "tsm": asdict(config),
        },
    )


def run_localization_experiment(
    clips,
    scale_factors=DEFAULT_LOCALIZATION_SCALES,
    placements=None,
    config: TsmConfig = TsmConfig(),
    total_frames: int = 1200,
    seed: int = 0,
    n_jobs: int = 1,
) -> BenchReport:
    """Embed rescaled clips at known frames of longer references and localize them.

    ``placements`` maps to the event start frame: either a list of ints
    used for every (clip, scale) pair, or an int count of random placements
    drawn from ``seed``. Frames outside the event show the clip's mean
    frame.
    """
    clips = list(clips)
    scale_factors = tuple(float(s) for s in scale_factors)
    if placements is None:
        placements = 3
    rng = np.random.default_rng(seed)

    trials = []
    for i, spec in enumerate(clips):
        for s in scale_factors:
            n_event = int(round(s * spec.num_frames))
            room = total_frames - n_event
            if room < 0:
                raise ValueError(
                    f"clip {i} at scale {s:g} spans {n_event} frames, more than {total_frames}"
                )
            if isinstance(placements, int):
                starts = sorted(int(p) for p in rng.integers(0, room + 1, placements))
            else:
                starts = [int(p) for p in placements]
            trials.extend((i, spec, s, p) for p in starts)

    def one_trial(trial):
        i, spec, s, p = trial
        query = generate_synthetic(spec)
        event = resample_speed(query, s)
        reference = embed_event(event, total_frames, p, background=query.samples.mean(axis=0))
        result = run_tsm(query, reference, config)
        return {
            "query_id": i,
            "scale": s,
            "placement": p,
            "alpha_true": event.num_frames / query.num_frames,
            "alpha_est": result.alpha,
            "matched": result.matched,
            "event_frame": result.event_frame,
            "frame_offset": None if result.event_frame is None else abs(result.event_frame - p),
            "step1_score": result.step1_score,
            "step2_score": result.step2_score,
        }

    records = _pmap(one_trial, trials, n_jobs)

    offsets = [r["frame_offset"] for r in records if r["frame_offset"] is not None]
    metrics = {
        "trials": len(records),
        "matched": sum(1 for r in records if r["matched"]),
        "max_frame_offset": max(offsets) if offsets else None,
        "per_scale": {},
    }
    summaries = {}
    for s in scale_factors:
        o = [r["frame_offset"] for r in records if r["scale"] == s and r["frame_offset"] is not None]
        metrics["per_scale"][f"{s:g}"] = {"trials": sum(1 for r in records if r["scale"] == s), "max_frame_offset": max(o) if o else None}
        if o:
            summaries[f"frame_offset_scale_{s:g}"] = summarize_distribution(o)
    return BenchReport(
        "localization",
        records,
        metrics,
        summaries,
        {"scales": list(scale_factors), "clips": len(clips), "total_frames": total_frames, "seed": seed, "tsm": asdict(config)},
    )
