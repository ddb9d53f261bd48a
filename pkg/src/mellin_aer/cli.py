"""Command-line entry point.

Every subcommand prints a JSON document (or CSV with ``--csv``) to stdout,
or to ``--out`` where that names a result file. Exit status is 0 on
success, 1 on domain errors and 2 on usage errors. A query that does not
match is a result, not an error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from .bench import (
    DEFAULT_DETECTION_SPEEDS,
    DEFAULT_LOCALIZATION_SCALES,
    DEFAULT_SWEEP_SPEEDS,
    _jsonable,
    corpus_specs,
    run_detection_experiment,
    run_localization_experiment,
    run_scale_sweep,
)
from .correlator import METHODS, aggregate, auto_peak, correlate_cubes, peak_of
from .mellin import mellin_cube, mellin_transform
from .tsm import (
    POLICIES,
    TsmConfig,
    _check_pair,
    calibrate_threshold,
    estimate_scale,
    plan_for,
    plan_segments,
    rates,
    run_tsm,
    search_database,
)
from .video import (
    SyntheticSpec,
    generate_synthetic,
    random_spec,
    read_cube,
    resample_speed,
    subtract_temporal_mean,
    write_cube,
    write_pgm_sequence,
)


class DomainError(Exception):
    """Bad input data, as opposed to a malformed command line."""


# --------------------------------------------------------------------------
# Output helpers
# --------------------------------------------------------------------------


def _emit_json(doc, out: str | None) -> None:
    text = json.dumps(_jsonable(doc), indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_rows(rows: list[dict], columns: list[str], out: str | None) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})
    if out:
        Path(out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def _emit(doc: dict, args) -> None:
    if getattr(args, "csv", False):
        _emit_rows([doc], list(doc), args.out)
    else:
        _emit_json(doc, args.out)


def _config(args) -> TsmConfig:
    return TsmConfig(
        omega_low=args.omega_low,
        omega_high=args.omega_high,
        n_tau=args.n_tau,
        method=args.method,
        threshold=args.threshold,
        n_jobs=args.jobs,
    )


def _load(path):
    try:
        return read_cube(path)
    except FileNotFoundError:
        raise DomainError(f"cannot read {path}: no such file or directory") from None


def _pair(args):
    query, ref = _load(args.query), _load(args.ref)
    _check_pair(query, ref)
    return query, ref


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_gen(args) -> None:
    if args.spec:
        try:
            spec = SyntheticSpec.from_dict(json.loads(Path(args.spec).read_text()))
        except FileNotFoundError:
            raise DomainError(f"cannot read {args.spec}: no such file or directory") from None
        except (json.JSONDecodeError, TypeError, KeyError) as exc:
            raise DomainError(f"invalid scene description {args.spec}: {exc}") from None
        if args.seed is not None:
            spec = replace(spec, seed=args.seed)
    else:
        spec = random_spec(0 if args.seed is None else args.seed)
    cube = generate_synthetic(spec)
    if args.speed != 1.0:
        cube = resample_speed(cube, args.speed)
    if args.pgm:
        write_pgm_sequence(cube, args.out)
    else:
        write_cube(cube, args.out)
    doc = {
        "path": args.out,
        "format": "pgm-sequence" if args.pgm else "cube-binary",
        "frames": cube.num_frames,
        "height": cube.height,
        "width": cube.width,
        "frame_rate": cube.frame_rate,
        "spec": spec.to_dict(),
    }
    sys.stdout.write(json.dumps(_jsonable(doc), indent=2) + "\n")


def _parse_pixel(text: str, cube) -> tuple[int, int]:
    x, y = (int(v) for v in text.split(","))
    if not (0 <= x < cube.width and 0 <= y < cube.height):
        raise DomainError(f"pixel {x},{y} lies outside the {cube.width}x{cube.height} frame")
    return x, y


def cmd_mt(args) -> None:
    cube = _load(args.query)
    x, y = _parse_pixel(args.pixel, cube)
    params = _config(args).mt_params(cube)
    stream = mellin_transform(cube.pixel(x, y), params)
    tau, omega = params.tau(), params.omega()
    if args.csv:
        rows = [{"tau": t, "omega": w, "value": v} for t, w, v in zip(tau, omega, stream.values)]
        _emit_rows(rows, ["tau", "omega", "value"], args.out)
        return
    _emit_json(
        {
            "pixel": [x, y],
            "params": params.to_dict(),
            "delta_tau": params.delta_tau,
            "tau": tau.tolist(),
            "values": stream.values.tolist(),
        },
        args.out,
    )


def cmd_xcorr(args) -> None:
    query, ref = _pair(args)
    config = _config(args)
    if args.domain == "tau":
        params = config.mt_params(query)
        params.check_rate(ref.frame_rate)
        q, r = mellin_cube(query, params), mellin_cube(ref, params)
    else:
        q, r = subtract_temporal_mean(query), subtract_temporal_mean(ref)
    signal = aggregate(correlate_cubes(q, r, n_jobs=args.jobs), args.method)
    auto = auto_peak(q, args.method)
    reading = peak_of(signal, auto) if auto > 0 else None
    if args.csv:
        rows = [{"lag": int(l), "value": v} for l, v in zip(signal.lags, signal.values)]
        _emit_rows(rows, ["lag", "value"], args.out)
        return
    _emit_json(
        {
            "domain": args.domain,
            "method": args.method,
            "peak": None if reading is None else asdict(reading),
            "lags": signal.lags.tolist(),
            "values": signal.values.tolist(),
        },
        args.out,
    )


def cmd_estimate(args) -> None:
    query, ref = _pair(args)
    _emit(asdict(estimate_scale(query, ref, _config(args))), args)


def cmd_tsm(args) -> None:
    query, ref = _pair(args)
    _emit(run_tsm(query, ref, _config(args)).to_dict(), args)


def cmd_search(args) -> None:
    query, db = _load(args.query), _load(args.db)
    config = _config(args).replace(window=args.t2)
    if args.t1 is not None:
        t2 = db.num_frames if args.t2 is None else min(args.t2, db.num_frames)
        plan = plan_segments(db.num_frames, t2, args.t1)
    else:
        plan = plan_for(query, db, config)
    matches = search_database(query, db, config, plan)
    doc = {"plan": plan.to_dict(), "matches": [m.to_dict() for m in matches]}
    if args.csv:
        cols = list(matches[0].to_dict()) if matches else ["matched"]
        _emit_rows([m.to_dict() for m in matches], cols, args.out)
    else:
        _emit_json(doc, args.out)


def _read_scores(path: str) -> tuple[list[float], list[float]]:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DomainError(f"cannot read {path}: no such file or directory") from None
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path} is not valid JSON: {exc}") from None
    if isinstance(doc, dict) and "matched" in doc and "unmatched" in doc:
        return [float(v) for v in doc["matched"]], [float(v) for v in doc["unmatched"]]
    if isinstance(doc, dict) and doc.get("kind") == "detection":
        rows = [r for r in doc["records"] if r["mode"] == "with_mt"]
        return [r["score"] for r in rows if r["true_match"]], [r["score"] for r in rows if not r["true_match"]]
    raise DomainError(f"{path} holds neither matched/unmatched score lists nor a detection report")


def cmd_calibrate(args) -> None:
    matched, unmatched = _read_scores(args.scores)
    threshold = calibrate_threshold(matched, unmatched, args.policy)
    det, fpr = rates(matched, unmatched, threshold)
    _emit(
        {
            "policy": POLICIES[args.policy],
            "threshold": threshold,
            "detection_rate": det,
            "false_positive_rate": fpr,
            "matched_count": len(matched),
            "unmatched_count": len(unmatched),
        },
        args,
    )


def _emit_report(report, args) -> None:
    if args.csv:
        if not args.out:
            raise DomainError("--csv for benchmark reports needs --out DIR")
        report.write_csv(args.out)
        report.write_json(Path(args.out) / f"{report.kind}.json")
    else:
        _emit_json(report.to_dict(), args.out)


def cmd_bench_sweep(args) -> None:
    clips = corpus_specs(args.clips, seed=args.seed, num_frames=args.frames)
    speeds = args.speeds or DEFAULT_SWEEP_SPEEDS
    _emit_report(run_scale_sweep(clips, speeds, _config(args), n_jobs=args.jobs), args)


def cmd_bench_detect(args) -> None:
    clips = corpus_specs(args.clips, seed=args.seed, num_frames=args.frames)
    speeds = args.speeds or DEFAULT_DETECTION_SPEEDS
    _emit_report(run_detection_experiment(clips, speeds, _config(args), n_jobs=args.jobs), args)


def cmd_bench_localize(args) -> None:
    clips = corpus_specs(args.clips, seed=args.seed, num_frames=args.frames)
    scales = args.speeds or DEFAULT_LOCALIZATION_SCALES
    report = run_localization_experiment(
        clips, scales, args.placements, _config(args), args.total_frames, args.seed, n_jobs=args.jobs
    )
    _emit_report(report, args)


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _unit_float(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1], got {text}")
    return v


def _float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text}") from None
    if not values or any(not v > 0 for v in values):
        raise argparse.ArgumentTypeError(f"expected positive comma-separated numbers, got {text}")
    return values


def _pixel(text: str) -> str:
    parts = text.split(",")
    if len(parts) != 2 or not all(p.strip().lstrip("-").isdigit() for p in parts):
        raise argparse.ArgumentTypeError(f"expected X,Y, got {text}")
    return text


def _add_mt_flags(p) -> None:
    g = p.add_argument_group("Mellin transform")
    g.add_argument("--omega-low", type=_positive_float, help="low cut-off in Hz (default: 2 fs / query frames)")
    g.add_argument("--omega-high", type=_positive_float, help="high cut-off in Hz (default: fs / 2)")
    g.add_argument("--n-tau", type=_positive_int, default=512, help="tau samples (default: 512)")


def _add_match_flags(p) -> None:
    _add_mt_flags(p)
    p.add_argument("--method", choices=METHODS, default="power", help="pixel aggregation (default: power)")
    p.add_argument("--threshold", type=_unit_float, default=0.5, help="Step I match threshold (default: 0.5)")
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker threads (default: 1)")


def _add_output(p, csv_help="write CSV instead of JSON") -> None:
    p.add_argument("--out", help="write the result here instead of stdout")
    p.add_argument("--csv", action="store_true", help=csv_help)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mellin-aer", description="Speed-invariant video event recognition."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen", help="render a synthetic clip")
    p.add_argument("--spec", help="scene description JSON (default: a random scene)")
    p.add_argument("--seed", type=int, help="noise seed (or scene seed without --spec)")
    p.add_argument("--speed", type=_positive_float, default=1.0, help="resample by this duration factor")
    p.add_argument("--pgm", action="store_true", help="write a PGM-sequence directory")
    p.add_argument("--out", required=True, help="output cube path")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("mt", help="Mellin transform of one pixel")
    p.add_argument("--query", required=True, help="input cube")
    p.add_argument("--pixel", required=True, type=_pixel, help="pixel as X,Y")
    _add_match_flags(p)
    _add_output(p, "write tau,omega,value rows")
    p.set_defaults(func=cmd_mt)

    p = sub.add_parser("xcorr", help="aggregated cross-correlation of two cubes")
    p.add_argument("--query", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--domain", choices=("tau", "frame"), default="tau", help="Mellin or frame domain (default: tau)")
    _add_match_flags(p)
    _add_output(p, "write lag,value rows")
    p.set_defaults(func=cmd_xcorr)

    for name, func, text in (
        ("estimate", cmd_estimate, "Step I: detect and estimate the scale factor"),
        ("tsm", cmd_tsm, "two-step match of a query against a reference"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--query", required=True)
        p.add_argument("--ref", required=True)
        _add_match_flags(p)
        _add_output(p)
        p.set_defaults(func=func)

    p = sub.add_parser("search", help="two-step match over a segmented database")
    p.add_argument("--query", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--t1", type=_positive_int, help="segment overlap in frames (default: 4 x query frames)")
    p.add_argument("--t2", type=_positive_int, help="segment length in frames (default: whole database)")
    _add_match_flags(p)
    _add_output(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("calibrate", help="choose a threshold from labelled scores")
    p.add_argument("--scores", required=True, help="JSON with matched/unmatched lists, or a detection report")
    p.add_argument("--policy", choices=sorted(POLICIES), default="min-fp")
    _add_output(p)
    p.set_defaults(func=cmd_calibrate)

    for name, func, text, clips, frames, speeds_help in (
        ("bench-sweep", cmd_bench_sweep, "scale-factor error sweep", 10, 300, "speed ladder"),
        ("bench-detect", cmd_bench_detect, "detection rates with and without the Mellin step", 10, 300, "database speeds"),
        ("bench-localize", cmd_bench_localize, "frame offsets of embedded events", 5, 240, "scale factors"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--clips", type=_positive_int, default=clips, help=f"corpus size (default: {clips})")
        p.add_argument("--frames", type=_positive_int, default=frames, help=f"frames per clip (default: {frames})")
        p.add_argument("--seed", type=int, default=0, help="corpus seed (default: 0)")
        p.add_argument("--speeds", type=_float_list, help=f"comma-separated {speeds_help}")
        if name == "bench-localize":
            p.add_argument("--placements", type=_positive_int, default=3, help="placements per clip and scale")
            p.add_argument("--total-frames", type=_positive_int, default=1200, help="reference length")
        _add_match_flags(p)
        _add_output(p, "write CSV tables and the JSON report into the --out directory")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (DomainError, ValueError, OSError) as exc:
        print(f"mellin-aer {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
