"""``craneswing`` command line: calibrate, estimate, simulate, validate, monitor.

Angles are printed and configured in degrees; files under a ``machine`` key
and the params file carry radians.  Errors leave as a JSON object on stderr
with exit status 2 (input), 3 (model/calibration) or 4 (validation failure).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Any, Callable, Sequence, TextIO

import numpy as np

from . import __version__
from .calibration import calibrate
from .config import RunConfig, load_config, read_json
from .errors import ConfigError, CraneSwingError, DegenerateDataError, ValidationFailureError
from .geometry import CameraIntrinsics, focal_length_px
from .ingestion import META_SUFFIX, Dataset, join_rope_lengths, load_dataset, read_meta, reject_report, save_dataset
from .monitor import (
    Params,
    Thresholds,
    alarm_events,
    compare_validation,
    estimate_frames,
    estimate_summary,
    load_widths,
)
from .reference_frame import ReferenceFrame, dataset_image_points, fit_reference_angle
from .simulator import (
    DEFAULT_ROPE_RANGE,
    SimulationConfig,
    draw_sample,
    grab_scene,
    make_rng,
    run_study,
    sample_records,
)

logger = logging.getLogger("craneswing")

REALTIME_FPS = 9.0
# spawn key for the --emit-dataset stream, disjoint from replication keys
EMIT_STREAM = 2**31 - 1


def _num(x: float) -> str:
    return repr(float(x))


def _dump_json(obj: Any, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if isinstance(v, float) and math.isnan(v) else _num(v) if isinstance(v, float) else v for v in row])


def _load(args, image_size: tuple[int, int] | None) -> Dataset:
    w = h = None
    if getattr(args, "image_size", None):
        w, h = _parse_size(args.image_size)
    elif image_size is not None:
        meta = read_meta(args.dataset)
        w = meta.get("image_width", image_size[0])
        h = meta.get("image_height", image_size[1])
    ds = load_dataset(
        args.dataset,
        args.format,
        image_width=w,
        image_height=h,
        max_reject_fraction=args.max_reject_fraction,
    )
    if getattr(args, "rope_file", None):
        ds = join_rope_lengths(ds, args.rope_file)
    return ds


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise ConfigError("image size must look like 1920x1080", value=text) from None


def _alpha_histogram(alphas: np.ndarray, bin_deg: float = 0.5) -> list[tuple[float, float, int]]:
    deg = np.degrees(alphas)
    top = max(bin_deg, math.ceil((deg.max() if deg.size else 0.0) / bin_deg + 1e-12) * bin_deg)
    edges = np.arange(0.0, top + bin_deg / 2, bin_deg)
    counts, _ = np.histogram(deg, bins=edges)
    return [(float(lo), float(hi), int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts)]


def cmd_calibrate(args) -> int:
    cfg = load_config(args.config)
    meta = read_meta(args.dataset)
    size = (cfg.image_width, cfg.image_height) if cfg.image_width and cfg.image_height else None
    ds = _load(args, size)
    h = args.h_px or cfg.focal_px or meta.get("h_px")
    if h is None:
        raise ConfigError("focal length unknown: give intrinsics in --config or --h-px")
    ref = cfg.reference
    principal = (
        ref.principal_x if ref.principal_x is not None else ds.image_width / 2.0,
        ref.principal_y if ref.principal_y is not None else ds.image_height / 2.0,
    )
    fit_count = max(1, math.ceil(ref.phi_fit_fraction * len(ds))) if len(ds) else 0
    reference_note = "fitted"
    try:
        rf = fit_reference_angle(ds.records[:fit_count], principal)
    except DegenerateDataError:
        # every frame at the principal point: theta is irrelevant, keep phi = 0
        rf = ReferenceFrame(principal[0], principal[1], 0.0, {"fit_points": 0})
        reference_note = "degenerate-all-at-principal-point"
    m, theta = dataset_image_points(ds.records, rf)
    report = calibrate((m, theta), h, cfg.calibration)

    params = Params(
        beta_rad=report.params.beta,
        sigma_sq_rad2=report.params.sigma_sq,
        h_px=float(h),
        principal_x=rf.principal_x,
        principal_y=rf.principal_y,
        reference_angle_phi_rad=rf.reference_angle_phi,
        dataset_fingerprint=ds.fingerprint(),
        image_width=ds.image_width,
        image_height=ds.image_height,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params.save(out / "params.json")
    machine = report.to_dict()
    summary = {
        "frames": len(ds),
        "rejected_rows": len(ds.rejects),
        "beta_deg": machine.pop("beta_deg"),
        "sigma_deg": machine.pop("sigma_deg"),
        "iterations": report.iterations,
        "converged": report.converged,
        "degenerate": report.degenerate,
        "reference_fit": reference_note,
        "out_of_bounds_frames": len(ds.out_of_bounds()),
    }
    _dump_json(
        {
            "summary": summary,
            "machine": machine,
            "params": params.to_dict(),
            "reference_frame": rf.to_dict(),
            "rejects": reject_report(ds),
            "source": ds.source,
        },
        out / "report.json",
    )
    _write_csv(out / "alpha_histogram.csv", ("bin_lo_deg", "bin_hi_deg", "count"), _alpha_histogram(report.alphas))
    _write_csv(
        out / "trace.csv",
        ("t", "beta_rad", "sigma_sq_rad2", "beta_err", "sigma_sq_rel_err"),
        [(r["t"], r["beta_rad"], r["sigma_sq_rad2"], r["beta_err"], r["sigma_sq_rel_err"]) for r in machine["trace"]],
    )
    print(
        f"beta = {summary['beta_deg']:.3f} deg, sigma = {summary['sigma_deg']:.3f} deg, "
        f"T = {report.iterations} ({'converged' if report.converged else 'NOT converged'})"
        + (" [degenerate: sigma_sq == 0]" if report.degenerate else "")
    )
    return 0


def _params_and_dataset(args) -> tuple[Params, Dataset, RunConfig]:
    params = Params.load(args.params)
    cfg = load_config(getattr(args, "config", None))
    size = (params.image_width, params.image_height) if params.image_width else None
    ds = _load(args, size)
    return params, ds, cfg


def cmd_estimate(args) -> int:
    params, ds, cfg = _params_and_dataset(args)
    t0 = time.perf_counter()
    estimates = estimate_frames(ds, params, cfg.thresholds)
    elapsed = time.perf_counter() - t0
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out,
        ("frame_id", "alpha_deg", "m_px", "theta_deg", "status"),
        [(e.frame_id, math.degrees(e.alpha), e.m, math.degrees(e.theta), e.status) for e in estimates],
    )
    summary = estimate_summary(estimates)
    _dump_json(summary, out.with_suffix(".summary.json"))
    logger.info("estimated %d frames in %.4f s", len(estimates), elapsed)
    print(json.dumps(summary, sort_keys=True))
    return 0


def _write_study(report, out: Path) -> None:
    cfg = report.config
    _dump_json(report.summary(), out / "report.json")
    _write_csv(
        out / "replications.csv",
        ("n", "replication", "beta_hat_rad", "sigma_sq_hat_rad2", "iterations", "converged", "error"),
        [(r.n, r.replication, r.beta_hat, r.sigma_sq_hat, r.iterations, int(r.converged), r.error or "") for r in report.results],
    )
    _write_csv(
        out / "timings.csv",
        ("n", "replication", "wall_time_s"),
        [(r.n, r.replication, r.wall_time) for r in report.results],
    )
    for which, fn in (("beta", report.beta_errors), ("sigma_sq", report.sigma_errors)):
        cols = [fn(n) for n in cfg.sizes]
        depth = max(c.size for c in cols)
        rows = [[float(c[i]) if i < c.size else float("nan") for c in cols] for i in range(depth)]
        _write_csv(out / f"errors_{which}.csv", [f"n={n}" for n in cfg.sizes], rows)
    _write_csv(
        out / "median_errors.csv",
        ("n", "median_beta_abs_error_rad", "median_sigma_sq_rel_error"),
        [(n, float(np.median(report.beta_errors(n))), float(np.median(report.sigma_errors(n)))) for n in cfg.sizes],
    )
    for n in cfg.sizes:
        for which in ("beta", "sigma"):
            mat = report.convergence_matrix(n, which)
            width = len(mat[0]) if mat else 0
            _write_csv(out / f"convergence_{which}_n{n}.csv", [f"t={t}" for t in range(width)], mat)


def cmd_simulate(args) -> int:
    raw = read_json(args.config)
    image_width = int(raw.pop("image_width", 1920))
    image_height = int(raw.pop("image_height", 1080))
    rope_range = tuple(float(v) for v in raw.pop("rope_range_m", DEFAULT_ROPE_RANGE))
    grab_width = float(raw.pop("grab_width_m", 2.9))
    cfg = SimulationConfig.from_dict(raw)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = run_study(cfg, workers=args.workers)
    _write_study(report, out)

    if args.emit_dataset or args.emit_widths:
        rng = make_rng(cfg.seed, EMIT_STREAM)
        sample = draw_sample(cfg.beta_true, cfg.sigma_true, cfg.h, cfg.n, rng, rope_range=rope_range)
        if args.emit_dataset:
            ds = sample_records(sample, image_width, image_height)
            path = save_dataset(ds, args.emit_dataset)
            meta = {"image_width": image_width, "image_height": image_height, "h_px": cfg.h}
            Path(str(path) + META_SUFFIX).write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")
        if args.emit_widths:
            _, _, x = grab_scene(sample.alpha, cfg.beta_true, sample.gamma, sample.rope_length, grab_width, cfg.h)
            _write_csv(Path(args.emit_widths), ("frame_id", "x_px"), [(i, float(v)) for i, v in enumerate(x)])

    summary = report.summary()
    for n, s in summary["sizes"].items():
        print(
            f"n={n}: median |beta_hat-beta| = {math.degrees(s['beta_abs_error']['median']):.4f} deg, "
            f"median |sigma2_hat/sigma2-1| = {s['sigma_sq_rel_error']['median']:.4f}, "
            f"failed={s['failed']}, max T={s['max_iterations']}"
        )
    return 0


def cmd_validate(args) -> int:
    params, ds, _ = _params_and_dataset(args)
    widths = load_widths(args.widths)
    rows, skipped = compare_validation(ds, params, args.grab_width, widths)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out,
        ("frame_id", "alpha_hat_deg", "alpha_tilde_deg", "abs_diff_deg"),
        [(r.frame_id, math.degrees(r.alpha_hat), math.degrees(r.alpha_tilde), math.degrees(r.abs_diff)) for r in rows],
    )
    diffs = np.degrees([r.abs_diff for r in rows]) if rows else np.array([])
    summary: dict[str, Any] = {"compared": len(rows), "skipped": skipped}
    if rows:
        q = np.quantile(diffs, [0, 0.25, 0.5, 0.75, 1])
        summary["abs_diff_deg"] = dict(zip(("min", "q1", "median", "q3", "max"), (float(v) for v in q)))
    _dump_json(summary, out.with_suffix(".summary.json"))
    if not rows:
        raise ValidationFailureError("no frame could be validated", skipped=len(skipped))
    print(json.dumps({k: v for k, v in summary.items() if k != "skipped"} | {"skipped": len(skipped)}, sort_keys=True))
    return 0


def cmd_monitor(args, stream: TextIO | None = None, sleep: Callable[[float], None] = time.sleep) -> int:
    stream = stream or sys.stdout
    params, ds, cfg = _params_and_dataset(args)
    thresholds = cfg.thresholds
    if args.alarm_deg is not None or args.max_deg is not None:
        thresholds = Thresholds(
            args.alarm_deg if args.alarm_deg is not None else thresholds.alarm_deg,
            args.max_deg if args.max_deg is not None else thresholds.max_deg,
        )
    estimates = estimate_frames(ds, params, thresholds)
    period = 1.0 / args.fps if args.realtime else 0.0
    for event in alarm_events(estimates, thresholds, args.per_frame_alarms, args.median_window):
        stream.write(json.dumps(event, sort_keys=True) + "\n")
        if event["type"] == "FRAME" and period:
            stream.flush()
            sleep(period)
    stream.flush()
    return 0


def cmd_focal(args) -> int:
    intr = CameraIntrinsics(args.focal_mm, args.diagonal_mm, args.width, args.height)
    print(json.dumps({"pixels_per_mm": intr.pixels_per_mm, "h_px": focal_length_px(intr)}))
    return 0


def _dataset_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("dataset", help="detections file (.csv or .jsonl)")
    p.add_argument("--format", choices=("csv", "jsonl"), default=None)
    p.add_argument("--image-size", default=None, help="WIDTHxHEIGHT, overrides any dataset metadata")
    p.add_argument("--rope-file", default=None, help="frame_id,rope_length_m sidecar to join")
    p.add_argument("--max-reject-fraction", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="craneswing", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="fit camera angle and swing variance on a dataset")
    _dataset_args(p)
    p.add_argument("--config", default=None, help="JSON run config")
    p.add_argument("--h-px", type=float, default=None, help="focal length in pixels (overrides intrinsics)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("estimate", help="per-frame swing angles from calibrated params")
    _dataset_args(p)
    p.add_argument("--params", required=True)
    p.add_argument("--config", default=None, help="JSON run config (thresholds)")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="replicated Monte Carlo calibration study")
    p.add_argument("--config", required=True, help="JSON simulation config (angles in degrees)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--emit-dataset", default=None, help="also write a synthetic detection CSV")
    p.add_argument("--emit-widths", default=None, help="also write synthetic grab widths (frame_id,x_px)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="compare estimates with the grab-width estimator")
    _dataset_args(p)
    p.add_argument("--params", required=True)
    p.add_argument("--grab-width", type=float, required=True, help="true grab width in metres")
    p.add_argument("--widths", required=True, help="frame_id,x_px file of observed grab widths")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("monitor", help="replay frames and emit alarm events as JSON lines")
    _dataset_args(p)
    p.add_argument("--params", required=True)
    p.add_argument("--config", default=None, help="JSON run config (thresholds)")
    p.add_argument("--alarm-deg", type=float, default=None)
    p.add_argument("--max-deg", type=float, default=None)
    p.add_argument("--per-frame-alarms", action="store_true", help="alarm on every non-normal frame")
    p.add_argument("--median-window", type=int, default=1, help="trailing median over this many frames")
    p.add_argument("--realtime", action="store_true", help="pace the replay at --fps")
    p.add_argument("--fps", type=float, default=REALTIME_FPS)
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("focal", help="focal length in pixels from lens and sensor data")
    p.add_argument("--focal-mm", type=float, required=True)
    p.add_argument("--diagonal-mm", type=float, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.set_defaults(func=cmd_focal)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CraneSwingError as exc:
        sys.stderr.write(json.dumps(exc.to_dict(), sort_keys=True, default=str) + "\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
