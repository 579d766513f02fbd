"""Command line front end: ``objaug {augment,frames,synth,sensitivity,report}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 1 anything else.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    SensitivityConfig,
    l1_error_series,
    l2_error_series,
    marker_report,
    offset_from_sensitivity,
    sensitivity_study,
    torque_case_report,
)
from .errors import ConfigError, DataError
from .hand_frame import compute_hand_frame_series
from .limb_dynamics import load_limb
from .mocap_io import load_trial_config, parse_marker_csv, read_markers, read_table, write_json, write_table
from .pipeline import read_joint_table, run_augmentation, write_result
from .synth import generate_trial, get_motion, load_grasp, write_trial
from .virtual_object import load_object

log = logging.getLogger("objaug")

DEFAULT_PALM_THICKNESS = 0.03


def _require_out(args) -> Path:
    if args.out is None:
        raise ConfigError("--out is required")
    return Path(args.out)


def cmd_augment(args) -> int:
    trial = Path(args.trial)
    cfg = load_trial_config(trial)
    offset = None if args.offset_mm is None else args.offset_mm * 1e-3
    out = _require_out(args)
    result = run_augmentation(cfg, args.object, offset, False if args.no_filter else None)
    manifest = write_result(result, out, seed=args.seed, extra_inputs=[trial])
    pose = result.base.pose
    log.info(
        "augmented %d frames; max IK residual %.3g mm; outputs in %s",
        len(pose),
        float(pose.max_residual.max()) * 1e3,
        out,
    )
    log.debug("timings: %s", manifest["timings_s"])
    return 0


def cmd_frames(args) -> int:
    cfg = load_trial_config(Path(args.trial))
    out = _require_out(args)
    markers = read_markers(cfg.markers_path)
    limb = load_limb(cfg.limb_ref, cfg.base_dir)
    _, cols = read_joint_table(cfg.joints_path, limb.joint_names, markers.sample_rate)
    if cfg.deviation_angle_column not in cols:
        raise DataError(f"joint table lacks the deviation angle column {cfg.deviation_angle_column!r}")
    fr = compute_hand_frame_series(markers, cfg, cols[cfg.deviation_angle_column])
    out.mkdir(parents=True, exist_ok=True)
    write_table(
        out / "hand_frames.csv",
        ["time", "ox", "oy", "oz", "nx", "ny", "nz", "px", "py", "pz", "fx", "fy", "fz"],
        np.hstack([fr.times[:, None], fr.origin, fr.n, fr.p, fr.f]),
    )
    log.info("wrote %d hand frames to %s", len(fr), out)
    return 0


def cmd_synth(args) -> int:
    out = _require_out(args)
    seed = 0 if args.seed is None else args.seed
    kwargs = {}
    if args.duration is not None:
        kwargs["duration"] = args.duration
    if args.rate is not None:
        kwargs["sample_rate"] = args.rate
    motion = get_motion(args.motion, **kwargs)
    limb = load_limb(args.limb)
    obj = load_object(args.object, palm_thickness=args.palm_thickness)
    grasp = load_grasp(args.grasp)
    trial = generate_trial(limb, motion, obj, grasp, args.noise_mm * 1e-3, seed)
    write_trial(trial, out, args.object, args.limb, filter_enabled=not args.no_filter)
    log.info("wrote %s trial (%d frames) to %s", motion.name, trial.markers.n_frames, out)
    return 0


def cmd_sensitivity(args) -> int:
    out = _require_out(args)
    cfg = SensitivityConfig(
        sizes=tuple(args.sizes),
        samples=args.samples,
        seed=0 if args.seed is None else args.seed,
        placement=args.placement,
        metric=args.metric,
    )
    t0 = time.perf_counter()
    res = sensitivity_study(cfg)
    out.mkdir(parents=True, exist_ok=True)
    rows = [[k, i, *c] for k in cfg.sizes for i, c in enumerate(res.centroids[k])]
    write_table(out / "centroids.csv", ["cluster_size", "sample", "x", "y"], np.array(rows, dtype=float))
    summary = {
        "sizes": list(cfg.sizes),
        "samples": cfg.samples,
        "seed": cfg.seed,
        "placement": cfg.placement,
        "metric": cfg.metric,
        "disc_diameter_m": cfg.disc_diameter,
        "min_distance_m": cfg.min_distance,
        "mean_distance_mm": {str(k): res.mean_distance[k] * 1e3 for k in cfg.sizes},
        "mean_attempts": {str(k): res.attempts[k] for k in cfg.sizes},
        "overall_mean_mm": res.overall_mean * 1e3,
        "offset_m": offset_from_sensitivity(res),
        "version": __version__,
    }
    write_json(out / "summary.json", summary)
    log.info("overall mean centroid distance %.2f mm (%.1f s)", res.overall_mean * 1e3, time.perf_counter() - t0)
    return 0


def _load_torques(directory: Path, name: str):
    header, data = read_table(directory / name)
    return header[1:], data[:, 0], data[:, 1:]


def _write_report_csv(path: Path, rep):
    cols, rows = rep.as_table()
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def cmd_report(args) -> int:
    out = _require_out(args)
    ref_dir, est_dir = Path(args.reference), Path(args.estimate)
    out.mkdir(parents=True, exist_ok=True)
    names, t_ref, tau_ref = _load_torques(ref_dir, "tau_total.csv")
    names_est, t_est, tau_est = _load_torques(est_dir, "tau_total.csv")
    if names != names_est:
        raise DataError(f"joint columns differ: {names} vs {names_est}")
    if t_ref.shape != t_est.shape or np.max(np.abs(t_ref - t_est), initial=0.0) > 1e-6:
        raise DataError("reference and estimate torque tables are not aligned in time")
    tau_obj = tau_limb = None
    if (est_dir / "tau_obj.csv").is_file() and (est_dir / "tau_P.csv").is_file():
        tau_obj = _load_torques(est_dir, "tau_obj.csv")[2]
        tau_limb = _load_torques(est_dir, "tau_P.csv")[2]
    rep = torque_case_report(names, tau_ref, tau_est, tau_obj, tau_limb)
    _write_report_csv(out / "table_torques.csv", rep)
    write_table(out / "torque_l1_series.csv", ["time", *names], np.hstack([t_ref[:, None], l1_error_series(tau_ref, tau_est)]))

    vm_ref, vm_est = ref_dir / "virtual_markers.csv", est_dir / "virtual_markers.csv"
    if vm_ref.is_file() and vm_est.is_file():
        a = parse_marker_csv(vm_ref.read_text())
        b = parse_marker_csv(vm_est.read_text())
        common = [lab for lab in a.labels if lab in b.labels]
        if not common:
            raise DataError("no common virtual markers between reference and estimate")
        ref = {lab: a.marker(lab) for lab in common}
        est = {lab: b.marker(lab) for lab in common}
        _write_report_csv(out / "table_markers.csv", marker_report(ref, est))
        l2 = np.column_stack([l2_error_series(ref[lab], est[lab]) for lab in common])
        write_table(out / "marker_l2_series.csv", ["time", *common], np.hstack([a.times[:, None], l2]))
    log.info("report written to %s", out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="objaug", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, default=None, help="random seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("-v", "--verbose", action="count", default=0)

    # the same flags are accepted after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("augment", parents=[common], help="run the augmentation pipeline on a trial")
    p.add_argument("--trial", required=True, help="trial TOML file")
    p.add_argument("--object", default=None, help="builtin object name or TOML file (overrides the trial)")
    p.add_argument("--offset-mm", type=float, default=None, help="also run with virtual markers shifted along f")
    p.add_argument("--no-filter", action="store_true", help="skip the low pass filter")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("frames", parents=[common], help="dump per-frame hand frames of a trial")
    p.add_argument("--trial", required=True, help="trial TOML file")
    p.set_defaults(func=cmd_frames)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic trial with ground truth")
    p.add_argument("--motion", default="M1", help="M1, M2, M3, M4_slow, M4_fast or sequence")
    p.add_argument("--object", default="can")
    p.add_argument("--noise-mm", type=float, default=0.0, help="marker noise standard deviation")
    p.add_argument("--limb", default="default_4dof")
    p.add_argument("--grasp", default="default")
    p.add_argument("--palm-thickness", type=float, default=DEFAULT_PALM_THICKNESS, help="metres")
    p.add_argument("--duration", type=float, default=None, help="seconds per motion")
    p.add_argument("--rate", type=float, default=None, help="sample rate in Hz")
    p.add_argument("--no-filter", action="store_true", help="write the trial config with filtering off")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sensitivity", parents=[common], help="marker-placement sensitivity study")
    p.add_argument("--sizes", type=int, nargs="+", default=[3, 4, 5, 6])
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--placement", choices=["jitter", "shared_disc"], default="jitter")
    p.add_argument("--metric", choices=["pairwise", "nominal"], default="pairwise")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("report", parents=[common], help="compare two result directories")
    p.add_argument("--reference", required=True)
    p.add_argument("--estimate", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc!r}", file=sys.stderr)
        if args.verbose:
            raise
        return 1


if __name__ == "__main__":
    sys.exit(main())
