"""The five-phase augmentation run: hand frames, virtual markers, object pose,
object wrench and object-induced joint torques."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DataError
from .geometry import matrix_to_quat_wxyz
from .hand_frame import HandFrameSeries, compute_hand_frame_series
from .limb_dynamics import (
    JointSeries,
    LimbModel,
    forward_kinematics,
    limb_inverse_dynamics,
    load_limb,
    object_induced_torques,
    total_torques,
)
from .mocap_io import (
    MarkerSeries,
    TrialConfig,
    read_markers,
    read_table,
    sha256_file,
    write_json,
    write_marker_csv,
    write_table,
)
from .numdiff import derivative
from .object_dynamics import WrenchSeries, inverse_dynamics_object
from .virtual_object import (
    KinematicState,
    ObjectModel,
    PoseSeries,
    apply_marker_offset,
    differentiate_pose,
    load_object,
    lowpass_filter,
    place_virtual_marker_series,
    solve_object_ik,
)

DIFF_ACCURACY = 4


def read_joint_table(path, names, sample_rate: float | None = None) -> tuple[JointSeries, dict]:
    """Joint angles (``q_<name>``) plus optional ``qd_``/``qdd_`` columns.

    Missing rate columns are filled by finite differences. Returns the series
    and every column by name (for the deviation angle lookup).
    """
    header, data = read_table(path)
    if not header or header[0] != "time":
        raise DataError(f"{Path(path).name}: first column must be 'time'")
    cols = {h: data[:, i] for i, h in enumerate(header)}
    times = cols["time"]
    if times.size < 3:
        raise DataError(f"{Path(path).name}: need at least 3 samples")
    dt = float(np.median(np.diff(times))) if sample_rate is None else 1.0 / sample_rate

    def block(prefix, required):
        keys = [f"{prefix}_{n}" for n in names]
        have = [k in cols for k in keys]
        if all(have):
            arr = np.column_stack([cols[k] for k in keys])
            if not np.isfinite(arr).all():
                raise DataError(f"{Path(path).name}: non-finite {prefix} values")
            return arr
        if required or any(have):
            missing = [k for k, h in zip(keys, have) if not h]
            raise DataError(f"{Path(path).name}: missing joint columns {', '.join(missing)}")
        return None

    q = block("q", True)
    qd = block("qd", False)
    qdd = block("qdd", False)
    if qd is None:
        qd = derivative(q, dt, 1, DIFF_ACCURACY)
    if qdd is None:
        qdd = derivative(q, dt, 2, DIFF_ACCURACY)
    return JointSeries(times, names, q, qd, qdd), cols


@dataclass
class CaseResult:
    """Phases 2 to 5 for one set of virtual markers."""

    virtual_markers: MarkerSeries
    ik_input: MarkerSeries
    pose: PoseSeries
    kinematics: KinematicState
    wrench: WrenchSeries
    tau_obj: JointSeries
    tau_total: JointSeries


@dataclass
class AugmentationResult:
    config: TrialConfig
    model: ObjectModel
    limb: LimbModel
    joints: JointSeries
    alpha: np.ndarray
    hand_frames: HandFrameSeries
    tau_p: JointSeries
    base: CaseResult
    offset: CaseResult | None = None
    offset_distance: float | None = None
    timings: dict = field(default_factory=dict)


def _check_alignment(markers: MarkerSeries, joints: JointSeries):
    if joints.times.shape != markers.times.shape:
        raise DataError(f"joint table has {joints.times.size} rows, marker file has {markers.n_frames} frames")
    gap = np.max(np.abs(joints.times - markers.times), initial=0.0)
    if gap > 1e-6:
        i = int(np.argmax(np.abs(joints.times - markers.times)))
        raise DataError(f"joint and marker times disagree at frame {i} by {gap:.3g} s")


def _run_case(vm, cfg, model, limb, joints, frames, tau_p, timings, tag=""):
    t0 = time.perf_counter()
    ik_input = vm
    if cfg.filter.enabled:
        ik_input = lowpass_filter(vm, cfg.filter.cutoff_hz, cfg.filter.order)
    pose = solve_object_ik(ik_input, model)
    timings[f"ik{tag}"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    kin = differentiate_pose(pose, DIFF_ACCURACY)
    wrench = inverse_dynamics_object(pose, kin, model, cfg.gravity)
    timings[f"object_dynamics{tag}"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    applied = wrench
    if cfg.torque_attach == "end_effector_untransported":
        ee = forward_kinematics(limb, joints.q).ee_position
        applied = WrenchSeries(wrench.times, wrench.force, wrench.moment, ee)
    tau_obj = object_induced_torques(limb, joints, applied)
    tau_total = total_torques(tau_p, tau_obj)
    timings[f"joint_torques{tag}"] = time.perf_counter() - t0
    return CaseResult(vm, ik_input, pose, kin, wrench, tau_obj, tau_total)


def run_augmentation(
    cfg: TrialConfig,
    object_ref: str | None = None,
    offset: float | None = None,
    filter_enabled: bool | None = None,
) -> AugmentationResult:
    """Run every phase on one trial; ``offset`` (m) adds the shifted-marker case."""
    if filter_enabled is not None:
        cfg.filter = type(cfg.filter)(filter_enabled, cfg.filter.cutoff_hz, cfg.filter.order)
    if offset is not None and offset < 0:
        raise ConfigError("offset must be non-negative")
    timings = {}
    t0 = time.perf_counter()
    model = load_object(object_ref or cfg.object_ref, cfg.base_dir, cfg.palm_thickness)
    limb = load_limb(cfg.limb_ref, cfg.base_dir)
    markers = read_markers(cfg.markers_path)
    joints, cols = read_joint_table(cfg.joints_path, limb.joint_names, markers.sample_rate)
    _check_alignment(markers, joints)
    if cfg.deviation_angle_column not in cols:
        raise DataError(f"joint table lacks the deviation angle column {cfg.deviation_angle_column!r}")
    alpha = cols[cfg.deviation_angle_column]
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    frames = compute_hand_frame_series(markers, cfg, alpha)
    timings["hand_frames"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    vm = place_virtual_marker_series(frames, model, markers.sample_rate, literal=cfg.placement == "literal")
    tau_p = JointSeries(joints.times, joints.names, tau=limb_inverse_dynamics(limb, joints.q, joints.qd, joints.qdd, cfg.gravity))
    timings["placement"] = time.perf_counter() - t0

    base = _run_case(vm, cfg, model, limb, joints, frames, tau_p, timings)
    result = AugmentationResult(cfg, model, limb, joints, alpha, frames, tau_p, base, timings=timings)
    if offset is not None:
        shifted = apply_marker_offset(vm, offset, frames.f)
        result.offset = _run_case(shifted, cfg, model, limb, joints, frames, tau_p, timings, "_offset")
        result.offset_distance = float(offset)
    return result


# ---------------------------------------------------------------------------
# Output


def write_case(out: Path, case: CaseResult, names) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    t = case.pose.times[:, None]
    paths = []

    def table(name, cols, data):
        p = out / name
        write_table(p, cols, data)
        paths.append(p)

    quat = matrix_to_quat_wxyz(case.pose.rotations)
    table("pose.csv", ["time", "qw", "qx", "qy", "qz", "tx", "ty", "tz"], np.hstack([t, quat, case.pose.translations]))
    table(
        "ik_diagnostics.csv",
        ["time", "max_residual", "rms_residual"],
        np.column_stack([case.pose.times, case.pose.max_residual, case.pose.rms_residual]),
    )
    p = out / "virtual_markers.csv"
    p.write_text(write_marker_csv(case.virtual_markers))
    paths.append(p)
    w = case.wrench
    table(
        "wrench.csv",
        ["time", "Fx", "Fy", "Fz", "Mx", "My", "Mz", "px", "py", "pz"],
        np.hstack([t, w.force, w.moment, w.point]),
    )
    cols = ["time", *names]
    table("tau_obj.csv", cols, np.hstack([t, case.tau_obj.tau]))
    table("tau_total.csv", cols, np.hstack([t, case.tau_total.tau]))
    return paths


def write_result(result: AugmentationResult, out_dir, seed=None, extra_inputs=()) -> dict:
    """Write every table plus ``manifest.json``; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    names = list(result.joints.names)
    paths = write_case(out, result.base, names)
    fr = result.hand_frames
    p = out / "hand_frames.csv"
    write_table(
        p,
        ["time", "ox", "oy", "oz", "nx", "ny", "nz", "px", "py", "pz", "fx", "fy", "fz"],
        np.hstack([fr.times[:, None], fr.origin, fr.n, fr.p, fr.f]),
    )
    paths.append(p)
    p = out / "tau_P.csv"
    write_table(p, ["time", *names], np.hstack([result.joints.times[:, None], result.tau_p.tau]))
    paths.append(p)
    if result.offset is not None:
        paths += write_case(out / "offset", result.offset, names)
    result.timings["write"] = time.perf_counter() - t0

    cfg = result.config
    inputs = {str(cfg.markers_path): sha256_file(cfg.markers_path), str(cfg.joints_path): sha256_file(cfg.joints_path)}
    for path in extra_inputs:
        inputs[str(path)] = sha256_file(path)
    snapshot = cfg.snapshot()
    snapshot["object"] = result.model.name
    snapshot["palm_thickness"] = result.model.palm_thickness
    snapshot["offset_m"] = result.offset_distance
    snapshot["diff_accuracy"] = DIFF_ACCURACY
    manifest = {
        "tool": "objaug",
        "version": __version__,
        "seed": seed,
        "inputs": inputs,
        "config": snapshot,
        "outputs": {str(q.relative_to(out)): sha256_file(q) for q in paths},
        "timings_s": {k: round(v, 6) for k, v in result.timings.items()},
    }
    write_json(out / "manifest.json", manifest)
    return manifest
