"""Synthetic trials with exact ground truth.

Joint motions are analytic (sinusoids, optionally chained with quintic
blends), markers are placed by forward kinematics, and the grasped object is
rigidly attached to the hand link, so pose, wrench and torques are known in
closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli_w

from .errors import ConfigError
from .geometry import matrix_to_quat_wxyz, rot_x
from .hand_frame import HandFrameSeries
from .limb_dynamics import (
    JointSeries,
    LimbModel,
    chain_motion,
    limb_inverse_dynamics,
    object_induced_torques,
    total_torques,
)
from .mocap_io import (
    MarkerSeries,
    check_keys,
    read_toml,
    resolve_config,
    uniform_times,
    write_json,
    write_marker_csv,
    write_table,
    write_trc,
)
from .object_dynamics import STANDARD_GRAVITY, WrenchSeries, inverse_dynamics_object
from .virtual_object import (
    KinematicState,
    ObjectModel,
    PoseSeries,
    object_pose_from_frames,
    place_virtual_marker_series,
)

DEFAULT_DURATION = 10.0
DEFAULT_RATE = 100.0
SLOW_HZ = 0.2
FAST_HZ = 1.0


@dataclass(frozen=True)
class JointWave:
    offset: float = 0.0
    amplitude: float = 0.0
    frequency: float = SLOW_HZ
    phase: float = 0.0


@dataclass(frozen=True)
class MotionPreset:
    """Per-joint ``offset + amplitude * sin(2 pi f t + phase)``; angles in radians."""

    name: str
    waves: dict
    duration: float = DEFAULT_DURATION
    sample_rate: float = DEFAULT_RATE

    def __post_init__(self):
        if not self.duration > 0 or not self.sample_rate > 0:
            raise ConfigError("duration and sample rate must be positive")

    def evaluate(self, times, joint_names):
        t = np.asarray(times, dtype=float)[:, None]
        waves = [self.waves.get(name, JointWave()) for name in joint_names]
        off = np.array([w.offset for w in waves])
        amp = np.array([w.amplitude for w in waves])
        om = 2 * np.pi * np.array([w.frequency for w in waves])
        ph = np.array([w.phase for w in waves])
        arg = om * t + ph
        q = off + amp * np.sin(arg)
        qd = amp * om * np.cos(arg)
        qdd = -amp * om**2 * np.sin(arg)
        return q, qd, qdd

    def times(self):
        return uniform_times(int(round(self.duration * self.sample_rate)), self.sample_rate)


def motion_presets(slow_hz: float = SLOW_HZ, fast_hz: float = FAST_HZ, duration: float = DEFAULT_DURATION,
                   sample_rate: float = DEFAULT_RATE) -> dict[str, MotionPreset]:
    d = math.radians
    specs = {
        "M1": {"EF": JointWave(d(90)), "WF": JointWave(0.0, d(20), slow_hz)},
        "M2": {"EF": JointWave(d(90)), "PS": JointWave(d(90)), "WD": JointWave(0.0, d(20), slow_hz)},
        "M3": {"PS": JointWave(0.0, d(45), slow_hz)},
        "M4_slow": {"EF": JointWave(0.0, d(18), slow_hz)},
        "M4_fast": {"EF": JointWave(d(18), d(14), fast_hz)},
    }
    return {name: MotionPreset(name, waves, duration, sample_rate) for name, waves in specs.items()}


def _quintic(p0, v0, a0, p1, v1, a1, T):
    c0, c1, c2 = p0, v0, 0.5 * a0
    A = np.array([[T**3, T**4, T**5], [3 * T**2, 4 * T**3, 5 * T**4], [6 * T, 12 * T**2, 20 * T**3]])
    rhs = np.stack([p1 - (c0 + c1 * T + c2 * T**2), v1 - (c1 + 2 * c2 * T), a1 - 2 * c2])
    c3, c4, c5 = np.linalg.solve(A, rhs)
    return np.stack([c0, c1, c2, c3, c4, c5])


@dataclass(frozen=True)
class MotionSequence:
    """Presets played back to back, joined by quintic blends matching q, qd, qdd."""

    name: str
    segments: tuple
    transition: float = 2.0
    sample_rate: float = DEFAULT_RATE

    @property
    def duration(self) -> float:
        return sum(s.duration for s in self.segments) + self.transition * (len(self.segments) - 1)

    def times(self):
        return uniform_times(int(round(self.duration * self.sample_rate)), self.sample_rate)

    def evaluate(self, times, joint_names):
        t = np.asarray(times, dtype=float)
        n = len(joint_names)
        q = np.zeros((t.size, n))
        qd = np.zeros_like(q)
        qdd = np.zeros_like(q)
        start = 0.0
        for k, seg in enumerate(self.segments):
            end = start + seg.duration
            last = k == len(self.segments) - 1
            mask = (t >= start) & ((t < end) | last)
            if mask.any():
                q[mask], qd[mask], qdd[mask] = seg.evaluate(t[mask] - start, joint_names)
            if last:
                break
            nxt = self.segments[k + 1]
            s_end = [x[0] for x in seg.evaluate([seg.duration], joint_names)]
            s_beg = [x[0] for x in nxt.evaluate([0.0], joint_names)]
            T = self.transition
            coef = _quintic(*s_end, *s_beg, T)
            mask = (t >= end) & (t < end + T)
            if mask.any():
                s = (t[mask] - end)[:, None]
                powers = np.stack([s**i for i in range(6)])
                q[mask] = np.einsum("ijk,ik->jk", powers, coef)
                qd[mask] = sum(i * coef[i] * s ** (i - 1) for i in range(1, 6))
                qdd[mask] = sum(i * (i - 1) * coef[i] * s ** (i - 2) for i in range(2, 6))
            start = end + T
        return q, qd, qdd


def motion_sequence(presets: dict | None = None, order=("M1", "M2", "M3", "M4_slow", "M4_fast"),
                    transition: float = 2.0) -> MotionSequence:
    """All presets in one trial, in the order they were performed."""
    presets = motion_presets() if presets is None else presets
    segs = tuple(presets[name] for name in order)
    return MotionSequence("sequence", segs, transition, segs[0].sample_rate)


def get_motion(name: str, **kwargs):
    if name == "sequence":
        return motion_sequence(motion_presets(**kwargs))
    presets = motion_presets(**kwargs)
    if name not in presets:
        raise ConfigError(f"unknown motion {name!r} (choose from {', '.join(list(presets) + ['sequence'])})")
    return presets[name]


# ---------------------------------------------------------------------------
# Grasp / marker layout


@dataclass(frozen=True)
class GraspConfig:
    """Marker layout on the simulated limb.

    Hand markers are given in the ``hand_link`` frame and must lie in a plane
    normal to that frame's x axis; the hand frame is then the hand link frame
    translated to the marker centroid. Wrist markers are (ulnar, radial) in
    the ``wrist_link`` frame.
    """

    name: str
    hand_link: str
    wrist_link: str
    deviation_joint: str
    hand_markers: dict
    wrist_markers: dict

    def __post_init__(self):
        if len(self.hand_markers) < 3:
            raise ConfigError("grasp needs at least 3 hand markers")
        if len(self.wrist_markers) != 2:
            raise ConfigError("grasp needs exactly 2 wrist markers (ulnar, radial)")
        H = self.hand_layout
        s = np.linalg.svd(H[:, 1:] - H[:, 1:].mean(axis=0), compute_uv=False)
        if s[-1] < 1e-9 * s[0]:
            raise ConfigError("hand markers are collinear")
        if np.ptp(H[:, 0]) > 1e-12:
            raise ConfigError("hand markers must share the same x coordinate in the hand link frame")

    @property
    def hand_layout(self) -> np.ndarray:
        return np.array(list(self.hand_markers.values()), dtype=float)

    @property
    def wrist_layout(self) -> np.ndarray:
        return np.array(list(self.wrist_markers.values()), dtype=float)

    @property
    def hand_labels(self) -> tuple[str, ...]:
        return tuple(self.hand_markers)

    @property
    def wrist_labels(self) -> tuple[str, ...]:
        return tuple(self.wrist_markers)


def grasp_from_dict(raw: dict, where: str = "grasp spec") -> GraspConfig:
    check_keys(raw, {"name", "hand_link", "wrist_link", "deviation_joint", "hand_markers", "wrist_markers"}, set(), where)

    def markers(rows, label):
        out = {}
        for row in rows:
            check_keys(row, {"name", "position"}, set(), f"{where} {label}")
            out[str(row["name"])] = np.asarray(row["position"], dtype=float)
        return out

    return GraspConfig(
        name=str(raw["name"]),
        hand_link=str(raw["hand_link"]),
        wrist_link=str(raw["wrist_link"]),
        deviation_joint=str(raw["deviation_joint"]),
        hand_markers=markers(raw["hand_markers"], "hand_markers"),
        wrist_markers=markers(raw["wrist_markers"], "wrist_markers"),
    )


def load_grasp(ref: str = "default", base=None) -> GraspConfig:
    path = resolve_config(ref, "grasps", base)
    return grasp_from_dict(read_toml(path), str(path))


# ---------------------------------------------------------------------------
# Trial generation


def add_marker_noise(series: MarkerSeries, sigma: float, seed) -> MarkerSeries:
    """i.i.d. zero-mean Gaussian noise (standard deviation ``sigma`` metres) per coordinate."""
    if sigma < 0:
        raise ConfigError("noise sigma must be non-negative")
    if sigma == 0:
        return series
    rng = np.random.default_rng(seed)
    return series.with_positions(series.positions + rng.normal(0.0, sigma, series.positions.shape))


@dataclass
class SyntheticTrial:
    markers: MarkerSeries
    joints: JointSeries
    alpha: np.ndarray
    hand_frames: HandFrameSeries
    virtual_markers: MarkerSeries
    pose: PoseSeries
    kinematics: KinematicState
    wrench: WrenchSeries
    tau_p: JointSeries
    tau_obj: JointSeries
    tau_total: JointSeries
    hand_labels: tuple
    wrist_labels: tuple
    meta: dict = field(default_factory=dict)


def generate_trial(
    limb: LimbModel,
    motion,
    obj: ObjectModel,
    grasp: GraspConfig,
    noise_sigma: float = 0.0,
    seed=0,
    gravity=STANDARD_GRAVITY,
) -> SyntheticTrial:
    g = np.asarray(gravity, dtype=float)
    names = limb.joint_names
    times = motion.times()
    rate = motion.sample_rate
    q, qd, qdd = motion.evaluate(times, names)
    joints = JointSeries(times, names, q, qd, qdd)

    h = limb.joint_index(grasp.hand_link)
    w = limb.joint_index(grasp.wrist_link)
    dev = limb.joint_index(grasp.deviation_joint)
    cm = chain_motion(limb, q, qd, qdd)
    R = cm.pose.rotations
    o = cm.pose.origins
    hand_world = o[:, h, None, :] + np.einsum("nij,kj->nki", R[:, h], grasp.hand_layout)
    wrist_world = o[:, w, None, :] + np.einsum("nij,kj->nki", R[:, w], grasp.wrist_layout)
    labels = grasp.hand_labels + grasp.wrist_labels
    clean = MarkerSeries(labels, times, np.concatenate([hand_world, wrist_world], axis=1), rate)
    markers = add_marker_noise(clean, noise_sigma, seed)

    # true hand frame: hand link axes at the marker centroid
    centroid_local = grasp.hand_layout.mean(axis=0)
    basis = R[:, h]
    frames = HandFrameSeries(
        times, o[:, h] + basis @ centroid_local, basis[:, :, 0].copy(), basis[:, :, 1].copy(), basis[:, :, 2].copy()
    )
    vm = place_virtual_marker_series(frames, obj, rate)
    R_obj, com = object_pose_from_frames(frames.origin, frames.basis, obj)
    pose = PoseSeries(times, R_obj, com, rate, np.zeros((times.size, len(obj.marker_names))), obj.marker_names)

    # CoM is fixed in the hand link: local offset = centroid + Rx(tilt) c_com
    com_local = centroid_local + rot_x(obj.tilt) @ obj.com_placement
    rc = np.einsum("nij,j->ni", basis, com_local)
    wl, wdl = cm.omega[:, h], cm.omega_dot[:, h]
    v = cm.origin_vel[:, h] + np.cross(wl, rc)
    a = cm.origin_acc[:, h] + np.cross(wdl, rc) + np.cross(wl, np.cross(wl, rc))
    kin = KinematicState(v, a, wl.copy(), wdl.copy())
    wrench = inverse_dynamics_object(pose, kin, obj, g)

    tau_p = JointSeries(times, names, tau=limb_inverse_dynamics(limb, q, qd, qdd, g))
    tau_obj = object_induced_torques(limb, joints, wrench)
    tau_total = total_torques(tau_p, tau_obj)
    meta = {
        "motion": motion.name,
        "object": obj.name,
        "limb": limb.name,
        "grasp": grasp.name,
        "deviation_joint": grasp.deviation_joint,
        "noise_sigma": float(noise_sigma),
        "seed": seed,
        "palm_thickness": obj.palm_thickness,
        "sample_rate": rate,
        "n_frames": int(times.size),
    }
    return SyntheticTrial(
        markers=markers,
        joints=joints,
        alpha=q[:, dev].copy(),
        hand_frames=frames,
        virtual_markers=vm,
        pose=pose,
        kinematics=kin,
        wrench=wrench,
        tau_p=tau_p,
        tau_obj=tau_obj,
        tau_total=tau_total,
        hand_labels=grasp.hand_labels,
        wrist_labels=grasp.wrist_labels,
        meta=meta,
    )


def _config_ref(ref: str) -> str:
    path = Path(ref)
    if path.suffix == ".toml" or path.exists():
        return str(path.resolve())
    return ref


def write_trial(trial: SyntheticTrial, out_dir, object_ref: str, limb_ref: str, filter_enabled: bool = True) -> Path:
    """Write a trial directory that ``augment`` can consume, plus ``truth/``.

    Layout: ``markers.trc``, ``joints.csv``, ``trial.toml`` and ground truth
    tables under ``truth/``.
    """
    out = Path(out_dir)
    truth = out / "truth"
    truth.mkdir(parents=True, exist_ok=True)
    (out / "markers.trc").write_text(write_trc(trial.markers, units="mm"))
    j = trial.joints
    names = list(j.names)
    t = j.times[:, None]
    cols = ["time"] + [f"{k}_{n}" for k in ("q", "qd", "qdd") for n in names]
    write_table(out / "joints.csv", cols, np.hstack([t, j.q, j.qd, j.qdd]))
    cfg = {
        "markers": "markers.trc",
        "joints": "joints.csv",
        "hand_markers": list(trial.hand_labels),
        "wrist_markers": list(trial.wrist_labels),
        "object": _config_ref(object_ref),
        "limb": _config_ref(limb_ref),
        "deviation_angle": f"q_{trial.meta.get('deviation_joint', 'WD')}",
        "palm_thickness": trial.meta["palm_thickness"],
        "filter": {"enabled": bool(filter_enabled), "cutoff_hz": 6.0, "order": 3},
    }
    (out / "trial.toml").write_text(tomli_w.dumps(cfg))

    pose = trial.pose
    write_table(
        truth / "pose.csv",
        ["time", "qw", "qx", "qy", "qz", "tx", "ty", "tz"],
        np.hstack([t, matrix_to_quat_wxyz(pose.rotations), pose.translations]),
    )
    k = trial.kinematics
    write_table(
        truth / "kinematics.csv",
        ["time", "vx", "vy", "vz", "ax", "ay", "az", "wx", "wy", "wz", "wdx", "wdy", "wdz"],
        np.hstack([t, k.v, k.a, k.omega, k.omega_dot]),
    )
    w = trial.wrench
    write_table(
        truth / "wrench.csv",
        ["time", "Fx", "Fy", "Fz", "Mx", "My", "Mz", "px", "py", "pz"],
        np.hstack([t, w.force, w.moment, w.point]),
    )
    for name, series in (("tau_P", trial.tau_p), ("tau_obj", trial.tau_obj), ("tau_total", trial.tau_total)):
        write_table(truth / f"{name}.csv", ["time", *names], np.hstack([t, series.tau]))
    (truth / "virtual_markers.csv").write_text(write_marker_csv(trial.virtual_markers))
    fr = trial.hand_frames
    write_table(
        truth / "hand_frames.csv",
        ["time", "ox", "oy", "oz", "nx", "ny", "nz", "px", "py", "pz", "fx", "fy", "fz"],
        np.hstack([t, fr.origin, fr.n, fr.p, fr.f]),
    )
    write_json(truth / "meta.json", trial.meta)
    return out
