"""Serial revolute-chain limb model.

Joint frames chain as ``F_i = F_{i-1} * T_i * Rot(axis_i, q_i)`` where ``T_i``
is the fixed parent-to-joint transform. Link ``i`` is rigidly attached to
``F_i``. Every evaluation broadcasts over leading frame dimensions of ``q``.

Torques split as ``tau = tau_P + tau_obj``: ``tau_P`` realises the limb's own
motion (inertia, Coriolis/centrifugal and gravity terms) and
``tau_obj = J(q)^T W_obj`` maps the hand-on-object wrench into the joints.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .geometry import rotation_about
from .mocap_io import check_keys, read_toml, resolve_config


@dataclass(frozen=True)
class Joint:
    name: str
    axis: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    mass: float
    com: np.ndarray
    inertia: np.ndarray


@dataclass(frozen=True)
class LimbModel:
    name: str
    joints: tuple[Joint, ...]
    ee_rotation: np.ndarray
    ee_translation: np.ndarray

    def __post_init__(self):
        if not self.joints:
            raise ConfigError(f"{self.name}: limb needs at least one joint")
        names = [j.name for j in self.joints]
        if len(set(names)) != len(names):
            raise ConfigError(f"{self.name}: duplicate joint names")
        for j in self.joints:
            if abs(np.linalg.norm(j.axis) - 1.0) > 1e-9:
                raise ConfigError(f"{self.name}: axis of joint {j.name} is not unit length")
            R = j.rotation
            if np.abs(R.T @ R - np.eye(3)).max() > 1e-9 or np.linalg.det(R) < 0:
                raise ConfigError(f"{self.name}: rotation of joint {j.name} is not a proper rotation")
            if not j.mass > 0:
                raise ConfigError(f"{self.name}: mass of link {j.name} must be positive")
            I = j.inertia
            if np.abs(I - I.T).max() > 1e-12 or np.linalg.eigvalsh(I).min() <= 0:
                raise ConfigError(f"{self.name}: inertia of link {j.name} must be symmetric positive definite")

    @property
    def n_dof(self) -> int:
        return len(self.joints)

    @property
    def joint_names(self) -> tuple[str, ...]:
        return tuple(j.name for j in self.joints)

    def joint_index(self, name: str) -> int:
        try:
            return self.joint_names.index(name)
        except ValueError:
            raise ConfigError(f"limb {self.name} has no joint {name!r}") from None


def _vec(raw, n, where):
    arr = np.asarray(raw, dtype=float)
    if arr.shape != (n,):
        raise ConfigError(f"{where}: expected {n} values")
    return arr


def _inertia(raw, where):
    vals = np.asarray(raw, dtype=float)
    if vals.shape == (3,):
        return np.diag(vals)
    if vals.shape == (6,):
        ixx, iyy, izz, ixy, ixz, iyz = vals
        return np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])
    if vals.shape == (3, 3):
        return vals
    raise ConfigError(f"{where}: inertia must be [ixx, iyy, izz], [ixx, iyy, izz, ixy, ixz, iyz] or 3x3")


_LIMB_REQUIRED = {"name", "joints", "end_effector"}
_JOINT_REQUIRED = {"name", "axis", "translation", "mass", "com", "inertia"}
_JOINT_OPTIONAL = {"rotation"}
_EE_OPTIONAL = {"translation", "rotation"}


def limb_model_from_dict(raw: dict, where: str = "limb spec") -> LimbModel:
    check_keys(raw, _LIMB_REQUIRED, set(), where)
    joints = []
    for k, jraw in enumerate(raw["joints"]):
        jw = f"{where} joint {k}"
        check_keys(jraw, _JOINT_REQUIRED, _JOINT_OPTIONAL, jw)
        axis = _vec(jraw["axis"], 3, f"{jw} axis")
        norm = np.linalg.norm(axis)
        if norm == 0:
            raise ConfigError(f"{jw}: zero axis")
        rot = np.asarray(jraw.get("rotation", np.eye(3)), dtype=float)
        if rot.shape != (3, 3):
            raise ConfigError(f"{jw}: rotation must be 3x3")
        joints.append(
            Joint(
                name=str(jraw["name"]),
                axis=axis / norm,
                rotation=rot,
                translation=_vec(jraw["translation"], 3, f"{jw} translation"),
                mass=float(jraw["mass"]),
                com=_vec(jraw["com"], 3, f"{jw} com"),
                inertia=_inertia(jraw["inertia"], jw),
            )
        )
    ee = raw["end_effector"]
    check_keys(ee, set(), _EE_OPTIONAL, f"{where} [end_effector]")
    ee_rot = np.asarray(ee.get("rotation", np.eye(3)), dtype=float)
    return LimbModel(
        name=str(raw["name"]),
        joints=tuple(joints),
        ee_rotation=ee_rot,
        ee_translation=_vec(ee.get("translation", [0.0, 0.0, 0.0]), 3, f"{where} end_effector translation"),
    )


def load_limb(ref: str, base: Path | None = None) -> LimbModel:
    path = resolve_config(ref, "limbs", base)
    return limb_model_from_dict(read_toml(path), str(path))


# ---------------------------------------------------------------------------
# Kinematics


@dataclass(frozen=True)
class ChainPose:
    """World poses of every joint frame plus the end effector.

    ``rotations`` (..., n, 3, 3), ``origins`` and ``axes`` (..., n, 3).
    """

    rotations: np.ndarray
    origins: np.ndarray
    axes: np.ndarray
    ee_rotation: np.ndarray
    ee_position: np.ndarray


def _check_q(model: LimbModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape[-1:] != (model.n_dof,):
        raise DataError(f"expected {model.n_dof} joint values, got shape {q.shape}")
    return q


def forward_kinematics(model: LimbModel, q) -> ChainPose:
    q = _check_q(model, q)
    lead = q.shape[:-1]
    R = np.broadcast_to(np.eye(3), lead + (3, 3))
    o = np.zeros(lead + (3,))
    rots, origins, axes = [], [], []
    for i, j in enumerate(model.joints):
        o = o + R @ j.translation
        Rfix = R @ j.rotation
        axes.append(Rfix @ j.axis)
        R = Rfix @ rotation_about(j.axis, q[..., i])
        rots.append(R)
        origins.append(o)
    ee_R = R @ model.ee_rotation
    ee_p = o + R @ model.ee_translation
    return ChainPose(np.stack(rots, -3), np.stack(origins, -2), np.stack(axes, -2), ee_R, ee_p)


def point_jacobian(model: LimbModel, q, attach_point, chain: ChainPose | None = None) -> np.ndarray:
    """6 x n Jacobian (linear rows first) of a point rigidly attached to the last link."""
    q = _check_q(model, q)
    if chain is None:
        chain = forward_kinematics(model, q)
    p = np.asarray(attach_point, dtype=float)
    lin = np.cross(chain.axes, p[..., None, :] - chain.origins)
    J = np.concatenate([lin, chain.axes], axis=-1)
    return np.swapaxes(J, -1, -2)


@dataclass(frozen=True)
class ChainMotion:
    """Per-link angular velocity/acceleration and joint-origin velocity/acceleration."""

    pose: ChainPose
    omega: np.ndarray
    omega_dot: np.ndarray
    origin_vel: np.ndarray
    origin_acc: np.ndarray


def chain_motion(model: LimbModel, q, qd, qdd, base_acc=None) -> ChainMotion:
    q, qd, qdd = (_check_q(model, x) for x in (q, qd, qdd))
    pose = forward_kinematics(model, q)
    lead = q.shape[:-1]
    w = np.zeros(lead + (3,))
    wd = np.zeros(lead + (3,))
    v = np.zeros(lead + (3,))
    a = np.zeros(lead + (3,)) if base_acc is None else np.broadcast_to(np.asarray(base_acc, float), lead + (3,)).copy()
    prev_o = np.zeros(lead + (3,))
    ws, wds, vs, as_ = [], [], [], []
    for i in range(model.n_dof):
        o = pose.origins[..., i, :]
        z = pose.axes[..., i, :]
        d = o - prev_o
        v = v + np.cross(w, d)
        a = a + np.cross(wd, d) + np.cross(w, np.cross(w, d))
        wd = wd + z * qdd[..., i : i + 1] + np.cross(w, z * qd[..., i : i + 1])
        w = w + z * qd[..., i : i + 1]
        ws.append(w)
        wds.append(wd)
        vs.append(v)
        as_.append(a)
        prev_o = o
    return ChainMotion(pose, np.stack(ws, -2), np.stack(wds, -2), np.stack(vs, -2), np.stack(as_, -2))


def link_point_kinematics(model: LimbModel, q, qd, qdd, local_point, link: int = -1):
    """Position, velocity and acceleration of a point fixed in ``link``."""
    m = chain_motion(model, q, qd, qdd)
    link = link % model.n_dof
    R = m.pose.rotations[..., link, :, :]
    r = R @ np.asarray(local_point, dtype=float)
    w = m.omega[..., link, :]
    wd = m.omega_dot[..., link, :]
    pos = m.pose.origins[..., link, :] + r
    vel = m.origin_vel[..., link, :] + np.cross(w, r)
    acc = m.origin_acc[..., link, :] + np.cross(wd, r) + np.cross(w, np.cross(w, r))
    return pos, vel, acc


def limb_inverse_dynamics(model: LimbModel, q, qd, qdd, gravity=(0.0, 0.0, -9.81), external_wrench=None) -> np.ndarray:
    """Recursive Newton-Euler joint torques.

    ``external_wrench`` is an optional ``(force, moment, point)`` exerted *by*
    the last link on its environment (e.g. the hand on a grasped object);
    without it the result is the limb-only term ``tau_P``.
    """
    g = np.asarray(gravity, dtype=float)
    m = chain_motion(model, q, qd, qdd, base_acc=-g)
    pose = m.pose
    n = model.n_dof
    lead = np.shape(q)[:-1]
    f_next = np.zeros(lead + (3,))
    n_next = np.zeros(lead + (3,))
    o_next = None
    tau = np.zeros(lead + (n,))
    for i in reversed(range(n)):
        j = model.joints[i]
        R = pose.rotations[..., i, :, :]
        o = pose.origins[..., i, :]
        w = m.omega[..., i, :]
        wd = m.omega_dot[..., i, :]
        rc = R @ j.com
        ac = m.origin_acc[..., i, :] + np.cross(wd, rc) + np.cross(w, np.cross(w, rc))
        Iw = R @ j.inertia @ np.swapaxes(R, -1, -2)
        Iwd = np.einsum("...ij,...j->...i", Iw, wd)
        Iw_w = np.einsum("...ij,...j->...i", Iw, w)
        f = j.mass * ac
        mom = Iwd + np.cross(w, Iw_w) + np.cross(rc, j.mass * ac)
        if i == n - 1:
            if external_wrench is not None:
                F, M, p = (np.asarray(x, dtype=float) for x in external_wrench)
                f = f + F
                mom = mom + M + np.cross(p - o, F)
        else:
            f = f + f_next
            mom = mom + n_next + np.cross(o_next - o, f_next)
        tau[..., i] = np.einsum("...i,...i->...", pose.axes[..., i, :], mom)
        f_next, n_next, o_next = f, mom, o
    return tau


def mass_matrix(model: LimbModel, q) -> np.ndarray:
    """Joint-space inertia matrix assembled from unit-acceleration RNEA calls."""
    q = _check_q(model, q)
    n = model.n_dof
    zero = np.zeros_like(q)
    cols = []
    for i in range(n):
        qdd = np.zeros_like(q)
        qdd[..., i] = 1.0
        cols.append(limb_inverse_dynamics(model, q, zero, qdd, gravity=np.zeros(3)))
    return np.stack(cols, axis=-1)


def kinetic_energy(model: LimbModel, q, qd) -> np.ndarray:
    """Sum of link kinetic energies, from link-CoM Jacobians."""
    q, qd = _check_q(model, q), _check_q(model, qd)
    pose = forward_kinematics(model, q)
    total = np.zeros(q.shape[:-1])
    for i, j in enumerate(model.joints):
        R = pose.rotations[..., i, :, :]
        c = pose.origins[..., i, :] + R @ j.com
        # only joints 0..i move link i
        z = pose.axes[..., : i + 1, :]
        lin = np.cross(z, c[..., None, :] - pose.origins[..., : i + 1, :])
        v = np.einsum("...ki,...k->...i", lin, qd[..., : i + 1])
        w = np.einsum("...ki,...k->...i", z, qd[..., : i + 1])
        Iw = R @ j.inertia @ np.swapaxes(R, -1, -2)
        total = total + 0.5 * j.mass * np.einsum("...i,...i->...", v, v)
        total = total + 0.5 * np.einsum("...i,...ij,...j->...", w, Iw, w)
    return total


def link_com_positions(model: LimbModel, q) -> np.ndarray:
    pose = forward_kinematics(model, q)
    coms = [pose.origins[..., i, :] + pose.rotations[..., i, :, :] @ j.com for i, j in enumerate(model.joints)]
    return np.stack(coms, -2)


# ---------------------------------------------------------------------------
# Joint series and torque composition


@dataclass(frozen=True)
class JointSeries:
    times: np.ndarray
    names: tuple[str, ...]
    q: np.ndarray | None = None
    qd: np.ndarray | None = None
    qdd: np.ndarray | None = None
    tau: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        n = np.asarray(self.times).size
        for label in ("q", "qd", "qdd", "tau"):
            arr = getattr(self, label)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=float)
            object.__setattr__(self, label, arr)
            if arr.shape != (n, len(self.names)):
                raise DataError(f"{label} has shape {arr.shape}, expected {(n, len(self.names))}")
            if not np.isfinite(arr).all():
                raise DataError(f"{label} contains non-finite values")


def _aligned(a: JointSeries, b: JointSeries):
    if a.names != b.names:
        raise DataError(f"joint names differ: {a.names} vs {b.names}")
    if a.times.shape != b.times.shape or np.max(np.abs(a.times - b.times), initial=0.0) > 1e-9:
        raise DataError("torque series are not aligned in time")
    if a.tau is None or b.tau is None:
        raise DataError("torque series lack torques")


def object_induced_torques(
    model: LimbModel, joints: JointSeries, wrench, attach_points=None, point_tol: float = 1e-6
) -> JointSeries:
    """``tau_obj = J(q, p)^T [F; M]`` per frame, with ``p`` the wrench application point."""
    if joints.q is None:
        raise DataError("joint angles required")
    if joints.names != model.joint_names:
        raise DataError(f"joint names {joints.names} do not match limb {model.joint_names}")
    n = joints.times.size
    if wrench.force.shape[0] != n:
        raise DataError(f"wrench series has {wrench.force.shape[0]} frames, joints have {n}")
    if np.max(np.abs(wrench.times - joints.times), initial=0.0) > 1e-9:
        raise DataError("wrench and joint series are not aligned in time")
    p = wrench.point if attach_points is None else np.asarray(attach_points, dtype=float)
    if np.max(np.linalg.norm(p - wrench.point, axis=-1), initial=0.0) > point_tol:
        raise DataError("wrench application point differs from the attach point")
    J = point_jacobian(model, joints.q, p)
    W = np.concatenate([wrench.force, wrench.moment], axis=-1)
    tau = np.einsum("nki,nk->ni", J, W)
    return JointSeries(joints.times, joints.names, tau=tau)


def total_torques(tau_p: JointSeries, tau_obj: JointSeries) -> JointSeries:
    _aligned(tau_p, tau_obj)
    return JointSeries(tau_p.times, tau_p.names, tau=tau_p.tau + tau_obj.tau)


def decompose_measured(tau_meas: JointSeries, tau_p_sim: JointSeries) -> JointSeries:
    """Object-induced torques as measured minus simulated limb-only torques."""
    _aligned(tau_meas, tau_p_sim)
    return JointSeries(tau_meas.times, tau_meas.names, tau=tau_meas.tau - tau_p_sim.tau)
