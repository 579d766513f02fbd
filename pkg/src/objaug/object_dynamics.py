"""Newton-Euler inverse dynamics of the free virtual object.

Wrenches are the force and moment the hand must apply *on the object* to
produce its prescribed motion, expressed in the world frame with the moment
taken about the stated application point (the object CoM unless transported).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .virtual_object import KinematicState, ObjectModel, PoseSeries

STANDARD_GRAVITY = np.array([0.0, 0.0, -9.81])


@dataclass(frozen=True)
class Wrench:
    force: np.ndarray
    moment: np.ndarray
    point: np.ndarray


@dataclass(frozen=True)
class WrenchSeries:
    times: np.ndarray
    force: np.ndarray
    moment: np.ndarray
    point: np.ndarray

    def __len__(self):
        return self.times.size

    def __getitem__(self, i) -> Wrench:
        return Wrench(self.force[i], self.moment[i], self.point[i])

    def as_array(self) -> np.ndarray:
        """(frames, 6) stacked [force, moment]."""
        return np.concatenate([self.force, self.moment], axis=1)


def world_inertia(rotations, model: ObjectModel) -> np.ndarray:
    R = np.asarray(rotations, dtype=float)
    return R @ model.inertia_tensor() @ np.swapaxes(R, -1, -2)


def inverse_dynamics_object(
    pose: PoseSeries, kin: KinematicState, model: ObjectModel, gravity=STANDARD_GRAVITY
) -> WrenchSeries:
    """``F = m (a - g)`` and ``M = I_w w_dot + w x (I_w w)`` about the CoM."""
    n = len(pose)
    for label in ("v", "a", "omega", "omega_dot"):
        if getattr(kin, label).shape != (n, 3):
            raise DataError(f"kinematic state {label} does not match the {n}-frame pose series")
    g = np.asarray(gravity, dtype=float)
    Iw = world_inertia(pose.rotations, model)
    force = model.mass * (kin.a - g)
    Iw_w = np.einsum("nij,nj->ni", Iw, kin.omega)
    moment = np.einsum("nij,nj->ni", Iw, kin.omega_dot) + np.cross(kin.omega, Iw_w)
    return WrenchSeries(pose.times.copy(), force, moment, pose.translations.copy())


def transform_wrench(w, new_point):
    """Same wrench with the moment re-expressed about ``new_point``.

    Works on a single :class:`Wrench` or a :class:`WrenchSeries`.
    """
    new_point = np.asarray(new_point, dtype=float)
    new_point = np.broadcast_to(new_point, np.shape(w.point))
    moment = w.moment + np.cross(w.point - new_point, w.force)
    if isinstance(w, WrenchSeries):
        return WrenchSeries(w.times, w.force, moment, new_point.copy())
    return Wrench(w.force, moment, new_point.copy())


def wrench_power(w, v, omega):
    """Power delivered by the wrench to a body moving with point velocity ``v`` and ``omega``.

    ``v`` is the velocity of the wrench application point.
    """
    return np.sum(w.force * v, axis=-1) + np.sum(w.moment * omega, axis=-1)


def object_energy(pose: PoseSeries, kin: KinematicState, model: ObjectModel, gravity=STANDARD_GRAVITY) -> np.ndarray:
    """Kinetic plus gravitational potential energy per frame (J)."""
    g = np.asarray(gravity, dtype=float)
    Iw = world_inertia(pose.rotations, model)
    ke = 0.5 * model.mass * np.sum(kin.v**2, axis=1) + 0.5 * np.einsum("ni,nij,nj->n", kin.omega, Iw, kin.omega)
    pe = -model.mass * pose.translations @ g
    return ke + pe
