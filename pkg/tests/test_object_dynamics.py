from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import cumulative_trapezoid

from objaug.errors import DataError
from objaug.geometry import random_rotations
from objaug.object_dynamics import (
    Wrench,
    inverse_dynamics_object,
    object_energy,
    transform_wrench,
    wrench_power,
)
from objaug.synth import generate_trial, get_motion
from objaug.virtual_object import KinematicState, PoseSeries, differentiate_pose

G = np.array([0.0, 0.0, -9.81])


def _still(n, R=None, p=None):
    R = np.repeat(np.eye(3)[None], n, 0) if R is None else R
    p = np.zeros((n, 3)) if p is None else p
    pose = PoseSeries(np.arange(n) / 100, R, p, 100.0)
    z = np.zeros((n, 3))
    return pose, KinematicState(z, z.copy(), z.copy(), z.copy())


def test_static_can_supports_weight(objects):
    pose, kin = _still(5)
    w = inverse_dynamics_object(pose, kin, objects["can"], G)
    np.testing.assert_allclose(w.force, np.tile([0, 0, 0.51 * 9.81], (5, 1)), atol=1e-12)
    assert np.abs(w.moment).max() == 0.0
    assert abs(np.linalg.norm(w.force[0]) - 5.0031) < 1e-12


def test_principal_spin_needs_no_moment(objects):
    drill = objects["drill"]
    n = 4
    pose, kin = _still(n)  # body axes aligned with world axes
    for axis in np.eye(3):
        kin2 = replace(kin, omega=np.tile(3.0 * axis, (n, 1)))
        w = inverse_dynamics_object(pose, kin2, drill, np.zeros(3))
        assert np.abs(w.force).max() == 0.0
        assert np.abs(w.moment).max() < 1e-15


def test_gyroscopic_term_brute_force(objects):
    drill = objects["drill"]
    n = 1
    pose, kin = _still(n)
    wx, wy = 2.0, -3.0
    kin = replace(kin, omega=np.array([[wx, wy, 0.0]]))
    w = inverse_dynamics_object(pose, kin, drill, np.zeros(3))
    Ixx, Iyy, Izz = drill.inertia
    # (wx, wy, 0) x (Ixx wx, Iyy wy, 0) = (0, 0, wx*Iyy*wy - wy*Ixx*wx)
    expected = np.array([0.0, 0.0, wx * wy * (Iyy - Ixx)])
    np.testing.assert_allclose(w.moment[0], expected, atol=1e-15)
    assert abs(expected[2]) > 1e-3


def test_transform_wrench_examples():
    w = Wrench(np.array([0, 0, 1.0]), np.zeros(3), np.zeros(3))
    np.testing.assert_array_equal(transform_wrench(w, [1, 0, 0]).moment, [0, 1, 0])
    same = transform_wrench(w, w.point)
    np.testing.assert_array_equal(same.moment, w.moment)


def test_transform_wrench_composes(rng):
    for _ in range(100):
        w = Wrench(rng.normal(size=3), rng.normal(size=3), rng.normal(size=3))
        b, c = rng.normal(size=3), rng.normal(size=3)
        two = transform_wrench(transform_wrench(w, b), c)
        one = transform_wrench(w, c)
        np.testing.assert_allclose(two.moment, one.moment, atol=1e-14)
        np.testing.assert_array_equal(two.force, w.force)


def test_power_static_and_free_fall(objects):
    pose, kin = _still(3)
    w = inverse_dynamics_object(pose, kin, objects["can"], G)
    assert np.all(wrench_power(w, kin.v, kin.omega) == 0)
    falling = replace(kin, v=np.tile([0.1, 0, -1.0], (3, 1)), a=np.tile(G, (3, 1)))
    w = inverse_dynamics_object(pose, falling, objects["can"], G)
    assert np.abs(w.force).max() == 0
    assert np.all(wrench_power(w, falling.v, falling.omega) == 0)


def _energy_mismatch(pose, kin, model):
    w = inverse_dynamics_object(pose, kin, model, G)
    P = wrench_power(w, kin.v, kin.omega)
    E = object_energy(pose, kin, model, G)
    work = cumulative_trapezoid(P, pose.times, initial=0.0)
    swing = np.max(np.abs(E - E[0]))
    return np.max(np.abs(work - (E - E[0]))) / swing


@pytest.mark.parametrize("name", ["can", "bottle", "drill"])
@pytest.mark.parametrize("motion", ["sequence", "M4_fast"])
def test_energy_consistency_analytic(limb, grasp, objects, name, motion):
    trial = generate_trial(limb, get_motion(motion, duration=4.0), objects[name], grasp)
    assert _energy_mismatch(trial.pose, trial.kinematics, objects[name]) < 0.005


@pytest.mark.parametrize("name", ["can", "drill"])
def test_energy_consistency_differentiated(limb, grasp, objects, name):
    trial = generate_trial(limb, get_motion("sequence", duration=4.0), objects[name], grasp)
    kin = differentiate_pose(trial.pose)
    assert _energy_mismatch(trial.pose, kin, objects[name]) < 0.005


def test_frame_covariance(rng, objects):
    drill = objects["drill"]
    n = 8
    R = random_rotations(rng, n)
    kin = KinematicState(*(rng.normal(size=(n, 3)) for _ in range(4)))
    pose = PoseSeries(np.arange(n) / 100, R, rng.normal(size=(n, 3)), 100.0)
    w = inverse_dynamics_object(pose, kin, drill, G)
    Q = random_rotations(rng, 1)[0]
    rot = lambda x: x @ Q.T  # noqa: E731
    pose2 = PoseSeries(pose.times, Q @ R, rot(pose.translations), 100.0)
    kin2 = KinematicState(rot(kin.v), rot(kin.a), rot(kin.omega), rot(kin.omega_dot))
    w2 = inverse_dynamics_object(pose2, kin2, drill, Q @ G)
    np.testing.assert_allclose(w2.force, rot(w.force), atol=1e-12)
    np.testing.assert_allclose(w2.moment, rot(w.moment), atol=1e-12)


def test_force_linear_in_mass(rng, objects):
    can = objects["can"]
    n = 5
    kin = KinematicState(*(rng.normal(size=(n, 3)) for _ in range(4)))
    pose = PoseSeries(np.arange(n) / 100, random_rotations(rng, n), np.zeros((n, 3)), 100.0)
    a = inverse_dynamics_object(pose, kin, can, G)
    b = inverse_dynamics_object(pose, kin, replace(can, mass=3 * can.mass), G)
    np.testing.assert_allclose(b.force, 3 * a.force, rtol=1e-14)
    np.testing.assert_array_equal(b.moment, a.moment)


def test_length_mismatch_rejected(objects):
    pose, kin = _still(4)
    short = KinematicState(*(np.zeros((3, 3)) for _ in range(4)))
    with pytest.raises(DataError):
        inverse_dynamics_object(pose, short, objects["can"], G)
