"""End-to-end acceptance checks A1 to A6.

Each test records one line through ``conftest.record_acceptance``; the lines
are printed in the terminal summary.
"""
import json
import time

import numpy as np
import pytest

import test_analysis
import test_hand_frame
import test_limb_dynamics
import test_object_dynamics
import test_virtual_object
from conftest import record_acceptance
from objaug.analysis import pearson_r
from objaug.cli import main
from objaug.limb_dynamics import JointSeries, object_induced_torques
from objaug.mocap_io import read_table
from objaug.object_dynamics import WrenchSeries, inverse_dynamics_object
from objaug.virtual_object import KinematicState, PoseSeries

PRESETS = ("M1", "M2", "M3", "M4_slow", "M4_fast")
OBJECTS = ("can", "bottle", "drill")
SEEDS = (0, 1, 2, 3, 4)


def _table(path):
    return read_table(path)[1]


def _com(directory):
    # pose translation is the object CoM
    return _table(directory / "pose.csv")[:, 5:8]


def test_a1_noise_free_round_trip(tmp_path):
    worst = {"com_rms": 0.0, "com_max": 0.0, "tau_rms": 0.0, "runtime": 0.0}
    for motion in PRESETS:
        for obj in OBJECTS:
            trial = tmp_path / f"{motion}_{obj}"
            assert main(["synth", "--motion", motion, "--object", obj, "--no-filter", "--out", str(trial)]) == 0
            out = trial / "out"
            t0 = time.perf_counter()
            assert main(["augment", "--trial", str(trial / "trial.toml"), "--out", str(out)]) == 0
            worst["runtime"] = max(worst["runtime"], time.perf_counter() - t0)
            err = np.linalg.norm(_com(out) - _com(trial / "truth"), axis=1)
            worst["com_rms"] = max(worst["com_rms"], np.sqrt(np.mean(err**2)))
            worst["com_max"] = max(worst["com_max"], err.max())
            d = _table(out / "tau_total.csv")[:, 1:] - _table(trial / "truth" / "tau_total.csv")[:, 1:]
            worst["tau_rms"] = max(worst["tau_rms"], np.sqrt(np.mean(d**2, axis=0)).max())
    ok = worst["com_rms"] < 1e-6 and worst["com_max"] < 1e-5 and worst["tau_rms"] < 1e-6 and worst["runtime"] < 10
    record_acceptance(
        "A1",
        ok,
        f"15 trials; worst CoM rms {worst['com_rms']:.2e} m, max {worst['com_max']:.2e} m, "
        f"tau rms {worst['tau_rms']:.2e} Nm, augment {worst['runtime']:.2f} s",
    )
    assert ok, worst


@pytest.fixture(scope="module")
def noisy_runs(tmp_path_factory):
    """Sequence trials with 1 mm noise and 6 Hz filtering, 3 objects x 5 seeds."""
    root = tmp_path_factory.mktemp("a2")
    runs = []
    for obj in OBJECTS:
        for seed in SEEDS:
            trial = root / f"{obj}_{seed}"
            args = ["synth", "--motion", "sequence", "--object", obj, "--noise-mm", "1", "--seed", str(seed)]
            assert main(args + ["--out", str(trial)]) == 0
            assert main(["augment", "--trial", str(trial / "trial.toml"), "--out", str(trial / "out")]) == 0
            runs.append((obj, seed, trial))
    return runs


def test_a2_noisy_round_trip(noisy_runs):
    worst_rms, worst_pos_r, worst_tau_r, failures = 0.0, 1.0, 1.0, []
    for obj, seed, trial in noisy_runs:
        ref, est = _com(trial / "truth"), _com(trial / "out")
        rms = np.sqrt(np.mean(np.sum((est - ref) ** 2, axis=1)))
        pos_r = min(pearson_r(ref[:, k], est[:, k]) for k in range(3))
        tau_ref = _table(trial / "truth" / "tau_total.csv")[:, 1:]
        tau_est = _table(trial / "out" / "tau_total.csv")[:, 1:]
        tau_r = min(pearson_r(tau_ref[:, j], tau_est[:, j]) for j in range(tau_ref.shape[1]))
        worst_rms, worst_pos_r, worst_tau_r = max(worst_rms, rms), min(worst_pos_r, pos_r), min(worst_tau_r, tau_r)
        if not (rms < 2.5e-3 and pos_r > 0.99 and tau_r >= 0.93):
            failures.append((obj, seed, rms, pos_r, tau_r))
    record_acceptance(
        "A2",
        not failures,
        f"{len(noisy_runs)} trials; worst CoM rms {worst_rms * 1e3:.2f} mm, "
        f"min position r {worst_pos_r:.5f}, min torque r {worst_tau_r:.4f}",
    )
    assert not failures, failures


def test_a3_ik_residual_thresholds(noisy_runs):
    max_res = rms_res = 0.0
    ok = True
    for _, _, trial in noisy_runs:
        diag = _table(trial / "out" / "ik_diagnostics.csv")
        max_res, rms_res = max(max_res, diag[:, 1].max()), max(rms_res, diag[:, 2].max())
        ok &= bool(np.all(diag[:, 1] < 0.020) and np.all(diag[:, 2] < 0.010))
    record_acceptance("A3", ok, f"all frames; worst max residual {max_res * 1e3:.3f} mm, worst rms {rms_res * 1e3:.3f} mm")
    assert ok


def test_a4_sensitivity_reproduction(tmp_path):
    t0 = time.perf_counter()
    assert main(["sensitivity", "--out", str(tmp_path / "a")]) == 0
    runtime = time.perf_counter() - t0
    assert main(["sensitivity", "--out", str(tmp_path / "b")]) == 0
    deterministic = (tmp_path / "a" / "centroids.csv").read_bytes() == (tmp_path / "b" / "centroids.csv").read_bytes()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    means = [summary["mean_distance_mm"][str(k)] for k in (3, 4, 5, 6)]
    targets = [14.0, 12.4, 10.4, 9.3]
    monotone = all(a > b for a, b in zip(means, means[1:]))
    within = all(abs(m - t) <= 0.25 * t for m, t in zip(means, targets))
    overall = summary["overall_mean_mm"]
    ok = monotone and within and abs(overall - 11.5) <= 2.5 and deterministic and runtime < 60
    record_acceptance(
        "A4",
        ok,
        "means " + ", ".join(f"{m:.2f}" for m in means) + f" mm; overall {overall:.2f} mm; "
        f"deterministic {deterministic}; {runtime:.1f} s",
    )
    assert ok


def test_a5_property_suites(limb, grasp, objects):
    checks = {
        "hand frame, 1000 scenes": lambda: test_hand_frame.test_random_scenes_orthonormal_equivariant_signed(),
        "registration, 1000 transforms": lambda: test_virtual_object.test_registration_recovers_random_transforms(_rng()),
        "jacobian vs finite differences, 100 limbs": lambda: test_limb_dynamics.test_jacobian_matches_finite_differences(_rng()),
        "RNEA energy balance": lambda: [test_limb_dynamics.test_power_balance(limb, _rng(), w) for w in ("default", "random")],
        "object wrench energy": lambda: [
            test_object_dynamics.test_energy_consistency_analytic(limb, grasp, objects, o, "sequence") for o in OBJECTS
        ]
        + [test_object_dynamics.test_energy_consistency_differentiated(limb, grasp, objects, o) for o in ("can", "drill")],
        "virtual work identity": lambda: test_limb_dynamics.test_virtual_work_identity(_rng()),
        "filter DC gain": test_virtual_object.test_filter_dc_gain,
        "filter phase lag": test_virtual_object.test_filter_one_hz_attenuation_and_lag,
        "statistics vs brute force": test_analysis.test_statistics_match_brute_force,
    }
    failed = []
    for name, check in checks.items():
        try:
            check()
        except AssertionError as exc:
            failed.append(f"{name}: {exc}")
    record_acceptance("A5", not failed, f"{len(checks) - len(failed)}/{len(checks)} suites" + (f"; {failed}" if failed else ""))
    assert not failed, failed


def _rng():
    return np.random.default_rng(12345)


def test_a6_static_sanity(objects):
    can = objects["can"]
    n = 5
    R = np.repeat(np.eye(3)[None], n, axis=0)
    pose = PoseSeries(np.arange(n) / 100, R, np.tile([0.3, -0.1, 0.2], (n, 1)), 100.0)
    z = np.zeros((n, 3))
    w = inverse_dynamics_object(pose, KinematicState(z, z, z, z), can)
    force_err = np.abs(np.linalg.norm(w.force, axis=1) - 0.51 * 9.81).max()
    moment = np.abs(w.moment).max()

    lever = test_limb_dynamics.single_link()
    push = WrenchSeries(np.zeros(1), np.array([[0.0, 2.0, 0.0]]), np.zeros((1, 3)), np.array([[0.3, 0.0, 0.0]]))
    tau = object_induced_torques(lever, JointSeries(np.zeros(1), ("J",), q=np.zeros((1, 1))), push).tau[0, 0]
    lever_err = abs(tau - 0.6)

    ok = force_err < 1e-9 and moment == 0.0 and lever_err < 1e-12
    record_acceptance(
        "A6", ok, f"|F| - 0.51*9.81 = {force_err:.1e} N, max |M| = {moment:.1e} Nm, lever error {lever_err:.1e} Nm"
    )
    assert ok
