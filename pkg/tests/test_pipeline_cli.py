import json

import numpy as np
import pytest

from objaug.cli import main
from objaug.mocap_io import load_trial_config, parse_marker_csv, read_table
from objaug.pipeline import read_joint_table, run_augmentation


@pytest.fixture(scope="module")
def trial_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("trial")
    assert main(["synth", "--motion", "M2", "--object", "bottle", "--duration", "2", "--noise-mm", "0.5", "--seed", "3", "--out", str(out)]) == 0
    return out


def _snapshot(directory):
    return {p.relative_to(directory): p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}


def test_synth_is_deterministic(trial_dir, tmp_path):
    main(["synth", "--motion", "M2", "--object", "bottle", "--duration", "2", "--noise-mm", "0.5", "--seed", "3", "--out", str(tmp_path)])
    assert _snapshot(tmp_path) == _snapshot(trial_dir)
    other = tmp_path / "other"
    main(["synth", "--motion", "M2", "--object", "bottle", "--duration", "2", "--noise-mm", "0.5", "--seed", "4", "--out", str(other)])
    assert (other / "markers.trc").read_bytes() != (trial_dir / "markers.trc").read_bytes()


def test_augment_round_trip_against_truth(trial_dir, tmp_path):
    before = _snapshot(trial_dir)
    assert main(["augment", "--trial", str(trial_dir / "trial.toml"), "--out", str(tmp_path)]) == 0
    assert _snapshot(trial_dir) == before
    _, truth = read_table(trial_dir / "truth" / "pose.csv")
    _, est = read_table(tmp_path / "pose.csv")
    err = np.linalg.norm(est[:, 5:8] - truth[:, 5:8], axis=1)
    assert np.sqrt(np.mean(err**2)) < 2e-3
    _, diag = read_table(tmp_path / "ik_diagnostics.csv")
    assert diag[:, 1].max() < 0.02


def test_manifest_reproducible(trial_dir, tmp_path):
    args = ["augment", "--trial", str(trial_dir / "trial.toml"), "--seed", "1"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert set(ma["timings_s"]) == set(mb["timings_s"])
    ma.pop("timings_s"), mb.pop("timings_s")
    assert ma == mb
    assert ma["seed"] == 1 and ma["version"]
    assert "pose.csv" in ma["outputs"] and len(ma["inputs"]) == 3


def test_offset_outputs(trial_dir, tmp_path):
    assert main(["augment", "--trial", str(trial_dir / "trial.toml"), "--offset-mm", "11.5", "--out", str(tmp_path)]) == 0
    for name in ("pose.csv", "wrench.csv", "tau_obj.csv", "tau_total.csv", "virtual_markers.csv"):
        assert (tmp_path / "offset" / name).is_file()
    a = parse_marker_csv((tmp_path / "virtual_markers.csv").read_text())
    b = parse_marker_csv((tmp_path / "offset" / "virtual_markers.csv").read_text())
    np.testing.assert_allclose(np.linalg.norm(b.positions - a.positions, axis=-1), 0.0115, atol=1e-9)


def test_pipeline_offset_is_a_rigid_shift(trial_dir):
    cfg = load_trial_config(trial_dir / "trial.toml")
    res = run_augmentation(cfg, offset=0.0115, filter_enabled=False)
    shift = res.offset.pose.translations - res.base.pose.translations
    np.testing.assert_allclose(shift, 0.0115 * res.hand_frames.f, atol=1e-9)
    np.testing.assert_allclose(res.offset.pose.rotations, res.base.pose.rotations, atol=1e-9)


def test_report_identical_inputs(trial_dir, tmp_path):
    truth = trial_dir / "truth"
    assert main(["report", "--reference", str(truth), "--estimate", str(truth), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "table_torques.csv").read_text().splitlines()
    cols = lines[0].split(",")
    for line in lines[1:]:
        row = dict(zip(cols, line.split(",")))
        assert float(row["avg"]) == float(row["max"]) == float(row["rms"]) == 0.0
        assert float(row["r"]) == pytest.approx(1.0, abs=1e-12)
    assert (tmp_path / "torque_l1_series.csv").is_file()
    header, l2 = read_table(tmp_path / "marker_l2_series.csv")
    assert header[0] == "time" and np.all(l2[:, 1:] == 0)


def test_report_against_estimate(trial_dir, tmp_path):
    main(["augment", "--trial", str(trial_dir / "trial.toml"), "--out", str(tmp_path / "est")])
    assert main(["report", "--reference", str(trial_dir / "truth"), "--estimate", str(tmp_path / "est"), "--out", str(tmp_path / "rep")]) == 0
    text = (tmp_path / "rep" / "table_torques.csv").read_text()
    assert text.startswith("channel,avg,max,rms,r,p95,p50,p5")
    assert (tmp_path / "rep" / "table_markers.csv").is_file()


def test_frames_subcommand(trial_dir, tmp_path):
    assert main(["frames", "--trial", str(trial_dir / "trial.toml"), "--out", str(tmp_path)]) == 0
    header, data = read_table(tmp_path / "hand_frames.csv")
    assert header[:4] == ["time", "ox", "oy", "oz"]
    for a in (4, 7, 10):
        np.testing.assert_allclose(np.linalg.norm(data[:, a : a + 3], axis=1), 1.0, atol=1e-12)


def test_missing_object_exit_code(trial_dir, tmp_path, capsys):
    code = main(["augment", "--trial", str(trial_dir / "trial.toml"), "--object", str(tmp_path / "nope.toml"), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "nope.toml" in capsys.readouterr().err


def test_missing_marker_exit_code(trial_dir, tmp_path, capsys):
    bad = trial_dir / "bad.toml"
    bad.write_text((trial_dir / "trial.toml").read_text().replace('"MH5"', '"MH9"'))
    try:
        assert main(["augment", "--trial", str(bad), "--out", str(tmp_path)]) == 3
        assert "MH9" in capsys.readouterr().err
    finally:
        bad.unlink()


def test_unknown_motion_and_missing_out(tmp_path):
    assert main(["synth", "--motion", "M7", "--out", str(tmp_path)]) == 2
    assert main(["sensitivity", "--samples", "5"]) == 2


def test_global_flags_either_side(tmp_path):
    assert main(["--seed", "2", "--out", str(tmp_path / "a"), "sensitivity", "--samples", "20", "--sizes", "3"]) == 0
    assert main(["sensitivity", "--samples", "20", "--sizes", "3", "--seed", "2", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "centroids.csv").read_bytes() == (tmp_path / "b" / "centroids.csv").read_bytes()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["seed"] == 2 and summary["sizes"] == [3]


def test_joint_table_fills_rates(tmp_path):
    t = np.arange(200) / 100
    q = np.column_stack([np.sin(t), np.cos(t)])
    (tmp_path / "j.csv").write_text("time,q_A,q_B\n" + "\n".join(f"{a},{b},{c}" for a, b, c in zip(t, *q.T)))
    joints, cols = read_joint_table(tmp_path / "j.csv", ("A", "B"), 100.0)
    np.testing.assert_allclose(joints.qd[5:-5], np.column_stack([np.cos(t), -np.sin(t)])[5:-5], atol=1e-8)
    np.testing.assert_allclose(joints.qdd[5:-5], -q[5:-5], atol=1e-6)
    assert set(cols) == {"time", "q_A", "q_B"}
