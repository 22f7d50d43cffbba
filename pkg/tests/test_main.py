import json

import pandas as pd
import pytest

from joint_limit_control.main import EXIT_CONFIG, EXIT_OK, EXIT_VIOLATION, main


def _config(tmp_path, **overrides):
    raw = {
        "name": "short",
        "limits_deg": {"q_min": [-30.0, -100.0], "q_max": [85.0, 0.0]},
        "initial": {"q_deg": [10.0, -40.0]},
        "controller": {"law": "proposed", "kp": [20.0, 5.0], "kd": [2.0, 0.5]},
        "reference": {"kind": "constant", "q_deg": [30.0, -60.0]},
        "sim": {"dt": 0.001, "duration": 0.5},
        "compare_laws": ["classical", "proposed"],
    }
    raw.update(overrides)
    path = tmp_path / f"{raw['name']}.json"
    path.write_text(json.dumps(raw))
    return path


def test_run_writes_artifacts(tmp_path):
    out = tmp_path / "out"
    code = main(["run", str(_config(tmp_path)), "--out-dir", str(out)])
    assert code == EXIT_OK
    run_dir = out / "short"
    for name in ("short_proposed.csv", "short_proposed_report.txt", "short_proposed_summary.csv",
                 "short_proposed_joints.png", "short_proposed_force_lyapunov.png"):
        assert (run_dir / name).is_file(), name
    summary = pd.read_csv(run_dir / "short_proposed_summary.csv")
    assert not summary["violation"].iloc[0]


def test_run_reports_violation(tmp_path):
    # no control at all: the arm falls through the hip limit
    path = _config(tmp_path, name="falling", initial={"q_deg": [0.0, -50.0]}, sim={"dt": 0.001, "duration": 1.5})
    code = main(["run", str(path), "--law", "none", "--no-plots", "--out-dir", str(tmp_path / "out")])
    assert code == EXIT_VIOLATION


def test_run_infeasible_reference_exits_one(tmp_path):
    path = _config(tmp_path, name="outside", reference={"kind": "constant", "q_deg": [95.0, -60.0]})
    assert main(["run", str(path), "--no-plots", "--out-dir", str(tmp_path / "out")]) == EXIT_CONFIG


def test_run_bad_config_exits_one(tmp_path):
    path = _config(tmp_path, name="bad", sim={"dt": -1.0})
    assert main(["run", str(path), "--out-dir", str(tmp_path / "out")]) == EXIT_CONFIG


def test_run_missing_config_exits_one(tmp_path):
    assert main(["run", str(tmp_path / "nope.json")]) == EXIT_CONFIG


def test_compare_writes_table(tmp_path):
    out = tmp_path / "out"
    assert main(["compare", str(_config(tmp_path)), "--out-dir", str(out), "--no-plots"]) == EXIT_OK
    table = pd.read_csv(out / "short" / "short_comparison.csv")
    assert table["law"].tolist() == ["classical", "proposed"]
    assert (out / "short" / "short_classical.csv").is_file()


@pytest.mark.parametrize(
    "force,ratio_line",
    [
        ({"kind": "ramp", "magnitude_rate": 0.0, "cap": 50.0}, None),
        ({"kind": "ramp", "magnitude_rate": 10.0, "cap": 0.0, "settle_time": 0.2}, "proposed/classical: undefined"),
    ],
)
def test_compare_with_zero_magnitude_ramp(tmp_path, capsys, force, ratio_line):
    # both laws start 10 deg from the set-point, far from every limit
    path = _config(
        tmp_path,
        name="idle_ramp",
        initial={"q_deg": [20.0, -50.0]},
        compare_laws=["classical", "proposed"],
        force=force,
    )
    out = tmp_path / "out"
    assert main(["compare", str(path), "--out-dir", str(out), "--no-plots"]) == EXIT_OK
    printed = capsys.readouterr().out
    assert "broke at 0 N" not in printed
    if ratio_line is None:
        assert "Breaking-force ratio" not in printed
    else:
        assert ratio_line in printed
    table = pd.read_csv(out / "idle_ramp" / "idle_ramp_comparison.csv")
    assert not table["violation"].any()


def test_compare_with_baseline_broken_at_zero(tmp_path, capsys):
    # uncontrolled, the arm falls through the hip limit before the ramp starts
    path = _config(
        tmp_path,
        name="early_fall",
        initial={"q_deg": [0.0, -50.0]},
        reference={"kind": "constant", "q_deg": [0.0, -50.0]},
        sim={"dt": 0.001, "duration": 1.0},
        compare_laws=["none", "proposed"],
        force={"kind": "ramp", "magnitude_rate": 20.0, "start_time": 1.0, "cap": 10.0,
               "settle_time": 0.2, "tolerance": 1.0},
    )
    out = tmp_path / "out"
    assert main(["compare", str(path), "--out-dir", str(out), "--no-plots"]) == EXIT_OK
    printed = capsys.readouterr().out
    assert "none baseline broke at 0 N" in printed
    assert "Breaking-force ratio proposed/none: unbounded" in printed
    table = pd.read_csv(out / "early_fall" / "early_fall_comparison.csv")
    assert table["breaking_force"].tolist() == ["0.0 N", ">= 10.0 N"]


def test_compare_same_law_twice(tmp_path, capsys):
    path = _config(
        tmp_path,
        name="twice",
        initial={"q_deg": [30.0, -60.0]},
        sim={"dt": 0.001, "duration": 0.3},
        compare_laws=["classical", "classical"],
        force={"kind": "ramp", "magnitude_rate": 100.0, "start_time": 0.1, "cap": 50.0,
               "settle_time": 0.2, "tolerance": 4.0},
    )
    out = tmp_path / "out"
    assert main(["compare", str(path), "--out-dir", str(out), "--no-plots"]) == EXIT_OK
    assert "Breaking-force ratio classical/classical: 1.00" in capsys.readouterr().out
    table = pd.read_csv(out / "twice" / "twice_comparison.csv")
    assert table["law"].tolist() == ["classical", "classical#2"]
    first, second = table["breaking_force"].tolist()
    assert first == second
    assert not first.startswith(">=")


def test_plot_rerenders_saved_trace(tmp_path):
    out = tmp_path / "out"
    main(["run", str(_config(tmp_path)), "--no-plots", "--out-dir", str(out)])
    trace = out / "short" / "short_proposed.csv"
    assert main(["plot", str(trace), "--out-dir", str(tmp_path / "figs")]) == EXIT_OK
    assert (tmp_path / "figs" / "short_proposed_joints.png").is_file()


def test_plot_rejects_foreign_file(tmp_path):
    path = tmp_path / "plain.csv"
    path.write_text("a,b\n1,2\n")
    assert main(["plot", str(path)]) == EXIT_CONFIG


def test_small_batch(tmp_path):
    path = _config(
        tmp_path,
        name="tiny_batch",
        sim={"dt": 0.001, "duration": 0.3},
        batch={"count": 2},
    )
    out = tmp_path / "out"
    code = main(["run", str(path), "--out-dir", str(out), "--workers", "1"])
    # 0.3 s is too short to converge, so the batch fails its checks
    assert code == EXIT_VIOLATION
    batch = pd.read_csv(out / "tiny_batch" / "tiny_batch_batch.csv")
    assert len(batch) == 2


def test_selftest_command():
    assert main(["selftest", "--samples", "20"]) == EXIT_OK


def test_selftest_rejects_empty_sample_count():
    assert main(["selftest", "--samples", "0"]) == EXIT_CONFIG


def test_unknown_command():
    with pytest.raises(SystemExit):
        main(["launch"])
