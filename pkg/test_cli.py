"""
Tests for the command line and the file formats it reads and writes.
"""

import json

import numpy as np
import pytest

from main import EXIT_DOMAIN, EXIT_INFEASIBLE, EXIT_IO, EXIT_OK, main
from quantum.systems import bell_basis, bell_kraus_ops, bell_target_state
from utils.kraus_files import (
    load_report,
    parse_kraus_file,
    read_trajectory_csv,
    save_kraus_file,
    save_matrix_file,
)

STAMP = "2024-01-01T00:00:00+00:00"


@pytest.fixture
def bell_files(tmp_path):
    kraus = save_kraus_file(tmp_path / "bell.kraus.json", bell_kraus_ops(), name="bell")
    basis = save_matrix_file(tmp_path / "bell.basis.json", "basis", bell_basis())
    return kraus, basis


@pytest.fixture
def bell_controls(tmp_path, bell_files):
    kraus, basis = bell_files
    out = tmp_path / "controls.json"
    code = main(["synthesize", str(kraus), "--dim-s", "1", "--basis", str(basis), "-o", str(out)])
    assert code == EXIT_OK
    return out


# ------------------------------------------------------------------
# validate
# ------------------------------------------------------------------
def test_validate_ok(bell_files, capsys):
    kraus, _ = bell_files
    assert main(["validate", str(kraus)]) == EXIT_OK
    assert "completeness residual" in capsys.readouterr().out


def test_validate_incomplete(tmp_path):
    path = save_kraus_file(tmp_path / "half.json", [np.eye(2) / 2])
    assert main(["validate", str(path)]) == EXIT_DOMAIN


def test_validate_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{ not json", encoding="utf-8")
    assert main(["validate", str(path)]) == EXIT_IO


def test_validate_missing_file(tmp_path):
    assert main(["validate", str(tmp_path / "nope.json")]) == EXIT_IO


def test_validate_wrong_shape(tmp_path):
    path = tmp_path / "shape.json"
    path.write_text(json.dumps({"dim": 2, "ops": [{"re": [[1, 0, 0]], "im": [[0, 0, 0]]}]}), encoding="utf-8")
    assert main(["validate", str(path)]) == EXIT_IO


@pytest.mark.parametrize("entry", ["NaN", "Infinity", "-Infinity"])
def test_validate_non_finite_entry(tmp_path, entry):
    path = tmp_path / "nan.json"
    path.write_text(
        '{"dim": 2, "ops": [{"re": [[1, 0], [0, ' + entry + ']], "im": [[0, 0], [0, 0]]}]}', encoding="utf-8"
    )
    assert main(["validate", str(path)]) == EXIT_IO


# ------------------------------------------------------------------
# analyze
# ------------------------------------------------------------------
def test_analyze_writes_report(tmp_path, bell_files):
    kraus, basis = bell_files
    out = tmp_path / "report.json"
    code = main(["analyze", str(kraus), "--dim-s", "1", "--basis", str(basis), "-o", str(out), "--timestamp", STAMP])
    assert code == EXIT_OK
    report = load_report(out)
    assert report["invariant"] is False
    assert report["gas"] is False
    assert report["dim_s"] == 1
    assert report["generated_at"] == STAMP
    assert report["input_digest"] == parse_kraus_file(kraus).digest()
    assert len(report["coupling_norms"]) == 3


def test_analyze_is_byte_reproducible(tmp_path, bell_files):
    kraus, basis = bell_files
    outputs = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        main(["analyze", str(kraus), "--dim-s", "1", "--basis", str(basis), "-o", str(out), "--timestamp", STAMP])
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]


def test_analyze_rejects_full_target(bell_files):
    kraus, _ = bell_files
    with pytest.raises(SystemExit) as info:
        main(["analyze", str(kraus), "--dim-s", "4"])
    assert info.value.code == 2


def test_analyze_bad_profile_env(bell_files, monkeypatch):
    kraus, _ = bell_files
    monkeypatch.setenv("DQDS_TOLERANCE_PROFILE", "sloppy")
    assert main(["analyze", str(kraus), "--dim-s", "1"]) == EXIT_IO


# ------------------------------------------------------------------
# synthesize
# ------------------------------------------------------------------
def test_synthesize_writes_controls(bell_controls):
    controls = parse_kraus_file(bell_controls)
    assert controls.dim == 4
    assert len(controls.ops) == 3
    assert controls.extra["iterations"] == 2
    assert controls.extra["subspace_chain"] == [[1, 3], [1, 2], [2, 0]]


def test_synthesize_infeasible(tmp_path):
    # a phase flip never moves population out of |1>
    path = save_kraus_file(tmp_path / "phase.json", [np.diag([1, -1]) / np.sqrt(2), np.eye(2) / np.sqrt(2)])
    out = tmp_path / "controls.json"
    assert main(["synthesize", str(path), "--dim-s", "1", "-o", str(out)]) == EXIT_INFEASIBLE
    assert not out.exists()


# ------------------------------------------------------------------
# simulate
# ------------------------------------------------------------------
def _simulate(tmp_path, bell_files, controls, name, *extra):
    kraus, basis = bell_files
    out = tmp_path / name
    args = [
        "simulate", str(kraus), "--controls", str(controls), "--basis", str(basis),
        "-o", str(out), *extra,
    ]
    assert main(args) == EXIT_OK
    return out


def test_simulate_averaged_converges(tmp_path, bell_files, bell_controls):
    out = _simulate(tmp_path, bell_files, bell_controls, "avg.csv", "--init", "maximally-mixed", "--steps", "200")
    columns = read_trajectory_csv(out)
    assert columns["t"][0] == 1
    assert len(columns["V"]) == 200
    assert columns["V"][-1] <= 1e-6


def test_simulate_from_target_stays(tmp_path, bell_files, bell_controls):
    rho = save_matrix_file(tmp_path / "target.json", "rho", bell_target_state().mat)
    out = _simulate(tmp_path, bell_files, bell_controls, "target.csv", "--init", str(rho), "--steps", "20")
    assert max(read_trajectory_csv(out)["V"]) <= 1e-12


def test_simulate_stochastic_is_deterministic(tmp_path, bell_files, bell_controls):
    args = ("--init", "basis:1", "--steps", "50", "--mode", "stochastic", "--seed", "7")
    first = _simulate(tmp_path, bell_files, bell_controls, "s1.csv", *args)
    second = _simulate(tmp_path, bell_files, bell_controls, "s2.csv", *args)
    assert first.read_bytes() == second.read_bytes()
    assert "outcome" in read_trajectory_csv(first)


def test_simulate_ensemble(tmp_path, bell_files, bell_controls):
    out = _simulate(
        tmp_path, bell_files, bell_controls, "ens.csv",
        "--init", "maximally-mixed", "--steps", "100", "--mode", "stochastic",
        "--seed", "11", "--trajectories", "8",
    )
    columns = read_trajectory_csv(out)
    assert "outcome" not in columns
    assert columns["V"][-1] <= 1e-6


def test_simulate_unknown_state(tmp_path, bell_files, bell_controls):
    kraus, _ = bell_files
    code = main(["simulate", str(kraus), "--init", "tepid", "--steps", "5", "-o", str(tmp_path / "x.csv")])
    assert code == EXIT_DOMAIN


# ------------------------------------------------------------------
# demo
# ------------------------------------------------------------------
def test_demo_bundle(tmp_path):
    out_dir = tmp_path / "bundle"
    assert main(["demo", "bell", "--out-dir", str(out_dir), "--timestamp", STAMP]) == EXIT_OK
    for name in (
        "bell.kraus.json",
        "bell.basis.json",
        "open_loop.report.json",
        "controls.json",
        "closed_loop.kraus.json",
        "closed_loop.report.json",
        "trajectory.csv",
    ):
        assert (out_dir / name).is_file()
    assert load_report(out_dir / "closed_loop.report.json")["gas"] is True
