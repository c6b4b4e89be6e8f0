"""Unit tests for app.main wiring: argument parsing, verbs and exit codes."""

import numpy as np
import pandas as pd
import pytest

import app.main as main_module
from app.main import build_parser, load_config, main, parse_values
from app.services.experiment import DesignFailedError
from app.services.storage import read_frame, write_frame
from tests.helpers import TEST_NODES, TEST_R_MAX


@pytest.fixture
def grid_config(tmp_path):
    path = tmp_path / "experiment.toml"
    path.write_text(f"[grid]\nr_max = {TEST_R_MAX}\nnodes = {TEST_NODES}\n", encoding="utf-8")
    return path


def test_parse_values():
    values = parse_values("1, 2.5,,3e-2 ")
    assert values == [1, 2.5, 0.03]
    assert isinstance(values[0], int)
    assert parse_values("") == []


def test_parser_sweep_arguments():
    args = build_parser().parse_args(["sweep", "--axis", "initial.y0", "--values", "0.1,0.2", "--threads", "3"])
    assert args.verb == "sweep"
    assert args.axis == "initial.y0"
    assert args.threads == 3


@pytest.mark.parametrize("argv", [[], ["classify"], ["sweep"], ["teleport"]])
def test_parser_rejects_incomplete_commands(argv):
    with pytest.raises(SystemExit):
        build_parser().parse_args(argv)


def test_seed_flag_overrides_config(grid_config):
    args = build_parser().parse_args(["evolve", "--config", str(grid_config), "--seed", "9"])
    assert load_config(args).seed == 9


def test_default_seed_fills_missing_config_seed(grid_config, monkeypatch):
    """Without --seed or a config seed, DEFAULT_SEED applies."""
    monkeypatch.setattr(main_module.settings, "default_seed", 77)
    args = build_parser().parse_args(["evolve", "--config", str(grid_config)])
    assert load_config(args).seed == 77


def test_invalid_config_exits_2(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[grid]\nnodes = 4\n", encoding="utf-8")
    assert main(["spectrum", "--config", str(path), "--out", str(tmp_path / "out")]) == 2


def test_missing_config_exits_2(tmp_path):
    assert main(["spectrum", "--config", str(tmp_path / "absent.toml")]) == 2


def test_unknown_sweep_axis_exits_2(tmp_path):
    assert main(["sweep", "--axis", "run.bogus", "--values", "1", "--out", str(tmp_path)]) == 2


def test_design_failure_exits_3(monkeypatch, tmp_path):
    def fail(*args, **kwargs):
        raise DesignFailedError("no two-state window")

    monkeypatch.setattr(main_module, "design_potential", fail)
    assert main(["design-potential", "--out", str(tmp_path)]) == 3


def test_verify_inequalities_verb(tmp_path):
    assert main(["verify-inequalities", "--out", str(tmp_path)]) == 0
    _, frame = read_frame(tmp_path / "inequalities.csv")
    assert frame["name"].tolist() == ["cal-1", "cal-2", "cal-3", "cal-4"]
    assert frame["passed"].all()
    assert (tmp_path / "inequalities.txt").is_file()


def test_spectrum_verb(tmp_path, grid_config):
    assert main(["spectrum", "--config", str(grid_config), "--out", str(tmp_path)]) == 0
    _, eigenvalues = read_frame(tmp_path / "eigenvalues.csv")
    assert len(eigenvalues) == TEST_NODES
    assert eigenvalues["energy"].iloc[0] < eigenvalues["energy"].iloc[1] < 0
    _, bound = read_frame(tmp_path / "bound_states.csv")
    assert list(bound.columns) == ["r", "phi0", "phi1"]
    assert "resonant: true" in (tmp_path / "spectrum.txt").read_text(encoding="utf-8")


def test_classify_verb_reads_trajectory(tmp_path):
    """A trajectory file classifies with the alpha and gamma0 stored in its header."""
    t = np.linspace(0.0, 1000.0, 1001)
    frame = pd.DataFrame(
        {
            "t": t,
            "abs_x": np.minimum(1e-8 * np.exp(0.05 * t), 0.3),
            "abs_y": np.where(t <= 600.0, 0.3, 0.3 * np.exp(-(t - 600.0) / 20.0)),
            "psi_l2loc": np.ones_like(t),
            "xi_l2": np.zeros_like(t),
        }
    )
    trajectory = write_frame(tmp_path / "trajectory.csv", frame, {"alpha": 1.0, "gamma0": 0.05 / 0.3**4})
    out = tmp_path / "classified"
    assert main(["classify", "--input", str(trajectory), "--out", str(out)]) == 0
    report = (out / "report.txt").read_text(encoding="utf-8")
    assert "label: II_b" in report
    assert "passed: true" in report
    _, fits = read_frame(out / "fits.csv")
    assert "ground_growth" in fits["fit"].tolist()


def test_normal_form_verb(tmp_path):
    argv = ["normal-form", "--mu0", "0.01", "--nu0", "0.1", "--gamma0", "1.0", "--out", str(tmp_path)]
    assert main(argv) == 0
    _, frame = read_frame(tmp_path / "normal_form.csv")
    assert list(frame.columns) == ["t", "mu", "nu", "lower", "upper"]
    assert (frame["nu"] <= frame["upper"] * (1 + 1e-8)).all()
    assert "growth_ratio" in (tmp_path / "normal_form.txt").read_text(encoding="utf-8")


def test_normal_form_pinned(tmp_path):
    argv = ["normal-form", "--mu0", "0.01", "--nu0", "0.1", "--gamma0", "1.0", "--pin-mu", "--out", str(tmp_path)]
    assert main(argv) == 0
    _, frame = read_frame(tmp_path / "normal_form.csv")
    np.testing.assert_allclose(frame["mu"], 0.01, rtol=1e-10)
