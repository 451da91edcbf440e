import math

import pandas as pd
import pytest

from src.config import Config
from src.errors import SolverError
from src.main import HANDLERS, RunConfig, main, run_command, run_config_from_args
from src.reports.csv_exporter import SPECTRUM_COLUMNS

TWO_BRANCH = ["--system", "finite_linear", "--param", "lengths=0.5,0.5", "--param", "taus=1,2"]


@pytest.fixture(autouse=True)
def restore_config(monkeypatch):
    # run_command pushes workers and the truncation cap into Config
    monkeypatch.setattr(Config, "WORKERS", Config.WORKERS)
    monkeypatch.setattr(Config, "TRUNCATION_CAP", Config.TRUNCATION_CAP)


def summary_of(text: str) -> dict:
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


# ---------------------------
# Configuration
# ---------------------------
def test_flags_override_config_file(tmp_path):
    config = tmp_path / "run.cfg"
    config.write_text("system=lueroth\nr=3\nalpha=20:2000:8\ntol=1e-8\n")
    run = run_config_from_args(["spectrum", "--config", str(config), "--tol", "1e-10"])
    assert run.system == "lueroth"
    assert run.params == {"r": "3"}
    assert (run.alpha_lo, run.alpha_hi, run.alpha_count) == (20.0, 2000.0, 8)
    assert run.tolerance == 1e-10


@pytest.mark.parametrize(
    "argv",
    [
        ["pressure", "--system", "tent"],
        ["pressure"],
        ["pressure", "--system", "lueroth", "--tol", "-1"],
        ["pressure", "--system", "lueroth", "--param", "r=1.5"],
        ["spectrum", "--system", "lueroth", "--param", "r=2", "--alpha", "1:100:8"],
        ["spectrum", "--system", "lueroth", "--param", "r=2", "--alpha", "10:100"],
        ["pressure", "--system", "lueroth", "--config", "/nonexistent/run.cfg"],
    ],
    ids=["unknown_system", "missing_system", "bad_tolerance", "bad_parameter", "alpha_at_minimum",
         "short_alpha", "missing_config_file"],
)
def test_configuration_errors_exit_with_two(argv):
    assert main(argv) == 2


def test_solver_failure_exits_with_one(monkeypatch):
    def failing(system, run):
        raise SolverError("root of p on [0.0, 64.0]: f(a) and f(b) must have different signs")

    monkeypatch.setitem(HANDLERS, "dimension", failing)
    assert main(["dimension", "--system", "lueroth", "--param", "r=2"]) == 1


def test_unknown_command_is_rejected_by_the_parser():
    with pytest.raises(SystemExit) as info:
        main(["integrate", "--system", "lueroth"])
    assert info.value.code == 2


# ---------------------------
# Commands
# ---------------------------
def test_pressure_command(tmp_path, capsys):
    out = tmp_path / "pressure.csv"
    status = main(["pressure", "--system", "lueroth", "--param", "r=2", "--q", "0", "--b", "1", "--out", str(out)])
    assert status == 0
    summary = summary_of(capsys.readouterr().out)
    assert float(summary["lower"]) <= 0.0 <= float(summary["upper"])
    assert summary["method"] == "locally_constant"
    frame = pd.read_csv(out)
    assert list(frame.columns)[:5] == ["system", "q", "b", "lower", "upper"]


def test_dimension_command(capsys):
    status = main(["dimension", "--system", "finite_linear", "--param", "lengths=0.5,0.25"])
    assert status == 0
    summary = summary_of(capsys.readouterr().out)
    assert abs(float(summary["b_star"]) - math.log2((1 + math.sqrt(5)) / 2)) < 1e-10


def test_spectrum_command(tmp_path, capsys):
    out = tmp_path / "spectrum.csv"
    plot = tmp_path / "spectrum.svg"
    status = main(["spectrum", *TWO_BRANCH, "--alpha", "1.1:1.4:4:linear", "--out", str(out), "--plot", str(plot)])
    assert status == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(SPECTRUM_COLUMNS)
    assert lines[-1] == "# failures=0"
    frame = pd.read_csv(out, comment="#")
    assert len(frame) == 4
    assert frame["b"].is_monotonic_increasing
    assert (tmp_path / "spectrum_spectrum.svg").exists()
    assert (tmp_path / "spectrum_rate.svg").exists()
    assert summary_of(capsys.readouterr().out)["failures"] == "0"


def test_spectrum_failures_give_status_one(tmp_path):
    out = tmp_path / "spectrum.csv"
    # the grid ends on alpha_max = 1.5, where no point exists
    status = main(["spectrum", *TWO_BRANCH, "--alpha", "1.1:1.5:5:linear", "--out", str(out)])
    assert status == 1
    text = out.read_text()
    assert "# failures=1" in text
    assert "# failure alpha=1.5 diagnostic=" in text


def test_rate_without_enough_points_keeps_partial_output(tmp_path):
    out = tmp_path / "rate.csv"
    status = main(["rate", *TWO_BRANCH, "--alpha", "1.1:1.4:4:linear", "--out", str(out)])
    assert status == 1
    frame = pd.read_csv(out, comment="#")
    assert list(frame.columns)[:3] == ["alpha", "gap", "q"]
    assert len(frame) == 4


def test_tail_command(tmp_path, capsys):
    out = tmp_path / "tail.csv"
    status = main(["tail", "--system", "lueroth", "--param", "r=2", "--shells", "32", "--n-max", "4096",
                   "--q", "0.001", "--b", "0.9", "--out", str(out)])
    assert status == 0
    text = out.read_text()
    assert text.splitlines()[0] == "shell_n,omega_lo,omega_hi,count,measure,ratio,lower_bound,upper_bound"
    assert "# beta_hat=" in text
    frame = pd.read_csv(out, comment="#")
    assert len(frame) == 32
    summary = summary_of(capsys.readouterr().out)
    assert abs(float(summary["beta_hat"]) - 0.5) < 0.05
    assert float(summary["h1_growth_C_eps0.1"]) == pytest.approx(math.exp(-0.1))


def test_verify_command_on_two_branches(tmp_path, capsys):
    out = tmp_path / "verify.csv"
    status = run_command(RunConfig(command="verify", system="finite_linear",
                                   params={"lengths": "0.5,0.5", "taus": "1,2"}, output_path=str(out)))
    assert status == 0
    assert "🧪 Invariant report" in capsys.readouterr().out
    frame = pd.read_csv(out)
    assert frame["passed"].all()


@pytest.mark.slow
def test_worker_count_does_not_change_bytes(tmp_path):
    outputs = []
    for workers in (1, 8):
        out = tmp_path / f"spectrum_{workers}.csv"
        status = main(["spectrum", "--system", "lueroth", "--param", "r=2", "--alpha", "10:100:4",
                       "--workers", str(workers), "--out", str(out)])
        assert status == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]


@pytest.mark.slow
def test_rate_command_on_lueroth(tmp_path, capsys):
    out = tmp_path / "rate.csv"
    status = main(["rate", "--system", "lueroth", "--param", "r=2", "--alpha", "10:1e4:16", "--out", str(out)])
    assert status == 0
    summary = summary_of(capsys.readouterr().out)
    assert abs(float(summary["fitted_exponent"]) - 1.0) < 0.15
    assert summary["probe_x0_observed"] == "decaying"
    assert summary["probe_x1.5_observed"] == "growing"


@pytest.mark.slow
def test_verify_command_on_lueroth():
    assert main(["verify", "--system", "lueroth", "--param", "r=2"]) == 0
