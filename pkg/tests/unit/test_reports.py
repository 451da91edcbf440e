import logging
import os

import numpy as np
import pytest

from src.errors import EmptyCurveError
from src.rate.fit import fit_rate_exponent
from src.rate.probes import q_integral_check, scaled_limit_probe
from src.reports.csv_exporter import CENSUS_COLUMNS, SPECTRUM_COLUMNS, CsvExporter
from src.reports.plots import emit_plots, plot_paths
from src.reports.report_builder import ReportBuilder
from src.reports.verification import InvariantSuite
from src.spectrum.curve import SpectrumCurve
from src.spectrum.point import SpectrumPoint
from src.systems.linear import FiniteLinearSystem, LuerothSystem
from src.tail.h3_probe import h3_ratio_probe
from src.tail.shells import shell_census
from src.utils.helper import Helper
from src.utils.logger import format_value, log_event, logger


def synthetic_curve(grid=None, failures=None):
    grid = np.geomspace(10.0, 1e4, 16) if grid is None else np.asarray(grid, dtype=float)
    points = [
        SpectrumPoint(alpha=a, q=a ** -2.0, b=1.0 - 1.0 / a, lyapunov=1.0, entropy=1.0 - 1.0 / a,
                      residual_p=0.0, residual_dp=0.0, newton_iters=4, truncation_N=1024, mean_tau=a, var_tau=a)
        for a in grid
    ]
    return SpectrumCurve(grid=grid, points=points, b_star=1.0, failures=failures or [], system_name="synthetic")


# ---------------------------
# Helper and logger
# ---------------------------
def test_fmt_round_trips_floats():
    assert Helper.fmt(0.1) == "0.10000000000000001"
    assert float(Helper.fmt(1 / 3)) == 1 / 3
    assert Helper.fmt(7) == "7"


def test_key_value_parsing():
    text = "# comment\nsystem = gauss\n\nr=2  # inline\nr=3\n"
    assert Helper.parse_key_value_lines(text) == {"system": "gauss", "r": "3"}
    with pytest.raises(ValueError):
        Helper.parse_key_value_lines("no equals sign")


def test_geometric_grid_hits_the_end_points():
    grid = Helper.geometric_grid(10.0, 1e4, 16)
    assert grid[0] == 10.0 and grid[-1] == 1e4
    with pytest.raises(ValueError):
        Helper.geometric_grid(0.0, 1.0, 4)


def test_chunked_sums_do_not_depend_on_workers():
    def partial(lo, hi):
        x = np.arange(lo, hi, dtype=float) + 1.0
        return np.array([np.sum(1.0 / x ** 2), np.sum(1.0 / x)])

    one = Helper.chunked_sums(partial, 0, 100000, 4096, workers=1)
    eight = Helper.chunked_sums(partial, 0, 100000, 4096, workers=8)
    assert one.tobytes() == eight.tobytes()
    assert Helper.chunked_sums(partial, 5, 5, 16) is None


def test_log_event_formats_fields(caplog):
    logger.propagate = True
    try:
        with caplog.at_level(logging.INFO, logger="thermoformal"):
            log_event("pressure", system="lueroth(r=2)", q=0.5, window=[1.0, 2.0])
    finally:
        logger.propagate = False
    assert "event=pressure system=lueroth(r=2) q=0.5 window=[1,2]" in caplog.text
    assert format_value("two words") == "two_words"


# ---------------------------
# CSV export
# ---------------------------
def test_spectrum_csv_with_failures(tmp_path):
    curve = synthetic_curve([10.0, 20.0], failures=[(40.0, "Newton diverged\nafter 60 iterations")])
    path = CsvExporter(str(tmp_path)).write(CsvExporter.spectrum_frame(curve), "spectrum.csv",
                                            CsvExporter.failure_lines(curve))
    lines = open(path).read().splitlines()
    assert lines[0] == ",".join(SPECTRUM_COLUMNS)
    assert lines[1].startswith("10,0.01,0.90000000000000002,")
    assert lines[3] == "# failures=1"
    assert lines[4] == "# failure alpha=40 diagnostic=Newton diverged after 60 iterations"


def test_census_csv_with_probe(tmp_path):
    system = LuerothSystem(2)
    stats = shell_census(system, 8)
    probe = h3_ratio_probe(system, 1e-3, 0.9, 8, b_star=1.0, raise_on_violation=False)
    frame = CsvExporter.census_frame(stats, probe)
    assert list(frame.columns) == CENSUS_COLUMNS
    assert frame["ratio"].notna().all()
    plain = CsvExporter.census_frame(stats)
    assert plain["ratio"].isna().all()
    path = CsvExporter(str(tmp_path / "nested")).write(frame, "tail.csv")
    assert os.path.exists(path)


def test_rate_frame_columns():
    curve = synthetic_curve()
    probes = scaled_limit_probe(curve, exponents=(0.0, 1.5))
    frame = CsvExporter.rate_frame(curve, probes)
    assert list(frame.columns) == ["alpha", "gap", "q", "product_x=0", "product_x=1.5"]
    # the first decade lies outside the probe window
    assert frame["product_x=0"].isna().sum() == 5


def test_write_to_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="cannot write"):
        CsvExporter(str(blocker)).write(CsvExporter.spectrum_frame(synthetic_curve([10.0])), "out.csv")


def test_identical_frames_give_identical_bytes(tmp_path):
    curve = synthetic_curve()
    first = CsvExporter(str(tmp_path)).write(CsvExporter.spectrum_frame(curve), "a.csv")
    second = CsvExporter(str(tmp_path)).write(CsvExporter.spectrum_frame(curve), "b.csv")
    assert open(first, "rb").read() == open(second, "rb").read()


# ---------------------------
# Text reports
# ---------------------------
def test_report_groups_by_module():
    records = [
        {"module": "pressure", "invariant": "convexity_in_b", "passed": True, "details": "ok"},
        {"module": "pressure", "invariant": "gradient_agreement", "passed": False, "details": "2.0e-04"},
        {"module": "rate", "invariant": "fit_coherence", "passed": True, "details": "gap 0.01"},
    ]
    report = ReportBuilder.build(records, "lueroth(r=2)")
    assert report.splitlines()[0] == "🧪 Invariant report — lueroth(r=2)"
    assert "📦 pressure" in report and "📦 rate" in report
    assert "   🔴 gradient_agreement — 2.0e-04" in report
    assert report.endswith("2 passed, 1 failed")


def test_empty_report():
    assert "No invariants" in ReportBuilder.build([], "gauss(r=2)")


def test_rate_summary_keys():
    curve = synthetic_curve()
    fit = fit_rate_exponent(curve, theoretical=1.0)
    probes = scaled_limit_probe(curve, exponents=(0.5,), threshold=1.0)
    summary = ReportBuilder.rate_summary(fit, probes, q_integral_check(curve))
    assert summary["probe_x0.5_observed"] == "decaying"
    assert summary["probe_x0.5_displayed_reading"] == "growing"
    assert "q_integral_band_lo" in summary
    text = ReportBuilder.build_summary(summary)
    assert "fitted_exponent=" in text and "coherent=True" in text


# ---------------------------
# Plots
# ---------------------------
def test_plots_are_written(tmp_path):
    curve = synthetic_curve()
    fit = fit_rate_exponent(curve, theoretical=1.0)
    spectrum_path, rate_path = emit_plots(curve, fit, str(tmp_path / "run.svg"))
    assert (spectrum_path, rate_path) == plot_paths(str(tmp_path / "run.svg"))
    assert open(spectrum_path).read().lstrip().startswith("<?xml")
    assert os.path.getsize(rate_path) > 0


def test_plots_without_fit(tmp_path):
    _, rate_path = emit_plots(synthetic_curve([10.0, 20.0, 40.0]), None, str(tmp_path / "run.svg"))
    assert "no rate fit" in open(rate_path).read()


def test_plot_of_empty_curve_writes_nothing(tmp_path):
    with pytest.raises(EmptyCurveError):
        emit_plots(synthetic_curve([]), None, str(tmp_path / "run.svg"))
    assert not list(tmp_path.iterdir())


def test_plots_are_reproducible(tmp_path):
    curve = synthetic_curve()
    first = emit_plots(curve, None, str(tmp_path / "a.svg"))
    second = emit_plots(curve, None, str(tmp_path / "b.svg"))
    assert open(first[0], "rb").read() == open(second[0], "rb").read()


# ---------------------------
# Invariant suite
# ---------------------------
def test_invariant_suite_on_two_branches():
    suite = InvariantSuite(FiniteLinearSystem([0.5, 0.5], [1, 2]), [2.0, 3.0])
    records = suite.run()
    failed = [r for r in records if not r["passed"]]
    assert not failed, failed
    modules = {r["module"] for r in records}
    assert modules == {"systems", "tail", "pressure", "spectrum", "rate"}
    assert any(r["details"].startswith("not applicable") for r in records if r["module"] == "rate")


@pytest.mark.slow
def test_invariant_suite_on_lueroth():
    suite = InvariantSuite(LuerothSystem(2), Helper.geometric_grid(10.0, 1e4, 16))
    records = suite.run()
    failed = [r for r in records if not r["passed"]]
    assert not failed, failed
