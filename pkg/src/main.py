import argparse
import os
import sys
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np
import pandas as pd

from src.config import Config
from src.errors import ConfigError, ParameterRangeError, SandwichViolationError, ThermoformalError
from src.pressure.dimension import bowen_dimension
from src.pressure.engine import pressure
from src.pressure.potential import Potential
from src.rate.fit import fit_rate_exponent
from src.rate.probes import q_integral_check, scaled_limit_probe
from src.reports.csv_exporter import CsvExporter
from src.reports.plots import emit_plots
from src.reports.report_builder import ReportBuilder
from src.reports.verification import InvariantSuite
from src.spectrum.curve import solve_curve
from src.spectrum.point import alpha_min
from src.systems.builtins import BUILTIN_SYSTEMS, build_system
from src.systems.branches import FullBranchMap
from src.tail.exponent import estimate_tail_exponent
from src.tail.h3_probe import h3_ratio_probe
from src.tail.shells import shell_census
from src.utils.helper import Helper
from src.utils.logger import log_event, logger

COMMANDS = ("pressure", "dimension", "tail", "spectrum", "rate", "verify")


# =====================================================================================
# RUN CONFIGURATION
# =====================================================================================

@dataclass
class RunConfig:
    """
    One CLI run. Built from Config defaults, then an optional key=value
    file, then flags (later sources win).
    """
    command: str
    system: str
    params: dict = field(default_factory=dict)
    alpha_lo: float = 10.0
    alpha_hi: float = 1e4
    alpha_count: int = 16
    spacing: str = "geometric"
    tolerance: float = Config.TOLERANCE
    truncation: Optional[int] = None
    truncation_cap: int = Config.TRUNCATION_CAP
    depth: Optional[int] = None
    output_path: Optional[str] = None
    plot_path: Optional[str] = None
    workers: int = Config.WORKERS
    q: Optional[float] = None
    b: Optional[float] = None
    n_shells: int = 256
    n_max: int = 2 ** 16
    exponents: tuple = (0.0, 0.5, 1.5)

    def alpha_grid(self) -> np.ndarray:
        if self.spacing == "linear":
            return np.linspace(self.alpha_lo, self.alpha_hi, self.alpha_count)
        return Helper.geometric_grid(self.alpha_lo, self.alpha_hi, self.alpha_count)

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError("command", f"one of {', '.join(COMMANDS)}, got {self.command!r}")
        if self.system not in BUILTIN_SYSTEMS:
            raise ConfigError("system", f"one of {', '.join(sorted(BUILTIN_SYSTEMS))}, got {self.system!r}")
        if not self.tolerance > 0:
            raise ConfigError("tol", f"must be > 0, got {self.tolerance!r}")
        if self.alpha_count < 2:
            raise ConfigError("alpha", f"count must be >= 2, got {self.alpha_count}")
        if not 0 < self.alpha_lo < self.alpha_hi:
            raise ConfigError("alpha", f"need 0 < lo < hi, got {self.alpha_lo!r}:{self.alpha_hi!r}")
        if self.spacing not in ("geometric", "linear"):
            raise ConfigError("alpha", f"spacing geometric or linear, got {self.spacing!r}")
        if self.workers < 1:
            raise ConfigError("workers", f"must be >= 1, got {self.workers}")
        if self.truncation is not None and self.truncation < 1:
            raise ConfigError("truncation", f"must be >= 1, got {self.truncation}")
        if self.depth is not None and self.depth < 1:
            raise ConfigError("depth", f"must be >= 1, got {self.depth}")

    def output_for(self, system: FullBranchMap) -> str:
        return self.output_path or os.path.join(Config.OUTPUT_DIR, f"{self.command}_{system.name}.csv")


def _parse_alpha(text: str) -> dict:
    """'10:1e5:24' or '10:1e5:24:linear'"""
    parts = text.split(":")
    if len(parts) not in (3, 4):
        raise ConfigError("alpha", f"expected lo:hi:count[:spacing], got {text!r}")
    try:
        values = {"alpha_lo": float(parts[0]), "alpha_hi": float(parts[1]), "alpha_count": int(parts[2])}
    except ValueError:
        raise ConfigError("alpha", f"expected numbers in lo:hi:count, got {text!r}")
    if len(parts) == 4:
        values["spacing"] = parts[3]
    return values


# option name -> (RunConfig field, converter)
OPTIONS = {
    "system": ("system", str),
    "tol": ("tolerance", float),
    "truncation": ("truncation", lambda v: int(float(v))),
    "truncation_cap": ("truncation_cap", lambda v: int(float(v))),
    "depth": ("depth", int),
    "out": ("output_path", str),
    "plot": ("plot_path", str),
    "workers": ("workers", int),
    "q": ("q", float),
    "b": ("b", float),
    "shells": ("n_shells", int),
    "n_max": ("n_max", lambda v: int(float(v))),
    "exponents": ("exponents", lambda v: tuple(float(x) for x in str(v).split(",") if x.strip())),
    "spacing": ("spacing", str),
}


def _convert(values: dict) -> tuple:
    """Splits raw option values into typed RunConfig fields and system parameters."""
    settings, params = {}, {}
    for key, raw in values.items():
        key = key.replace("-", "_")
        if key == "alpha":
            settings.update(_parse_alpha(str(raw)))
        elif key in OPTIONS:
            name, convert = OPTIONS[key]
            try:
                settings[name] = convert(raw)
            except (TypeError, ValueError):
                raise ConfigError(key, f"cannot parse {raw!r}")
        else:
            params[key] = raw
    return settings, params


def _read_config_file(path: str) -> dict:
    try:
        with open(path) as handle:
            return Helper.parse_key_value_lines(handle.read())
    except OSError as e:
        raise ConfigError("config", f"cannot read {path}: {e}")
    except ValueError as e:
        raise ConfigError("config", f"{path}: {e}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermoformal",
        description="Pressure, Bowen dimension and Birkhoff spectra of full-branched interval maps.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--system", help=f"one of {', '.join(sorted(BUILTIN_SYSTEMS))}")
    parser.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                        help="system parameter, repeatable")
    parser.add_argument("--alpha", metavar="LO:HI:COUNT[:SPACING]")
    parser.add_argument("--tol", type=float)
    parser.add_argument("--truncation", type=int)
    parser.add_argument("--truncation-cap", type=int)
    parser.add_argument("--depth", type=int)
    parser.add_argument("--out")
    parser.add_argument("--plot")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--config", help="key=value file, one flag per line")
    parser.add_argument("--q", type=float)
    parser.add_argument("--b", type=float)
    parser.add_argument("--shells", type=int)
    parser.add_argument("--n-max", type=int)
    parser.add_argument("--exponents", help="comma-separated x values for the scaled-limit probe")
    return parser


def run_config_from_args(argv=None) -> RunConfig:
    args = build_parser().parse_args(argv)
    values = _read_config_file(args.config) if args.config else {}
    settings, params = _convert(values)

    flags = {key: value for key, value in vars(args).items()
             if key not in ("command", "param", "config") and value is not None}
    flag_settings, _ = _convert(flags)
    settings.update(flag_settings)
    for item in args.param:
        if "=" not in item:
            raise ConfigError("param", f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        params[key.strip()] = value.strip()

    if "system" not in settings:
        raise ConfigError("system", "missing (use --system or a system= line in --config)")
    known = {f.name for f in fields(RunConfig)}
    run = RunConfig(command=args.command, params=params, **{k: v for k, v in settings.items() if k in known})
    run.validate()
    return run


# =====================================================================================
# COMMANDS
# =====================================================================================

def _print_summary(summary: dict):
    print(ReportBuilder.build_summary(summary))


def run_pressure(system: FullBranchMap, run: RunConfig) -> int:
    potential = Potential(run.q if run.q is not None else 0.0, run.b if run.b is not None else 1.0)
    est = pressure(system, potential, tolerance=run.tolerance, depth_n=run.depth, truncation=run.truncation)
    summary = {"system": repr(system), "q": potential.q, "b": potential.b, "lower": est.lower, "upper": est.upper,
               "value": est.value, "width": est.width, "truncation_N": est.truncation_N,
               "depth_n": est.depth_n, "method": est.method}
    _print_summary(summary)
    if run.output_path:
        CsvExporter().write(pd.DataFrame([summary]), run.output_path)
    if run.plot_path:
        logger.warning("Single pressure run: nothing to plot, no plot emitted.")
    return 0


def run_dimension(system: FullBranchMap, run: RunConfig) -> int:
    est = bowen_dimension(system, tolerance=run.tolerance, depth_n=run.depth, truncation=run.truncation)
    summary = {"system": repr(system), "b_star": est.value, "lower": est.lower, "upper": est.upper,
               "width": est.width, "residual": est.residual, "truncation_N": est.truncation_N,
               "depth_n": est.depth_n, "method": est.method}
    _print_summary(summary)
    if run.output_path:
        CsvExporter().write(pd.DataFrame([summary]), run.output_path)
    return 0


def run_tail(system: FullBranchMap, run: RunConfig) -> int:
    stats = shell_census(system, run.n_shells, epsilons=(0.1,))
    probe = None
    if run.q is not None and run.b is not None:
        probe = h3_ratio_probe(system, run.q, run.b, run.n_shells, raise_on_violation=False)
    summary = {"system": repr(system), "shells": len(stats)}
    for eps, constant in stats.growth_constants.items():
        summary[f"h1_growth_C_eps{eps:g}"] = constant
    if not system.is_finite:
        fit = estimate_tail_exponent(system, system.truncation_limit(run.n_max))
        tail = system.observable.tail
        summary.update({"beta_hat": fit.beta_hat, "beta_stderr": fit.stderr, "beta_points": fit.points,
                        "beta": tail.beta if tail is not None else float("nan")})
    if probe is not None:
        summary.update({"h3_c1": probe.c1, "h3_c2": probe.c2, "h3_violations": len(probe.violations)})

    exporter = CsvExporter()
    exporter.write(CsvExporter.census_frame(stats, probe), run.output_for(system),
                   CsvExporter.summary_lines(summary))
    _print_summary(summary)
    if probe is not None and not probe.passed:
        raise SandwichViolationError(probe.violations)
    return 0


def _solve_and_write_curve(system: FullBranchMap, run: RunConfig):
    curve = solve_curve(system, run.alpha_grid(), tolerance=run.tolerance)
    if run.command == "spectrum":
        CsvExporter().write(CsvExporter.spectrum_frame(curve), run.output_for(system),
                            CsvExporter.failure_lines(curve))
    return curve


def _theoretical_exponent(system: FullBranchMap):
    tail = system.observable.tail
    return tail.rate_exponent if tail is not None else None


def run_spectrum(system: FullBranchMap, run: RunConfig) -> int:
    curve = _solve_and_write_curve(system, run)
    _print_summary({"system": repr(system), "b_star": curve.b_star, "points": len(curve.points),
                    "failures": len(curve.failures)})
    if run.plot_path:
        fit = None
        try:
            fit = fit_rate_exponent(curve, theoretical=_theoretical_exponent(system))
        except ThermoformalError as e:
            logger.warning(f"Rate panel without a fit: {e}")
        emit_plots(curve, fit, run.plot_path)
    return 1 if curve.failures else 0


def run_rate(system: FullBranchMap, run: RunConfig) -> int:
    curve = _solve_and_write_curve(system, run)
    theoretical = _theoretical_exponent(system)
    errors = []
    fit = q_table = None
    probes = []
    try:
        probes = scaled_limit_probe(curve, exponents=run.exponents,
                                    threshold=theoretical if theoretical is not None else float("nan"))
    except ThermoformalError as e:
        logger.error(f"Scaled-limit probe failed: {e}")
        errors.append(e)
    try:
        fit = fit_rate_exponent(curve, theoretical=theoretical)
    except ThermoformalError as e:
        logger.error(f"Rate fit failed: {e}")
        errors.append(e)
    try:
        q_table = q_integral_check(curve)
    except ThermoformalError as e:
        logger.error(f"q-integral check failed: {e}")
        errors.append(e)

    summary = ReportBuilder.rate_summary(fit, probes, q_table) if fit is not None else {}
    CsvExporter().write(CsvExporter.rate_frame(curve, probes), run.output_for(system),
                        CsvExporter.summary_lines(summary) + CsvExporter.failure_lines(curve))
    _print_summary({"system": repr(system), "b_star": curve.b_star, **summary})
    if run.plot_path:
        emit_plots(curve, fit, run.plot_path)
    if errors:
        raise errors[0]
    return 1 if curve.failures else 0


def run_verify(system: FullBranchMap, run: RunConfig) -> int:
    suite = InvariantSuite(system, run.alpha_grid(), tolerance=run.tolerance, n_shells=run.n_shells)
    records = suite.run()
    print(ReportBuilder.build(records, repr(system)))
    if run.output_path:
        CsvExporter().write(pd.DataFrame(records, columns=["module", "invariant", "passed", "details"]),
                            run.output_path)
    return 0 if all(r["passed"] for r in records) else 1


HANDLERS = {
    "pressure": run_pressure,
    "dimension": run_dimension,
    "tail": run_tail,
    "spectrum": run_spectrum,
    "rate": run_rate,
    "verify": run_verify,
}


# =====================================================================================
# ENTRY
# =====================================================================================

def run_command(run: RunConfig) -> int:
    """
    Runs one command. Exit status: 0 on success, 1 on a module error or
    failed points/invariants (artifacts written so far stay on disk),
    2 on configuration errors.
    """
    try:
        run.validate()
        system = build_system(run.system, run.params)
        if run.command in ("spectrum", "rate") and not run.alpha_lo > alpha_min(system):
            raise ConfigError("alpha", f"lo={run.alpha_lo!r} must exceed alpha_min={alpha_min(system)!r}")
    except (ConfigError, ParameterRangeError) as e:
        logger.error(f"Configuration error: {e}")
        return 2

    Config.WORKERS = run.workers
    Config.TRUNCATION_CAP = run.truncation_cap
    logger.info(f"🚀 {run.command} on {system!r}")
    log_event("run", command=run.command, system=system.name, tolerance=run.tolerance, workers=run.workers)
    try:
        status = HANDLERS[run.command](system, run)
    except ThermoformalError as e:
        logger.error(f"{run.command} failed: {e}")
        return 1
    except OSError as e:
        logger.error(f"Output error: {e}")
        return 1
    logger.info(f"🎉 {run.command} finished with status {status}")
    return status


def main(argv=None) -> int:
    try:
        run = run_config_from_args(argv)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return 2
    return run_command(run)


if __name__ == "__main__":
    sys.exit(main())
