import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from src.config import Config
from src.errors import BowenWindowError, SolverError
from src.pressure.engine import choose_truncation, pressure_cylinder_sandwich
from src.pressure.potential import Potential
from src.pressure.series import ShellSeries
from src.systems.branches import FullBranchMap
from src.utils.logger import log_event, logger

WINDOW_MARGIN = 1e-2
WINDOW_MAX = 64.0
# the smallest rtol brentq accepts
ROOT_RTOL = 4 * np.finfo(float).eps


@dataclass(frozen=True)
class DimensionEstimate:
    value: float
    lower: float
    upper: float
    residual: float
    truncation_N: int
    method: str
    window: tuple
    depth_n: Optional[int] = None

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _window_start(system: FullBranchMap) -> float:
    if system.is_finite:
        return 0.0
    return system.growth.critical_b() + WINDOW_MARGIN


def _find_negative(f, start: float) -> tuple:
    """Doubles t from max(1, 2*start) until f(t) < 0."""
    t = max(1.0, 2.0 * start)
    value = f(t)
    while value >= 0 and t < WINDOW_MAX:
        t *= 2.0
        value = f(t)
    return t, value


def find_root(f, lo: float, hi: float, xtol: float = 1e-12, maxiter: int = 200) -> float:
    """brentq on [lo, hi]; scipy's ValueError and RuntimeError become SolverError."""
    try:
        return brentq(f, lo, hi, xtol=xtol, rtol=ROOT_RTOL, maxiter=maxiter)
    except (ValueError, RuntimeError) as e:
        raise SolverError(f"root of {getattr(f, '__name__', 'function')} on [{lo!r}, {hi!r}]: {e}") from e


def _bracket(f, lo: float) -> tuple:
    f_lo = f(lo)
    hi, f_hi = _find_negative(f, lo)
    if not (f_lo > 0 > f_hi):
        raise BowenWindowError((lo, hi), (f_lo, f_hi))
    return lo, hi


# ---------------------------
# Series mode
# ---------------------------
def _series_dimension(system: FullBranchMap, tolerance: float, truncation: int = None) -> DimensionEstimate:
    guess = system.known_b_star if system.known_b_star is not None else 1.0
    n = truncation or choose_truncation(system, Potential(0.0, guess), tolerance)

    def sums_at(t: float):
        return ShellSeries(system, 0.0, t).evaluate(n)

    def p(t):
        return sums_at(t).log_mass

    def p_lower(t):
        return sums_at(t).log_mass_bounds[0]

    def p_upper(t):
        return sums_at(t).log_mass_bounds[1]

    lo, hi = _bracket(p, _window_start(system))
    value = find_root(p, lo, hi, xtol=1e-15)

    # Newton polish with dP/dt = -lyapunov
    sums = sums_at(value)
    residual = abs(sums.log_mass)
    lyapunov = sums.slope_ref + sums.moment("slope")
    polished = value + sums.log_mass / lyapunov
    if lo < polished < hi and abs(p(polished)) < residual:
        value, residual = polished, abs(p(polished))

    if system.is_finite:
        lower = upper = value
    else:
        lower = find_root(p_lower, lo, hi, xtol=1e-14)
        upper = find_root(p_upper, lo, hi, xtol=1e-14)
    method = "series" if system.locally_constant else "surrogate"
    return DimensionEstimate(value=value, lower=min(lower, value), upper=max(upper, value), residual=residual,
                             truncation_N=sums.truncation_N, method=method, window=(lo, hi))


# ---------------------------
# Cylinder sandwich mode
# ---------------------------
def _sandwich_dimension(system: FullBranchMap, depth: int, truncation: int) -> DimensionEstimate:
    def bounds(t: float):
        return pressure_cylinder_sandwich(system, Potential(0.0, t), depth_n=depth, truncation_N=truncation)

    start = _window_start(system)
    lo_window = _bracket(lambda t: bounds(t).lower, start)
    hi_window = _bracket(lambda t: bounds(t).upper, start)
    lower = find_root(lambda t: bounds(t).lower, *lo_window, xtol=1e-7)
    upper = find_root(lambda t: bounds(t).upper, *hi_window, xtol=1e-7)
    value = 0.5 * (lower + upper)
    at_value = bounds(value)
    residual = max(abs(at_value.lower), abs(at_value.upper))
    return DimensionEstimate(value=value, lower=lower, upper=upper, residual=residual,
                             truncation_N=at_value.truncation_N, method="cylinder_sandwich",
                             window=(min(lo_window[0], hi_window[0]), max(lo_window[1], hi_window[1])),
                             depth_n=depth)


def bowen_dimension(system: FullBranchMap, tolerance: float = None, mode: str = "auto",
                    depth_n: int = None, truncation: int = None) -> DimensionEstimate:
    """
    Root b* of t -> P(-t log|F'|).

    mode 'auto' uses the series for constant-slope maps and the cylinder
    sandwich otherwise; 'surrogate' forces the series on the locally
    constant representative of an analytic map.
    """
    tolerance = tolerance or Config.TOLERANCE
    if mode == "auto":
        mode = "series" if system.locally_constant else "sandwich"
    if mode == "sandwich":
        depth = depth_n or system.default_depth
        result = _sandwich_dimension(system, depth, truncation or Config.CYLINDER_TRUNCATION)
    else:
        result = _series_dimension(system, tolerance, truncation)
        if result.residual > tolerance:
            log_event("dimension_residual", level=logging.WARNING, system=system.name,
                      residual=result.residual, tolerance=tolerance)
    logger.info(f"Bowen dimension of {system.name}: {result.value:.12f} in [{result.lower:.12f}, {result.upper:.12f}]")
    log_event("dimension", system=system.name, value=result.value, lower=result.lower, upper=result.upper,
              residual=result.residual, N=result.truncation_N, method=result.method)
    return result
