import math
from dataclasses import dataclass, field

import numpy as np

from src.config import Config
from src.errors import DomainError, InsufficientPointsError, ThermoformalError
from src.spectrum.point import (DPDQ_RESOLUTION, SpectrumPoint, alpha_min, reduced_pressure, solve_point,
                                 spectrum_b_star)
from src.systems.branches import FullBranchMap
from src.utils.logger import log_event, logger

ENTROPY_IDENTITY_TOLERANCE = 1e-8


@dataclass
class SpectrumCurve:
    """Solved points of alpha -> (q(alpha), b(alpha)) and the alphas that failed."""
    grid: np.ndarray
    points: list
    b_star: float
    failures: list = field(default_factory=list)
    system_name: str = ""
    tolerance: float = 0.0

    # ---------------------------
    # Columns
    # ---------------------------
    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points], dtype=float)

    @property
    def alphas(self) -> np.ndarray:
        return self.column("alpha")

    @property
    def gaps(self) -> np.ndarray:
        """b* - b(alpha)."""
        return self.b_star - self.column("b")

    def final_decade(self) -> list:
        if not self.points:
            return []
        top = self.points[-1].alpha
        return [p for p in self.points if p.alpha >= top / 10.0]

    def beyond_first_decade(self) -> list:
        if not self.points:
            return []
        bottom = float(self.grid[0])
        return [p for p in self.points if p.alpha >= 10.0 * bottom]

    @property
    def lyapunov_tail_bound(self) -> float:
        """max lambda(mu_alpha) over the final decade of the grid."""
        tail = self.final_decade()
        return max(p.lyapunov for p in tail) if tail else math.nan

    # ---------------------------
    # Invariants
    # ---------------------------
    def invariants(self) -> list:
        """Named pass/fail records for the curve-level properties."""
        tol = self.tolerance or Config.TOLERANCE
        pts = self.points
        checks = []

        def record(name: str, passed: bool, details: str):
            checks.append({"invariant": name, "passed": bool(passed), "details": details})

        if not pts:
            record("curve_nonempty", False, f"all {len(self.failures)} points failed")
            return checks
        worst_p = max(p.residual_p for p in pts)
        worst_rel = max(p.residual_dp_rel for p in pts)
        record("residuals", worst_p <= tol and worst_rel <= tol,
               f"max |p| = {worst_p:.3e}, max |dp/dq|/alpha = {worst_rel:.3e}, tolerance {tol:.1e}")
        # |dp/dq| unscaled, down to what the tail quadrature resolves at each alpha
        above = [p for p in pts if p.residual_dp > max(tol, p.dpdq_floor)]
        worst_dp = max(p.residual_dp for p in pts)
        record("dpdq_absolute", not above,
               f"max |dp/dq| = {worst_dp:.3e}, {len(above)} points above max(tolerance, {DPDQ_RESOLUTION:.0e} alpha)")
        record("q_positive", all(p.q > 0 for p in pts), f"min q = {min(p.q for p in pts):.3e}")
        record("b_below_b_star", all(0 < p.b < self.b_star for p in pts),
               f"b range [{min(p.b for p in pts):.12f}, {max(p.b for p in pts):.12f}], b* = {self.b_star:.12f}")
        b = self.column("b")
        record("b_increasing", bool(np.all(np.diff(b) > 0)), f"min increment {np.min(np.diff(b), initial=math.inf):.3e}")

        later = self.beyond_first_decade()
        q_late = np.array([p.q for p in later])
        record("q_decreasing_after_first_decade", bool(np.all(np.diff(q_late) < 0)),
               f"{len(later)} points beyond the first decade")
        tail = self.final_decade()
        aq = np.array([p.alpha * p.q for p in tail])
        record("alpha_q_decreasing_final_decade", bool(np.all(np.diff(aq) < 0)),
               f"alpha q from {aq[0]:.6e} to {aq[-1]:.6e}" if aq.size else "no points")
        worst_h = max(p.entropy_defect for p in pts)
        record("entropy_identity", worst_h <= ENTROPY_IDENTITY_TOLERANCE, f"max |h - b lambda| = {worst_h:.3e}")
        bound = self.lyapunov_tail_bound
        record("lyapunov_tail_bounded", math.isfinite(bound), f"max lambda on the final decade = {bound:.12g}")
        return checks


# ---------------------------
# Continuation along the grid
# ---------------------------
def _predict(system: FullBranchMap, points: list, alpha: float, b_star: float):
    """
    Tangent predictor: q from the log-log secant of the last two points, b
    from b' = q/lambda integrated under that power law.
    """
    if not points:
        return None
    last = points[-1]
    if len(points) >= 2:
        prev = points[-2]
        slope = math.log(last.q / prev.q) / math.log(last.alpha / prev.alpha)
    else:
        tail = system.observable.tail
        slope = tail.q_exponent if tail is not None else -2.0
    ratio = alpha / last.alpha
    q = last.q * ratio ** slope
    rate = last.q / last.lyapunov * last.alpha
    if abs(1.0 + slope) < 1e-9:
        b = last.b + rate * math.log(ratio)
    else:
        b = last.b + rate * (ratio ** (1.0 + slope) - 1.0) / (1.0 + slope)
    if not b < b_star:
        b = last.b + 0.5 * (b_star - last.b)
    return q, b


def solve_curve(system: FullBranchMap, alpha_grid, tolerance: float = None, b_star: float = None) -> SpectrumCurve:
    """
    Sequential continuation over an increasing alpha grid. A point that fails
    from the predictor is retried from a fresh scan; if that fails too it is
    recorded in `failures` and the sweep goes on.
    """
    grid = np.asarray(alpha_grid, dtype=float)
    tolerance = tolerance or Config.TOLERANCE
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise DomainError("alpha grid must be nonempty and strictly increasing")
    lowest = alpha_min(system)
    if not grid[0] > lowest:
        raise DomainError(f"alpha grid starts at {grid[0]!r}, not above alpha_min={lowest!r}")
    b_star = spectrum_b_star(system) if b_star is None else b_star

    points, failures = [], []
    for alpha in grid:
        alpha = float(alpha)
        guess = _predict(system, points, alpha, b_star)
        try:
            points.append(solve_point(system, alpha, guess, tolerance, b_star=b_star))
            continue
        except (ThermoformalError, ValueError, FloatingPointError) as e:
            if guess is None:
                logger.error(f"Spectrum point alpha={alpha!r} failed: {e}")
                failures.append((alpha, str(e)))
                continue
            logger.warning(f"alpha={alpha!r}: predictor start failed ({e}); rescanning")
        try:
            points.append(solve_point(system, alpha, None, tolerance, b_star=b_star))
        except (ThermoformalError, ValueError, FloatingPointError) as e:
            logger.error(f"Spectrum point alpha={alpha!r} failed: {e}")
            failures.append((alpha, str(e)))

    curve = SpectrumCurve(grid=grid, points=points, b_star=b_star, failures=failures,
                          system_name=system.name, tolerance=tolerance)
    logger.info(f"Spectrum curve of {system.name}: {len(points)} points solved, {len(failures)} failed")
    return curve


# ---------------------------
# Checks on solved points
# ---------------------------
def check_derivative_identity(curve: SpectrumCurve) -> float:
    """
    Max relative gap between the central finite difference of b along the
    grid and q(alpha)/lambda(mu_alpha) at the interior points.
    """
    pts = curve.points
    if len(pts) < 3:
        raise InsufficientPointsError(f"derivative identity needs 3 solved points, got {len(pts)}")
    alpha = curve.alphas
    b = curve.column("b")
    h_minus = alpha[1:-1] - alpha[:-2]
    h_plus = alpha[2:] - alpha[1:-1]
    # second-order difference on a non-uniform grid
    fd = (h_minus ** 2 * (b[2:] - b[1:-1]) + h_plus ** 2 * (b[1:-1] - b[:-2])) / (h_minus * h_plus * (h_minus + h_plus))
    formula = curve.column("q")[1:-1] / curve.column("lyapunov")[1:-1]
    worst = float(np.max(np.abs(fd - formula) / np.abs(formula)))
    log_event("derivative_identity", system=curve.system_name, points=len(pts), max_relative_error=worst)
    return worst


def q_scan_certificate(system: FullBranchMap, point: SpectrumPoint, factors=None, tolerance: float = None) -> dict:
    """
    p(alpha, q, b(alpha)) over q = factor * q(alpha): non-negative up to the
    tolerance, smallest near q(alpha), and there close to zero.
    """
    tolerance = tolerance or Config.TOLERANCE
    factors = np.geomspace(0.25, 4.0, 17) if factors is None else np.asarray(factors, dtype=float)
    values = np.array([reduced_pressure(system, point.alpha, f * point.q, point.b, point.truncation_N)
                       for f in factors])
    k = int(np.argmin(values))
    nonnegative = bool(np.all(values >= -10.0 * tolerance))
    near = 0.5 <= factors[k] <= 2.0
    minimum_zero = abs(values[k]) <= 10.0 * tolerance
    return {
        "passed": nonnegative and near and minimum_zero,
        "alpha": point.alpha,
        "min_value": float(values[k]),
        "argmin_factor": float(factors[k]),
        "values": values.tolist(),
    }
