import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from src.config import Config
from src.errors import DegenerateObservableError, DomainError, NewtonDivergenceError
from src.pressure.dimension import bowen_dimension, find_root
from src.pressure.engine import choose_truncation
from src.pressure.gibbs import GibbsMeasure, gibbs_weights
from src.pressure.potential import Potential
from src.pressure.series import ShellSeries
from src.systems.branches import FullBranchMap
from src.utils.logger import log_event, logger

DEGENERATE_VARIANCE = 1e-12
MAX_LOG_STEP = 2.0
MAX_HALVINGS = 40
POLISH_STEPS = 4
# relative resolution of int tau from the tail quadrature; bounds how small |dp/dq| can get
DPDQ_RESOLUTION = 1e-11
# coarse truncation for the initial scan; the tail integral covers the rest
SCAN_TRUNCATION = 1024
SCAN_LOG_Q = np.arange(-14.0, 1.01, 0.5)
# on countable alphabets q(alpha) stays below SCAN_Q_ALPHA / alpha; larger q only inflates b_q
SCAN_Q_ALPHA = 50.0
SCAN_MAX_B = 2.0 ** 40


@dataclass(frozen=True)
class SpectrumPoint:
    alpha: float
    q: float
    b: float
    lyapunov: float
    entropy: float
    residual_p: float
    residual_dp: float
    newton_iters: int
    truncation_N: int
    mean_tau: float
    var_tau: float
    residual_dp_rel: float = 0.0

    @property
    def dpdq_floor(self) -> float:
        """Smallest |dp/dq| the quadrature can resolve at this alpha."""
        return DPDQ_RESOLUTION * self.alpha

    @property
    def entropy_defect(self) -> float:
        """|h - b lambda|; zero at an exact solution."""
        return abs(self.entropy - self.b * self.lyapunov)


# ---------------------------
# Evaluation of p(alpha, q, b) and its derivatives
# ---------------------------
@dataclass(frozen=True)
class SpectrumState:
    """
    p(alpha, q, b) = P(q(alpha - tau) - b log|F'|) with the Gibbs moments at
    (q, b). Residuals are (p, (alpha - int tau)/alpha). Newton works on the scaled
    residual; the reported one is the unscaled dp/dq.
    """
    alpha: float
    q: float
    b: float
    measure: GibbsMeasure

    @property
    def p(self) -> float:
        return self.measure.pressure

    @property
    def residuals(self) -> np.ndarray:
        return np.array([self.p, self.dpdq / self.alpha])

    @property
    def dpdq(self) -> float:
        """dp/dq = alpha - int tau dmu, unscaled."""
        return self.alpha - self.measure.mean_tau

    @property
    def merit(self) -> float:
        return float(np.hypot(*self.residuals))

    def jacobian(self) -> np.ndarray:
        """d(residuals)/d(log q, b)."""
        m, q, alpha = self.measure, self.q, self.alpha
        return np.array([
            [q * (alpha - m.mean_tau), -m.lyapunov],
            [q * m.var_tau / alpha, m.cov_tau_logF / alpha],
        ])


def spectrum_state(system: FullBranchMap, alpha: float, q: float, b: float, truncation: int) -> SpectrumState:
    measure = gibbs_weights(system, Potential(q, b, alpha), truncation_N=truncation, assume_finite=q > 0)
    return SpectrumState(alpha=alpha, q=q, b=b, measure=measure)


def reduced_pressure(system: FullBranchMap, alpha: float, q: float, b: float, truncation: int) -> float:
    """p(alpha, q, b) alone, without the moment bookkeeping."""
    return ShellSeries(system, q, b).evaluate(truncation).log_mass + q * alpha


# ---------------------------
# Left end of the spectrum
# ---------------------------
def alpha_min(system: FullBranchMap) -> float:
    """
    min_a tau_a. For a locally constant tau the fixed point of the minimizing
    branch realizes it; tau increases along the shells of infinite systems.
    """
    table = system.shells(system.truncation_limit(Config.MIN_TRUNCATION))
    return float(np.min(table.tau))


def spectrum_b_star(system: FullBranchMap) -> float:
    """b* of the potential the spectrum is solved for (the locally constant one)."""
    if system.known_b_star is not None:
        return float(system.known_b_star)
    mode = "series" if system.locally_constant else "surrogate"
    return bowen_dimension(system, mode=mode).value


def alpha_max(system: FullBranchMap, b_star: float) -> float:
    """Mean of tau under the b*-measure: +inf for the countable builtins."""
    if not system.is_finite:
        return math.inf
    sums = ShellSeries(system, 0.0, b_star).evaluate(system.alphabet_size)
    return sums.tau_ref + sums.moment("tau")


# ---------------------------
# Initial guess
# ---------------------------
def _b_of_q(system: FullBranchMap, alpha: float, q: float, truncation: int) -> float:
    """
    The b with p(alpha, q, b) = 0; p decreases in b. Returns inf when
    p(alpha, q, 0) <= 0 or no root lies below SCAN_MAX_B, so the scan skips q.
    """
    def p(b):
        return reduced_pressure(system, alpha, q, b, truncation)

    if not p(0.0) > 0.0:
        return math.inf
    hi = 1.0
    while p(hi) >= 0.0:
        if hi >= SCAN_MAX_B:
            return math.inf
        hi *= 2.0
    return find_root(p, 0.0, hi, xtol=1e-10)


def initial_guess(system: FullBranchMap, alpha: float, truncation: int = SCAN_TRUNCATION) -> tuple:
    """
    b(alpha) = min over q > 0 of b_q, where p(alpha, q, b_q) = 0, and q(alpha)
    is the minimizer. A log-scan of q brackets the minimum, a bounded scalar
    minimization refines it.
    """
    n = system.truncation_limit(truncation)
    grid = SCAN_LOG_Q
    if not system.is_finite:
        grid = SCAN_LOG_Q[SCAN_LOG_Q <= math.log10(SCAN_Q_ALPHA / alpha)]
        if grid.size < 3:
            grid = SCAN_LOG_Q[:3]
    values = np.array([_b_of_q(system, alpha, 10.0 ** u, n) for u in grid])
    if not np.isfinite(values).any():
        raise DomainError(f"{system.name}: alpha={alpha!r}: no q in the scan gives a root b_q")
    k = int(np.argmin(values))
    if k == 0:
        raise DomainError(f"{system.name}: alpha={alpha!r} needs q below 1e-14; outside the solvable range")
    lo, hi = grid[k - 1], grid[min(k + 1, grid.size - 1)]
    result = minimize_scalar(lambda u: _b_of_q(system, alpha, 10.0 ** u, n), bounds=(lo, hi),
                             method="bounded", options={"xatol": 1e-6})
    q0, b0 = 10.0 ** float(result.x), float(result.fun)
    log_event("spectrum_guess", level=logging.DEBUG, system=system.name, alpha=alpha, q=q0, b=b0, N=n)
    return q0, b0


# ---------------------------
# Newton in (log q, b)
# ---------------------------
def _newton(system: FullBranchMap, alpha: float, q: float, b: float, truncation: int,
            tolerance: float, max_iter: int) -> tuple:
    state = spectrum_state(system, alpha, q, b, truncation)
    for iteration in range(max_iter + 1):
        residuals = state.residuals
        if np.max(np.abs(residuals)) <= tolerance:
            return state, iteration
        if iteration == max_iter:
            break
        if state.measure.var_tau < DEGENERATE_VARIANCE:
            raise DegenerateObservableError(
                f"{system.name}: Var(tau) = {state.measure.var_tau:.3e} at alpha={alpha!r}; "
                "tau is essentially constant and the spectrum collapses to a point"
            )
        try:
            step = np.linalg.solve(state.jacobian(), -residuals)
        except np.linalg.LinAlgError:
            raise NewtonDivergenceError(alpha, state.q, state.b, tuple(residuals), iteration)
        if abs(step[0]) > MAX_LOG_STEP:
            step = step * (MAX_LOG_STEP / abs(step[0]))

        # backtracking: halve until the residual norm decreases
        damping = 1.0
        for _ in range(MAX_HALVINGS):
            candidate = spectrum_state(system, alpha, state.q * math.exp(damping * step[0]),
                                       state.b + damping * step[1], truncation)
            if candidate.merit < state.merit:
                state = candidate
                break
            damping *= 0.5
        else:
            raise NewtonDivergenceError(alpha, state.q, state.b, tuple(residuals), iteration)
    raise NewtonDivergenceError(alpha, state.q, state.b, tuple(state.residuals), max_iter)


def _polish(system: FullBranchMap, state: SpectrumState, truncation: int, tolerance: float) -> tuple:
    """
    Full Newton steps on a converged state while they shrink the unscaled
    |dp/dq| and keep |p| within tolerance. Never raises.
    """
    steps = 0
    for _ in range(POLISH_STEPS):
        if abs(state.dpdq) <= tolerance:
            break
        try:
            step = np.linalg.solve(state.jacobian(), -state.residuals)
        except np.linalg.LinAlgError:
            break
        candidate = spectrum_state(system, state.alpha, state.q * math.exp(step[0]), state.b + step[1], truncation)
        if not (abs(candidate.p) <= tolerance and abs(candidate.dpdq) < abs(state.dpdq)):
            break
        state, steps = candidate, steps + 1
    return state, steps


def solve_point(system: FullBranchMap, alpha: float, guess: tuple = None, tolerance: float = None,
                truncation: int = None, b_star: float = None, max_iter: int = None) -> SpectrumPoint:
    """
    Solves p(alpha, q, b) = 0 and d p / d q = 0 for (q(alpha), b(alpha)).

    The truncation is chosen at the starting point so the tail-sandwich
    width stays below 1e-2 * tolerance, then rechecked at the solution.
    """
    tolerance = tolerance or Config.TOLERANCE
    max_iter = max_iter or Config.NEWTON_MAX_ITER
    lowest = alpha_min(system)
    if not alpha > lowest:
        raise DomainError(f"{system.name}: alpha={alpha!r} must exceed alpha_min={lowest!r}")
    if system.is_finite:
        b_star = spectrum_b_star(system) if b_star is None else b_star
        highest = alpha_max(system, b_star)
        if not alpha < highest:
            raise DomainError(
                f"{system.name}: alpha={alpha!r} is not below the b*-mean of tau {highest!r}; q(alpha) would be <= 0"
            )
    q, b = guess if guess is not None else initial_guess(system, alpha)
    if not q > 0:
        raise DomainError(f"initial guess needs q > 0, got q={q!r}")

    adaptive = truncation is None
    n = choose_truncation(system, Potential(q, b), 1e-2 * tolerance) if adaptive else truncation
    state, iterations = _newton(system, alpha, q, b, n, tolerance, max_iter)
    if adaptive:
        n_final = choose_truncation(system, Potential(state.q, state.b), 1e-2 * tolerance)
        if n_final != n:
            state, extra = _newton(system, alpha, state.q, state.b, n_final, tolerance, max_iter)
            iterations += extra
            n = n_final
    state, extra = _polish(system, state, n, tolerance)
    iterations += extra

    m = state.measure
    residual_p, residual_dp = abs(state.p), abs(state.dpdq)
    point = SpectrumPoint(
        alpha=float(alpha),
        q=state.q,
        b=state.b,
        lyapunov=m.lyapunov,
        entropy=m.entropy,
        residual_p=residual_p,
        residual_dp=residual_dp,
        newton_iters=iterations,
        truncation_N=m.truncation_N,
        mean_tau=m.mean_tau,
        var_tau=m.var_tau,
        residual_dp_rel=residual_dp / abs(alpha),
    )
    log_event("spectrum_point", system=system.name, alpha=point.alpha, q=point.q, b=point.b,
              residual_p=residual_p, residual_dp=residual_dp, iters=iterations, N=point.truncation_N)
    if point.entropy_defect > 1e3 * tolerance:
        logger.warning(f"alpha={alpha!r}: |h - b lambda| = {point.entropy_defect:.3e}")
    return point
