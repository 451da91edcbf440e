import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import linregress

from src.errors import NonFiniteMeasureError, RegressionError
from src.pressure.series import ShellSeries
from src.systems.branches import FullBranchMap
from src.utils.logger import log_event, logger

MIN_POINTS = 3
RECOMMENDED_POINTS = 20
# doublings of t skipped at the start of the grid (pre-asymptotic)
BURN_IN = 4


@dataclass(frozen=True)
class TailExponentFit:
    beta_hat: float
    stderr: float
    intercept: float
    r_value: float
    t_grid: np.ndarray
    tail_measure: np.ndarray

    @property
    def points(self) -> int:
        return int(self.t_grid.size)

    @property
    def residuals(self) -> np.ndarray:
        predicted = self.intercept - self.beta_hat * np.log(self.t_grid)
        return np.log(self.tail_measure) - predicted


def tail_measure_function(system: FullBranchMap, n_max: int):
    """
    Returns (tau, suffix) with suffix[k] = mu(tau >= tau of shell k+1): the
    shell masses from k+1 to n_max plus the series tail beyond n_max.
    Shell tau values increase with the shell index for every infinite system.
    """
    table = system.shells(n_max)
    shell_mass = table.count * table.measure
    if system.is_finite or table.size >= (system.max_shells or math.inf):
        beyond = 0.0
    else:
        sums = ShellSeries(system, 0.0, 1.0).evaluate(table.size)
        beyond = float(sums.tail[0] * math.exp(sums.shift))
    suffix = np.cumsum(shell_mass[::-1])[::-1] + beyond
    return table.tau, suffix


def estimate_tail_exponent(system: FullBranchMap, n_max: int, burn_in: int = BURN_IN) -> TailExponentFit:
    """
    beta_hat = -slope of log mu(tau > t) against log t on t = 2^k, for every
    t below the largest tau of shells 1..n_max.
    """
    tau, suffix = tail_measure_function(system, n_max)
    k_lo = math.floor(math.log2(max(float(tau[0]), 1.0))) + burn_in
    k_hi = math.floor(math.log2(float(tau[-1]))) - 1
    t_grid = 2.0 ** np.arange(k_lo, k_hi + 1, dtype=float)
    if t_grid.size == 0:
        raise RegressionError(f"{system.name}: no sample of mu(tau > t) below tau={tau[-1]!r}")
    # first shell with tau > t
    first = np.searchsorted(tau, t_grid, side="right")
    values = suffix[first]
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise NonFiniteMeasureError(f"{system.name}: non-finite or zero tail measure on the t-grid")
    if values.size < MIN_POINTS:
        raise RegressionError(f"{system.name}: {values.size} points on the t-grid, need {MIN_POINTS}")
    if values.size < RECOMMENDED_POINTS:
        logger.warning(f"{system.name}: only {values.size} tail samples; raise n_max for a stable fit")

    fit = linregress(np.log(t_grid), np.log(values))
    result = TailExponentFit(
        beta_hat=-float(fit.slope),
        stderr=float(fit.stderr),
        intercept=float(fit.intercept),
        r_value=float(fit.rvalue),
        t_grid=t_grid,
        tail_measure=values,
    )
    log_event("tail_exponent", system=system.name, beta_hat=result.beta_hat, stderr=result.stderr,
              points=result.points, n_max=int(tau.size))
    return result
