import math
from dataclasses import dataclass

import numpy as np

from src.errors import H1ViolationError
from src.pressure.series import ShellSeries
from src.systems.branches import FullBranchMap, ShellTable
from src.utils.logger import log_event, logger

# shells below this index are pre-asymptotic and excluded from fitted constants
FIRST_ASYMPTOTIC_SHELL = 5


@dataclass(frozen=True)
class ShellStats:
    n: int
    omega_lo: float
    omega_hi: float
    count: int
    measure: float


@dataclass(frozen=True)
class ShellCensus:
    """Per-shell stats plus the smallest growth constant C for each epsilon asked for."""
    shells: list
    growth_constants: dict

    def __iter__(self):
        return iter(self.shells)

    def __len__(self):
        return len(self.shells)

    def __getitem__(self, k):
        return self.shells[k]


def omega_bounds(system: FullBranchMap, table: ShellTable) -> tuple:
    """
    (omega(n), omega(n+1)) per shell. Systems without a scale function use
    their own tau values, the last shell closing at +inf.
    """
    scale = system.observable.scale
    if scale is not None:
        return scale(table.index), scale(table.index + 1.0)
    upper = np.append(table.tau[1:], math.inf)
    return table.tau.copy(), upper


def shell_census(system: FullBranchMap, n_shells: int, epsilons=None) -> ShellCensus:
    """
    Letter counts and geometric measure per shell 1..n_shells.

    For each epsilon given, the smallest C with count <= C e^{eps omega(n)}
    over the range is returned in `growth_constants` (see
    `smallest_growth_constant`).
    """
    if n_shells < 1:
        raise ValueError(f"n_shells must be >= 1, got {n_shells}")
    table = system.shells(n_shells)
    omega_lo, omega_hi = omega_bounds(system, table)
    counts = np.rint(table.count)
    stats = []
    for k in range(table.size):
        if counts[k] < 1:
            raise H1ViolationError(k + 1, float(omega_lo[k]), float(omega_hi[k]))
        stats.append(ShellStats(
            n=k + 1,
            omega_lo=float(omega_lo[k]),
            omega_hi=float(omega_hi[k]),
            count=int(counts[k]),
            measure=float(counts[k] * table.measure[k]),
        ))
    constants = {float(eps): smallest_growth_constant(stats, eps) for eps in epsilons or ()}
    for eps, constant in constants.items():
        log_event("h1_growth", system=system.name, epsilon=eps, constant=constant)
    logger.info(f"Shell census of {system.name}: {len(stats)} shells, {int(counts.sum())} letters")
    return ShellCensus(shells=stats, growth_constants=constants)


def smallest_growth_constant(stats: list, epsilon: float) -> float:
    """Smallest C with count(n) <= C exp(epsilon omega(n)) over the census."""
    log_ratio = [math.log(s.count) - epsilon * s.omega_lo for s in stats]
    return math.exp(max(log_ratio))


def measure_closure(system: FullBranchMap, n_shells: int, tolerance: float = 1e-8) -> dict:
    """
    Shell measures over 1..n plus the tail beyond n must add up to one
    (the geometric measure is a probability on the image).
    """
    sums = ShellSeries(system, 0.0, 1.0).evaluate(n_shells)
    scale = math.exp(sums.shift)
    head = sums.head[0] * scale
    total = head + sums.tail[0] * scale
    remainder = (sums.tail_lower * scale, sums.tail_upper * scale)
    return {
        "passed": abs(total - 1.0) <= tolerance,
        "shells": sums.truncation_N,
        "head": head,
        "remainder": remainder,
        "total": total,
    }


def comparable_scaling_check(system: FullBranchMap, n_shells: int) -> dict:
    """sup/inf of |F'| on each branch of shells 1..n must stay below the declared K."""
    table = system.shells(n_shells)
    worst = float(np.exp(np.max(table.log_slope_hi - table.log_slope_lo)))
    bound = float(system.comparable_scaling_K)
    return {"passed": worst <= bound * (1.0 + 1e-12), "worst_ratio": worst, "K": bound, "shells": table.size}


def count_bounds_check(system: FullBranchMap, n_shells: int, band: float = 100.0) -> dict:
    """
    For a polynomial scale, count(n) against omega'(n) omega(n)^(c-1) with
    c_i = beta_i b* - beta. Reports the fitted comparability constants
    (min and max ratio over shells 5..n); passes when both stay within `band`.
    """
    scale, tail = system.observable.scale, system.observable.tail
    if scale is None or tail is None or scale.kind != "polynomial":
        return {"passed": True, "skipped": "no polynomial scale"}
    b_star = system.known_b_star if system.known_b_star is not None else 1.0
    table = system.shells(n_shells)
    n = table.index[FIRST_ASYMPTOTIC_SHELL - 1:]
    counts = np.rint(table.count)[FIRST_ASYMPTOTIC_SHELL - 1:]
    if n.size == 0:
        return {"passed": True, "skipped": "fewer than five shells"}
    c1 = tail.beta1 * b_star - tail.beta
    c2 = tail.beta2 * b_star - tail.beta
    log_base = np.log(scale.derivative(n))
    log_omega = scale.log(n)
    lower_ratio = np.exp(np.log(counts) - log_base - (c1 - 1.0) * log_omega)
    upper_ratio = np.exp(np.log(counts) - log_base - (c2 - 1.0) * log_omega)
    constants = (float(lower_ratio.min()), float(upper_ratio.max()))
    passed = constants[0] > 1.0 / band and constants[1] < band
    return {"passed": passed, "c1": c1, "c2": c2, "constants": constants, "shells": table.size}
