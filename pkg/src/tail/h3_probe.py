import math
from dataclasses import dataclass, field

import numpy as np

from src.errors import DomainError, SandwichViolationError
from src.pressure.engine import choose_truncation, finiteness_check
from src.pressure.potential import Potential
from src.pressure.series import ShellSeries
from src.systems.branches import FullBranchMap
from src.tail.shells import FIRST_ASYMPTOTIC_SHELL, omega_bounds
from src.utils.logger import log_event, logger


@dataclass(frozen=True)
class H3Probe:
    """
    Per-shell ratios mu(shell) / mu_{q,b}(shell) against the bounds

        lower_n = e^{q omega(n)}   omega(n+1)^{-beta2 (b* - b)}
        upper_n = e^{q omega(n+1)} omega(n)^{-beta1 (b* - b)}

    with c1 = min ratio/lower and c2 = max ratio/upper over shells 5..N.
    log_ratio_to_lower and log_ratio_to_upper are kept apart from the raw
    logs: e^{q omega} overflows long before the quotients do.
    """
    q: float
    b: float
    b_star: float
    shells: np.ndarray
    omega_lo: np.ndarray
    omega_hi: np.ndarray
    log_ratio: np.ndarray
    log_ratio_to_lower: np.ndarray
    log_ratio_to_upper: np.ndarray
    c1: float
    c2: float
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def rows(self) -> list:
        """One dict per shell, CSV column order."""
        with np.errstate(over="ignore"):
            ratio = np.exp(self.log_ratio)
            lower = self.c1 * np.exp(self.log_ratio - self.log_ratio_to_lower)
            upper = self.c2 * np.exp(self.log_ratio - self.log_ratio_to_upper)
        return [
            {"shell_n": int(n), "omega_lo": float(lo), "omega_hi": float(hi),
             "ratio": float(r), "lower_bound": float(low), "upper_bound": float(up)}
            for n, lo, hi, r, low, up in zip(self.shells, self.omega_lo, self.omega_hi, ratio, lower, upper)
        ]


def h3_ratio_probe(system: FullBranchMap, q: float, b: float, n_shells: int, b_star: float = None,
                   slack: float = 10.0, raise_on_violation: bool = True) -> H3Probe:
    """
    Compares the geometric measure with the equilibrium state of
    -q tau - b log|F'| shell by shell.

    Constants fitted on the first half of the range must also cover the
    second half up to a factor `slack`; shells where they do not are
    reported as violations.
    """
    potential = Potential(q, b)
    if not finiteness_check(system, potential).finite:
        raise DomainError(f"{system.name}: (q={q!r}, b={b!r}) lies outside the finiteness domain")
    tail = system.observable.tail
    b_star = b_star if b_star is not None else system.known_b_star
    if tail is None or b_star is None:
        raise DomainError(f"{system.name}: the probe needs a tail model and a known b*")

    n = choose_truncation(system, potential, 1e-12)
    series = ShellSeries(system, q, b)
    log_pressure = series.evaluate(max(n, n_shells)).log_mass
    table = system.shells(n_shells)
    omega_lo, omega_hi = omega_bounds(system, table)
    ell = getattr(table, series.column)

    # mu([a]) / e^{psi_a - P} = mu([a]) e^{q tau + b ell - P}, split so the
    # q tau term only ever appears as a difference against omega
    base = np.log(table.measure) + b * ell + log_pressure
    gap = b_star - b
    with np.errstate(over="ignore", invalid="ignore"):
        log_ratio = base + q * table.tau
        to_lower = base + q * (table.tau - omega_lo) + tail.beta2 * gap * np.log(omega_hi)
        to_upper = base + q * (table.tau - omega_hi) + tail.beta1 * gap * np.log(omega_lo)
    to_upper = np.where(np.isfinite(omega_hi), to_upper, -np.inf)

    start = min(FIRST_ASYMPTOTIC_SHELL, table.size) - 1
    c1 = float(np.exp(np.min(to_lower[start:])))
    c2 = float(np.exp(np.max(to_upper[start:])))

    half = slice(start, max(start + 1, (start + table.size) // 2))
    c1_half, c2_half = np.min(to_lower[half]), np.max(to_upper[half])
    margin = math.log(slack)
    failing = (to_lower < c1_half - margin) | (to_upper > c2_half + margin)
    violations = [
        {"shell": int(k + 1), "log_ratio_to_lower": float(to_lower[k]),
         "log_ratio_to_upper": float(to_upper[k]), "c1": float(np.exp(c1_half)), "c2": float(np.exp(c2_half))}
        for k in np.nonzero(failing)[0] if k >= start
    ]
    probe = H3Probe(q=q, b=b, b_star=b_star, shells=table.index.astype(int), omega_lo=omega_lo,
                    omega_hi=omega_hi, log_ratio=log_ratio, log_ratio_to_lower=to_lower,
                    log_ratio_to_upper=to_upper, c1=c1, c2=c2, violations=violations)
    log_event("h3_probe", system=system.name, q=q, b=b, shells=table.size, c1=c1, c2=c2,
              violations=len(violations))
    if violations:
        logger.error(f"H3 sandwich fails on {len(violations)} shells of {system.name}")
        if raise_on_violation:
            raise SandwichViolationError(violations)
    return probe
