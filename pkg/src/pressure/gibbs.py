import logging
import math
from dataclasses import dataclass

import numpy as np

from src.config import Config
from src.errors import DomainError
from src.pressure.engine import choose_truncation, finiteness_check
from src.pressure.potential import Potential
from src.pressure.series import MOMENTS, SeriesSums, ShellSeries
from src.systems.branches import FullBranchMap
from src.utils.logger import log_event


@dataclass(frozen=True)
class GibbsMeasure:
    """
    Equilibrium state of a locally constant potential (a Bernoulli measure
    on the letters) with the moments the spectrum solver needs.

    shell_weights[n-1] is the total weight of shell n (letters share it
    equally); mean_tau and the tau second moments are +inf when they diverge.
    """
    shell_weights: np.ndarray
    letter_counts: np.ndarray
    normalization_defect: float
    pressure: float
    entropy: float
    lyapunov: float
    mean_tau: float
    var_tau: float
    cov_tau_logF: float
    var_logF: float
    gibbs_constant_estimate: float
    truncation_N: int

    @property
    def tau_divergent(self) -> bool:
        return not math.isfinite(self.mean_tau)

    def letter_weight(self, letter: int, system: FullBranchMap) -> float:
        shell, _ = system.shell_of_letter(letter)
        if shell > self.shell_weights.size:
            raise IndexError(f"letter {letter} lies beyond the truncation N={self.truncation_N}")
        return float(self.shell_weights[shell - 1] / self.letter_counts[shell - 1])

    @property
    def letter_weights(self) -> np.ndarray:
        """Weight of a single letter of each shell."""
        return self.shell_weights / self.letter_counts

    def equilibrium_defect(self, potential: Potential) -> float:
        """|h + int psi - P|, with int psi = q(alpha - mean_tau) - b lyapunov."""
        integral = potential.shift - potential.q * self.mean_tau - potential.b * self.lyapunov
        return abs(self.entropy + integral - self.pressure)

    @classmethod
    def from_sums(cls, series: ShellSeries, sums: SeriesSums, table, potential: Potential,
                  gibbs_constant: float) -> "GibbsMeasure":
        total = sums.total
        mass = total[0]
        mean_dt = total[MOMENTS.index("tau")] / mass
        mean_dl = total[MOMENTS.index("slope")] / mass
        var_tau = total[MOMENTS.index("tau_tau")] / mass - mean_dt ** 2
        cov = total[MOMENTS.index("tau_slope")] / mass - mean_dt * mean_dl
        var_slope = total[MOMENTS.index("slope_slope")] / mass - mean_dl ** 2
        log_mass = sums.log_mass
        mean_psi = total[MOMENTS.index("potential")] / mass
        columns = ("log_count", "tau", series.column)
        log_w = series.log_weights({name: getattr(table, name) for name in columns})[0]
        weights = np.exp(log_w - sums.shift) / mass
        return cls(
            shell_weights=weights,
            letter_counts=np.rint(table.count),
            normalization_defect=float(1.0 - weights.sum()),
            pressure=log_mass + potential.shift,
            entropy=log_mass - mean_psi,
            lyapunov=sums.slope_ref + mean_dl,
            mean_tau=sums.tau_ref + mean_dt,
            var_tau=var_tau if math.isfinite(mean_dt) else math.inf,
            cov_tau_logF=cov if math.isfinite(mean_dt) else math.inf,
            var_logF=var_slope,
            gibbs_constant_estimate=gibbs_constant,
            truncation_N=sums.truncation_N,
        )


def _gibbs_constant(system: FullBranchMap, table, b: float) -> float:
    """exp(b * largest gap between log|F'| on a branch and its representative)."""
    spread = np.maximum(table.log_slope_hi - table.log_slope, table.log_slope - table.log_slope_lo)
    return float(math.exp(abs(b) * float(np.max(spread))))


def gibbs_weights(system: FullBranchMap, potential: Potential, truncation_N: int = None,
                  tolerance: float = None, assume_finite: bool = False) -> GibbsMeasure:
    """
    Depth-1 weights w_a = e^{-q tau_a} |F'_a|^{-b} / S over letters <= N, with
    moments including the tail beyond N. `assume_finite` skips the
    finiteness test for callers that stay inside q > 0.
    """
    if not assume_finite:
        check = finiteness_check(system, potential)
        if check.status != "finite":
            raise DomainError(f"{system.name}: no equilibrium state at q={potential.q!r}, b={potential.b!r} ({check.reason})")
    tolerance = tolerance or Config.TOLERANCE
    n = truncation_N or choose_truncation(system, potential, tolerance)
    series = ShellSeries(system, potential.q, potential.b)
    sums = series.evaluate(n)
    table = system.shells(sums.truncation_N)
    measure = GibbsMeasure.from_sums(series, sums, table, potential, _gibbs_constant(system, table, potential.b))
    log_event("gibbs", level=logging.DEBUG, system=system.name, q=potential.q, b=potential.b,
              N=measure.truncation_N, mean_tau=measure.mean_tau, lyapunov=measure.lyapunov,
              entropy=measure.entropy, defect=measure.normalization_defect)
    return measure


def pressure_gradient(system: FullBranchMap, potential: Potential, truncation_N: int = None) -> tuple:
    """(dP/dq, dP/db) = (-int tau, -int log|F'|) under the equilibrium state."""
    measure = gibbs_weights(system, potential, truncation_N)
    return -measure.mean_tau, -measure.lyapunov


def pressure_hessian(system: FullBranchMap, potential: Potential, truncation_N: int = None) -> np.ndarray:
    """Second derivatives of P in (q, b): the covariance matrix of (tau, log|F'|)."""
    m = gibbs_weights(system, potential, truncation_N)
    return np.array([[m.var_tau, m.cov_tau_logF], [m.cov_tau_logF, m.var_logF]])
