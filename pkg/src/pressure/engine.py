import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src.config import Config
from src.errors import DomainError, NotLocallyConstantError, ToleranceNotReachedError
from src.pressure.cylinders import transfer_sandwich
from src.pressure.potential import Potential
from src.pressure.series import ShellSeries
from src.systems.branches import FullBranchMap
from src.utils.logger import log_event, logger


@dataclass(frozen=True)
class PressureEstimate:
    lower: float
    upper: float
    value: float
    truncation_N: int
    depth_n: int
    tail_bound: float
    method: str
    estimate: Optional[float] = None
    history: tuple = field(default_factory=tuple)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float, slack: float = 0.0) -> bool:
        return self.lower - slack <= value <= self.upper + slack


@dataclass(frozen=True)
class FinitenessResult:
    """
    status is 'finite', 'infinite' or 'undetermined'; witness is the log of
    the comparison sum sum_a exp(sup_[a] psi) (inf when it diverges).
    """
    status: str
    witness: float
    truncation_N: int
    reason: str

    @property
    def finite(self) -> Optional[bool]:
        if self.status == "undetermined":
            return None
        return self.status == "finite"

    def __bool__(self):
        return self.status == "finite"


# ---------------------------
# Finiteness
# ---------------------------
def finiteness_check(system: FullBranchMap, potential: Potential, truncation: int = None) -> FinitenessResult:
    """
    Decides convergence of sum_a exp(sup_[a] psi) by comparison with the
    shell tail count(n) e^{-q omega(n)} (shell sup of |F'|^{-b}).
    """
    q, b = potential.q, potential.b
    n = system.truncation_limit(truncation or Config.MIN_TRUNCATION)
    if system.is_finite:
        reason = "finite alphabet"
    elif q < 0:
        return FinitenessResult("infinite", math.inf, n, "q < 0: e^{-q tau} grows along the alphabet")
    elif q > 0:
        reason = "q > 0: e^{-q omega(n)} dominates every polynomial shell growth"
    elif system.growth is None:
        logger.warning(f"{system.name}: no shell growth data, finiteness undetermined at truncation N={n}")
        return FinitenessResult("undetermined", math.nan, n, f"undetermined at truncation N={n}")
    else:
        growth = system.growth
        rate = growth.weight_rate(b)
        if not growth.converges_at_q_zero(b):
            return FinitenessResult(
                "infinite", math.inf, n,
                f"q = 0: shell terms grow at rate {rate:.6g} >= {growth.threshold:g} ({growth.kind})",
            )
        reason = f"q = 0: shell terms decay at rate {rate:.6g} < {growth.threshold:g} ({growth.kind})"

    sums = ShellSeries(system, q, b, slope="lo").evaluate(n)
    witness = sums.shift + math.log(sums.head[0] + sums.tail_upper)
    return FinitenessResult("finite", witness, n, reason)


def _require_finite(system: FullBranchMap, potential: Potential) -> FinitenessResult:
    check = finiteness_check(system, potential)
    if check.status != "finite":
        raise DomainError(
            f"{system.name}: pressure of q={potential.q!r}, b={potential.b!r} is not finite ({check.reason})"
        )
    return check


# ---------------------------
# Truncation choice
# ---------------------------
def choose_truncation(system: FullBranchMap, potential: Potential, target_width: float,
                      min_truncation: int = None, cap: int = None, slope: str = "mid") -> int:
    """
    Smallest N = N0 * 2^k (up to the cap) whose next summand is below
    target_width times the mass of the first shells; the summand bounds
    the width of the integral tail sandwich.
    """
    start = system.truncation_limit(min_truncation or Config.MIN_TRUNCATION)
    limit = system.truncation_limit(cap or Config.TRUNCATION_CAP)
    if system.is_finite or start >= limit:
        return limit
    series = ShellSeries(system, potential.q, potential.b, slope=slope)
    head = system.shells(min(start, 64))
    data = {name: getattr(head, name) for name in ("log_count", "tau", "log_slope", "log_slope_lo", "log_slope_hi")}
    log_w = series.log_weights(data)[0]
    shift = float(np.max(log_w))
    mass = float(np.sum(np.exp(log_w - shift)))
    tau_ref, slope_ref = float(head.tau[0]), float(data[series.column][0])
    n = start
    while n < limit and series.tail_width_proxy(n, shift, tau_ref, slope_ref) > target_width * mass:
        n = min(2 * n, limit)
    return n


# ---------------------------
# Pressure estimates
# ---------------------------
def pressure_locally_constant(system: FullBranchMap, potential: Potential, tolerance: float = None,
                              truncation: int = None, surrogate: bool = False) -> PressureEstimate:
    """
    P = log S with S = sum_{a<=N} e^{-q tau_a} |F'_a|^{-b} + T and T the
    integral tail over the omitted shells. `surrogate` admits analytic maps,
    replacing log|F'_a| by -log mu([a]).
    """
    if not system.locally_constant and not surrogate:
        raise NotLocallyConstantError(
            f"{system.name}: |F'| is not constant on branches; use the cylinder sandwich or surrogate=True"
        )
    tolerance = tolerance or Config.TOLERANCE
    _require_finite(system, potential)
    adaptive = truncation is None
    n = choose_truncation(system, potential, tolerance) if adaptive else truncation
    sums = ShellSeries(system, potential.q, potential.b).evaluate(n)
    lower, upper = sums.log_mass_bounds
    shift = potential.shift
    estimate = PressureEstimate(
        lower=lower + shift,
        upper=upper + shift,
        value=0.5 * (lower + upper) + shift,
        truncation_N=sums.truncation_N,
        depth_n=1,
        tail_bound=sums.tail_upper * math.exp(sums.shift),
        method="surrogate" if not system.locally_constant else "locally_constant",
        estimate=sums.log_mass + shift,
    )
    log_event("pressure", system=system.name, q=potential.q, b=potential.b, alpha=potential.alpha,
              lower=estimate.lower, upper=estimate.upper, N=estimate.truncation_N, method=estimate.method)
    if estimate.width > tolerance:
        if adaptive:
            raise ToleranceNotReachedError(estimate, tolerance)
        log_event("pressure_wide", level=logging.WARNING, width=estimate.width, tolerance=tolerance,
                  N=estimate.truncation_N)
    return estimate


def pressure_cylinder_sandwich(system: FullBranchMap, potential: Potential, depth_n: int = None,
                               truncation_N: int = None, word_cap: int = None,
                               workers: int = None) -> PressureEstimate:
    """
    Rigorous pressure bounds from cylinder sums of depth 1..depth_n over
    letters <= N. Constant-slope systems have no distortion; they fall
    back to the locally constant series at the same truncation.
    """
    depth = depth_n or system.default_depth
    n = truncation_N or Config.CYLINDER_TRUNCATION
    _require_finite(system, potential)
    if system.locally_constant:
        base = pressure_locally_constant(system, potential, truncation=n)
        return PressureEstimate(
            lower=base.lower, upper=base.upper, value=base.value, truncation_N=base.truncation_N,
            depth_n=depth, tail_bound=base.tail_bound, method="cylinder_sandwich", estimate=base.estimate,
            history=tuple((m, base.lower, base.upper) for m in range(1, depth + 1)),
        )
    result = transfer_sandwich(system, potential, depth, n, word_cap=word_cap, workers=workers)
    shift = potential.shift
    lower, upper = result["lower"] + shift, result["upper"] + shift
    history = tuple((m, lo + shift, hi + shift) for m, lo, hi in result["history"])
    return PressureEstimate(
        lower=lower,
        upper=upper,
        value=0.5 * (lower + upper),
        truncation_N=result["truncation_N"],
        depth_n=depth,
        tail_bound=result["tail_bound"],
        method="cylinder_sandwich",
        history=history,
    )


def pressure(system: FullBranchMap, potential: Potential, tolerance: float = None, mode: str = "auto",
             depth_n: int = None, truncation: int = None) -> PressureEstimate:
    """
    mode: 'auto' (series for constant slopes, cylinder sandwich otherwise),
    'series', 'surrogate' or 'sandwich'.
    """
    if mode == "auto":
        mode = "series" if system.locally_constant else "sandwich"
    if mode == "sandwich":
        return pressure_cylinder_sandwich(system, potential, depth_n=depth_n, truncation_N=truncation)
    return pressure_locally_constant(system, potential, tolerance=tolerance, truncation=truncation,
                                     surrogate=(mode == "surrogate"))
