import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.stats import linregress

from src.errors import EmptyCurveError, InsufficientPointsError, TailFitError
from src.rate.fit import default_window, window_points
from src.spectrum.curve import SpectrumCurve
from src.utils.logger import log_event, logger

GROWTH_FACTOR = 3.0


@dataclass(frozen=True)
class QIntegralTable:
    """(b* - b(alpha)) / int_alpha^inf q(t) dt per solved alpha."""
    alpha: np.ndarray
    gap: np.ndarray
    integral: np.ndarray
    ratio: np.ndarray
    q_law: tuple

    @property
    def band(self) -> tuple:
        return float(np.min(self.ratio)), float(np.max(self.ratio))

    def band_over(self, lo: float) -> tuple:
        keep = self.alpha >= lo
        return float(np.min(self.ratio[keep])), float(np.max(self.ratio[keep]))


def q_integral_check(curve: SpectrumCurve, b_star: float = None, window: tuple = None,
                     alpha_end: float = None) -> QIntegralTable:
    """
    int_alpha^inf q = trapezoid in log t over the grid (q t d(log t)) plus
    the analytic tail of the power law q ~ c t^k fitted on the window and
    anchored at the last point.

    Finite alphabets end the spectrum at alpha_end (the b*-mean of tau,
    where q vanishes); the last stretch is then a linear trapezoid to zero.
    """
    pts = curve.points
    if len(pts) < 2:
        raise InsufficientPointsError(f"q integral needs 2 solved points, got {len(pts)}")
    b_star = curve.b_star if b_star is None else b_star
    alpha = curve.alphas
    q = curve.column("q")

    fit_pts = window_points(curve, window or default_window(curve))
    if len(fit_pts) < 2:
        fit_pts = pts[-2:]
    law = linregress(np.log([p.alpha for p in fit_pts]), np.log([p.q for p in fit_pts]))
    k = float(law.slope)
    top = alpha[-1]
    if alpha_end is not None:
        beyond = 0.5 * q[-1] * (alpha_end - top)
    elif k < -1.0:
        beyond = -q[-1] * top / (k + 1.0)
    else:
        raise TailFitError(f"fitted q-law exponent {k:.4f} is not below -1; the tail integral diverges")

    log_alpha = np.log(alpha)
    # cumulative from the left, turned into integrals from alpha_i to the last point
    running = cumulative_trapezoid(q * alpha, log_alpha, initial=0.0)
    integral = running[-1] - running + beyond
    gap = b_star - curve.column("b")
    ratio = gap / integral
    table = QIntegralTable(alpha=alpha, gap=gap, integral=integral, ratio=ratio,
                           q_law=(math.exp(float(law.intercept)), k))
    log_event("q_integral", system=curve.system_name, band=list(table.band), q_exponent=k)
    return table


@dataclass(frozen=True)
class ScaledLimit:
    """
    (b* - b(alpha)) alpha^x along the tail of the grid.

    `classification` is the observed trend. `expected` is decaying below the
    threshold beta/(1-beta) and growing above it, since b* - b(alpha) falls
    like alpha^(-beta/(1-beta)); `display_expected` is the reversed reading
    that reports carry alongside.
    """
    x: float
    alpha: np.ndarray
    product: np.ndarray
    classification: str
    threshold: float

    @property
    def expected(self) -> str:
        if not math.isfinite(self.threshold) or self.x == self.threshold:
            return "indeterminate"
        return "decaying" if self.x < self.threshold else "growing"

    @property
    def display_expected(self) -> str:
        flipped = {"decaying": "growing", "growing": "decaying"}
        return flipped.get(self.expected, "indeterminate")


def classify(product: np.ndarray) -> str:
    """Compares the mean of the last third of a sequence with the first third."""
    third = max(product.size // 3, 1)
    first, last = float(np.mean(product[:third])), float(np.mean(product[-third:]))
    if last >= GROWTH_FACTOR * first:
        return "growing"
    if last * GROWTH_FACTOR <= first:
        return "decaying"
    return "indeterminate"


def scaled_limit_probe(curve: SpectrumCurve, b_star: float = None, exponents=(0.0, 0.5, 1.5),
                       window: tuple = None, threshold: float = math.nan) -> list:
    if not curve.points:
        raise EmptyCurveError("no solved spectrum points to probe")
    b_star = curve.b_star if b_star is None else b_star
    pts = window_points(curve, window or default_window(curve)) or curve.points
    alpha = np.array([p.alpha for p in pts])
    gap = b_star - np.array([p.b for p in pts])
    results = []
    for x in exponents:
        product = gap * alpha ** float(x)
        results.append(ScaledLimit(x=float(x), alpha=alpha, product=product,
                                   classification=classify(product), threshold=float(threshold)))
    for r in results:
        if r.expected != "indeterminate" and r.classification not in (r.expected, "indeterminate"):
            logger.warning(f"x={r.x}: product is {r.classification}, expected {r.expected}")
    log_event("scaled_limit", system=curve.system_name, exponents=[r.x for r in results],
              classes=[r.classification for r in results])
    return results
