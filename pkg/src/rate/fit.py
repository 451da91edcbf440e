import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import linregress

from src.errors import EmptyCurveError, GapBelowNoiseError, InsufficientPointsError
from src.spectrum.curve import SpectrumCurve
from src.utils.logger import log_event, logger

MIN_FIT_POINTS = 8
NOISE_FACTOR = 100.0
# slack on top of the combined standard errors for the epsilon-losses of the q-law
COHERENCE_SLACK = 0.1


@dataclass(frozen=True)
class RateFit:
    """
    fitted_exponent: -slope of log(b* - b(alpha)) against log alpha
    q_exponent_fit:  slope of log q(alpha) against log alpha
    theoretical:     beta/(1-beta) when the tail model is known (nan otherwise)
    """
    fitted_exponent: float
    theoretical: float
    stderr: float
    window: tuple
    q_exponent_fit: float
    q_stderr: float
    intercept: float
    q_intercept: float
    points: int

    @property
    def theoretical_q(self) -> float:
        return -(1.0 + self.theoretical) if math.isfinite(self.theoretical) else math.nan

    @property
    def beta_from_rate(self) -> float:
        """beta solving fitted_exponent = beta/(1-beta)."""
        return self.fitted_exponent / (1.0 + self.fitted_exponent)

    @property
    def coherence_gap(self) -> float:
        """|q_exponent_fit + 1/(1 - beta_from_rate)|; the two fits describe one law."""
        return abs(self.q_exponent_fit + 1.0 + self.fitted_exponent)

    @property
    def coherent(self) -> bool:
        return self.coherence_gap <= 3.0 * (self.stderr + self.q_stderr) + COHERENCE_SLACK


def default_window(curve: SpectrumCurve) -> tuple:
    """The last two decades of the grid, never reaching into the first decade."""
    lo_grid, hi_grid = float(curve.grid[0]), float(curve.grid[-1])
    return max(hi_grid / 100.0, 10.0 * lo_grid), hi_grid


def window_points(curve: SpectrumCurve, window: tuple) -> list:
    lo, hi = window
    return [p for p in curve.points if lo * (1 - 1e-12) <= p.alpha <= hi * (1 + 1e-12)]


def fit_rate_exponent(curve: SpectrumCurve, b_star: float = None, window: tuple = None,
                      theoretical: float = None) -> RateFit:
    """
    Least-squares slopes of log(b* - b) and log q against log alpha over the
    window. Every used point must carry a gap at least 100x its residual.
    """
    if not curve.points:
        raise EmptyCurveError("no solved spectrum points to fit")
    b_star = curve.b_star if b_star is None else b_star
    window = window or default_window(curve)
    pts = window_points(curve, window)
    if len(pts) < MIN_FIT_POINTS:
        raise InsufficientPointsError(
            f"rate fit needs {MIN_FIT_POINTS} points in window {window}, got {len(pts)}"
        )
    for p in pts:
        gap = b_star - p.b
        noise = max(p.residual_p / p.lyapunov, p.residual_p)
        if not gap > NOISE_FACTOR * noise:
            raise GapBelowNoiseError(p.alpha, gap, noise)

    log_alpha = np.log([p.alpha for p in pts])
    gap_fit = linregress(log_alpha, np.log([b_star - p.b for p in pts]))
    q_fit = linregress(log_alpha, np.log([p.q for p in pts]))
    result = RateFit(
        fitted_exponent=-float(gap_fit.slope),
        theoretical=math.nan if theoretical is None else float(theoretical),
        stderr=float(gap_fit.stderr),
        window=(float(window[0]), float(window[1])),
        q_exponent_fit=float(q_fit.slope),
        q_stderr=float(q_fit.stderr),
        intercept=float(gap_fit.intercept),
        q_intercept=float(q_fit.intercept),
        points=len(pts),
    )
    logger.info(f"Rate fit over {result.points} points: exponent {result.fitted_exponent:.4f} "
                f"(theory {result.theoretical:.4f}), q-exponent {result.q_exponent_fit:.4f}")
    log_event("rate_fit", system=curve.system_name, fitted=result.fitted_exponent, stderr=result.stderr,
              theoretical=result.theoretical, q_fit=result.q_exponent_fit, q_stderr=result.q_stderr,
              window=list(result.window), points=result.points)
    if not result.coherent:
        logger.warning(f"q-exponent {result.q_exponent_fit:.4f} and rate exponent "
                       f"{result.fitted_exponent:.4f} disagree by {result.coherence_gap:.3f}")
    return result
