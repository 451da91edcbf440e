import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, quad_vec

from src.config import Config
from src.systems.branches import FullBranchMap
from src.utils.helper import Helper
from src.utils.logger import log_event, logger

# Moments of the shell weights w_n = count_n e^{psi_n}, with
# dt = tau - tau_ref and dl = log|F'| - slope_ref (shell-1 references keep
# the variances free of cancellation when the weight sits on shell 1).
MOMENTS = ("mass", "tau", "slope", "tau_tau", "tau_slope", "slope_slope", "potential")
TAU_POWERS = (0, 1, 0, 2, 1, 0, 0)

SLOPE_COLUMNS = {"mid": "log_slope", "lo": "log_slope_lo", "hi": "log_slope_hi"}

# log-index (power shells) or index (geometric shells) beyond which exp overflows
SAMPLE_STEP = 0.05
SAMPLE_LIMIT = 700.0
NEGLIGIBLE = 1e-40


@dataclass(frozen=True)
class SeriesSums:
    """
    Moment sums over the whole alphabet, stored relative to e**shift.

    head:  exact sums over shells 1..truncation_N
    tail:  Euler-Maclaurin estimates of the omitted shells (inf if divergent)
    tail_lower, tail_upper: rigorous bounds on the mass tail
    log_mass_slack: widening of the log-mass bounds for inexact branch lengths
    """
    shift: float
    head: np.ndarray
    tail: np.ndarray
    tail_lower: float
    tail_upper: float
    remainder: float
    truncation_N: int
    tau_ref: float
    slope_ref: float
    log_mass_slack: float = 0.0

    @property
    def total(self) -> np.ndarray:
        return self.head + self.tail

    @property
    def divergent(self) -> tuple:
        return tuple(name for name, value in zip(MOMENTS, self.tail) if not np.isfinite(value))

    @property
    def log_mass(self) -> float:
        return self.shift + math.log(self.total[0])

    @property
    def log_mass_bounds(self) -> tuple:
        head = self.head[0]
        return (self.shift + math.log(head + self.tail_lower) - self.log_mass_slack,
                self.shift + math.log(head + self.tail_upper) + self.log_mass_slack)

    def moment(self, name: str) -> float:
        """Normalized moment sum / mass."""
        return float(self.total[MOMENTS.index(name)] / self.total[0])


class ShellSeries:
    """
    Evaluates sum over letters of e^{-q tau_a - b log|F'_a|} and its first
    and second moments for a locally constant potential.

    `slope` picks the per-shell log|F'| column: 'mid' is the locally
    constant representative, 'lo' and 'hi' the cylinder bounds (so 'lo'
    gives the supremum of the weight).
    """

    def __init__(self, system: FullBranchMap, q: float, b: float, slope: str = "mid",
                 workers: int = None, chunk_size: int = None):
        self.system = system
        self.q = float(q)
        self.b = float(b)
        self.column = SLOPE_COLUMNS[slope]
        self.workers = workers or Config.WORKERS
        self.chunk_size = chunk_size or Config.CHUNK_SIZE

    # ---------------------------
    # Weights and moments
    # ---------------------------
    def log_weights(self, data: dict) -> tuple:
        ell = np.asarray(data[self.column], dtype=float)
        tau = np.asarray(data["tau"], dtype=float)
        psi = -self.q * tau - self.b * ell
        return np.asarray(data["log_count"], dtype=float) + psi, psi, tau, ell

    def _moment_terms(self, data: dict, shift: float, tau_ref: float, slope_ref: float) -> np.ndarray:
        """Array of shape (7, m) with the moment integrands at the given shells."""
        with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
            log_w, psi, tau, ell = self.log_weights(data)
            w = np.exp(log_w - shift)
            dt = tau - tau_ref
            dl = ell - slope_ref
            terms = np.stack([w, w * dt, w * dl, w * dt * dt, w * dt * dl, w * dl * dl, w * psi])
        return np.where(w > 0.0, terms, 0.0)

    # ---------------------------
    # Convergence of the omitted tail
    # ---------------------------
    def tail_convergence(self) -> tuple:
        """Per-moment flags: does the tail beyond any truncation converge?"""
        system = self.system
        if system.is_finite:
            return (True,) * len(MOMENTS)
        if self.q < 0:
            return (False,) * len(MOMENTS)
        if self.q > 0:
            return (True,) * len(MOMENTS)
        growth = system.growth
        return tuple(growth.converges_at_q_zero(self.b, power) for power in TAU_POWERS)

    # ---------------------------
    # Evaluation
    # ---------------------------
    def evaluate(self, truncation: int) -> SeriesSums:
        system = self.system
        n = system.truncation_limit(truncation)
        table = system.shells(n)
        data = {name: getattr(table, name) for name in ("log_count", "tau", "log_slope",
                                                          "log_slope_lo", "log_slope_hi")}
        log_w, _, tau, ell = self.log_weights(data)
        shift = float(np.max(log_w))
        tau_ref, slope_ref = float(tau[0]), float(ell[0])

        def partial(lo: int, hi: int) -> np.ndarray:
            chunk = {name: values[lo:hi] for name, values in data.items()}
            return self._moment_terms(chunk, shift, tau_ref, slope_ref).sum(axis=1)

        head = Helper.chunked_sums(partial, 0, table.size, self.chunk_size, self.workers)
        slack = abs(self.b) * system.log_length_slack
        has_tail = not system.is_finite or table.size < system.alphabet_size
        if not has_tail:
            zeros = np.zeros(len(MOMENTS))
            return SeriesSums(shift, head, zeros, 0.0, 0.0, 0.0, table.size, tau_ref, slope_ref, slack)

        convergent = self.tail_convergence()
        if not convergent[0]:
            infinite = np.full(len(MOMENTS), np.inf)
            return SeriesSums(shift, head, infinite, np.inf, np.inf, np.inf, table.size, tau_ref, slope_ref)
        mask = np.array(convergent)
        tail, lower, upper, remainder = self._tail(table.size, shift, tau_ref, slope_ref, mask)
        tail = np.where(mask, tail, np.inf)
        count_slack = system.tail_count_slack(table.size)
        lower, upper = lower * (1.0 - count_slack), upper * (1.0 + count_slack)
        return SeriesSums(shift, head, tail, lower, upper, remainder, table.size, tau_ref, slope_ref, slack)

    # ---------------------------
    # Tail beyond the truncation
    # ---------------------------
    def _integrand(self, shift, tau_ref, slope_ref, mask=None):
        system = self.system
        keep = np.ones(len(MOMENTS), dtype=bool) if mask is None else mask

        def g(x):
            x = np.atleast_1d(np.asarray(x, dtype=float))
            with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
                terms = self._moment_terms(system.smooth_shells(x), shift, tau_ref, slope_ref)
            terms[~keep] = 0.0
            return terms
        return g

    def _tail(self, n: int, shift: float, tau_ref: float, slope_ref: float, mask: np.ndarray) -> tuple:
        """
        Sum over shells k > n of the smooth continuation g(k):
        estimate  int_{n+1}^inf g + g(n+1)/2 - g'(n+1)/12,
        bounds    [int_{n+1}^inf g, int_n^inf g] for a decreasing mass term.
        Divergent moments (mask False) are left at zero here.
        """
        g = self._integrand(shift, tau_ref, slope_ref, mask)
        a = float(n + 1)
        power = self.system.growth.kind == "power"

        # integrate in u = log x for power shells, in x for geometric shells
        if power:
            to_x, start = np.exp, math.log(a)
        else:
            def to_x(u):
                return u
            start = a

        def h(u):
            u = np.atleast_1d(u)
            x = to_x(u)
            jacobian = x if power else np.ones_like(x)
            return g(x) * jacobian

        grid = np.arange(start, SAMPLE_LIMIT, SAMPLE_STEP)
        samples = h(grid)
        peaks = np.max(np.abs(samples), axis=1)
        if not np.any(peaks > 0):
            zeros = np.zeros(len(MOMENTS))
            return zeros, 0.0, 0.0, 0.0
        scales = np.where(peaks > 0, peaks, 1.0)
        alive = np.nonzero(np.any(np.abs(samples) > NEGLIGIBLE * scales[:, None], axis=0))[0]
        end = float(grid[min(alive[-1] + 2, grid.size - 1)])
        peak_at = float(grid[int(np.argmax(samples[0]))])
        points = [peak_at] if start < peak_at < end else None

        integral, error = quad_vec(lambda u: h(u)[:, 0] / scales, start, end,
                                   epsabs=0.0, epsrel=1e-12, norm="max", points=points, limit=2000)
        integral = integral * scales

        step = 0.01 * a if power else 0.01
        g_a = g(a)[:, 0]
        g_prime = (g(a + step)[:, 0] - g(a - step)[:, 0]) / (2.0 * step)
        estimate = integral + 0.5 * g_a - g_prime / 12.0

        wide = 0.125 * a if power else 0.25
        third = (g(a + 2 * wide)[0, 0] - 2 * g(a + wide)[0, 0] + 2 * g(a - wide)[0, 0]
                 - g(a - 2 * wide)[0, 0]) / (2.0 * wide ** 3)
        remainder = abs(third) / 720.0

        mass_segment = quad(lambda x: g(x)[0, 0], a - 1.0, a, epsabs=0.0, epsrel=1e-12)[0]
        mass_grid = samples[0] / (to_x(grid) if power else 1.0)
        decreasing = (g(a - 1.0)[0, 0] >= g_a[0]
                      and bool(np.all(np.diff(mass_grid) <= 1e-15 * max(g_a[0], NEGLIGIBLE))))
        if decreasing:
            lower, upper = integral[0], integral[0] + mass_segment
        else:
            variation = float(np.sum(np.abs(np.diff(mass_grid)))) + abs(g_a[0])
            lower, upper = max(estimate[0] - variation, 0.0), estimate[0] + variation
            logger.debug(f"tail summand not monotone beyond N={n}; using variation bound {variation:.3e}")
        estimate[0] = min(max(estimate[0], lower), upper)

        log_event("series_tail", level=logging.DEBUG, system=self.system.name, q=self.q, b=self.b, N=n,
                  mass_tail=float(estimate[0]), quad_error=float(np.max(error)), remainder=remainder)
        return estimate, float(lower), float(upper), remainder

    # ---------------------------
    # Truncation choice
    # ---------------------------
    def tail_width_proxy(self, n: int, shift: float, tau_ref: float, slope_ref: float) -> float:
        """Summand at shell n relative to e**shift; bounds the per-shell tail sandwich width."""
        return float(self._integrand(shift, tau_ref, slope_ref)(float(n))[0, 0])
