import math

import numpy as np

from src.config import Config
from src.errors import ThermoformalError
from src.pressure.engine import choose_truncation, finiteness_check, pressure
from src.pressure.gibbs import gibbs_weights, pressure_gradient
from src.pressure.potential import Potential
from src.rate.fit import default_window, fit_rate_exponent
from src.rate.probes import q_integral_check, scaled_limit_probe
from src.spectrum.curve import check_derivative_identity, q_scan_certificate, solve_curve
from src.spectrum.point import alpha_max, alpha_min, spectrum_b_star
from src.systems.branches import FullBranchMap
from src.systems.geometry import (
    coding_consistency_check,
    expansion_check,
    non_integrability_check,
    partition_check,
)
from src.tail.exponent import estimate_tail_exponent
from src.tail.h3_probe import h3_ratio_probe
from src.tail.shells import comparable_scaling_check, count_bounds_check, measure_closure, shell_census
from src.utils.logger import log_event, logger

CONVEXITY_SLACK = 1e-9
GRADIENT_TOLERANCE = 1e-5
TAIL_BETA_TOLERANCE = 0.05
RATE_TOLERANCE = 0.15
BETA_AGREEMENT = 0.1
DERIVATIVE_TOLERANCE = 1e-3
# relative spacing of the locally refined grid for the derivative identity
DERIVATIVE_STEP = 5e-3
Q_BAND_FACTOR = 10.0


class InvariantSuite:
    """
    Runs every module invariant against one system and returns one record
    per invariant:

        {"module": "pressure", "invariant": "convexity_in_b", "passed": True,
         "details": "min second difference 3.1e-03"}

    A check that raises is recorded as failed with the error as details;
    the suite always runs to the end.
    """

    def __init__(self, system: FullBranchMap, alpha_grid, tolerance: float = None, n_shells: int = 256):
        self.system = system
        self.alpha_grid = np.asarray(alpha_grid, dtype=float)
        self.tolerance = tolerance or Config.TOLERANCE
        self.n_shells = n_shells
        self.records = []
        self.curve = None
        self._b_star = None

    @property
    def b_star(self) -> float:
        if self._b_star is None:
            self._b_star = spectrum_b_star(self.system)
        return self._b_star

    def _record(self, module: str, name: str, passed: bool, details: str):
        self.records.append({"module": module, "invariant": name, "passed": bool(passed), "details": details})

    def _check(self, module: str, name: str, fn):
        try:
            passed, details = fn()
        except (ThermoformalError, ValueError, ArithmeticError) as e:
            logger.error(f"Invariant {module}.{name} raised: {e}")
            passed, details = False, f"{type(e).__name__}: {e}"
        self._record(module, name, passed, details)

    def _not_applicable(self, module: str, name: str, reason: str):
        self._record(module, name, True, f"not applicable: {reason}")

    # ---------------------------
    # systems
    # ---------------------------
    def check_systems(self):
        s = self.system

        def partition():
            r = partition_check(s, 1000)
            return r["passed"], f"{r['branches']} branches, overlaps {r['overlaps']}, total length {r['total_length']:.15g}"

        def expansion():
            r = expansion_check(s, 50)
            return r["passed"], (f"iterate {r['iterate']}: min log|(F^k)'| {r['worst_log_derivative']:.6g} "
                                 f">= {r['required']:.6g}")

        def coding():
            top = s.truncation_limit(3)
            word = [1, top, 1] if top > 1 else [1, 1]
            r = coding_consistency_check(s, word)
            return r["passed"], f"word {r['word']}: [{r['inf']:.12g}, {r['sup']:.12g}]"

        self._check("systems", "partition", partition)
        self._check("systems", "expansion", expansion)
        self._check("systems", "coding_consistency", coding)
        if s.is_finite:
            self._not_applicable("systems", "non_integrability", "finite alphabet")
        else:
            def non_integrable():
                r = non_integrability_check(s, s.truncation_limit(2 ** 17))
                return r["passed"], f"partial sums {[round(v, 6) for v in r['partial_sums']]} vs {r['threshold']}"
            self._check("systems", "non_integrability", non_integrable)

    # ---------------------------
    # tail
    # ---------------------------
    def check_tail(self):
        s, n = self.system, self.n_shells
        if s.is_finite:
            for name in ("h1_growth", "measure_closure", "comparable_scaling", "count_bounds", "h3_sandwich",
                         "tail_exponent"):
                self._not_applicable("tail", name, "finite alphabet")
            return

        def h1():
            stats = shell_census(s, n, epsilons=(0.1,))
            return True, f"{len(stats)} shells, every count >= 1, C(eps=0.1) = {stats.growth_constants[0.1]:.6g}"

        def closure():
            r = measure_closure(s, 1024)
            return r["passed"], f"head {r['head']:.15g} + remainder -> total {r['total']:.15g}"

        def scaling():
            r = comparable_scaling_check(s, n)
            return r["passed"], f"max sup/inf ratio {r['worst_ratio']:.6g} <= K = {r['K']:.6g}"

        def counts():
            r = count_bounds_check(s, n)
            if "skipped" in r:
                return True, f"not applicable: {r['skipped']}"
            return r["passed"], f"c1 = {r['c1']:.4g}, c2 = {r['c2']:.4g}, constants {r['constants']}"

        def h3():
            probe = h3_ratio_probe(s, 1e-3, 0.9 * self.b_star, n, b_star=self.b_star, raise_on_violation=False)
            return probe.passed, f"c1 = {probe.c1:.6g}, c2 = {probe.c2:.6g}, {len(probe.violations)} violations"

        def exponent():
            tail = s.observable.tail
            fit = estimate_tail_exponent(s, s.truncation_limit(2 ** 16))
            if tail is None:
                return True, f"beta_hat = {fit.beta_hat:.6f} (no declared beta)"
            gap = abs(fit.beta_hat - tail.beta)
            return gap <= TAIL_BETA_TOLERANCE, f"beta_hat = {fit.beta_hat:.6f} vs beta = {tail.beta:.6f}"

        self._check("tail", "h1_growth", h1)
        self._check("tail", "measure_closure", closure)
        self._check("tail", "comparable_scaling", scaling)
        self._check("tail", "count_bounds", counts)
        self._check("tail", "h3_sandwich", h3)
        self._check("tail", "tail_exponent", exponent)

    # ---------------------------
    # pressure
    # ---------------------------
    def _series_value(self, q: float, b: float, truncation: int = None) -> float:
        return gibbs_weights(self.system, Potential(q, b), truncation_N=truncation).pressure

    def check_pressure(self):
        s = self.system

        def zero_pressure():
            mode = "series" if s.locally_constant else "sandwich"
            est = pressure(s, Potential(0.0, self.b_star), tolerance=self.tolerance, mode=mode)
            return est.contains(0.0, slack=1e-8), f"P(0, b*) in [{est.lower:.3e}, {est.upper:.3e}]"

        def convexity(axis: str):
            def run():
                if axis == "b":
                    grid = np.linspace(0.25, 1.5, 9)
                    values = np.array([self._series_value(0.5, b) for b in grid])
                else:
                    grid = np.linspace(0.1, 2.0, 9)
                    values = np.array([self._series_value(q, self.b_star) for q in grid])
                second = values[2:] - 2.0 * values[1:-1] + values[:-2]
                return bool(np.all(second >= -CONVEXITY_SLACK)), f"min second difference {second.min():.3e}"
            return run

        def gradient():
            potential = Potential(0.5, 1.0)
            n = choose_truncation(s, potential, 1e-2 * self.tolerance)
            analytic = np.array(pressure_gradient(s, potential, truncation_N=n))
            h = 1e-4
            fd = np.array([
                (self._series_value(0.5 + h, 1.0, n) - self._series_value(0.5 - h, 1.0, n)) / (2 * h),
                (self._series_value(0.5, 1.0 + h, n) - self._series_value(0.5, 1.0 - h, n)) / (2 * h),
            ])
            worst = float(np.max(np.abs(fd - analytic) / np.abs(analytic)))
            return worst < GRADIENT_TOLERANCE, f"max relative error {worst:.3e}"

        def equilibrium():
            potential = Potential(0.5, 1.0)
            defect = gibbs_weights(s, potential).equilibrium_defect(potential)
            return defect <= 1e-8 + self.tolerance, f"|h + int psi - P| = {defect:.3e}"

        def truncation_monotone():
            potential = Potential(0.5, 1.0)
            lowers = [pressure(s, potential, mode="auto", truncation=n).lower for n in (64, 128, 256)]
            steps = np.diff(lowers)
            return bool(np.all(steps >= -1e-12)), f"lower bounds {[f'{v:.12g}' for v in lowers]}"

        def boundary():
            if s.is_finite:
                return True, "not applicable: finite alphabet"
            negative = finiteness_check(s, Potential(-1e-3, 1.0)).status
            positive = finiteness_check(s, Potential(1e-3, 0.0)).status
            ok = negative == "infinite" and positive == "finite"
            details = f"q=-1e-3: {negative}, q=+1e-3 at b=0: {positive}"
            if s.growth is not None:
                edge = s.growth.critical_b()
                below = finiteness_check(s, Potential(0.0, edge - 0.01)).status
                above = finiteness_check(s, Potential(0.0, edge + 0.01)).status
                ok = ok and below == "infinite" and above == "finite"
                details += f"; q=0 across b={edge:.6g}: {below} -> {above}"
            return ok, details

        self._check("pressure", "zero_pressure_at_b_star", zero_pressure)
        self._check("pressure", "convexity_in_b", convexity("b"))
        self._check("pressure", "convexity_in_q", convexity("q"))
        self._check("pressure", "gradient_agreement", gradient)
        self._check("pressure", "equilibrium_identity", equilibrium)
        self._check("pressure", "truncation_monotone", truncation_monotone)
        self._check("pressure", "domain_boundary", boundary)

    # ---------------------------
    # spectrum
    # ---------------------------
    def spectrum_grid(self) -> np.ndarray:
        """The requested grid; finite alphabets use the interior of (alpha_min, alpha_max) instead."""
        if not self.system.is_finite:
            return self.alpha_grid
        lo, hi = alpha_min(self.system), alpha_max(self.system, self.b_star)
        return np.linspace(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo), 8)

    def check_spectrum(self):
        s = self.system
        try:
            self.curve = solve_curve(s, self.spectrum_grid(), self.tolerance, b_star=self.b_star)
        except ThermoformalError as e:
            self._record("spectrum", "curve_solved", False, str(e))
            return
        curve = self.curve
        self._record("spectrum", "curve_solved", not curve.failures,
                     f"{len(curve.points)} points solved, {len(curve.failures)} failed")
        for check in curve.invariants():
            self._record("spectrum", check["invariant"], check["passed"], check["details"])
        if len(curve.points) < 2:
            return
        middle = curve.points[len(curve.points) // 2]

        def derivative():
            alpha = middle.alpha
            local = solve_curve(s, alpha * np.array([1 - DERIVATIVE_STEP, 1.0, 1 + DERIVATIVE_STEP]),
                                self.tolerance, b_star=self.b_star)
            worst = check_derivative_identity(local)
            return worst < DERIVATIVE_TOLERANCE, f"relative error {worst:.3e} around alpha={alpha:.6g}"

        def certificate():
            r = q_scan_certificate(s, middle, tolerance=self.tolerance)
            return r["passed"], (f"min p = {r['min_value']:.3e} at {r['argmin_factor']:.4g} q(alpha), "
                                 f"alpha={r['alpha']:.6g}")

        self._check("spectrum", "derivative_identity", derivative)
        self._check("spectrum", "q_scan_certificate", certificate)

    # ---------------------------
    # rate
    # ---------------------------
    def check_rate(self):
        s, curve = self.system, self.curve
        if s.is_finite:
            for name in ("fit_coherence", "theoretical_exponent", "tail_rate_agreement", "monotone_probe",
                         "q_integral_band"):
                self._not_applicable("rate", name, "finite alphabet")
            return
        if curve is None or len(curve.points) < 2:
            self._record("rate", "curve_available", False, "no solved spectrum curve")
            return
        tail = s.observable.tail
        theoretical = tail.rate_exponent if tail is not None else None
        state = {}

        def coherence():
            fit = fit_rate_exponent(curve, theoretical=theoretical)
            state["fit"] = fit
            return fit.coherent, (f"rate {fit.fitted_exponent:.4f} +- {fit.stderr:.2g}, "
                                  f"q {fit.q_exponent_fit:.4f} +- {fit.q_stderr:.2g}, gap {fit.coherence_gap:.3f}")

        def against_theory():
            fit = state.get("fit")
            if fit is None or theoretical is None:
                return True, "not applicable: no fit or no declared beta"
            gap = abs(fit.fitted_exponent - theoretical)
            return gap <= RATE_TOLERANCE, f"fitted {fit.fitted_exponent:.4f} vs theory {theoretical:.4f}"

        def agreement():
            fit = state.get("fit")
            if fit is None:
                return False, "no rate fit"
            tail_fit = estimate_tail_exponent(s, s.truncation_limit(2 ** 16))
            gap = abs(tail_fit.beta_hat - fit.beta_from_rate)
            return gap <= BETA_AGREEMENT, f"tail beta {tail_fit.beta_hat:.4f} vs rate beta {fit.beta_from_rate:.4f}"

        def monotone():
            probe = scaled_limit_probe(curve, exponents=(0.0,), window=(float(curve.grid[0]), float(curve.grid[-1])))[0]
            steps = np.diff(probe.product)
            return bool(np.all(steps < 0)), f"{probe.product.size} points, max step {steps.max(initial=-math.inf):.3e}"

        def band():
            table = q_integral_check(curve, window=default_window(curve))
            lo, hi = table.band_over(float(curve.grid[0]) * 10.0)
            return lo > 0 and hi / lo <= Q_BAND_FACTOR, f"ratio band [{lo:.6g}, {hi:.6g}]"

        self._check("rate", "fit_coherence", coherence)
        self._check("rate", "theoretical_exponent", against_theory)
        self._check("rate", "tail_rate_agreement", agreement)
        self._check("rate", "monotone_probe", monotone)
        self._check("rate", "q_integral_band", band)

    def run(self) -> list:
        self.records = []
        for step in (self.check_systems, self.check_tail, self.check_pressure, self.check_spectrum, self.check_rate):
            step()
        failed = [r for r in self.records if not r["passed"]]
        log_event("verify", system=self.system.name, invariants=len(self.records), failed=len(failed))
        logger.info(f"Invariant suite detected {len(failed)} failures in {len(self.records)} checks.")
        return self.records
