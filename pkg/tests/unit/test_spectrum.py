import math

import numpy as np
import pytest
from scipy.optimize import brentq, minimize_scalar
from scipy.special import logsumexp

import src.spectrum.point as point_module
from src.errors import DomainError
from src.spectrum.curve import check_derivative_identity, q_scan_certificate, solve_curve
from src.spectrum.point import alpha_max, alpha_min, initial_guess, solve_point, spectrum_b_star
from src.systems.linear import FiniteLinearSystem, LuerothSystem

# two branches of length 1/2 with tau = 1 and tau = 2
TWO_BRANCH_B = 2.0 - 0.75 * math.log2(3.0)


def two_branch():
    return FiniteLinearSystem([0.5, 0.5], [1, 2])


def test_two_branch_range():
    system = two_branch()
    assert alpha_min(system) == 1.0
    assert spectrum_b_star(system) == pytest.approx(1.0, abs=1e-10)
    assert alpha_max(system, 1.0) == pytest.approx(1.5, abs=1e-12)


def test_infinite_systems_have_no_upper_end():
    assert alpha_max(LuerothSystem(2), 1.0) == math.inf


def test_two_branch_closed_form():
    point = solve_point(two_branch(), 1.25)
    assert point.q == pytest.approx(math.log(3.0), abs=1e-7)
    assert point.b == pytest.approx(TWO_BRANCH_B, abs=1e-9)
    assert point.b == pytest.approx(0.8112781245, abs=1e-9)
    assert point.lyapunov == pytest.approx(math.log(2.0), abs=1e-12)
    assert point.residual_p <= 1e-9 and point.residual_dp <= 1e-9


def test_solution_satisfies_entropy_identity():
    point = solve_point(two_branch(), 1.1)
    assert point.entropy_defect < 1e-8
    assert point.mean_tau == pytest.approx(1.1, rel=1e-9)


def test_initial_guess_is_close_to_the_solution():
    q, b = initial_guess(two_branch(), 1.25)
    assert q == pytest.approx(math.log(3.0), rel=1e-2)
    assert b == pytest.approx(TWO_BRANCH_B, abs=1e-6)


def test_solve_from_a_given_guess():
    point = solve_point(two_branch(), 1.25, guess=(1.0, 0.8))
    assert point.b == pytest.approx(TWO_BRANCH_B, abs=1e-9)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5, 2.0])
def test_points_outside_the_open_range_are_refused(alpha):
    with pytest.raises(DomainError):
        solve_point(two_branch(), alpha)


def test_curve_grid_must_increase_and_start_above_alpha_min():
    with pytest.raises(DomainError):
        solve_curve(two_branch(), [1.2, 1.1])
    with pytest.raises(DomainError):
        solve_curve(two_branch(), [1.0, 1.2])


def test_finite_curve_invariants():
    curve = solve_curve(two_branch(), np.linspace(1.1, 1.4, 7))
    assert not curve.failures
    assert len(curve.points) == 7
    for record in curve.invariants():
        assert record["passed"], record
    assert np.all(curve.gaps > 0)


def test_curve_records_failures_and_keeps_going():
    # 1.5 is the b*-mean of tau, where q(alpha) reaches zero
    curve = solve_curve(two_branch(), [1.2, 1.3, 1.5])
    assert len(curve.points) == 2
    assert [alpha for alpha, _ in curve.failures] == [1.5]


def test_derivative_identity_on_a_fine_grid():
    curve = solve_curve(two_branch(), np.linspace(1.2, 1.3, 11))
    assert check_derivative_identity(curve) < 1e-3


def test_q_scan_certificate():
    point = solve_point(two_branch(), 1.25)
    certificate = q_scan_certificate(two_branch(), point)
    assert certificate["passed"], certificate
    assert certificate["argmin_factor"] == pytest.approx(1.0)


def test_lueroth_point():
    point = solve_point(LuerothSystem(2), 100.0)
    assert 0.0 < point.b < 1.0
    assert point.q > 0.0
    assert point.residual_p <= 1e-9


@pytest.mark.slow
def test_lueroth_curve_invariants():
    curve = solve_curve(LuerothSystem(2), np.geomspace(10.0, 1e6, 25))
    assert not curve.failures
    for record in curve.invariants():
        assert record["passed"], record
    assert check_derivative_identity(curve) < 5e-2


def brute_force_point(alpha, n_letters=20):
    """b(alpha) as min over q of the root b_q of an explicit finite Lueroth sum, refined by bounded search."""
    n = np.arange(1, n_letters + 1, dtype=float)
    tau, log_slope = n ** 2, np.log(n * (n + 1.0))

    def b_of(log_q):
        q = math.exp(log_q)

        def p(b):
            return logsumexp(-q * tau - b * log_slope) + q * alpha

        hi = 1.0
        while p(hi) >= 0.0:
            hi *= 2.0
        return brentq(p, 0.0, hi, xtol=1e-14)

    grid = np.linspace(-12.0, 3.0, 301)
    k = int(np.argmin([b_of(u) for u in grid]))
    best = minimize_scalar(b_of, bounds=(grid[k - 1], grid[k + 1]), method="bounded", options={"xatol": 1e-10})
    return math.exp(best.x), float(best.fun)


@pytest.mark.parametrize("alpha", [1.5, 2.0, 3.0, 4.0, 6.0])
def test_truncated_system_matches_brute_force(alpha):
    point = solve_point(LuerothSystem(2).truncate(20), alpha)
    q, b = brute_force_point(alpha)
    assert point.b == pytest.approx(b, abs=1e-6)
    assert point.q == pytest.approx(q, rel=1e-6, abs=1e-6)


def test_residuals_are_reported_unscaled_and_relative():
    point = solve_point(two_branch(), 1.25)
    assert point.residual_dp <= 1e-9
    assert point.residual_dp_rel == pytest.approx(point.residual_dp / 1.25)
    names = [r["invariant"] for r in solve_curve(two_branch(), [1.2, 1.3]).invariants()]
    assert "residuals" in names and "dpdq_absolute" in names


def test_b_of_q_skips_q_without_root(monkeypatch):
    monkeypatch.setattr(point_module, "SCAN_MAX_B", 1.0)
    # p(10, 10, 1) is about 90, so no root below b = 1
    assert point_module._b_of_q(LuerothSystem(2), 10.0, 10.0, 1024) == math.inf


def test_initial_guess_past_the_first_decade():
    q, b = initial_guess(LuerothSystem(2), 1e4)
    assert 0.0 < q < 50.0 / 1e4
    assert 0.0 < b < 1.0


def test_lueroth_curve_from_alpha_ten():
    curve = solve_curve(LuerothSystem(2), [10.0, 20.0, 40.0])
    assert not curve.failures
    assert len(curve.points) == 3
