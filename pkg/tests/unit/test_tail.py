import math

import numpy as np
import pytest

from src.errors import DomainError, H1ViolationError, RegressionError
from src.systems.gauss import GaussSystem
from src.systems.linear import FiniteLinearSystem, LinearCountSystem, LinearPolySystem, LuerothSystem
from src.tail.exponent import estimate_tail_exponent, tail_measure_function
from src.tail.h3_probe import h3_ratio_probe
from src.tail.shells import (
    comparable_scaling_check,
    count_bounds_check,
    measure_closure,
    shell_census,
    smallest_growth_constant,
)


class EmptyShellSystem(FiniteLinearSystem):
    """Three branches, the second shell declared empty."""

    def shell_log_count(self, x, smooth: bool = False):
        x = np.asarray(x, dtype=float)
        return np.where(x == 2.0, -np.inf, 0.0)


def test_census_of_lueroth():
    stats = shell_census(LuerothSystem(2), 10)
    assert [s.n for s in stats] == list(range(1, 11))
    assert all(s.count == 1 for s in stats)
    assert stats[2].omega_lo == pytest.approx(9.0) and stats[2].omega_hi == pytest.approx(16.0)
    assert stats[3].measure == pytest.approx(1.0 / 20.0, rel=1e-15)


def test_census_counts_of_linear_count():
    stats = shell_census(LinearCountSystem(3, 2, 1), 8)
    assert [s.count for s in stats] == list(range(1, 9))


def test_census_raises_on_empty_shell():
    system = EmptyShellSystem([0.25, 0.25, 0.25], [1, 2, 3])
    with pytest.raises(H1ViolationError) as info:
        shell_census(system, 3)
    assert info.value.shell == 2


def test_smallest_growth_constant_single_letter_shells():
    stats = shell_census(LuerothSystem(2), 32, epsilons=(0.1, 0.5))
    assert smallest_growth_constant(stats, 0.1) == pytest.approx(math.exp(-0.1))
    # count 1 everywhere, so C = exp(-eps omega(1)) with omega(1) = 1
    assert stats.growth_constants == pytest.approx({0.1: math.exp(-0.1), 0.5: math.exp(-0.5)})
    assert shell_census(LuerothSystem(2), 4).growth_constants == {}


@pytest.mark.parametrize("system", [LuerothSystem(2), LinearPolySystem(2, 1), GaussSystem(2)],
                         ids=["lueroth", "linear_poly", "gauss"])
def test_measure_closure(system):
    result = measure_closure(system, 1024)
    assert result["passed"], result
    lower, upper = result["remainder"]
    assert 0.0 < lower <= upper


def test_comparable_scaling():
    assert comparable_scaling_check(LuerothSystem(2), 256)["worst_ratio"] == pytest.approx(1.0)
    gauss = comparable_scaling_check(GaussSystem(2), 256)
    assert gauss["passed"]
    assert gauss["worst_ratio"] == pytest.approx(4.0)


def test_count_bounds_constants_for_linear_count():
    # count = n, omega'(n) = 2n and c1 = c2 = 1, so every ratio is 1/2
    result = count_bounds_check(LinearCountSystem(3, 2, 1), 256)
    assert result["passed"]
    assert result["c1"] == pytest.approx(1.0)
    assert result["constants"][0] == pytest.approx(0.5)
    assert result["constants"][1] == pytest.approx(0.5)


def test_count_bounds_skips_non_polynomial_scale():
    result = count_bounds_check(FiniteLinearSystem([0.5, 0.25]), 2)
    assert result["passed"] and "skipped" in result


def test_tail_measure_starts_at_full_mass():
    tau, suffix = tail_measure_function(LuerothSystem(2), 4096)
    assert suffix[0] == pytest.approx(1.0, abs=1e-8)
    assert np.all(np.diff(suffix) < 0)
    assert tau[0] == 1.0


@pytest.mark.parametrize(
    "system, beta, tolerance",
    [(LuerothSystem(2), 0.5, 0.02), (LinearPolySystem(3, 1), 1.0 / 3.0, 0.03), (GaussSystem(2), 0.5, 0.05)],
    ids=["lueroth", "linear_poly", "gauss"],
)
def test_tail_exponent(system, beta, tolerance):
    fit = estimate_tail_exponent(system, 2 ** 16)
    assert abs(fit.beta_hat - beta) <= tolerance
    assert fit.points >= 20
    assert fit.r_value < -0.99


def test_tail_exponent_needs_enough_samples():
    with pytest.raises(RegressionError):
        estimate_tail_exponent(LuerothSystem(2), 8)


def test_h3_probe_is_flat_at_the_geometric_potential():
    probe = h3_ratio_probe(LuerothSystem(2), 0.0, 1.0, 64)
    assert probe.passed
    np.testing.assert_allclose(probe.log_ratio, 0.0, atol=1e-9)


def test_h3_probe_near_the_boundary():
    probe = h3_ratio_probe(LuerothSystem(2), 1e-3, 0.9, 256, b_star=1.0)
    assert probe.passed
    assert 0.0 < probe.c1 and 0.0 < probe.c2
    rows = probe.rows()
    assert len(rows) == 256
    assert set(rows[0]) == {"shell_n", "omega_lo", "omega_hi", "ratio", "lower_bound", "upper_bound"}


def test_h3_probe_rejects_infinite_pressure():
    with pytest.raises(DomainError):
        h3_ratio_probe(LuerothSystem(2), -0.1, 1.0, 32)


def test_h3_probe_needs_tail_model():
    with pytest.raises(DomainError):
        h3_ratio_probe(FiniteLinearSystem([0.5, 0.25], [1, 2]), 0.5, 0.5, 2, b_star=0.69)
