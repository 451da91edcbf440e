import math

import numpy as np
import pytest

from src.config import Config
from src.errors import (
    DomainError,
    NotLocallyConstantError,
    SolverError,
    ToleranceNotReachedError,
    WordCountOverflowError,
)
from src.pressure.dimension import bowen_dimension, find_root
from src.pressure.engine import (
    choose_truncation,
    finiteness_check,
    pressure,
    pressure_cylinder_sandwich,
    pressure_locally_constant,
)
from src.pressure.gibbs import gibbs_weights, pressure_gradient, pressure_hessian
from src.pressure.potential import Potential
from src.pressure.series import ShellSeries
from src.systems.gauss import GaussSystem
from src.systems.linear import (
    FiniteLinearSystem,
    LinearCountSystem,
    LinearExpSystem,
    LinearPolySystem,
    LuerothSystem,
)
from src.systems.manneville_pomeau import MannevillePomeauInduced

GOLDEN_DIMENSION = math.log2((1.0 + math.sqrt(5.0)) / 2.0)


def moran_system():
    return FiniteLinearSystem([0.5, 0.25])


# ---------------------------
# Zero pressure and closed forms
# ---------------------------
@pytest.mark.parametrize(
    "system",
    [LuerothSystem(2), LinearPolySystem(2, 1), LinearCountSystem(3, 2, 1), LinearExpSystem(0.5)],
    ids=["lueroth", "linear_poly", "linear_count", "linear_exp"],
)
def test_zero_pressure_at_geometric_potential(system):
    est = pressure_locally_constant(system, Potential(0.0, 1.0))
    assert est.contains(0.0, slack=1e-12)
    assert abs(est.estimate) < 1e-10
    assert est.width <= Config.TOLERANCE


def test_lueroth_head_telescopes():
    sums = ShellSeries(LuerothSystem(2), 0.0, 1.0).evaluate(1000)
    head = sums.head[0] * math.exp(sums.shift)
    assert head == pytest.approx(1.0 - 1.0 / 1001.0, rel=1e-14)


@pytest.mark.parametrize("b", [0.0, 0.5, 1.0, 2.0])
def test_finite_pressure_closed_form(b):
    est = pressure(moran_system(), Potential(0.0, b))
    assert est.value == pytest.approx(math.log(2.0 ** -b + 4.0 ** -b), abs=1e-14)
    assert est.width == 0.0


def test_alpha_shifts_pressure():
    system = LuerothSystem(2)
    plain = pressure(system, Potential(0.5, 1.0)).value
    shifted = pressure(system, Potential(0.5, 1.0, alpha=3.0)).value
    assert shifted - plain == pytest.approx(1.5, abs=1e-12)


# ---------------------------
# Finiteness
# ---------------------------
def test_finiteness_domain_of_lueroth():
    system = LuerothSystem(2)
    assert finiteness_check(system, Potential(-0.1, 1.0)).status == "infinite"
    assert finiteness_check(system, Potential(0.0, 0.45)).status == "infinite"
    assert finiteness_check(system, Potential(0.0, 0.55)).status == "finite"
    assert finiteness_check(system, Potential(0.1, 0.0)).status == "finite"


def test_finite_alphabet_is_always_finite():
    assert finiteness_check(moran_system(), Potential(-5.0, -1.0))


def test_pressure_outside_domain_raises():
    with pytest.raises(DomainError):
        pressure(LuerothSystem(2), Potential(-0.1, 1.0))


def test_potential_domain():
    assert Potential(0.0, 1.0).in_domain(1.0)
    assert not Potential(0.0, 0.9).in_domain(1.0)
    assert Potential(0.1, 0.0).in_domain(1.0)


# ---------------------------
# Truncation
# ---------------------------
def test_truncation_grows_as_q_vanishes():
    system = LuerothSystem(2)
    fast = choose_truncation(system, Potential(1.0, 1.0), 1e-9)
    # e^{-q n^2} only cuts the tail once q n^2 is large; at q = 1e-9 the n^-2 decay must do it
    slow = choose_truncation(system, Potential(1e-9, 1.0), 1e-9)
    assert fast == Config.MIN_TRUNCATION
    assert slow > fast
    assert slow <= Config.TRUNCATION_CAP


def test_lower_bounds_increase_with_truncation():
    system = LuerothSystem(2)
    lowers = [pressure(system, Potential(0.5, 1.0), truncation=n).lower for n in (16, 64, 256, 1024)]
    assert all(b >= a - 1e-15 for a, b in zip(lowers, lowers[1:]))


def test_tolerance_not_reached_at_cap(monkeypatch):
    monkeypatch.setattr(Config, "TRUNCATION_CAP", 4096)
    with pytest.raises(ToleranceNotReachedError):
        pressure_locally_constant(LuerothSystem(2), Potential(0.0, 1.0), tolerance=1e-15)


def test_analytic_map_needs_sandwich_or_surrogate():
    with pytest.raises(NotLocallyConstantError):
        pressure_locally_constant(GaussSystem(2), Potential(0.0, 1.0))
    est = pressure_locally_constant(GaussSystem(2), Potential(0.0, 1.0), surrogate=True)
    assert est.method == "surrogate"
    assert est.contains(0.0, slack=1e-12)


# ---------------------------
# Cylinder sandwich
# ---------------------------
def test_gauss_sandwich_contains_zero_at_b_one():
    est = pressure_cylinder_sandwich(GaussSystem(2), Potential(0.0, 1.0), depth_n=1, truncation_N=50)
    assert est.lower <= 0.0 <= est.upper
    assert est.method == "cylinder_sandwich"
    assert len(est.history) == 1


def test_mp_sandwich_contains_zero_at_b_one():
    est = pressure_cylinder_sandwich(MannevillePomeauInduced(2.0), Potential(0.0, 1.0), depth_n=1, truncation_N=50)
    assert est.lower <= 1e-12
    assert est.upper >= -1e-12


def test_sandwich_word_cap(monkeypatch):
    monkeypatch.setattr(Config, "WORD_CAP", 1000)
    with pytest.raises(WordCountOverflowError):
        pressure_cylinder_sandwich(GaussSystem(2), Potential(0.0, 1.0), depth_n=3, truncation_N=200)


def test_constant_slope_sandwich_matches_series():
    system = LuerothSystem(2)
    sandwich = pressure_cylinder_sandwich(system, Potential(0.5, 1.0), depth_n=2, truncation_N=200)
    series = pressure_locally_constant(system, Potential(0.5, 1.0), truncation=200)
    assert sandwich.lower == series.lower and sandwich.upper == series.upper


# ---------------------------
# Gibbs measures
# ---------------------------
def test_gauss_surrogate_weights_are_gauss_measure():
    measure = gibbs_weights(GaussSystem(2), Potential(0.0, 1.0))
    assert measure.letter_weights[0] == pytest.approx(math.log2(4.0 / 3.0), abs=1e-8)
    assert measure.letter_weight(2, GaussSystem(2)) == pytest.approx(math.log2(9.0 / 8.0), abs=1e-8)


def test_tau_mean_diverges_at_q_zero():
    measure = gibbs_weights(LuerothSystem(2), Potential(0.0, 1.0))
    assert measure.tau_divergent
    assert math.isfinite(measure.lyapunov)


@pytest.mark.parametrize(
    "system", [LuerothSystem(2), LinearCountSystem(3, 2, 1), moran_system(), GaussSystem(2)],
    ids=["lueroth", "linear_count", "moran", "gauss"],
)
def test_equilibrium_identity(system):
    potential = Potential(0.5, 1.0)
    measure = gibbs_weights(system, potential)
    assert measure.equilibrium_defect(potential) < 1e-8
    assert abs(measure.normalization_defect) < 1e-8


@pytest.mark.parametrize("system", [LuerothSystem(2), LinearPolySystem(2, 1), MannevillePomeauInduced(2.0)],
                         ids=["lueroth", "linear_poly", "mp_induced"])
def test_gradient_matches_finite_differences(system):
    potential = Potential(0.5, 1.0)
    n = choose_truncation(system, potential, 1e-11)

    def p(q, b):
        return gibbs_weights(system, Potential(q, b), truncation_N=n).pressure

    h = 1e-4
    fd = np.array([(p(0.5 + h, 1.0) - p(0.5 - h, 1.0)) / (2 * h), (p(0.5, 1.0 + h) - p(0.5, 1.0 - h)) / (2 * h)])
    analytic = np.array(pressure_gradient(system, potential, truncation_N=n))
    np.testing.assert_allclose(fd, analytic, rtol=1e-5)


def test_hessian_is_a_covariance():
    hessian = pressure_hessian(LuerothSystem(2), Potential(0.5, 1.0))
    assert hessian[0, 1] == hessian[1, 0]
    assert np.all(np.linalg.eigvalsh(hessian) >= -1e-12)


@pytest.mark.parametrize("system", [LuerothSystem(2), LinearExpSystem(0.5), moran_system()],
                         ids=["lueroth", "linear_exp", "moran"])
def test_pressure_is_convex(system):
    b_grid = np.linspace(0.25, 1.5, 9)
    values = np.array([pressure(system, Potential(0.5, b)).value for b in b_grid])
    assert np.all(values[2:] - 2 * values[1:-1] + values[:-2] >= -1e-9)
    q_grid = np.linspace(0.1, 2.0, 9)
    values = np.array([pressure(system, Potential(q, 1.0)).value for q in q_grid])
    assert np.all(values[2:] - 2 * values[1:-1] + values[:-2] >= -1e-9)


# ---------------------------
# Bowen dimension
# ---------------------------
def test_moran_dimension():
    est = bowen_dimension(moran_system())
    assert est.value == pytest.approx(GOLDEN_DIMENSION, abs=1e-10)
    assert est.method == "series"


def test_find_root_uses_tight_tolerances():
    assert find_root(lambda t: t * t - 2.0, 1.0, 2.0, xtol=1e-15) == pytest.approx(math.sqrt(2.0), abs=1e-14)


def test_find_root_without_sign_change():
    with pytest.raises(SolverError, match="root of"):
        find_root(lambda t: t * t + 1.0, 0.0, 1.0)


def test_lueroth_dimension_is_one():
    est = bowen_dimension(LuerothSystem(2))
    assert est.value == pytest.approx(1.0, abs=1e-8)
    assert est.lower <= 1.0 + 1e-12 and est.upper >= 1.0 - 1e-12


def test_truncated_dimensions_increase_towards_one():
    system = LuerothSystem(2)
    values = [bowen_dimension(system.truncate(n)).value for n in (2, 10, 50)]
    assert values[0] < values[1] < values[2] < 1.0


@pytest.mark.slow
def test_gauss_dimension_sandwich():
    est = bowen_dimension(GaussSystem(2), depth_n=2, truncation=200)
    assert est.method == "cylinder_sandwich"
    assert est.width < 0.02
    assert est.upper >= 0.99
    assert est.lower <= 1.0 + 1e-6


def test_linear_count_fractional_counts_widen_the_bounds():
    system = LinearCountSystem(3.5, 2, 1.5)
    assert 0.0 < system.log_length_slack < 1e-10
    assert 0.0 < system.tail_count_slack(1024) < 1e-4
    estimate = pressure_locally_constant(system, Potential(0.0, 1.0), truncation=4096)
    assert estimate.lower <= 0.0 <= estimate.upper
    assert estimate.width >= 2.0 * system.log_length_slack
