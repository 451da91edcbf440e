import math

import numpy as np
import pytest

from src.errors import ParameterRangeError
from src.systems.builtins import BUILTIN_SYSTEMS, build_builtin, build_system, descriptor_text, system_from_descriptor
from src.systems.gauss import GaussSystem, gauss_measure
from src.systems.geometry import (
    coding_consistency_check,
    cylinder_derivative_bounds,
    expansion_check,
    non_integrability_check,
    partition_check,
    word_block,
)
from src.systems.linear import FiniteLinearSystem, LinearCountSystem, LinearPolySystem, LuerothSystem
from src.systems.manneville_pomeau import MannevillePomeauInduced, left_preimages, mp_branch_table

BUILTIN_PARAMS = {
    "lueroth": {"r": "2"},
    "gauss": {"r": "2"},
    "linear_poly": {"r": "2", "s": "1"},
    "linear_count": {"a": "3", "b": "2", "c": "1"},
    "linear_exp": {"beta": "0.5"},
    "mp_induced": {"lambda": "2"},
    "finite_linear": {"lengths": "0.5,0.25", "taus": "1,2"},
}


def test_every_builtin_has_params_here():
    assert set(BUILTIN_PARAMS) == set(BUILTIN_SYSTEMS)


@pytest.mark.parametrize("name", sorted(BUILTIN_PARAMS))
def test_builtin_partition_and_expansion(name):
    system = build_system(name, BUILTIN_PARAMS[name])
    assert partition_check(system, 200)["passed"]
    assert expansion_check(system, 20)["passed"]


@pytest.mark.parametrize("name", sorted(BUILTIN_PARAMS))
def test_builtin_coding_consistency(name):
    system = build_system(name, BUILTIN_PARAMS[name])
    top = system.truncation_limit(3)
    assert coding_consistency_check(system, [1, top, 1])["passed"]


@pytest.mark.parametrize("name", ["lueroth", "gauss", "linear_poly", "mp_induced"])
def test_non_integrable_tau(name):
    system = build_system(name, BUILTIN_PARAMS[name])
    result = non_integrability_check(system, 2 ** 15)
    assert result["passed"]
    assert result["partial_sums"][-1] > 10.0


def test_lueroth_branch_geometry():
    system = LuerothSystem(2)
    branch = system.branch(3)
    assert branch.interval == (0.25, 1.0 / 3.0)
    assert branch.log_derivative_bounds() == (math.log(12.0), math.log(12.0))
    assert branch.tau_value == 9.0


def test_lueroth_shell_table():
    table = LuerothSystem(3).shells(10)
    n = np.arange(1, 11, dtype=float)
    np.testing.assert_allclose(table.tau, n ** 3)
    np.testing.assert_allclose(table.measure, 1.0 / (n * (n + 1.0)), rtol=1e-15)
    np.testing.assert_allclose(table.count, np.ones(10))


def test_lueroth_rejects_non_integer_r():
    with pytest.raises(ParameterRangeError):
        LuerothSystem(1.5)


def test_linear_poly_lengths_sum_to_one():
    table = LinearPolySystem(2, 1).shells(200000)
    total = math.fsum(table.measure)
    # tail beyond N is about C/N
    assert abs(total - 1.0) < 1e-5


def test_linear_count_letters_and_shells():
    system = LinearCountSystem(3, 2, 1)
    assert system.shell_of_letter(1) == (1, 0)
    assert system.shell_of_letter(3) == (2, 1)
    assert system.shell_of_letter(5) == (3, 1)
    assert system.tau_of_letter(5) == 9.0


def test_linear_count_rejects_beta_outside_unit_interval():
    with pytest.raises(ParameterRangeError):
        LinearCountSystem(4, 1, 1)


def test_gauss_measure_telescopes():
    n_max = 1000
    total = math.fsum(gauss_measure(np.arange(1, n_max + 1)))
    expected = 1.0 - math.log2((n_max + 2.0) / (n_max + 1.0))
    assert abs(total - expected) < 1e-13
    assert abs(float(gauss_measure(1)) - math.log2(4.0 / 3.0)) < 1e-15


def test_gauss_expands_only_on_second_iterate():
    system = GaussSystem(2)
    assert system.expansion_iterate == 2
    inf_one, _ = cylinder_derivative_bounds(system, [1])
    inf_two, _ = cylinder_derivative_bounds(system, [1, 1])
    assert inf_one == pytest.approx(0.0, abs=1e-12)
    assert inf_two >= math.log(4.0) - 1e-12


def test_mp_left_preimage_solves_branch_equation():
    y = left_preimages(2.0, np.array([0.5, 0.25]))
    residual = y * (1.0 + 4.0 * y ** 2) - np.array([0.5, 0.25])
    assert np.max(np.abs(residual)) < 1e-13


def test_mp_branches_tile_the_image():
    branches = mp_branch_table(2.0, 30)
    assert branches[0].interval[1] == pytest.approx(1.0)
    for left, right in zip(branches, branches[1:]):
        assert right.interval[1] == pytest.approx(left.interval[0], abs=1e-15)
    assert branches[0].interval[0] == pytest.approx(0.75)


def test_mp_shell_measures_are_normalized_lengths():
    system = MannevillePomeauInduced(2.0)
    table = system.shells(20)
    lengths = np.array([b.length for b in mp_branch_table(2.0, 20)]) / 0.5
    np.testing.assert_allclose(table.measure, lengths, rtol=1e-10)
    assert table.measure[0] == pytest.approx(0.5)


def test_truncated_system_is_finite():
    system = LuerothSystem(2).truncate(10)
    assert system.is_finite
    assert system.alphabet_size == 10
    assert system.shells(50).size == 10


def test_finite_linear_rejects_overfull_lengths():
    with pytest.raises(ParameterRangeError):
        FiniteLinearSystem([0.6, 0.6])


def test_build_system_errors_name_the_constraint():
    with pytest.raises(ParameterRangeError, match="system in"):
        build_system("tent", {})
    with pytest.raises(ParameterRangeError, match="parameters s"):
        build_system("linear_poly", {"r": "2"})


def test_build_system_truncation_parameter():
    system = build_system("lueroth", {"r": "2", "truncation": "16"})
    assert system.alphabet_size == 16


@pytest.mark.parametrize("name", ["gauss", "linear_poly", "mp_induced", "finite_linear"])
def test_descriptor_round_trip(name):
    system = build_system(name, BUILTIN_PARAMS[name])
    again = system_from_descriptor(descriptor_text(system))
    assert repr(again) == repr(system)


def test_word_block_is_lexicographic():
    words = word_block(3, 2, 0, 9)
    assert words[0].tolist() == [1, 1]
    assert words[1].tolist() == [1, 2]
    assert words[-1].tolist() == [3, 3]


def test_build_builtin_pairs_system_and_observable():
    system, observable = build_builtin("lueroth", {"r": "2"})
    assert observable is system.observable
    assert observable.value_of(3) == 9.0
    assert observable.scale.ratio_bound == 4.0
    assert observable.tail.beta == 0.5
    assert observable.tail.rate_exponent == pytest.approx(1.0)
    assert observable.tail.q_exponent == pytest.approx(-2.0)


def test_finite_system_has_no_tail_model():
    _, observable = build_builtin("finite_linear", {"lengths": "0.5,0.25"})
    assert observable.tail is None


def test_geometric_measure_of_single_letters():
    assert LuerothSystem(2).geometric_measure(4) == pytest.approx(1.0 / 20.0)
    assert GaussSystem(2).geometric_measure(1) == pytest.approx(math.log2(4.0 / 3.0))


@pytest.mark.parametrize("name", ["linear_poly", "linear_count", "linear_exp"])
def test_partition_rounding_is_not_overlap(name):
    result = partition_check(build_system(name, BUILTIN_PARAMS[name]), 500)
    assert result["overlaps"] == 0
    assert result["outside"] == 0


def test_linear_count_normalizer_is_exact_for_integer_counts():
    system = LinearCountSystem(3, 2, 1)
    assert system.log_length_slack == 0.0
    assert system.tail_count_slack(1024) == 0.0


def test_gauss_cylinder_bounds_are_the_endpoint_values():
    # |F'(x)| = x^-2 on (1/(n+1), 1/n]
    low, high = cylinder_derivative_bounds(GaussSystem(2), [3])
    assert low == pytest.approx(2.0 * math.log(3.0), abs=1e-12)
    assert high == pytest.approx(2.0 * math.log(4.0), abs=1e-12)
