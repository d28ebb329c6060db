import math

import numpy as np
import pytest
import scipy.special
from hypothesis import given, settings
from hypothesis import strategies as st

from ruelle import make_finite_alphabet
from ruelle.configuration import Configuration, shift, word_array
from ruelle.potentials import (
    PotentialError,
    birkhoff_sum,
    evaluate,
    hofbauer_class,
    make_constant,
    make_double_hofbauer,
    make_geometric,
    make_ising,
    make_long_range,
    make_single_site,
    make_table,
    random_table,
    shifted,
    sup_distance,
    truncate_local,
    variation_estimate,
    zeta,
    zeta_tail,
)


@pytest.mark.parametrize("s", [1.1, 1.5, 2.0, 3.0, 4.5])
def test_zeta_against_scipy(s):
    assert zeta(s) == pytest.approx(scipy.special.zeta(s), rel=1e-13)


@pytest.mark.parametrize("s, n", [(2.0, 1), (2.0, 12), (1.5, 40), (3.0, 7)])
def test_zeta_tail_against_hurwitz(s, n):
    assert zeta_tail(s, n) == pytest.approx(scipy.special.zeta(s, n + 1), rel=1e-12, abs=1e-15)


def test_single_site_and_ising(spins):
    f = make_single_site(spins, 2.0)
    x = Configuration(spins, (1, 0), 0)
    assert evaluate(f, x) == 2.0
    assert f.sup_norm == 2.0
    g = make_ising(spins, 0.7)
    assert evaluate(g, x) == pytest.approx(-0.7)
    assert evaluate(g, Configuration(spins, (0,), 0)) == pytest.approx(0.7)


def test_long_range_value_against_hurwitz(spins):
    f = make_long_range(spins, 2.0)
    prefix = (1, 0, 0, 1, 1)
    x = Configuration(spins, prefix, 1)
    signs = np.array([1, -1, -1, 1, 1])
    expected = float(signs @ (np.arange(1, 6) ** -2.0)) + scipy.special.zeta(2.0, 6)
    assert evaluate(f, x) == pytest.approx(expected, abs=1e-14)
    assert evaluate(f, Configuration(spins, (), 0)) == pytest.approx(-math.pi**2 / 6, abs=1e-14)


def test_long_range_truncations(spins):
    f = make_long_range(spins, 2.0)
    f2 = truncate_local(f, 2, pad=0)
    words = word_array(2, 2)
    # pad index 0 is the spin -1, so its tail contributes -alpha_2
    expected = (2 * words - 1) @ np.array([1.0, 0.25]) - zeta_tail(2.0, 2)
    assert np.allclose(f2.evaluate_words(words, 1), expected, atol=1e-14)
    for m in (2, 4, 8):
        fm = truncate_local(f, m, pad=0)
        # worst tail flips every spin beyond m: the gap is 2 alpha_m <= 2/m
        assert fm.truncation_gap == pytest.approx(2 * zeta_tail(2.0, m), rel=1e-12)
        assert fm.truncation_gap <= 2 / m


def test_truncation_of_finite_memory_is_identity(spins):
    g = make_ising(spins, 1.0)
    assert truncate_local(g, 2) is g
    assert truncate_local(g, 1).memory == 1


def _hofbauer_by_hand(x, gamma, delta):
    kind, n = hofbauer_class(x)
    if kind == "fixed":
        return 0.0
    exp = gamma if kind == "L" else delta
    if n == 1:
        return -math.log(scipy.special.zeta(exp))
    return -exp * math.log(n / (n - 1))


@pytest.mark.parametrize(
    "prefix, pad",
    [((0, 1), 0), ((0, 0, 0, 1), 1), ((1, 0), 0), ((1, 1, 1, 1, 1), 0), ((), 0), ((), 1), ((0, 0), 0), ((1,), 0)],
)
def test_double_hofbauer_values(binary, prefix, pad):
    f = make_double_hofbauer(binary, 3.0, 2.0)
    x = Configuration(binary, prefix, pad)
    assert evaluate(f, x) == pytest.approx(_hofbauer_by_hand(x, 3.0, 2.0), abs=1e-14)


def test_double_hofbauer_parameter_checks(binary, spins):
    with pytest.raises(PotentialError):
        make_double_hofbauer(binary, 1.0, 3.0)
    with pytest.raises(PotentialError):
        make_double_hofbauer(binary, 3.0, 3.0, strict=True)
    with pytest.raises(PotentialError):
        make_double_hofbauer(make_finite_alphabet([0, 1, 2]), 3.0, 2.0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 1), max_size=14), st.integers(0, 1), st.integers(1, 20))
def test_hofbauer_fast_birkhoff_matches_shifts(prefix, pad, n):
    binary = make_finite_alphabet([0, 1])
    f = make_double_hofbauer(binary, 3.0, 3.0)
    x = Configuration(binary, tuple(prefix), pad)
    naive = sum(evaluate(f, shift(x, j)) for j in range(n))
    assert birkhoff_sum(f, x, n) == pytest.approx(naive, abs=1e-12)


def test_birkhoff_sum_of_local_potential(spins):
    f = random_table(spins, 3, seed=4)
    x = Configuration(spins, (0, 1, 1, 0, 1), 1)
    naive = sum(evaluate(f, shift(x, j)) for j in range(9))
    assert birkhoff_sum(f, x, 9) == pytest.approx(naive, abs=1e-13)


def test_geometric_variation_closed_form(spins):
    beta, theta = 0.8, 0.5
    f = make_geometric(spins, beta, theta)
    for k in (1, 3, 6):
        est = variation_estimate(f, k)
        assert est.lower_bound
        assert est.value == pytest.approx(2 * beta * theta**k / (1 - theta), rel=1e-12)


def test_variation_of_local_potentials(spins):
    assert variation_estimate(make_ising(spins, 1.0), 2).value == 0.0
    assert variation_estimate(make_ising(spins, 1.0), 1).value == pytest.approx(2.0)
    est = variation_estimate(make_long_range(spins, 2.0), 4, method="sampled", trials=50, seed=3)
    assert est.method == "sampled" and est.seed == 3
    assert est.value <= 2 * zeta_tail(2.0, 4) + 1e-12


def test_table_checks_and_reproducibility(spins):
    with pytest.raises(PotentialError):
        make_table(spins, 2, [1.0, 2.0])
    a, b = random_table(spins, 2, seed=9), random_table(spins, 2, seed=9)
    w = word_array(2, 2)
    assert np.array_equal(a.evaluate_words(w, 0), b.evaluate_words(w, 0))
    assert np.all(np.abs(a.evaluate_words(w, 0)) <= 1.0)


def test_shift_by_constant_and_sup_distance(spins):
    f = random_table(spins, 2, seed=1)
    g = shifted(f, 0.3)
    assert sup_distance(f, g) == pytest.approx(0.3)
    assert sup_distance(f, make_constant(spins, 0.0)) == pytest.approx(f.sup_norm)


def test_space_mismatch_rejected(spins, binary):
    with pytest.raises(PotentialError):
        evaluate(make_single_site(spins, 1.0), Configuration(binary, (0,), 0))
