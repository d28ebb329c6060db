import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_kernel
from ruelle import make_finite_alphabet
from ruelle.analysis import bowen_estimate
from ruelle.configuration import Configuration, EnumerationCapError, pad_to, word_array, word_index
from ruelle.kernels import (
    CylinderSet,
    KernelError,
    dlr_residual,
    kernel_marginal,
    kernel_value,
    properness_check,
    quasilocality_probe,
    quasilocality_trace,
    strong_non_null_probe,
    tail_observable,
    uniqueness_ratio_probe,
)
from ruelle.potentials import (
    make_constant,
    make_double_hofbauer,
    make_ising,
    make_long_range,
    make_single_site,
    random_table,
    tail_candidates,
    zeta_tail,
)


def _table_observable(space, length, seed):
    vals = np.random.default_rng(seed).uniform(-1, 1, space.size**length)

    def phi(words, pad):
        return vals[word_index(pad_to(words, pad, length), space.size)]

    return phi


def test_constant_observable_gives_one(spins):
    f = random_table(spins, 3, seed=0)
    x = Configuration(spins, (1, 1, 0, 1), 0)
    for n in (1, 4, 7):
        assert kernel_value(f, n, 1.0, x).value == pytest.approx(1.0, abs=1e-15)


def test_zero_potential_gives_a_priori_weights():
    space = make_finite_alphabet([0, 1, 2], [0.2, 0.3, 0.5])
    f = make_constant(space, 0.0)
    x = Configuration(space, (2, 1), 0)
    for a in range(3):
        assert kernel_value(f, 3, CylinderSet.single(1, a), x).value == pytest.approx(space.weights[a], abs=1e-15)


@pytest.mark.parametrize("n", [1, 2, 5])
def test_single_site_closed_form(spins, n):
    f = make_single_site(spins, 1.0)
    for x in (Configuration(spins, (), 0), Configuration(spins, (1, 0, 1, 1, 0, 0), 1)):
        value = kernel_value(f, n, CylinderSet.single(1, 1), x).value
        assert value == pytest.approx(math.e / (math.e + 1 / math.e), abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_kernel_against_brute_force(seed):
    space = make_finite_alphabet([0, 1, 2], [0.5, 0.25, 0.25])
    f = random_table(space, 2, seed=seed)
    x = Configuration(space, (2, 0, 1, 1), 2)
    cyl = CylinderSet(((1, seed % 3), (3, 1)))
    expected = brute_kernel(f, 3, lambda z: float(z.coordinate(1) == seed % 3 and z.coordinate(3) == 1), x)
    kv = kernel_value(f, 3, cyl, x)
    assert kv.value == pytest.approx(expected, abs=1e-13)
    assert kv.log_denominator > -math.inf and not kv.sampled


def test_kernel_of_infinite_range_against_brute_force(binary):
    f = make_double_hofbauer(binary, 3.0, 2.0)
    x = Configuration(binary, (0, 0, 1), 1)
    expected = brute_kernel(f, 4, lambda z: float(z.coordinate(2) == 0), x, counting=True)
    assert kernel_value(f, 4, CylinderSet.single(2, 0), x, convention="counting").value == pytest.approx(expected, abs=1e-13)


def test_marginal_matches_single_cylinders(spins):
    f = make_ising(spins, 0.8)
    x = Configuration(spins, (1,), 0)
    marg = kernel_marginal(f, 6, 2, x)
    for idx, w in enumerate([(0, 0), (0, 1), (1, 0), (1, 1)]):
        assert marg[idx] == pytest.approx(kernel_value(f, 6, CylinderSet.from_word(w), x).value, abs=1e-14)


def test_dlr_identity_examples(spins):
    f0 = make_constant(spins, 0.0)
    x = Configuration(spins, (1, 0, 0, 1, 0, 1, 1), 0)
    assert dlr_residual(f0, 2, 2, CylinderSet.single(2, 1), x) < 1e-14
    g = make_ising(spins, 1.0)
    phi = _table_observable(spins, 4, seed=1)
    assert dlr_residual(g, 2, 2, phi, x) < 1e-10
    assert dlr_residual(make_long_range(spins, 2.0), 3, 2, phi, x) < 1e-10


def test_dlr_nested_value_against_double_sum(spins):
    # K_{n+r}(K_n(phi, .), x) computed by two explicit brute-force passes
    g = make_ising(spins, 1.0)
    x = Configuration(spins, (1, 0, 0, 1, 1), 1)
    phi = _table_observable(spins, 4, seed=2)
    as_config = lambda z: float(phi(z.words(4), z.pad)[0])  # noqa: E731
    inner = lambda z: brute_kernel(g, 2, as_config, z)  # noqa: E731
    nested = brute_kernel(g, 4, inner, x)
    assert kernel_value(g, 4, phi, x).value == pytest.approx(nested, abs=1e-12)


def test_properness(spins):
    g = make_ising(spins, 1.0)
    x = Configuration(spins, (0, 1, 1, 0, 1), 0)
    assert properness_check(g, 3, 2.5, x) == 0.0
    psi = tail_observable(CylinderSet.single(1, 1), 3)
    assert properness_check(g, 3, psi, x) < 1e-12
    h = tail_observable(lambda w, pad: np.cos(w[:, 0] + 2.0 * w[:, 1]), 2)
    assert properness_check(random_table(spins, 3, seed=2), 2, h, x) < 1e-12
    with pytest.raises(KernelError):
        properness_check(g, 3, CylinderSet.single(2, 1), x)


def test_strong_non_null_examples(spins, binary):
    f0 = make_constant(spins, 0.0)
    tr = strong_non_null_probe(f0, 6, 1, tail_candidates(spins))
    assert np.allclose(tr.values, 0.5)
    f = make_single_site(spins, 1.0)
    tr = strong_non_null_probe(f, 8, 0, tail_candidates(spins, 3, seed=1))
    assert np.allclose(tr.values, math.exp(-1) / (2 * math.cosh(1)))
    h = make_double_hofbauer(binary, 3.0, 3.0)
    tr = strong_non_null_probe(h, 12, 0, [Configuration(binary, (), 1)])
    assert tr.trend == "decreasing"
    assert tr.power_slope < 0 and tr.exp_rate < 0
    assert len(tr.csv_rows()) == 12


def test_quasilocality(spins):
    f = random_table(spins, 2, seed=3)
    x = Configuration(spins, (0, 1, 1, 0), 1)
    tails = [x.with_tail(5, t) for t in tail_candidates(spins, 4, seed=2)]
    # a memory-2 potential: K_3 depends on coordinates up to 3 + 1
    assert quasilocality_probe(f, 3, CylinderSet.single(1, 0), x, 5, tails) < 1e-15
    assert quasilocality_probe(make_constant(spins, 0.0), 3, CylinderSet.single(1, 0), x, 1, [x.with_tail(1, t) for t in tail_candidates(spins)]) == 0.0
    with pytest.raises(KernelError):
        quasilocality_probe(f, 3, 1.0, x, 3, [Configuration(spins, (1,), 0)])


def test_quasilocality_long_range_bound(spins):
    f = make_long_range(spins, 2.0)
    x = Configuration(spins, (1, 0, 1), 0)
    phi = _table_observable(spins, 3, seed=4)
    n = 2
    tr = quasilocality_trace(f, n, phi, x, range(2, 13), random_tails=6, seed=1)
    assert tr.trend in ("decreasing", "constant")
    for depth, osc, _ in tr.entries:
        assert osc < 2 * zeta_tail(2.0, depth - n) * n


def test_quasilocality_detects_dependence(binary):
    f = make_double_hofbauer(binary, 3.0, 3.0)
    x = Configuration(binary, (0, 0, 0), 0)
    tr = quasilocality_trace(f, 2, CylinderSet.single(1, 0), x, range(2, 10), random_tails=4, seed=2)
    vals = tr.values
    assert vals[0] > 0 and all(b <= a for a, b in zip(vals, vals[1:]))


def test_uniqueness_ratio(spins):
    pairs = [(Configuration(spins, (), 0), Configuration(spins, (), 1)), (Configuration(spins, (1, 0), 0), Configuration(spins, (0,), 1))]
    assert uniqueness_ratio_probe(make_constant(spins, 0.0), CylinderSet.single(1, 1), 2, pairs).c_estimate == pytest.approx(1.0)
    assert uniqueness_ratio_probe(make_single_site(spins, 1.0), CylinderSet.single(1, 1), 1, pairs).c_estimate == pytest.approx(1.0)
    f = random_table(spins, 3, seed=7)
    tails = tail_candidates(spins, 6, seed=3)
    d = max(bowen_estimate(f, 6, tails=tails).values)
    all_pairs = [(a, b) for a in tails for b in tails]
    for cyl in (CylinderSet.single(1, 0), CylinderSet.from_word((1, 0, 1))):
        est = uniqueness_ratio_probe(f, cyl, 4, all_pairs)
        assert est.c_estimate <= 1.0 + 1e-12
        assert est.c_estimate >= math.exp(-2 * d)
    with pytest.raises(KernelError):
        uniqueness_ratio_probe(f, CylinderSet.single(5, 0), 3, pairs)


def test_sampling_mode(binary):
    f = make_double_hofbauer(binary, 3.0, 3.0)
    one = Configuration(binary, (), 1)
    cyl = CylinderSet.single(1, 0)
    exact = kernel_value(f, 12, cyl, one).value
    with pytest.raises(EnumerationCapError):
        kernel_value(f, 12, cyl, one, cap=100)
    with pytest.raises(KernelError):
        kernel_value(f, 12, cyl, one, cap=100, samples=1000)
    kv = kernel_value(f, 12, cyl, one, cap=100, samples=40_000, seed=5)
    assert kv.sampled and kv.stderr > 0
    assert abs(kv.value - exact) < 5 * kv.stderr
    again = kernel_value(f, 12, cyl, one, cap=100, samples=40_000, seed=5)
    assert again.value == kv.value and again.stderr == kv.stderr


def test_cylinder_set_validation():
    with pytest.raises(KernelError):
        CylinderSet(((1, 0), (1, 1)))
    with pytest.raises(KernelError):
        CylinderSet(((0, 1),))
    assert CylinderSet.from_word((0, 1)).max_coordinate == 2


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 5), st.lists(st.integers(0, 2), max_size=6), st.integers(0, 2))
def test_kernel_is_an_average(seed, n, prefix, pad):
    space = make_finite_alphabet(["a", "b", "c"])
    f = random_table(space, 2, seed=seed, scale=3.0)
    phi = _table_observable(space, n + 1, seed)
    x = Configuration(space, tuple(prefix), pad)
    value = kernel_value(f, n, phi, x).value
    vals = phi(word_array(3, n + 1), 0)
    assert vals.min() - 1e-12 <= value <= vals.max() + 1e-12
    ind = kernel_value(f, n, CylinderSet.single(1, 0), x).value
    assert 0.0 <= ind <= 1.0
