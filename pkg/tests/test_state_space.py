import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ruelle.state_space import (
    CIRCLE_ARC,
    COUNTING,
    StateSpace,
    StateSpaceError,
    make_circle,
    make_finite_alphabet,
    validate,
)


def test_uniform_alphabet():
    s = make_finite_alphabet([-1, 1])
    assert s.size == 2
    assert np.allclose(s.weights, [0.5, 0.5])
    assert s.scalar_coords.tolist() == [-1.0, 1.0]
    assert s.distance.tolist() == [[0.0, 1.0], [1.0, 0.0]]
    assert validate(s).ok


def test_weights_are_normalized():
    s = make_finite_alphabet(["a", "b", "c"], [1, 1, 2])
    assert np.allclose(s.weights, [0.25, 0.25, 0.5])
    assert s.scalar_coords.tolist() == [0.0, 1.0, 2.0]
    assert s.index("c") == 2


@pytest.mark.parametrize(
    "labels, weights, message",
    [
        ([], "uniform", "at least one"),
        ([1, 1], "uniform", "distinct"),
        ([0, 1, 2], [0.5, 0.0, 0.5], r"\[1\]"),
        ([0, 1], [1.0, -2.0], r"\[1\]"),
        ([0, 1], [1.0], "expected 2"),
    ],
)
def test_alphabet_rejections(labels, weights, message):
    with pytest.raises(StateSpaceError, match=message):
        make_finite_alphabet(labels, weights)


def test_circle_metric():
    s = make_circle(8)
    assert s.metric_kind == CIRCLE_ARC
    assert validate(s).ok
    assert s.diameter == pytest.approx(1.0)
    # neighbouring nodes are 1/8 of a turn apart, i.e. (pi/4)/pi
    assert s.distance[0, 1] == pytest.approx(0.25)
    assert s.distance[0, 7] == pytest.approx(0.25)
    assert np.allclose(np.hypot(*s.coords.T), 1.0)


def test_circle_needs_two_nodes():
    with pytest.raises(StateSpaceError):
        make_circle(1)


def test_validate_reports_bad_mass():
    s = StateSpace((0, 1), [0.0, 1.0], [0.45, 0.45])
    report = validate(s)
    assert not report.ok
    assert report.failed() == ["sum_to_one"]


def test_counting_convention_has_unit_masses():
    s = make_finite_alphabet([0, 1, 2], [1, 2, 3])
    assert s.log_weights(COUNTING).tolist() == [0.0, 0.0, 0.0]
    assert np.allclose(np.exp(s.log_weights()), s.weights)
    with pytest.raises(StateSpaceError):
        s.log_weights("other")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 100.0), min_size=1, max_size=9))
def test_any_positive_weights_validate(ws):
    s = make_finite_alphabet(list(range(len(ws))), ws)
    assert validate(s).ok
    assert math.isclose(s.weights.sum(), 1.0, abs_tol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40))
def test_circle_distance_is_a_metric(n):
    d = make_circle(n).distance
    assert np.allclose(d, d.T)
    assert np.all(np.diag(d) == 0)
    assert d.max() <= 1 + 1e-15
    # triangle inequality on every triple
    assert np.all(d[:, None, :] <= d[:, :, None] + d[None, :, :] + 1e-12)
