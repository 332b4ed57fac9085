import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import brute_force_ospa
from mmpmbm.errors import ConfigurationError
from mmpmbm.metrics import OspaParams, cardinality_error, ospa, positions


def test_ospa_examples():
    assert ospa(np.zeros((0, 2)), np.zeros((0, 2))) == 0.0
    assert ospa([[1.0, 1.0]], np.zeros((0, 2))) == 100.0
    assert ospa([[0.0, 0.0]], [[3.0, 4.0]]) == pytest.approx(5.0)
    # one pair 5 m apart plus one unmatched point, p = 1: (5 + 100) / 2
    assert ospa([[0.0, 0.0]], [[3.0, 4.0], [900.0, 900.0]]) == pytest.approx(52.5)


def test_ospa_errors():
    with pytest.raises(ConfigurationError):
        ospa([[0.0, 0.0]], [[1.0, 2.0, 3.0]])
    with pytest.raises(ConfigurationError):
        OspaParams(cutoff=0.0)
    with pytest.raises(ConfigurationError):
        OspaParams(order=0.5)


point_sets = st.integers(0, 5).flatmap(
    lambda n: st.lists(st.tuples(st.floats(-200, 200), st.floats(-200, 200)), min_size=n, max_size=n)
)


def _arr(pts):
    return np.array(pts, dtype=float).reshape(-1, 2)


@given(point_sets, point_sets, st.floats(1.0, 300.0), st.sampled_from([1.0, 2.0]))
def test_ospa_against_brute_force(X, Y, c, p):
    X, Y = _arr(X), _arr(Y)
    got = ospa(X, Y, OspaParams(c, p))
    assert got == pytest.approx(brute_force_ospa(X, Y, c, p), abs=1e-9)
    assert got == pytest.approx(ospa(Y, X, OspaParams(c, p)), abs=1e-12)
    assert 0.0 <= got <= c + 1e-12
    assert ospa(X, X, OspaParams(c, p)) == pytest.approx(0.0, abs=1e-12)


@given(point_sets, point_sets, st.floats(1.0, 100.0), st.floats(0.0, 100.0))
def test_ospa_nondecreasing_in_cutoff(X, Y, c, extra):
    X, Y = _arr(X), _arr(Y)
    assert ospa(X, Y, OspaParams(c)) <= ospa(X, Y, OspaParams(c + extra)) + 1e-12


def test_positions_picks_position_rows():
    assert positions([[1.0, 2.0, 3.0, 4.0]]).tolist() == [[1.0, 3.0]]
    assert positions([]).shape == (0, 2)


def test_cardinality_error_examples():
    truth = np.array([3, 3, 2])
    assert np.all(cardinality_error(np.tile(truth, (4, 1)), truth).error == 0)
    assert np.all(cardinality_error(np.tile(truth + 1, (4, 1)), truth).error == 1)
    mixed = np.array([[3, 3, 3], [2, 2, 2]])
    assert cardinality_error(mixed, [3, 3, 3]).mean_estimated.tolist() == [2.5, 2.5, 2.5]
    with pytest.raises(ConfigurationError):
        cardinality_error(np.zeros((2, 3)), np.zeros(4))
