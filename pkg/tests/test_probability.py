import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskalloc import (LengthMismatch, NonPositiveWeight, ScenarioSet, WeightSumOutOfRange,
                       duplicate, expectation, make_scenario_set, refine)


def test_two_atom_uniform():
    S = make_scenario_set([[1], [2]], [0.5, 0.5])
    assert S.size == 2 and S.dim == 1


def test_weight_sum_rejected():
    with pytest.raises(WeightSumOutOfRange):
        make_scenario_set([[1], [2]], [0.5, 0.6])


def test_normalized_weights_kept():
    S = make_scenario_set([[1], [2], [3]], [0.2, 0.3, 0.5])
    assert S.weights.tolist() == [0.2, 0.3, 0.5]


@pytest.mark.parametrize("w", [[0.0, 1.0], [-0.1, 1.1]])
def test_nonpositive_weight(w):
    with pytest.raises(NonPositiveWeight):
        make_scenario_set([[1], [2]], w)


def test_points_weights_length_mismatch():
    with pytest.raises(LengthMismatch):
        make_scenario_set([[1], [2]], [1.0])


def test_refine_uniform_pair():
    S = refine(make_scenario_set([[1], [2]], [0.5, 0.5]), 2)
    assert S.weights.tolist() == [0.25] * 4
    assert S.points[:, 0].tolist() == [1, 1, 2, 2]


def test_refine_identity():
    S = make_scenario_set([[1], [2]], [0.3, 0.7])
    R = refine(S, 1)
    assert np.array_equal(R.points, S.points) and np.array_equal(R.weights, S.weights)


def test_refine_halves_weights():
    S = refine(make_scenario_set([[1], [2], [3]], [0.2, 0.3, 0.5]), 2)
    assert S.weights.tolist() == [0.1, 0.1, 0.15, 0.15, 0.25, 0.25]


def test_expectation_examples():
    assert expectation(make_scenario_set([[0]] * 4, [0.25] * 4), [1, 2, 3, 4]) == 2.5
    assert expectation(make_scenario_set([[0], [1]], [0.2, 0.8]), [0, 1]) == 0.8
    S = make_scenario_set([[0]] * 3, [0.2, 0.3, 0.5])
    assert expectation(S, [7.25] * 3) == 7.25


def test_expectation_length_mismatch():
    with pytest.raises(LengthMismatch):
        expectation(make_scenario_set([[0], [1]], [0.5, 0.5]), [1, 2, 3])


def test_text_roundtrip():
    S = make_scenario_set([[1.5, 2.0], [0.1, 3.0]], [0.25, 0.75])
    T = ScenarioSet.from_text(S.to_text())
    assert np.array_equal(S.points, T.points) and np.array_equal(S.weights, T.weights)


def _sets(draw_k=st.integers(1, 12)):
    @st.composite
    def build(draw):
        K = draw(draw_k)
        raw = draw(st.lists(st.floats(0.01, 10.0), min_size=K, max_size=K))
        z = draw(st.lists(st.floats(-1e3, 1e3), min_size=K, max_size=K))
        w = np.array(raw) / np.sum(raw)
        return make_scenario_set(np.arange(K, dtype=float)[:, None], w), np.array(z)
    return build()


@settings(max_examples=200, deadline=None)
@given(_sets(), st.sampled_from([1, 2, 4, 8]))
def test_refined_expectation_bitwise(SZ, m):
    S, Z = SZ
    assert expectation(refine(S, m), duplicate(Z, m)) == expectation(S, Z)


@settings(max_examples=100, deadline=None)
@given(_sets(), st.sampled_from([3, 5, 6]))
def test_refined_expectation_other_factors(SZ, m):
    S, Z = SZ
    e = expectation(S, Z)
    assert abs(expectation(refine(S, m), duplicate(Z, m)) - e) <= 1e-15 * max(1.0, np.abs(Z).max())


@settings(max_examples=100, deadline=None)
@given(_sets(), st.integers(1, 4), st.integers(1, 4))
def test_refine_composition_same_atoms(SZ, a, b):
    S, _ = SZ
    A, B = refine(refine(S, a), b), refine(S, a * b)
    assert np.array_equal(A.points, B.points)
    assert np.allclose(A.weights, B.weights, rtol=1e-15, atol=0)


@settings(max_examples=200, deadline=None)
@given(_sets())
def test_weights_sum_to_one(SZ):
    S, _ = SZ
    assert abs(np.sum(S.weights) - 1.0) <= 1e-12
