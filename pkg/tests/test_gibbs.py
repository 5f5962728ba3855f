import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gibbsmi import gibbs


def test_exp_normalize_hand_case():
    t = gibbs.layer_conditional(np.array([[math.log(2), 0.0]]))
    np.testing.assert_allclose(t.probs, [[2 / 3, 1 / 3]], rtol=1e-15)


def test_equal_activations_give_uniform_rows():
    t = gibbs.layer_conditional(np.zeros((3, 4)))
    np.testing.assert_array_equal(t.probs, np.full((3, 4), 0.25))


def test_single_neuron_layer():
    t = gibbs.layer_conditional(np.array([[3.0], [0.0], [100.0]]))
    np.testing.assert_array_equal(t.probs, np.ones((3, 1)))


def test_large_activations_stay_finite():
    t = gibbs.layer_conditional(np.array([[900.0, 0.0, 899.0]]))
    assert np.all(np.isfinite(t.probs))
    assert abs(t.probs.sum() - 1) < 1e-12


def test_output_layer_renormalizes():
    t = gibbs.layer_conditional(np.array([[0.2, 0.8 + 1e-12]]), "output")
    assert t.layer_id == gibbs.OUTPUT
    assert abs(t.probs.sum() - 1) < 1e-15


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        gibbs.layer_conditional(np.array([[np.nan, 0.0]]))
    with pytest.raises(ValueError):
        gibbs.layer_conditional(np.zeros((2, 0)))
    with pytest.raises(ValueError):
        gibbs.layer_conditional(np.zeros((2, 2)), "middle")
    with pytest.raises(ValueError):
        gibbs.CondDistTable(np.array([[0.5, 0.6]]))


def test_marginal_examples():
    m = gibbs.marginal(gibbs.CondDistTable(np.array([[1.0, 0.0], [0.0, 1.0]])))
    np.testing.assert_array_equal(m.probs, [0.5, 0.5])
    p = np.array([0.1, 0.7, 0.2])
    np.testing.assert_allclose(gibbs.marginal(gibbs.CondDistTable(np.tile(p, (4, 1)))).probs, p)
    m = gibbs.marginal(gibbs.CondDistTable(np.array([[2 / 3, 1 / 3], [1 / 3, 2 / 3]])))
    np.testing.assert_allclose(m.probs, [0.5, 0.5], rtol=1e-15)


def test_class_conditional_examples():
    table = gibbs.CondDistTable(np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]))
    conds, priors = gibbs.class_conditional(table, [0, 0, 1], 2)
    np.testing.assert_allclose(conds[0].probs, [0.5, 0.5])
    np.testing.assert_allclose(conds[1].probs, [0.5, 0.5])
    np.testing.assert_allclose(priors, [2 / 3, 1 / 3])

    sep = gibbs.CondDistTable(np.array([[1.0, 0.0], [0.0, 1.0]] * 2))
    conds, priors = gibbs.class_conditional(sep, [0, 1, 0, 1], 2)
    np.testing.assert_array_equal(conds[0].probs, [1, 0])
    np.testing.assert_array_equal(conds[1].probs, [0, 1])
    np.testing.assert_array_equal(priors, [0.5, 0.5])


def test_single_class_equals_marginal():
    rows = np.random.default_rng(0).dirichlet(np.ones(3), size=5)
    table = gibbs.CondDistTable(rows)
    conds, priors = gibbs.class_conditional(table, np.zeros(5, int), 1)
    np.testing.assert_allclose(conds[0].probs, gibbs.marginal(table).probs, rtol=1e-15)
    assert priors.tolist() == [1.0]


def test_empty_class_rejected():
    table = gibbs.CondDistTable(np.eye(2))
    with pytest.raises(ValueError):
        gibbs.class_conditional(table, [0, 0], 2)


activation_rows = arrays(
    np.float64,
    st.tuples(st.integers(1, 12), st.integers(1, 6)),
    elements=st.floats(0, 60, allow_nan=False),
)


@settings(max_examples=60, deadline=None)
@given(activation_rows, st.floats(-30, 30))
def test_rows_normalized_and_shift_invariant(acts, shift):
    t = gibbs.layer_conditional(acts)
    assert np.all(np.abs(t.probs.sum(axis=1) - 1) <= 1e-9)
    assert np.all(t.probs > 0)
    shifted = gibbs.layer_conditional(acts + shift)
    np.testing.assert_allclose(shifted.probs, t.probs, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(activation_rows, st.randoms(use_true_random=False))
def test_mixture_consistency_and_permutation(acts, rnd):
    j, n = acts.shape
    num_classes = min(j, 3)
    labels = np.array([i % num_classes for i in range(j)])
    rnd.shuffle(labels)
    t = gibbs.layer_conditional(acts)
    conds, priors = gibbs.class_conditional(t, labels, num_classes)
    mixture = sum(p * c.probs for p, c in zip(priors, conds))
    np.testing.assert_allclose(mixture, gibbs.marginal(t).probs, atol=1e-12)
    perm = np.array(rnd.sample(range(n), n))
    np.testing.assert_allclose(gibbs.layer_conditional(acts[:, perm]).probs, t.probs[:, perm], atol=1e-15)


def test_csv_export(tmp_path):
    t = gibbs.CondDistTable(np.array([[0.25, 0.75], [1.0, 0.0]]))
    t.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines == ["row,p0,p1", "0,0.25,0.75", "1,1.0,0.0"]
