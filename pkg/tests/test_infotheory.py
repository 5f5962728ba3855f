import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gibbsmi import gibbs, infotheory as it


def table(rows):
    return gibbs.CondDistTable(np.asarray(rows, dtype=float))


def h2(p):
    return -(p * math.log2(p) + (1 - p) * math.log2(1 - p))


def input_joint(probs):
    return probs / probs.shape[0]


def label_joint(probs, labels, num_classes):
    joint = np.zeros((num_classes, probs.shape[1]))
    for row, y in zip(probs, labels):
        joint[y] += row / probs.shape[0]
    return joint


def random_table(rng, max_j=16, max_n=8):
    j = int(rng.integers(1, max_j + 1))
    n = int(rng.integers(1, max_n + 1))
    rows = rng.dirichlet(np.full(n, rng.choice([0.1, 1.0, 5.0])), size=j)
    num_classes = int(rng.integers(1, j + 1))
    labels = np.concatenate([np.arange(num_classes), rng.integers(0, num_classes, j - num_classes)])
    return table(rows), rng.permutation(labels), num_classes


def test_entropy_examples():
    assert it.entropy(np.full(4, 0.25)) == 2.0
    assert it.entropy(np.array([0.0, 1.0, 0.0])) == 0.0
    assert abs(it.entropy(np.array([2 / 3, 1 / 3])) - 0.9183) < 1e-4
    assert math.isclose(it.entropy(np.array([2 / 3, 1 / 3])), math.log2(3) - 2 / 3, rel_tol=1e-14)


def test_entropy_base_conversion():
    p = np.random.default_rng(0).dirichlet(np.ones(6))
    assert abs(it.entropy(p, "e") - it.entropy(p) * math.log(2)) < 1e-12
    with pytest.raises(ValueError):
        it.entropy(p, 10)


def test_mi_input_examples():
    assert it.mi_input(table([[1, 0], [0, 1]])) == 1.0
    assert abs(it.mi_input(table([[0.3, 0.7]] * 5))) < 1e-15
    rows = [[0.9, 0.1], [0.9, 0.1], [0.1, 0.9], [0.1, 0.9]]
    assert math.isclose(it.mi_input(table(rows)), 1 - h2(0.9), rel_tol=1e-13)
    assert abs(it.mi_input(table(rows)) - 0.5310) < 1e-4


def test_mi_label_examples():
    rows = np.random.default_rng(1).dirichlet(np.ones(3), size=4)
    assert abs(it.mi_label(table(rows), [0, 0, 0, 0], 1)) < 1e-15
    assert it.mi_label(table([[1, 0], [0, 1], [1, 0], [0, 1]]), [0, 1, 0, 1], 2) == 1.0
    rows = [[0.9, 0.1], [0.1, 0.9], [0.9, 0.1], [0.1, 0.9]]
    assert abs(it.mi_label(table(rows), [0, 0, 1, 1], 2)) < 1e-15
    with pytest.raises(ValueError):
        it.mi_label(table(rows), [0, 0, 0, 0], 2)


def test_brute_force_examples():
    pa, pb = np.array([0.2, 0.8]), np.array([0.5, 0.3, 0.2])
    assert abs(it.brute_force_mi(np.outer(pa, pb))) < 1e-15
    assert it.brute_force_mi(np.diag([0.5, 0.5])) == 1.0
    with pytest.raises(ValueError):
        it.brute_force_mi(np.full((2, 2), 0.3))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_plug_in_matches_oracle_and_is_ordered(seed):
    t, labels, num_classes = random_table(np.random.default_rng(seed))
    ix = it.mi_input(t)
    iy = it.mi_label(t, labels, num_classes)
    assert abs(ix - it.brute_force_mi(input_joint(t.probs))) <= 1e-12
    assert abs(iy - it.brute_force_mi(label_joint(t.probs, labels, num_classes))) <= 1e-12
    cap = min(math.log2(t.num_outcomes), math.log2(t.num_samples))
    assert -1e-12 <= iy <= ix + 1e-12
    assert ix <= cap + 1e-12


def test_clamp():
    assert it.clamp(-1e-12) == 0.0
    assert it.clamp(0.5) == 0.5
    with pytest.raises(ArithmeticError):
        it.clamp(-1e-3)


def test_decompose_uniform_tables_is_zero():
    tables = [table(np.full((4, n), 1 / n)) for n in (3, 2, 2)]
    d = it.decompose(tables, [0, 1, 0, 1], 2)
    assert d.i_x == [0.0] * 3 and d.i_y == [0.0] * 3
    assert d.i_sw == 0.0
    assert d.h_y == 1.0


def test_decompose_perfect_representation():
    # T1 tells the four orientations apart, the output tells the two classes apart
    t1 = table(np.eye(4)[[0, 1, 2, 3] * 2])
    out = table(np.eye(2)[[0, 0, 1, 1] * 2])
    labels = [0, 0, 1, 1] * 2
    d = it.decompose([t1, out], labels, 2)
    assert d.i_x[0] == 2.0 and d.i_y[0] == 1.0
    assert d.i_xbar_t1 == 1.0 and d.i_y_yhat == 1.0
    assert d.i_sw == 2.0
    assert d.i_sw == d.i_xbar_t1 + d.i_y_yhat


def test_decompose_needs_output():
    with pytest.raises(ValueError):
        it.decompose([table([[1.0]])], [0], 1)


def test_gen_bound_values():
    cfg = it.BoundConfig(sigma=1.0, sample_count=512)
    assert it.gen_bound(0.0, cfg) == 0.0
    b = it.gen_bound(2 * math.log(2), cfg)
    assert abs(b - 0.0736) < 1e-4
    assert math.isclose(b, math.sqrt(2 * math.log(4) / 512))
    quad = it.gen_bound(2 * math.log(2), it.BoundConfig(1.0, 4 * 512))
    assert math.isclose(quad, b / 2)
    with pytest.raises(ValueError):
        it.gen_bound(-0.1, cfg)
    with pytest.raises(ValueError):
        it.BoundConfig(sigma=0)


@settings(max_examples=50, deadline=None)
@given(
    st.floats(0, 10),
    st.floats(0, 10),
    st.floats(0.1, 5),
    st.floats(0.1, 5),
    st.integers(1, 1000),
    st.integers(1, 1000),
)
def test_gen_bound_monotone(i1, i2, s1, s2, j1, j2):
    lo_i, hi_i = sorted((i1, i2))
    lo_s, hi_s = sorted((s1, s2))
    lo_j, hi_j = sorted((j1, j2))
    assert it.gen_bound(lo_i, it.BoundConfig(lo_s, hi_j)) <= it.gen_bound(hi_i, it.BoundConfig(hi_s, lo_j))
    assert it.gen_bound(hi_i, it.BoundConfig(lo_s, lo_j)) >= it.gen_bound(hi_i, it.BoundConfig(lo_s, hi_j))


def test_record_flat_round_trip():
    rec = it.MiEpochRecord(
        epoch=3, loss_train=0.1, loss_test=0.2, acc_train=1.0, acc_test=0.9,
        i_x=[2.0, 1.5, 1.0], i_y=[1.0, 1.0, 1.0], i_xbar_t1=1.0, i_y_yhat=1.0,
        i_sw=2.0, h_y=1.0, bound=0.07,
    )
    row = rec.flat()
    assert list(row)[:9] == [
        "epoch", "loss_train", "loss_test", "acc_train", "acc_test",
        "i_x_t1", "i_y_t1", "i_x_t2", "i_y_t2",
    ]
    assert math.isclose(row["gap"], 0.1)
    assert it.MiEpochRecord.from_flat(row) == rec
    assert rec.i_xbar == [1.0, 0.5, 0.0]
