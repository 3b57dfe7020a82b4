import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from xloop.metrics import (ConfusionCounts, accuracy, distribution_summary, fairness,
                           global_importance, glocal_sim, xcp, xcp_per_sample)

binary = st.lists(st.integers(0, 1), min_size=1, max_size=60)
scores = arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 8)),
                elements=st.floats(-1, 1))


def test_accuracy_examples():
    labels = np.array([1, 0, 1, 1])
    assert accuracy(labels, labels) == 1.0
    assert accuracy(1 - labels, labels) == 0.0
    assert accuracy([1, 0, 1, 0], labels) == 0.75
    with pytest.raises(ValueError, match="length"):
        accuracy([1, 0], [1])
    with pytest.raises(ValueError):
        accuracy([], [])


@given(binary, st.randoms())
def test_accuracy_complement(labels, r):
    labels = np.array(labels)
    preds = np.array([r.randint(0, 1) for _ in labels])
    assert accuracy(preds, labels) + accuracy(1 - preds, labels) == pytest.approx(1.0)


@given(binary, st.randoms())
def test_confusion_counts_sum(labels, r):
    preds = [r.randint(0, 1) for _ in labels]
    assert ConfusionCounts.of(preds, labels).total == len(labels)


def groups_from_counts(A, B):
    """Rows reproducing given confusion counts per group."""
    preds, labels, groups = [], [], []
    for g, counts in (("A", A), ("B", B)):
        for (p, l), n in zip(((1, 1), (0, 0), (1, 0), (0, 1)), counts):
            preds += [p] * n
            labels += [l] * n
            groups += [g] * n
    return np.array(preds), np.array(labels), np.array(groups)


def test_fairness_examples():
    rep = fairness(*groups_from_counts((3, 2, 1, 1), (3, 2, 1, 1)))
    assert rep.signed() == {"PPR_D": 0.0, "NPR_D": 0.0, "FPR_D": 0.0, "EO_D": 0.0}
    rep = fairness(*groups_from_counts((4, 3, 0, 0), (2, 5, 0, 0)))
    assert rep.FPR_D == 0.0 and rep.EO_D == 0.0
    rep = fairness(*groups_from_counts((3, 2, 1, 0), (1, 2, 1, 0)))
    assert rep.PPR_D == pytest.approx(0.25)
    assert rep.size_A == 6 and rep.size_B == 4


def test_fairness_formulas():
    rep = fairness(*groups_from_counts((5, 4, 2, 3), (2, 6, 3, 1)))
    assert rep.PPR_D == pytest.approx(5 / 7 - 2 / 5)
    assert rep.NPR_D == pytest.approx(4 / 7 - 6 / 7)
    assert rep.FPR_D == pytest.approx(2 / 6 - 3 / 9)
    assert rep.EO_D == pytest.approx(5 / 8 - 2 / 3)
    assert rep.absolute()["NPR_D"] == pytest.approx(2 / 7)


def test_fairness_not_computable():
    # group B has no predicted positives: PPR undefined
    rep = fairness(*groups_from_counts((1, 1, 1, 1), (0, 2, 0, 2)))
    assert rep.PPR_D is None and rep.absolute()["PPR_D"] is None
    assert rep.NPR_D is not None
    with pytest.raises(ValueError, match="nonempty"):
        fairness([1, 0], [1, 0], ["A", "A"])


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1), st.sampled_from("AB")),
                min_size=2, max_size=80))
def test_fairness_group_swap_negates(rows):
    preds, labels, groups = map(np.array, zip(*rows))
    if len(set(groups)) < 2:
        return
    swapped = np.where(groups == "A", "B", "A")
    a, b = fairness(preds, labels, groups), fairness(preds, labels, swapped)
    for k, v in a.signed().items():
        w = b.signed()[k]
        assert (v is None) == (w is None)
        if v is not None:
            assert w == -v
            assert a.absolute()[k] == b.absolute()[k]


def test_xcp_examples():
    assert xcp(np.zeros((3, 4))) == 1.0
    assert xcp(np.full((3, 4), 0.5)) == 0.0
    row = np.zeros((1, 10))
    row[0, :3] = [0.01, -0.2, 0.5]
    assert xcp(row) == pytest.approx(0.7)
    # strict boundary: a score equal to epsilon is involved
    assert xcp_per_sample(np.array([[0.01, 0.0099999]]))[0] == 0.5


@given(scores, st.floats(0.001, 0.5), st.floats(0.001, 0.5))
def test_xcp_sign_invariance_and_monotone(E, e1, e2):
    lo, hi = sorted((e1, e2))
    assert xcp(E, lo) <= xcp(E, hi)
    assert xcp(-E, lo) == xcp(E, lo)
    assert 0.0 <= xcp(E, lo) <= 1.0


def test_global_importance_examples():
    np.testing.assert_array_equal(global_importance([[0.3, -0.2]]), [0.3, 0.2])
    np.testing.assert_array_equal(global_importance([[0.0, 2.0], [2.0, 0.0]]), [1.0, 1.0])


@given(scores)
def test_global_importance_sign_invariant(E):
    np.testing.assert_array_equal(global_importance(E), global_importance(-E))


def test_glocal_sim_examples():
    g = np.array([1.0, 0.0, 1.0, 0.0])
    assert glocal_sim([[0.5, 0.0, -0.5, 0.0]], g)[0] == 1.0
    assert glocal_sim([[0.0, 0.5, 0.0, 0.5]], g)[0] == 0.0
    E = np.zeros((1, 10))
    G = np.zeros(10)
    E[0, :2] = 1.0
    assert glocal_sim(E, G)[0] == pytest.approx(0.8)
    # strict boundary: a value equal to epsilon is not relevant
    assert glocal_sim([[0.01, 0.02]], [0.0, 0.02])[0] == 1.0
    with pytest.raises(ValueError):
        glocal_sim(E, np.zeros(3))


@given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-1, 1)), st.integers(1, 10))
def test_identical_support_rows_give_perfect_sim(row, n):
    E = np.tile(row, (n, 1)) * np.linspace(1, 2, n)[:, None]
    # scale each row so binarized support stays equal
    E = np.where(np.abs(np.tile(row, (n, 1))) > 0.01, np.sign(E) * (np.abs(E) + 0.02), 0.0)
    assert np.all(glocal_sim(E) == 1.0)


@given(scores)
def test_glocal_sim_range(E):
    s = glocal_sim(E)
    assert np.all((s >= 0) & (s <= 1))


def test_distribution_summary():
    d = distribution_summary([1.0, 2.0, 3.0, 4.0, 5.0])
    assert d == {"mean": 3.0, "min": 1.0, "q1": 2.0, "median": 3.0, "q3": 4.0, "max": 5.0}
