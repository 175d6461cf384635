import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cpsdrift.evaluation import Confusion, confusion, f1_from, make_report, prf1, roc

from oracles import auc_mann_whitney


def test_confusion_examples():
    assert confusion([1, 0, 1, 0], [1, 0, 1, 0]) == Confusion(tp=2, fn=0, tn=2, fp=0)
    assert confusion([-1, -1], [1, 0]) == Confusion()
    assert confusion([1, 1, 0], [0, 1, 1]) == Confusion(tp=1, fn=1, tn=0, fp=1)


def test_confusion_length_mismatch():
    with pytest.raises(ValueError):
        confusion([1, 0], [1])


def test_prf1_conventions():
    assert prf1(Confusion(tp=0, fn=3, tn=2, fp=1)) == (0.0, 0.0, 0.0)
    assert prf1(Confusion()) == (0.0, 0.0, 0.0)
    assert f1_from(0.37, 0.37) == pytest.approx(0.37)


def test_f1_reported_triple():
    assert abs(f1_from(1.000, 0.981) - 0.990) <= 5e-4


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_f1_swap_symmetry(tp, fp, fn):
    a = prf1(Confusion(tp=tp, fn=fn, fp=fp))
    b = prf1(Confusion(tp=tp, fn=fp, fp=fn))
    assert a[2] == pytest.approx(b[2])
    if a[0] == a[1]:
        assert a[2] == pytest.approx(a[0])


def test_roc_extremes():
    assert roc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])[1] == 1.0
    assert roc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1])[1] == 0.0


def test_roc_six_point_hand_case():
    scores = [0.1, 0.4, 0.35, 0.8, 0.4, 0.6]
    labels = [0, 0, 1, 1, 1, 0]
    pts, auc = roc(scores, labels)
    assert auc == pytest.approx(auc_mann_whitney(scores, labels), abs=1e-12)
    assert pts[0].tolist() == [0.0, 0.0, np.inf]
    assert pts[-1, :2].tolist() == [1.0, 1.0]


def test_roc_single_class():
    with pytest.raises(ValueError):
        roc([0.1, 0.2], [0, 0])
    with pytest.raises(ValueError):
        roc([0.1, 0.2], [1, -1])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 300), st.integers(0, 2**31), st.booleans())
def test_auc_equals_rank_statistic(n, seed, ties):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, n)
    labels[:2] = [0, 1]
    scores = rng.normal(size=n) + labels
    if ties:
        scores = np.round(scores, 1)
    auc = roc(scores, labels)[1]
    assert auc == pytest.approx(auc_mann_whitney(scores, labels), abs=1e-9)
    assert roc(np.exp(scores), labels)[1] == pytest.approx(auc, abs=1e-12)


def test_roc_skips_unknown():
    a = roc([0.1, 0.9, 5.0], [0, 1, -1])[1]
    assert a == 1.0


def test_report():
    r = make_report([0.1, 0.5, 0.9, 0.95], [0, 0, 1, 1], 0.7)
    assert (r.tp, r.fn, r.tn, r.fp) == (2, 0, 2, 0)
    assert r.f1 == 1.0 and r.auc == 1.0 and r.threshold == 0.7
    assert make_report([0.1, 0.2], [0, 0], 0.15).auc is None
