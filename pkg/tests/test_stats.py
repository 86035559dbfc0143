import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vrrw.stats import (
    DegenerateCells,
    TooFewSamples,
    merge_cells,
    path_law_chisq,
    sign_symmetry_test,
    wilson_interval,
)


def test_sign_test_all_positive_fails():
    r = sign_symmetry_test(np.arange(1, 201, dtype=float))
    assert not r.passed
    assert r.statistic == 200 and r.n == 200


def test_sign_test_antisymmetric_passes():
    x = np.random.default_rng(0).normal(size=500)
    r = sign_symmetry_test(np.concatenate([x, -x]))
    assert r.passed and r.pvalue == pytest.approx(1.0)


def test_sign_test_drops_zeros():
    x = np.concatenate([np.zeros(1000), np.ones(60), -np.ones(60)])
    r = sign_symmetry_test(x)
    assert r.n == 120
    with pytest.raises(TooFewSamples):
        sign_symmetry_test(np.concatenate([np.zeros(500), np.ones(10)]))


def test_chisq_exact_counts():
    probs = {"a": 0.5, "b": 0.25, "c": 0.25}
    r = path_law_chisq({"a": 500, "b": 250, "c": 250}, probs)
    assert r.chi2 == 0.0 and r.p == 1.0 and r.dof == 2
    chi2, dof, p = r
    assert dof == 2


def test_chisq_detects_gross_shift():
    probs = {"a": 0.5, "b": 0.25, "c": 0.25}
    r = path_law_chisq({"a": 250, "b": 500, "c": 250}, probs)
    assert r.p < 1e-6


def test_chisq_impossible_path_rejects():
    r = path_law_chisq({"a": 10, "z": 1}, {"a": 1.0 - 1e-12, "b": 1e-12})
    assert r.p == 0.0 and np.isinf(r.chi2)
    r = path_law_chisq([5, 5, 1], [0.5, 0.5, 0.0])
    assert r.p == 0.0


def test_chisq_degenerate_inputs():
    with pytest.raises(DegenerateCells):
        path_law_chisq({"a": 1}, {"a": 0.5, "b": 0.6})
    with pytest.raises(DegenerateCells):
        path_law_chisq({}, {"a": 0.5, "b": 0.5})
    with pytest.raises(DegenerateCells):
        path_law_chisq({"a": 3, "b": 3}, {"a": 0.5, "b": 0.5})  # expected 3 < 5 everywhere
    with pytest.raises(DegenerateCells):
        path_law_chisq([1, 2], [0.5, 0.25, 0.25])


@given(st.lists(st.floats(0.01, 100), min_size=2, max_size=30), st.floats(1, 50))
def test_merge_cells_preserves_totals(expected, threshold):
    exp = np.array(expected)
    obs = np.arange(len(exp), dtype=float)
    o, e = merge_cells(obs, exp, threshold)
    assert o.sum() == pytest.approx(obs.sum())
    assert e.sum() == pytest.approx(exp.sum())
    if exp.sum() >= threshold:
        assert np.all(e >= threshold - 1e-9)


def test_wilson_interval():
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi
    assert (lo, hi) == pytest.approx((0.4038, 0.5962), abs=1e-3)
    lo, hi = wilson_interval(0, 20)
    assert lo == 0.0 and 0 < hi < 0.2
    assert wilson_interval(0, 0) == (0.0, 1.0)


@given(st.integers(0, 500), st.integers(1, 500))
def test_wilson_contains_estimate(k, n):
    k = min(k, n)
    lo, hi = wilson_interval(k, n)
    assert 0 <= lo <= k / n <= hi <= 1
