"""Statistical checks used by the harness: sign test, path-law chi-square, Wilson intervals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as _st

__all__ = [
    "TooFewSamples",
    "DegenerateCells",
    "SignTestResult",
    "ChiSquareResult",
    "sign_symmetry_test",
    "path_law_chisq",
    "wilson_interval",
    "merge_cells",
]

WILSON_LEVEL = 0.95


class TooFewSamples(ValueError):
    pass


class DegenerateCells(ValueError):
    pass


@dataclass(frozen=True)
class SignTestResult:
    positive: int
    n: int
    pvalue: float
    level: float
    passed: bool

    @property
    def statistic(self) -> int:
        return self.positive

    def to_dict(self) -> dict:
        return {"positive": self.positive, "n": self.n, "pvalue": self.pvalue,
                "level": self.level, "passed": self.passed}


@dataclass(frozen=True)
class ChiSquareResult:
    chi2: float
    dof: int
    p: float
    cells: int

    def __iter__(self):
        return iter((self.chi2, self.dof, self.p))

    def to_dict(self) -> dict:
        return {"chi2": self.chi2, "dof": self.dof, "p": self.p, "cells": self.cells}


def sign_symmetry_test(samples, level: float = 1e-3, min_samples: int = 100) -> SignTestResult:
    """Exact two-sided sign test of P(X > 0) = 1/2; zeros are dropped."""
    x = np.asarray(samples, dtype=float).ravel()
    x = x[x != 0]
    if x.size < min_samples:
        raise TooFewSamples(f"sign test needs >= {min_samples} non-zero samples, got {x.size}")
    k = int(np.count_nonzero(x > 0))
    p = float(_st.binomtest(k, x.size, 0.5).pvalue)
    return SignTestResult(k, int(x.size), p, level, p > level)


def merge_cells(observed, expected, min_expected: float = 5.0):
    """Pool the smallest-expectation cells until every pooled cell has >= min_expected."""
    obs = np.asarray(observed, dtype=float)
    exp = np.asarray(expected, dtype=float)
    order = np.argsort(exp, kind="stable")
    o_out, e_out = [], []
    o_acc = e_acc = 0.0
    for i in order:
        o_acc += obs[i]
        e_acc += exp[i]
        if e_acc >= min_expected:
            o_out.append(o_acc)
            e_out.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if not e_out:
            o_out.append(o_acc)
            e_out.append(e_acc)
        else:
            # leftover is at most the largest cells' tail; fold into the last pooled cell
            o_out[-1] += o_acc
            e_out[-1] += e_acc
    return np.array(o_out), np.array(e_out)


def path_law_chisq(counts, probs, min_expected: float = 5.0) -> ChiSquareResult:
    """Goodness of fit of observed path counts to exact path probabilities.

    ``counts`` and ``probs`` are mappings path -> value (or aligned arrays).
    Paths absent from ``counts`` count as zero; an observed path with zero
    oracle probability is an immediate rejection.
    """
    if isinstance(probs, dict):
        keys = list(probs)
        p = np.array([probs[k] for k in keys], dtype=float)
        if isinstance(counts, dict):
            extra = set(counts) - set(probs)
            if any(counts[k] for k in extra):
                return ChiSquareResult(float("inf"), len(keys) - 1, 0.0, len(keys))
            c = np.array([counts.get(k, 0) for k in keys], dtype=float)
        else:
            c = np.asarray(counts, dtype=float)
    else:
        p = np.asarray(probs, dtype=float)
        c = np.asarray(counts, dtype=float)
    if c.shape != p.shape:
        raise DegenerateCells("counts and probabilities are not aligned")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise DegenerateCells(f"oracle probabilities must be >= 0 and sum to 1 (sum = {p.sum()!r})")
    N = c.sum()
    if N <= 0:
        raise DegenerateCells("no observations")
    if np.any(c[p == 0] > 0):
        return ChiSquareResult(float("inf"), int(np.count_nonzero(p > 0)) - 1, 0.0, int(p.size))
    keep = p > 0
    o, e = merge_cells(c[keep], N * p[keep], min_expected)
    if o.size < 2 or np.any(e < min_expected):
        raise DegenerateCells(f"fewer than two cells with expected count >= {min_expected}")
    chi2 = float(np.sum((o - e) ** 2 / e))
    dof = int(o.size - 1)
    return ChiSquareResult(chi2, dof, float(_st.chi2.sf(chi2, dof)), int(o.size))


def wilson_interval(k: int, n: int, level: float = WILSON_LEVEL) -> tuple:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return (0.0, 1.0)
    ci = _st.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return (max(0.0, float(ci.low)), min(1.0, float(ci.high)))
