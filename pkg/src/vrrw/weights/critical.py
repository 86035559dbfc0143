"""Convergence classification for the I_alpha family of integrals and alpha_c.

All series here have non-negative, eventually non-increasing terms, and the
interesting cases sit right at the edge of convergence (terms like
``1/(x log x (log log x)^a)``).  Partial sums are useless for such series, so
the verdict comes from dyadic block masses

    m_k = integral of the summand over [2**k, 2**(k+1))

evaluated far out (blocks up to ``2**1000``, where only the tail formulas
of :mod:`vrrw.weights.cache` are used).  Cauchy condensation turns the
original series into ``sum m_k``, and Bertrand's ratio test is applied to
the condensed series:

    B_k = log(k) * (k * (m_k / m_{k+1} - 1) - 1)

``B_k > 1`` means convergence, ``B_k < 1`` divergence.  A margin around 1
makes the verdict three-valued.  Lower and upper Riemann sums (the summand
is monotone in x) are carried alongside the Gauss-Legendre block values.
"""

from __future__ import annotations

import math
from typing import NamedTuple
from dataclasses import dataclass, field

import numpy as np

from .cache import OutOfRange, WCache, get_cache
from .functions import WeightFunction

__all__ = [
    "SeriesBudget",
    "SumClassification",
    "AlphaCEstimate",
    "estimate_I_alpha",
    "estimate_alpha_c",
    "tail_sum_lemaa",
    "tail_sum_teclem",
    "liminf_ratio_probe",
    "LiminfProbe",
]

CONVERGED, DIVERGED, UNDECIDED = "Converged", "Diverged", "Undecided"

_HUGE = 1e300
_EXACT_BLOCKS = 16  # discrete sums are summed term by term below 2**16


@dataclass(frozen=True)
class SeriesBudget:
    """Truncation and quadrature settings for the block classifier."""

    max_block: int = 1000  # largest dyadic exponent examined
    nodes: int = 16  # Gauss-Legendre nodes per block (in log x)
    sub: int = 16  # sub-intervals per block for the lower/upper sums
    window: int = 8  # trailing blocks whose Bertrand statistics are pooled
    margin: float = 0.25  # undecided band around the Bertrand threshold 1
    cap: float = 1e12  # lower partial sum beyond this is divergence outright
    min_blocks: int = 64  # fewer usable blocks than this gives Undecided


@dataclass
class SumClassification:
    status: str
    partial_sum: float
    terms_used: int
    last_block_mass: float
    lower_sum: float = 0.0
    upper_sum: float = 0.0
    statistic: float = float("nan")
    x_max: float = 0.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class AlphaCEstimate:
    lower: float
    upper: float
    status: str
    diagnostics: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": None if math.isinf(self.upper) else self.upper,
            "status": self.status,
            "diagnostics": self.diagnostics,
        }


def _w_clamped(wf: WeightFunction, x):
    # w(x) = w(0) for x <= 0; beyond 2**53 the floor is irrelevant
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        return np.where(x < 2.0**53, wf(np.minimum(x, 2.0**53)), wf.continuous(x))


def _usable_blocks(arg_fn, budget: SeriesBudget) -> int:
    edges = np.ldexp(1.0, np.arange(budget.max_block + 2))
    with np.errstate(over="ignore", invalid="ignore"):
        a = np.asarray(arg_fn(edges), dtype=float)
    bad = ~(np.isfinite(a) & (a < _HUGE))
    if not bad.any():
        return budget.max_block
    return int(np.argmax(bad)) - 1


def _classify(wf, arg_fn, budget: SeriesBudget, tol: float, discrete: bool) -> SumClassification:
    """Classify sum/integral of 1/w(arg_fn(x)) over x >= 0."""
    K = _usable_blocks(arg_fn, budget)
    gx, gw = np.polynomial.legendre.leggauss(budget.nodes)
    gx = 0.5 * (gx + 1.0)
    gw = 0.5 * gw
    sub = np.arange(budget.sub + 1) / budget.sub

    def summand(x):
        return 1.0 / _w_clamped(wf, arg_fn(x))

    mid = np.zeros(K + 2)
    lower = np.zeros(K + 2)
    upper = np.zeros(K + 2)
    # block 0 is [0, 1), block k+1 is [2**k, 2**(k+1))
    if discrete:
        n_exact = 1 << min(_EXACT_BLOCKS, K + 1)
        terms = summand(np.arange(n_exact, dtype=float))
        mid[0] = lower[0] = upper[0] = terms[0]
        for k in range(min(_EXACT_BLOCKS, K + 1)):
            s = float(math.fsum(terms[1 << k : 2 << k]))
            mid[k + 1] = lower[k + 1] = upper[k + 1] = s
        first_quad = min(_EXACT_BLOCKS, K + 1)
    else:
        v = summand(gx)
        mid[0] = float(gw @ v)
        ends = summand(sub)
        lower[0] = float(np.sum(np.diff(sub) * ends[1:]))
        upper[0] = float(np.sum(np.diff(sub) * ends[:-1]))
        first_quad = 0
    ks = np.arange(first_quad, K + 1)
    if ks.size:
        # Gauss-Legendre in s = log x over [k log 2, (k+1) log 2]
        s = (ks[:, None] + gx[None, :]) * math.log(2.0)
        x = np.exp(s)
        vals = summand(x.ravel()).reshape(x.shape)
        mid[ks + 1] = (vals * x) @ gw * math.log(2.0)
        # geometric sub-grid endpoints: the summand is non-increasing
        e = np.exp2(ks[:, None] + sub[None, :])
        ev = summand(e.ravel()).reshape(e.shape)
        de = np.diff(e, axis=1)
        if discrete:
            # sum over integers n in [a, b) of a non-increasing g lies in
            # [integral over [a, b), integral over [a - 1, b - 1)]
            upper[ks + 1] = np.sum(de * ev[:, :-1], axis=1) + ev[:, 0]
            lower[ks + 1] = np.sum(de * ev[:, 1:], axis=1) - ev[:, -1]
        else:
            upper[ks + 1] = np.sum(de * ev[:, :-1], axis=1)
            lower[ks + 1] = np.sum(de * ev[:, 1:], axis=1)

    partial = float(math.fsum(mid))
    lo_sum = float(math.fsum(lower))
    hi_sum = float(math.fsum(upper))
    last_mass = float(upper[-1])
    stat = _bertrand(mid, budget.window)
    if lo_sum > budget.cap:
        status = DIVERGED
    elif K < budget.min_blocks or not np.isfinite(stat):
        status = UNDECIDED
    elif stat > 1.0 + budget.margin and last_mass < tol:
        status = CONVERGED
    elif stat < 1.0 - budget.margin:
        status = DIVERGED
    else:
        status = UNDECIDED
    return SumClassification(
        status=status,
        partial_sum=partial,
        terms_used=K + 2,
        last_block_mass=last_mass,
        lower_sum=lo_sum,
        upper_sum=hi_sum,
        statistic=float(stat),
        x_max=float(2.0 ** (K + 1)),
    )


def _bertrand(mid: np.ndarray, window: int) -> float:
    # mid[k + 1] is the block [2**k, 2**(k+1))
    K = mid.shape[0] - 2
    stats = []
    for k in range(max(2, K - window), K):
        a, b = mid[k + 1], mid[k + 2]
        if not (a > 0 and b > 0):
            # an exactly vanishing tail converges
            return np.inf if b == 0 else np.nan
        stats.append(math.log(k) * (k * (a / b - 1.0) - 1.0))
    return float(np.median(stats)) if stats else np.nan


def _require_unbounded(cache: WCache):
    if cache.bounded:
        raise OutOfRange(
            f"{cache.wf.spec}: sum of 1/w converges, so W is bounded and alpha_c is not defined "
            "(the walk localizes on two sites)"
        )


def estimate_I_alpha(
    wf: WeightFunction,
    cache: WCache | None = None,
    alpha: float = 1.0,
    budget: SeriesBudget | None = None,
    tol: float = 1e-3,
) -> SumClassification:
    """Classify I_alpha = integral over x >= 0 of dx / w(u(x, alpha))."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    cache = cache or get_cache(wf)
    budget = budget or SeriesBudget()
    _require_unbounded(cache)
    return _classify(wf, lambda x: cache.shift_u(x, alpha), budget, tol, discrete=False)


def estimate_alpha_c(
    wf: WeightFunction,
    cache: WCache | None = None,
    tol: float = 0.05,
    budget: SeriesBudget | None = None,
    alpha_max: float = 64.0,
    mass_tol: float = 1e-3,
) -> AlphaCEstimate:
    """Bracket alpha_c = inf{alpha : I_alpha < infinity}.

    Doubling grid tol, 2 tol, ... (capped at ``alpha_max``) until a
    Converged probe appears, then bisection on both edges of the undecided
    band down to width ``tol``.
    """
    cache = cache or get_cache(wf)
    budget = budget or SeriesBudget()
    _require_unbounded(cache)
    diag = []
    memo = {}

    def probe(a):
        if a not in memo:
            r = estimate_I_alpha(wf, cache, a, budget, mass_tol)
            memo[a] = r.status
            diag.append({"alpha": a, "status": r.status, "statistic": r.statistic,
                         "partial_sum": r.partial_sum})
        return memo[a]

    grid = []
    a = tol
    while a < alpha_max:
        grid.append(a)
        a *= 2.0
    grid.append(alpha_max)

    if probe(grid[0]) == CONVERGED:
        return AlphaCEstimate(0.0, tol, "Zero", diag)
    last_div = grid[0] if memo[grid[0]] == DIVERGED else 0.0
    first_conv = None
    for a in grid[1:]:
        st = probe(a)
        if st == CONVERGED:
            first_conv = a
            break
        if st == DIVERGED:
            last_div = a
    if first_conv is None:
        if all(v == DIVERGED for v in memo.values()):
            return AlphaCEstimate(last_div, math.inf, "Infinite", diag)
        return AlphaCEstimate(last_div, math.inf, "Undecided", diag)

    # upper edge: smallest Converged alpha
    lo, hi = last_div, first_conv
    while hi - lo > tol:
        m = 0.5 * (lo + hi)
        if probe(m) == CONVERGED:
            hi = m
        else:
            lo = m
    upper = hi
    # lower edge: largest Diverged alpha below the upper edge
    lo, hi = last_div, upper
    while hi - lo > tol:
        m = 0.5 * (lo + hi)
        if probe(m) == DIVERGED:
            lo = m
        else:
            hi = m
    lower = lo
    inside = [a for a, s in memo.items() if lower < a < upper and s == UNDECIDED]
    status = "Undecided" if inside else "Bracketed"
    diag.sort(key=lambda d: d["alpha"])
    return AlphaCEstimate(lower, upper, status, diag)


def tail_sum_lemaa(
    wf: WeightFunction,
    cache: WCache | None = None,
    delta: float = 2.0,
    c: float = 0.0,
    budget: SeriesBudget | None = None,
    tol: float = 1e-3,
) -> SumClassification:
    """Classify sum over n of 1 / w(u(n, delta) - c), with w(x) = w(0) for x <= 0."""
    cache = cache or get_cache(wf)
    budget = budget or SeriesBudget()
    _require_unbounded(cache)
    return _classify(wf, lambda x: cache.shift_u(x, delta) - c, budget, tol, discrete=True)


def tail_sum_teclem(
    wf: WeightFunction,
    cache: WCache | None = None,
    beta: float = 0.5,
    budget: SeriesBudget | None = None,
    tol: float = 1e-3,
) -> SumClassification:
    """Classify sum over n of 1 / w(n + u(n, beta))."""
    cache = cache or get_cache(wf)
    budget = budget or SeriesBudget()
    _require_unbounded(cache)
    return _classify(wf, lambda x: x + cache.shift_u(x, beta), budget, tol, discrete=True)


class LiminfProbe(NamedTuple):
    min_ratio: float
    argmin: float
    points: np.ndarray
    running_min: np.ndarray  # min of w(x)/x over probe points <= x
    tail_min: np.ndarray  # min of w(x)/x over probe points >= x (liminf witness)


def liminf_ratio_probe(wf: WeightFunction, x_max: float) -> LiminfProbe:
    """Minimum of w(x)/x over dyadic points up to x_max.

    For families whose jumps are sparse (factorial-step, tables) the points
    just below each jump are probed too, since that is where the ratio dips.
    ``tail_min[i]`` is the minimum over ``points[i:]``; its growth (or its
    limit) is what estimates the liminf.
    """
    if x_max < 2:
        raise ValueError("x_max must be >= 2")
    pts = np.ldexp(1.0, np.arange(1, int(math.floor(math.log2(x_max))) + 1))
    jumps = wf.jump_points(2.0, x_max + 1)
    if jumps is not None and len(jumps):
        below = np.asarray(jumps, dtype=float) - 1.0
        pts = np.union1d(pts, below[(below >= 2) & (below <= x_max)])
    ratio = wf(pts) / pts
    running = np.minimum.accumulate(ratio)
    tail = np.minimum.accumulate(ratio[::-1])[::-1]
    i = int(np.argmin(ratio))
    return LiminfProbe(float(ratio[i]), float(pts[i]), pts, running, tail)
