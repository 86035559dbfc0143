"""Two-colour w-urns: direct draws and the exponential (Rubin) embedding.

A red ball is drawn with probability ``w(R) / (w(R) + w(B))``.  The state
tracks the martingale ``mhat = W(R) - W(B)`` and the partial sums

    y_red  = sum over red draws  k of 1 / w(k)
    y_blue = sum over blue draws k of 1 / w(k)

where k is the total number of draws before the one being made, so
``y_red + y_blue = W(n)`` after n draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import _kernels as K
from .weights.cache import WCache, get_cache
from .weights.functions import WeightFunction

__all__ = [
    "UrnState",
    "UrnTrace",
    "urn_step",
    "urn_run_direct",
    "urn_run_rubin",
    "mhat_limit_sample",
    "urn_path_probability",
    "TRACE_COLUMNS",
    "all_sequences",
]

TRACE_COLUMNS = ("n", "r", "b", "mhat", "y_red", "y_blue", "sign_changes")
UNIFORM_CHUNK = 1 << 16

_IST = ("r", "b", "n", "sign_changes", "last_sign", "last_red", "last_blue", "ties")


class UrnState:
    """(R_n, B_n) with running W-values and the Y partial sums."""

    def __init__(self):
        self.ist = np.zeros(8, dtype=np.int64)
        self.fst = np.zeros(10)
        self.ist[5] = self.ist[6] = -1

    def __getattr__(self, name):
        if name in _IST:
            return int(self.ist[_IST.index(name)])
        raise AttributeError(name)

    @property
    def mhat(self) -> float:
        return (self.fst[0] + self.fst[1]) - (self.fst[2] + self.fst[3])

    @property
    def y_red(self) -> float:
        return float(self.fst[4] + self.fst[5])

    @property
    def y_blue(self) -> float:
        return float(self.fst[6] + self.fst[7])

    def row(self) -> dict:
        return {"n": self.n, "r": self.r, "b": self.b, "mhat": float(self.mhat),
                "y_red": self.y_red, "y_blue": self.y_blue, "sign_changes": self.sign_changes}

    def recomputed_mhat(self, cache: WCache) -> float:
        return float(cache.big_w(float(self.r)) - cache.big_w(float(self.b)))

    def frozen_color(self, start_fraction: float = 0.1):
        """'red' / 'blue' if that colour got no draw in (start_fraction * n, n], else None."""
        n0 = start_fraction * self.n
        if self.last_red <= n0:
            return "red"
        if self.last_blue <= n0:
            return "blue"
        return None

    def copy(self) -> "UrnState":
        s = UrnState()
        s.ist[:] = self.ist
        s.fst[:] = self.fst
        return s


@dataclass
class UrnTrace:
    state: UrnState
    rows: list = field(default_factory=list)
    sequence: np.ndarray | None = None  # 1 = red, for the first draws
    method: str = "direct"


def _gen(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.PCG64(rng))


def _params(wf, cache, n):
    cache = cache or get_cache(wf)
    cache.ensure(min(n + 2, cache.budget))
    return cache, (cache.inv_w, *wf.kernel_params())


def urn_step(state: UrnState, wf: WeightFunction, rng, cache: WCache | None = None) -> UrnState:
    """One direct draw (in place)."""
    cache, (tab, kind, a, b, scale, aux) = _params(wf, cache, state.n + 1)
    u = _gen(rng).random(1)
    K.urn_direct_kernel(state.ist, state.fst, state.n + 1, u, 0, tab, kind, a, b, scale, aux,
                        np.empty(0, dtype=np.int8))
    return state


def _stops(n_draws, cadence, horizons):
    stops = set(horizons or ())
    if cadence:
        stops |= set(range(cadence, n_draws + 1, cadence))
    stops.add(n_draws)
    return sorted(s for s in stops if 0 < s <= n_draws)


def urn_run_direct(wf: WeightFunction, n_draws: int, rng=0, cadence: int = 0, horizons=None,
                   record: int = 0, cache: WCache | None = None) -> UrnTrace:
    """Iterate the draw rule; snapshot rows at the cadence and at ``horizons``.

    ``record`` keeps the colour sequence of the first ``record`` draws.
    """
    gen = _gen(rng)
    cache, (tab, kind, a, b, scale, aux) = _params(wf, cache, n_draws)
    st = UrnState()
    seq = np.zeros(record, dtype=np.int8)
    rows = []
    unif, ui = np.empty(0), 0
    chunk = max(1, min(UNIFORM_CHUNK, n_draws))
    for stop in _stops(n_draws, cadence, horizons):
        while st.n < stop:
            if ui >= unif.shape[0]:
                unif, ui = gen.random(chunk), 0
            ui = K.urn_direct_kernel(st.ist, st.fst, stop, unif, ui, tab, kind, a, b, scale, aux, seq)
        rows.append(st.row())
    return UrnTrace(st, rows, seq if record else None, "direct")


def urn_run_rubin(wf: WeightFunction, horizon_draws: int, rng=0, cadence: int = 0, horizons=None,
                  record: int = 0, cache: WCache | None = None) -> UrnTrace:
    """Race two exponential time lines t_k = sum_{j<=k} xi_j / w(j).

    Exponentials are ``-log(1 - U)`` from the uniform stream; the first two
    uniforms start the red and the blue line.  Exact ties are counted and
    given to red.
    """
    gen = _gen(rng)
    cache, (tab, kind, a, b, scale, aux) = _params(wf, cache, horizon_draws)
    st = UrnState()
    first = gen.random(2)
    w0 = K.inv_w(0, tab, kind, a, b, scale, aux)
    st.fst[8] = -math.log1p(-first[0]) * w0
    st.fst[9] = -math.log1p(-first[1]) * w0
    seq = np.zeros(record, dtype=np.int8)
    rows = []
    unif, ui = np.empty(0), 0
    chunk = max(1, min(UNIFORM_CHUNK, horizon_draws))
    for stop in _stops(horizon_draws, cadence, horizons):
        while st.n < stop:
            if ui >= unif.shape[0]:
                unif, ui = gen.random(chunk), 0
            ui = K.urn_rubin_kernel(st.ist, st.fst, stop, unif, ui, tab, kind, a, b, scale, aux, seq)
        rows.append(st.row())
    return UrnTrace(st, rows, seq if record else None, "rubin")


def mhat_limit_sample(wf: WeightFunction, horizon: int, rng=0, cache: WCache | None = None) -> float:
    """mhat after ``horizon`` draws, a proxy sample of its limit."""
    return float(urn_run_direct(wf, horizon, rng, cache=cache).state.mhat)


def urn_path_probability(wf: WeightFunction, colours) -> float:
    """Exact probability of a draw sequence (1 = red, 0 = blue)."""
    r = b = 0
    p = 1.0
    for c in colours:
        wr, wb = wf(r), wf(b)
        if c:
            p *= wr / (wr + wb)
            r += 1
        else:
            p *= wb / (wr + wb)
            b += 1
    return p


def all_sequences(depth: int):
    return [tuple(s) for s in product((1, 0), repeat=depth)]
