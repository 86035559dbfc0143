"""Vertex-reinforced random walk on Z or on a reflecting interval.

From site x the walk jumps to x+1 with probability
``w(Z(x+1)) / (w(Z(x+1)) + w(Z(x-1)))`` where Z counts visits (including
the visit at time 0 and any initial configuration).  Sites are stored in a
dense array over a bracket that grows geometrically when the walk reaches
its edge.  Alongside Z the state carries the weighted jump counts

    Y+(x) = sum over jumps x -> x+1 of 1 / w(Z(x+1) just before the jump)
    Y-(x) = sum over jumps x -> x-1 of 1 / w(Z(x-1) just before the jump)

and ``M(x) = Y+(x) - Y-(x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .weights.cache import ResourceError, WCache, get_cache
from .weights.functions import WeightFunction

__all__ = [
    "InitialConfig",
    "Boundary",
    "WalkState",
    "WalkSnapshot",
    "ReplicaResult",
    "LocalizationReport",
    "vrrw_step",
    "vrrw_run",
    "check_ynpm",
    "check_eqw_constancy",
    "localization_report",
    "profile_report",
    "path_probability",
]

UNIFORM_CHUNK = 1 << 16


@dataclass(frozen=True)
class InitialConfig:
    """Initial local times z0 (finite support) and the starting site."""

    z0: dict = field(default_factory=dict)
    origin: int = 0

    def __post_init__(self):
        if any(int(v) < 0 for v in self.z0.values()):
            raise ValueError("initial local times must be non-negative")

    @property
    def trivial(self) -> bool:
        return not any(self.z0.values())

    def count(self, x: int) -> int:
        return int(self.z0.get(x, 0))

    def z_start(self, x: int) -> int:
        """Z_0(x): the configuration plus the time-0 visit at the origin."""
        return self.count(x) + (1 if x == self.origin else 0)


@dataclass(frozen=True)
class Boundary:
    """Reflecting walls at a and/or b (None means the free line)."""

    a: int | None = None
    b: int | None = None

    @property
    def free(self) -> bool:
        return self.a is None and self.b is None

    @classmethod
    def reflect(cls, a: int, b: int) -> "Boundary":
        if not a < b:
            raise ValueError("reflecting interval needs a < b")
        return cls(a, b)

    def __str__(self):
        return "free" if self.free else f"reflect[{self.a},{self.b}]"


FREE = Boundary()


class WalkState:
    """Position, step count and per-site trackers over a dense bracket."""

    def __init__(self, wf: WeightFunction, config: InitialConfig | None = None,
                 boundary: Boundary = FREE, span: int = 64, cache: WCache | None = None,
                 max_span: int = 1 << 24):
        self.wf = wf
        self.cache = cache or get_cache(wf)
        self.config = config or InitialConfig()
        self.boundary = boundary
        self.max_span = max_span
        o = self.config.origin
        if boundary.free:
            sites = [o] + list(self.config.z0)
            lo, hi = min(sites) - span, max(sites) + span
        else:
            if not (boundary.a <= o <= boundary.b):
                raise ValueError("origin must lie inside the reflecting interval")
            lo, hi = boundary.a - 1, boundary.b + 1
        self.lo = lo
        L = hi - lo + 1
        self.z = np.zeros(L, dtype=np.int64)
        for x, v in self.config.z0.items():
            if lo <= x <= hi:
                self.z[x - lo] = int(v)
        self.z[o - lo] += 1
        self.yp = np.zeros(L)
        self.ym = np.zeros(L)
        self.comp = np.zeros((2, L))
        self.last = np.full(L, -1, dtype=np.int64)
        self.last[o - lo] = 0
        self.ipos = np.array([o - lo, 0], dtype=np.int64)
        self._unif = np.empty(0)
        self._ui = 0

    # -- accessors --------------------------------------------------------
    @property
    def pos(self) -> int:
        return int(self.ipos[0]) + self.lo

    @property
    def n(self) -> int:
        return int(self.ipos[1])

    @property
    def hi(self) -> int:
        return self.lo + self.z.shape[0] - 1

    def _get(self, arr, x, default=0):
        i = x - self.lo
        if 0 <= i < arr.shape[0]:
            return arr[i]
        return default

    def local_time(self, x: int) -> int:
        i = x - self.lo
        if 0 <= i < self.z.shape[0]:
            return int(self.z[i])
        return self.config.count(x)

    def y_plus(self, x: int) -> float:
        return float(self._get(self.yp, x, 0.0) + self._get(self.comp[0], x, 0.0))

    def y_minus(self, x: int) -> float:
        return float(self._get(self.ym, x, 0.0) + self._get(self.comp[1], x, 0.0))

    def m(self, x: int) -> float:
        return self.y_plus(x) - self.y_minus(x)

    @property
    def walls(self) -> np.ndarray:
        L = self.z.shape[0]
        a = -1 if self.boundary.a is None else self.boundary.a - self.lo
        b = L if self.boundary.b is None else self.boundary.b - self.lo
        return np.array([a, b], dtype=np.int64)

    def snapshot(self) -> "WalkSnapshot":
        return WalkSnapshot(
            n=self.n,
            pos=self.pos,
            lo=self.lo,
            z=self.z.copy(),
            yp=self.yp + self.comp[0],
            ym=self.ym + self.comp[1],
        )

    # -- growth -----------------------------------------------------------
    def _grow(self):
        L = self.z.shape[0]
        if 2 * L > self.max_span:
            raise ResourceError(f"visited range exceeds the span bound {self.max_span}")
        pad = L // 2
        lo = self.lo - pad
        newL = L + 2 * pad
        z = np.zeros(newL, dtype=np.int64)
        for x, v in self.config.z0.items():
            if lo <= x < lo + newL:
                z[x - lo] = int(v)
        z[pad : pad + L] = self.z
        self.z = z

        def widen(arr, fill):
            out = np.full(arr.shape[:-1] + (newL,), fill, dtype=arr.dtype)
            out[..., pad : pad + L] = arr
            return out

        self.yp = widen(self.yp, 0.0)
        self.ym = widen(self.ym, 0.0)
        self.comp = widen(self.comp, 0.0)
        self.last = widen(self.last, -1)
        self.ipos[0] += pad
        self.lo = lo
        return pad

    def _table(self, steps: int) -> np.ndarray:
        need = self.n + steps + 2 + (max(self.config.z0.values()) if self.config.z0 else 0)
        self.cache.ensure(min(need, self.cache.budget))
        return self.cache.inv_w

    # -- driving ----------------------------------------------------------
    def advance(self, n_stop: int, rng: np.random.Generator, traj=None, cadence: int = 0, ti: int = 0) -> int:
        """Run until step n_stop; uniforms come from rng in fixed-size chunks."""
        kind, a, b, scale, aux = self.wf.kernel_params()
        tab = self._table(n_stop - self.n)
        if traj is None:
            traj = np.empty(0, dtype=np.int64)
        chunk = max(1, min(UNIFORM_CHUNK, n_stop - self.n))
        while self.n < n_stop:
            if self._ui >= self._unif.shape[0]:
                self._unif = rng.random(chunk)
                self._ui = 0
            status, self._ui, ti = K.walk_kernel(
                self.z, self.yp, self.ym, self.comp, self.last, self.ipos, n_stop,
                self._unif, self._ui, self.walls, tab, kind, a, b, scale, aux, traj, cadence, ti,
            )
            if status == K.GROW:
                pad = self._grow()
                traj[:ti] += pad
        return ti


@dataclass
class WalkSnapshot:
    n: int
    pos: int
    lo: int
    z: np.ndarray
    yp: np.ndarray
    ym: np.ndarray

    def _at(self, arr, x, default=0):
        i = x - self.lo
        return arr[i] if 0 <= i < arr.shape[0] else default

    def local_time(self, x, config: InitialConfig | None = None):
        i = x - self.lo
        if 0 <= i < self.z.shape[0]:
            return int(self.z[i])
        return config.count(x) if config else 0

    def y_plus(self, x):
        return float(self._at(self.yp, x, 0.0))

    def y_minus(self, x):
        return float(self._at(self.ym, x, 0.0))

    def m(self, x):
        return self.y_plus(x) - self.y_minus(x)


@dataclass
class ReplicaResult:
    """Everything a finished replica reports."""

    wf: WeightFunction
    config: InitialConfig
    boundary: Boundary
    state: WalkState
    window_start: WalkSnapshot
    snapshots: list
    trajectory: np.ndarray | None
    seed: int | None
    window_fraction: float

    @property
    def n(self) -> int:
        return self.state.n


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.PCG64(rng))


def vrrw_step(state: WalkState, wf: WeightFunction | None = None, rng=None) -> WalkState:
    """One transition (in place); returns the state for chaining."""
    state.advance(state.n + 1, _as_rng(rng))
    return state


def vrrw_run(wf: WeightFunction, config: InitialConfig | None = None, boundary: Boundary = FREE,
             steps: int = 1000, rng=None, snapshots: int = 8, window_fraction: float = 0.5,
             cadence: int = 0, cache: WCache | None = None, max_span: int = 1 << 24,
             seed: int | None = None) -> ReplicaResult:
    """Simulate ``steps`` transitions.

    ``snapshots`` evenly spaced copies of the trackers are kept for the
    constancy check, plus one at the start of the final window.  With
    ``cadence > 0`` the position every ``cadence`` steps is recorded.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not 0 < window_fraction <= 1:
        raise ValueError("window_fraction must lie in (0, 1]")
    if rng is None:
        rng = seed if seed is not None else 0
    gen = _as_rng(rng)
    st = WalkState(wf, config, boundary, cache=cache, max_span=max_span)
    n0 = steps - int(window_fraction * steps)
    stops = sorted({n0, steps} | {steps * j // max(snapshots, 1) for j in range(1, max(snapshots, 1))})
    snaps = [st.snapshot()]
    traj = None
    ti = 0
    if cadence > 0:
        traj = np.empty(steps // cadence, dtype=np.int64)
    win = None
    for s in stops:
        if s > st.n:
            ti = st.advance(s, gen, traj, cadence, ti)
        if s == n0:
            win = st.snapshot()
        snaps.append(st.snapshot())
    if win is None:
        win = snaps[0]
    if traj is not None:
        traj = traj[:ti] + st.lo
    return ReplicaResult(wf, st.config, boundary, st, win, snaps, traj, seed, window_fraction)


def check_ynpm(state: WalkState | WalkSnapshot, config: InitialConfig | None = None,
               cache: WCache | None = None) -> float:
    """max over sites of |Y+(x-1) + Y-(x+1) - W(Z(x)) + W(Z_0(x))|."""
    if isinstance(state, WalkState):
        config = state.config
        cache = cache or state.cache
        snap = state.snapshot()
    else:
        snap = state
        config = config or InitialConfig()
        if cache is None:
            raise ValueError("a cache is needed to check a snapshot")
    L = snap.z.shape[0]
    if L < 3:
        return 0.0
    xs = np.arange(1, L - 1)
    sites = xs + snap.lo
    z0 = np.array([config.z_start(int(s)) for s in sites])
    lhs = snap.yp[xs - 1] + snap.ym[xs + 1]
    rhs = cache.big_w(snap.z[xs].astype(float)) - cache.big_w(z0.astype(float))
    return float(np.max(np.abs(lhs - rhs)))


def eqw_constant(snap: WalkSnapshot, x: int, cache: WCache, config: InitialConfig | None = None) -> float:
    z = lambda s: float(snap.local_time(s, config))
    return (cache.big_w(z(x + 2)) - cache.big_w(z(x)) - snap.y_minus(x + 3) + snap.y_plus(x - 1)
            - snap.m(x + 1))


def check_eqw_constancy(trace, x: int, cache: WCache, config: InitialConfig | None = None) -> float:
    """max over snapshots of |D_n - D_first| for the five-site relation at x."""
    snaps = trace.snapshots if isinstance(trace, ReplicaResult) else list(trace)
    if isinstance(trace, ReplicaResult):
        config = trace.config
    d = [eqw_constant(s, x, cache, config) for s in snaps]
    return float(max(abs(v - d[0]) for v in d)) if d else 0.0


@dataclass
class LocalizationReport:
    recent_range: list
    range_size: int
    boundary_y_increment: float
    delta_stat: float
    center: int
    profile: dict
    window_fraction: float
    n: int

    def to_dict(self) -> dict:
        return {
            "recent_range": [int(v) for v in self.recent_range],
            "range_size": self.range_size,
            "boundary_y_increment": self.boundary_y_increment,
            "delta_stat": self.delta_stat,
            "center": self.center,
            "window_fraction": self.window_fraction,
            "n": self.n,
            "profile": {str(k): v for k, v in self.profile.items()},
        }


def localization_report(result: ReplicaResult, window_fraction: float | None = None) -> LocalizationReport:
    """Sites visited during the final window and the local-time profile.

    The recent range is ``{x : last visit time >= n0}`` with ``n0`` the
    window start; for a nearest-neighbour walk it is an interval.  The
    window centre is ``l + (size - 1) // 2`` for the range ``[l, r]``.
    """
    st = result.state
    wf_frac = result.window_fraction if window_fraction is None else window_fraction
    n = st.n
    n0 = n - int(wf_frac * n)
    if window_fraction is not None and window_fraction != result.window_fraction:
        win = None
    else:
        win = result.window_start
    idx = np.nonzero(st.last >= n0)[0]
    sites = (idx + st.lo).tolist()
    l, r = sites[0], sites[-1]
    if win is not None:
        inc = (st.y_plus(l) - win.y_plus(l)) + (st.y_minus(r) - win.y_minus(r))
    else:
        inc = float("nan")
    c = l + (len(sites) - 1) // 2
    cache = st.cache
    delta = float(cache.big_w(float(st.local_time(c + 1))) - cache.big_w(float(st.local_time(c - 1))))
    zs = np.array([st.local_time(x) for x in sites], dtype=float)
    wz = cache.big_w(zs)
    top = float(wz[int(np.argmax(zs))])
    prof = {}
    for x, zx, wx in zip(sites, zs, np.atleast_1d(wz)):
        entry = {"fraction": zx / max(n, 1), "w_gap": float(wx) - top}
        if win is not None and n > win.n:
            entry["window_fraction"] = (zx - win.local_time(x, result.config)) / (n - win.n)
        prof[x] = entry
    return LocalizationReport(sites, len(sites), float(inc), delta, c, prof, wf_frac, n)


def profile_report(report: LocalizationReport) -> dict:
    """Edge and central fractions for 4- and 5-site ranges."""
    sites = report.recent_range
    frac = [report.profile[x]["fraction"] for x in sites]
    out = {"range_size": report.range_size, "sites": sites, "fractions": frac}
    if report.range_size == 4:
        out["edge"] = [frac[0], frac[3]]
        out["central"] = [frac[1], frac[2]]
    elif report.range_size == 5:
        out["edge"] = [frac[0], frac[4]]
        out["center"] = frac[2]
        out["flank"] = [frac[1], frac[3]]  # L_n / n and R_n / n
    return out


def path_probability(wf: WeightFunction, path, config: InitialConfig | None = None,
                     boundary: Boundary = FREE) -> float:
    """Exact probability of a finite path (list of sites starting at the origin)."""
    config = config or InitialConfig()
    z = {}

    def Z(x):
        return z.get(x, config.z_start(x))

    if path[0] != config.origin:
        return 0.0
    p = 1.0
    for x, t in zip(path[:-1], path[1:]):
        if abs(t - x) != 1:
            return 0.0
        if boundary.a is not None and x == boundary.a:
            q = 1.0 if t == x + 1 else 0.0
        elif boundary.b is not None and x == boundary.b:
            q = 1.0 if t == x - 1 else 0.0
        else:
            wr, wl = wf(Z(x + 1)), wf(Z(x - 1))
            q = (wr if t == x + 1 else wl) / (wr + wl)
        p *= q
        z[t] = Z(t) + 1
    return p
