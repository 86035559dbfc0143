"""Clock (time-line) construction of the VRRW and its monotone couplings.

Each oriented edge (y, y+-1) owns a sequence of clocks; the k-th clock on
it has duration ``xi_k^+-(y) / w(m)`` with m the local time of the target
when the clock starts.  Only the two clocks at the current site run.  On
arrival at x from x-1 a fresh clock starts on (x, x-1) and the clock on
(x, x+1) resumes where it was paused (or starts, on a first visit).  The
first clock to ring decides the jump.

The randomness ``xi`` is not stored: entry (site, direction, k) is a
counter-based exponential derived from the trial seed, so coupled runs
that reach the same entry see the same value.  Coupling replaces
``xi_0^+(x)`` by a free parameter u; reflecting walls set ``xi_0^-(a)``
and ``xi_0^+(b)`` to infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from ._numeric import keyed_exponential
from .walk import FREE, Boundary, InitialConfig, WalkSnapshot
from .weights.cache import ResourceError, WCache, get_cache
from .weights.functions import WeightFunction

__all__ = [
    "SimultaneousRing",
    "FixedRandomness",
    "EdgeClock",
    "TimelineState",
    "TimelineResult",
    "CouplingReport",
    "timeline_step",
    "timeline_run",
    "couple_family",
    "couple_restricted",
    "compare_runs",
    "consumed_time_report",
    "conservation_audit",
    "COUPLING_COLUMNS",
]

COUPLING_COLUMNS = ("trial", "y", "k", "family", "lhs", "rhs", "violated")


class SimultaneousRing(RuntimeError):
    """Two clocks rang at the same instant (raised only in strict mode)."""


@dataclass(frozen=True)
class FixedRandomness:
    """Addressable clock randomness xi_k^+-(y).

    ``coupled`` = (x, u) pins xi_0^+(x) = u.  ``constant`` replaces every
    entry by one value (degenerate fixtures).
    """

    seed: int
    coupled: tuple | None = None
    constant: float | None = None

    def xi(self, site: int, direction: int, k: int) -> float:
        """direction: +1 / -1."""
        if self.coupled is not None and k == 0 and direction > 0 and site == self.coupled[0]:
            return float(self.coupled[1])
        if self.constant is not None:
            return float(self.constant)
        return float(keyed_exponential(np.uint64(self.seed), site, 1 if direction > 0 else 0, k))

    def with_u(self, x: int, u: float) -> "FixedRandomness":
        return FixedRandomness(self.seed, (int(x), float(u)), self.constant)


@dataclass
class EdgeClock:
    residual: float | None
    used_count: int
    frozen: bool


class TimelineState:
    """Clock bookkeeping over a dense bracket of sites."""

    def __init__(self, wf: WeightFunction, randomness: FixedRandomness,
                 config: InitialConfig | None = None, boundary: Boundary = FREE, span: int = 64,
                 cache: WCache | None = None, max_span: int = 1 << 24):
        self.wf = wf
        self.cache = cache or get_cache(wf)
        self.randomness = randomness
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
            lo, hi = boundary.a - 2, boundary.b + 2
        L = hi - lo + 1
        self.lo = lo
        self.z = np.zeros(L, dtype=np.int64)
        for x, v in self.config.z0.items():
            if lo <= x <= hi:
                self.z[x - lo] = int(v)
        self.z[o - lo] += 1
        self.res = np.full((2, L), -1.0)
        self.dur = np.zeros((2, L))
        self.fsum = np.zeros((2, L))
        self.ring = np.zeros((2, L))
        self.njump = np.zeros((2, L), dtype=np.int64)
        self.tstart = np.zeros((2, L))
        self.time_at = np.zeros(L)
        self.yp = np.zeros(L)
        self.ym = np.zeros(L)
        self.comp = np.zeros((2, L))
        self.last = np.full(L, -1, dtype=np.int64)
        self.last[o - lo] = 0
        flags = 0
        cx, u = 0, 0.0
        if randomness.coupled is not None:
            flags |= 1
            cx, u = randomness.coupled
        wa = wb = 0
        if boundary.a is not None:
            flags |= 2
            wa = boundary.a
        if boundary.b is not None:
            flags |= 4
            wb = boundary.b
        const = 0.0
        if randomness.constant is not None:
            flags |= 8
            const = randomness.constant
        self.ist = np.array([o - lo, 0, 0, lo, cx, wa, wb, flags], dtype=np.int64)
        self.fst = np.array([0.0, float(u), float(const)])
        self._seed = np.uint64(randomness.seed)
        K.timeline_init(self._seed, self.ist, self.fst, self.z, self.res, self.dur, self.fsum,
                        self.njump, self.tstart, self.time_at, self._table(0), *wf.kernel_params())

    # -- accessors --------------------------------------------------------
    @property
    def pos(self) -> int:
        return int(self.ist[0]) + self.lo

    @property
    def n(self) -> int:
        return int(self.ist[1])

    @property
    def sim_time(self) -> float:
        return float(self.fst[0])

    @property
    def ties(self) -> int:
        return int(self.ist[2])

    def _i(self, x):
        i = x - self.lo
        return i if 0 <= i < self.z.shape[0] else None

    def local_time(self, x: int) -> int:
        i = self._i(x)
        return int(self.z[i]) if i is not None else self.config.count(x)

    def jumps(self, x: int, direction: int) -> int:
        i = self._i(x)
        return int(self.njump[1 if direction > 0 else 0, i]) if i is not None else 0

    def clock(self, x: int, direction: int) -> EdgeClock:
        d = 1 if direction > 0 else 0
        i = self._i(x)
        frozen = (d == 0 and self.boundary.a == x) or (d == 1 and self.boundary.b == x)
        if i is None:
            return EdgeClock(None, 0, frozen)
        r = self.res[d, i]
        used = int(self.njump[d, i]) + (1 if r >= 0 else 0)
        return EdgeClock(None if r < 0 else float(r), used, frozen)

    def snapshot(self) -> WalkSnapshot:
        return WalkSnapshot(self.n, self.pos, self.lo, self.z.copy(),
                            self.yp + self.comp[0], self.ym + self.comp[1])

    # -- growth / driving --------------------------------------------------
    def _table(self, steps: int):
        need = self.n + steps + 2 + (max(self.config.z0.values()) if self.config.z0 else 0)
        self.cache.ensure(min(need, self.cache.budget))
        return self.cache.inv_w

    def _grow(self):
        L = self.z.shape[0]
        if 2 * L > self.max_span:
            raise ResourceError(f"visited range exceeds the span bound {self.max_span}")
        pad = L // 2
        lo = self.lo - pad
        newL = L + 2 * pad

        def widen(arr, fill):
            out = np.full(arr.shape[:-1] + (newL,), fill, dtype=arr.dtype)
            out[..., pad : pad + L] = arr
            return out

        z = np.zeros(newL, dtype=np.int64)
        for x, v in self.config.z0.items():
            if lo <= x < lo + newL:
                z[x - lo] = int(v)
        z[pad : pad + L] = self.z
        self.z = z
        self.res = widen(self.res, -1.0)
        for name in ("dur", "fsum", "ring", "tstart", "time_at", "yp", "ym", "comp"):
            setattr(self, name, widen(getattr(self, name), 0.0))
        self.njump = widen(self.njump, 0)
        self.last = widen(self.last, -1)
        self.ist[0] += pad
        self.ist[3] = lo
        self.lo = lo

    def advance(self, n_stop: int, traj=None, strict: bool = False):
        tab = self._table(n_stop - self.n)
        params = self.wf.kernel_params()
        if traj is None:
            traj = np.empty(0, dtype=np.int64)
        ties0 = self.ties
        while self.n < n_stop:
            status = K.timeline_kernel(
                self._seed, self.ist, self.fst, self.z, self.res, self.dur, self.fsum, self.ring,
                self.njump, self.tstart, self.time_at, self.yp, self.ym, self.comp, self.last, n_stop, tab,
                *params, traj,
            )
            if strict and self.ties > ties0:
                raise SimultaneousRing(f"two clocks rang together before step {self.n}")
            if status == K.GROW:
                self._grow()
            elif status == K.STUCK:
                raise RuntimeError("both clocks at the current site are frozen")


@dataclass
class TimelineResult:
    state: TimelineState
    trajectory: np.ndarray | None
    snapshots: list = field(default_factory=list)

    @property
    def ties(self) -> int:
        return self.state.ties

    @property
    def failed(self) -> bool:
        return self.state.ties > 0


def timeline_step(state: TimelineState, wf: WeightFunction | None = None, randomness=None) -> TimelineState:
    """One jump of the construction (in place)."""
    state.advance(state.n + 1)
    return state


def timeline_run(wf: WeightFunction, steps: int, rng=None, fixed: FixedRandomness | None = None,
                 boundary: Boundary = FREE, config: InitialConfig | None = None,
                 record: bool = True, snapshots: int = 0, strict: bool = False,
                 cache: WCache | None = None) -> TimelineResult:
    """Run the construction for ``steps`` jumps.

    Either ``fixed`` randomness or an integer seed ``rng`` must be given.
    With ``record`` the full site sequence (length steps + 1) is returned.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if fixed is None:
        if isinstance(rng, np.random.Generator):
            rng = int(rng.integers(0, 2**63))
        fixed = FixedRandomness(int(rng or 0))
    st = TimelineState(wf, fixed, config, boundary, cache=cache)
    traj = None
    if record:
        traj = np.empty(steps + 1, dtype=np.int64)
        traj[0] = st.pos
    snaps = [st.snapshot()] if snapshots else []
    stops = sorted({steps} | {steps * j // snapshots for j in range(1, snapshots)} if snapshots else {steps})
    for s in stops:
        st.advance(s, traj if traj is not None else None, strict)
        if snapshots:
            snaps.append(st.snapshot())
    return TimelineResult(st, traj, snaps)


# ---------------------------------------------------------------------------
# coupling comparisons


@dataclass
class CouplingReport:
    trials: int = 0
    comparisons: dict = field(default_factory=dict)
    violations: dict = field(default_factory=dict)
    invalid_trials: int = 0
    rows: list = field(default_factory=list)

    @property
    def total_violations(self) -> int:
        return int(sum(self.violations.values()))

    def merge(self, other: "CouplingReport"):
        self.trials += other.trials
        self.invalid_trials += other.invalid_trials
        for d_self, d_other in ((self.comparisons, other.comparisons), (self.violations, other.violations)):
            for k, v in d_other.items():
                d_self[k] = d_self.get(k, 0) + v
        self.rows.extend(other.rows)

    def to_dict(self) -> dict:
        return {"trials": self.trials, "invalid_trials": self.invalid_trials,
                "comparisons": self.comparisons, "violations": self.violations,
                "total_violations": self.total_violations}


FAMILIES = ("Z_right", "Z_left", "N_right", "N_left", "Y_plus", "Y_minus")


def _events(res: TimelineResult, base: int, L: int, wf):
    traj = res.trajectory - base
    z0 = np.zeros(L, dtype=np.int64)
    cfg = res.state.config
    for x in range(base, base + L):
        z0[x - base] = cfg.z_start(x)
    tab = res.state.cache.inv_w
    return K.replay_events(traj, L, z0, tab, *wf.kernel_params())


def compare_runs(low: TimelineResult, high: TimelineResult, wf: WeightFunction, trial: int = 0,
                 sites=None, keep_rows: bool = False) -> CouplingReport:
    """Check the monotone-coupling inequalities between two runs.

    ``low`` is the run with the smaller xi_0^+(x) (or the larger interval).
    At matched k-th visits to y:  Z_low(y+1) >= Z_high(y+1),
    Z_low(y-1) <= Z_high(y-1), N_low(y,+) >= N_high(y,+),
    N_low(y,-) <= N_high(y,-).  At matched k-th jumps y -> y+1 (y -> y-1)
    the Y sums accumulated before the jump satisfy Y+_low <= Y+_high
    (Y-_low >= Y-_high).
    """
    rep = CouplingReport(trials=1)
    if low.failed or high.failed:
        rep.invalid_trials = 1
        return rep
    base = int(min(low.trajectory.min(), high.trajectory.min())) - 2
    L = int(max(low.trajectory.max(), high.trajectory.max())) - base + 3
    va, ja, ya = _events(low, base, L, wf)
    vb, jb, yb = _events(high, base, L, wf)
    stride = max(len(va), len(vb)) + 2
    ka = va[:, 0] * stride + va[:, 1]
    kb = vb[:, 0] * stride + vb[:, 1]
    _, ia, ib = np.intersect1d(ka, kb, assume_unique=True, return_indices=True)
    A, B = va[ia], vb[ib]
    if sites is not None:
        keep = np.isin(A[:, 0] + base, np.asarray(list(sites)))
        A, B = A[keep], B[keep]
    checks = {
        "Z_right": (A[:, 2], B[:, 2], A[:, 2] < B[:, 2]),
        "Z_left": (A[:, 3], B[:, 3], A[:, 3] > B[:, 3]),
        "N_right": (A[:, 4], B[:, 4], A[:, 4] < B[:, 4]),
        "N_left": (A[:, 5], B[:, 5], A[:, 5] > B[:, 5]),
    }
    ys = A[:, 0]
    kv = A[:, 1]
    jstride = max(len(ja), len(jb)) + 2
    kja = (ja[:, 0] * 2 + ja[:, 1]) * jstride + ja[:, 2]
    kjb = (jb[:, 0] * 2 + jb[:, 1]) * jstride + jb[:, 2]
    _, ja_i, jb_i = np.intersect1d(kja, kjb, assume_unique=True, return_indices=True)
    JA, JB, YA, YB = ja[ja_i], jb[jb_i], ya[ja_i], yb[jb_i]
    if sites is not None:
        keep = np.isin(JA[:, 0] + base, np.asarray(list(sites)))
        JA, YA, YB = JA[keep], YA[keep], YB[keep]
    plus = JA[:, 1] == 1
    checks["Y_plus"] = (YA[plus], YB[plus], YA[plus] > YB[plus])
    checks["Y_minus"] = (YA[~plus], YB[~plus], YA[~plus] < YB[~plus])
    for fam, (lhs, rhs, bad) in checks.items():
        rep.comparisons[fam] = int(len(lhs))
        rep.violations[fam] = int(np.count_nonzero(bad))
        if keep_rows or bad.any():
            if fam.startswith("Y"):
                sel = plus if fam == "Y_plus" else ~plus
                yy, kk = JA[sel, 0], JA[sel, 2]
            else:
                yy, kk = ys, kv
            idx = np.arange(len(lhs)) if keep_rows else np.nonzero(bad)[0]
            for i in idx:
                rep.rows.append((trial, int(yy[i] + base), int(kk[i]), fam, float(lhs[i]), float(rhs[i]),
                                 int(bad[i])))
    return rep


def couple_family(wf: WeightFunction, x: int, us, seed: int, steps: int,
                  boundary: Boundary = FREE, config: InitialConfig | None = None,
                  keep_rows: bool = False, trial: int = 0):
    """Runs sharing one randomness table, one per u = xi_0^+(x), plus comparisons.

    Returns (results, report) where the report compares every consecutive
    pair (u_i <= u_{i+1}).
    """
    us = list(us)
    if any(b < a for a, b in zip(us, us[1:])):
        raise ValueError("us must be sorted ascending")
    if not wf.is_nondecreasing():
        raise ValueError("the coupling needs a non-decreasing weight")
    base = FixedRandomness(int(seed))
    results = [timeline_run(wf, steps, fixed=base.with_u(x, u), boundary=boundary, config=config)
               for u in us]
    rep = CouplingReport()
    for lo_run, hi_run in zip(results, results[1:]):
        rep.merge(compare_runs(lo_run, hi_run, wf, trial, keep_rows=keep_rows))
    rep.trials = 1
    return results, rep


def couple_restricted(wf: WeightFunction, a: int, b: int, b_big: int, seed: int, steps: int,
                      origin: int | None = None, keep_rows: bool = False, trial: int = 0):
    """Walk on [a, b] against the walk on [a, b_big] with shared clocks.

    The smaller interval plays the role of the larger u: comparisons are
    made for sites in [a, b] with the big-interval run as ``low``.
    """
    if not b <= b_big:
        raise ValueError("need b <= b_big")
    cfg = InitialConfig(origin=a if origin is None else origin)
    fixed = FixedRandomness(int(seed))
    small = timeline_run(wf, steps, fixed=fixed, boundary=Boundary.reflect(a, b), config=cfg)
    big = timeline_run(wf, steps, fixed=fixed, boundary=Boundary.reflect(a, b_big), config=cfg)
    rep = compare_runs(big, small, wf, trial, sites=range(a, b + 1), keep_rows=keep_rows)
    return (small, big), rep


# ---------------------------------------------------------------------------
# consumed time


def consumed_time_report(state: TimelineState) -> dict:
    """Per visited site: T+ / T- (durations of clocks that rang) and diagnostics.

    ``partial_plus`` / ``partial_minus`` are the elapsed parts of clocks
    still live; ``time_at`` is the total time spent at the site, which
    equals T + partial on each edge whose clock has run throughout.
    """
    out = {}
    for i in np.nonzero(state.z > 0)[0]:
        x = int(i) + state.lo
        live = state.res[:, i] >= 0
        partial = np.where(live, state.time_at[i] - state.tstart[:, i], 0.0)
        out[x] = {
            "t_plus": float(state.ring[1, i]),
            "t_minus": float(state.ring[0, i]),
            "partial_plus": float(partial[1]),
            "partial_minus": float(partial[0]),
            "residual_plus": float(state.res[1, i]) if live[1] else None,
            "residual_minus": float(state.res[0, i]) if live[0] else None,
            "time_at": float(state.time_at[i]),
        }
    return out


def conservation_audit(state: TimelineState) -> float:
    """Max relative error of  rung + elapsed + residual = started  over finite clocks.

    The elapsed part of a live clock is measured independently as the time
    spent at its site since the clock started.
    """
    live = (state.res >= 0) & np.isfinite(state.res)
    elapsed = np.where(live, state.time_at[None, :] - state.tstart, 0.0)
    lhs = state.ring + np.where(live, state.res, 0.0) + elapsed
    rhs = state.fsum
    err = np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)
    err[rhs == 0] = np.abs(lhs[rhs == 0])
    return float(err.max()) if err.size else 0.0
