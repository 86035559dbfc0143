"""Compiled inner loops.

Sites live in dense arrays indexed by ``site - lo``.  Every kernel runs
until a stop condition and returns a status so the Python side can grow
arrays, refill uniforms or take snapshots, then resume exactly where the
kernel stopped.  Weights are looked up in the shared ``1/w`` table when the
argument is tabulated and evaluated from the family formula otherwise.
"""

import math

import numpy as np
from numba import njit

from ._numeric import keyed_exponential, neumaier_add

OK, GROW, STUCK = 0, 1, 2


@njit(cache=True)
def w_eval(kind, a, b, scale, aux, n):
    x = float(n)
    if kind == 0:
        v = a
    elif kind == 1:
        v = a * x + b
    elif kind == 2:
        v = (x + b) ** a
    elif kind == 3:
        v = (x + a) * math.log(x + a + 1.0)
    elif kind == 4:
        v = a * (x + b) * math.log(math.log(x + b))
    elif kind == 5:
        # first (m!)**2 strictly above n
        m = 0
        while m < aux.shape[0] - 1 and aux[m] <= x:
            m += 1
        v = aux[m]
    else:
        i = n if n < aux.shape[0] else aux.shape[0] - 1
        v = aux[i]
    return scale * v


@njit(cache=True)
def inv_w(z, tab, kind, a, b, scale, aux):
    if z < tab.shape[0]:
        return tab[z]
    return 1.0 / w_eval(kind, a, b, scale, aux, z)


# ---------------------------------------------------------------------------
# direct VRRW


@njit(cache=True)
def walk_kernel(z, yp, ym, comp, last, ipos, n_stop, unif, ui, walls, tab, kind, a, b, scale, aux,
                traj, cadence, ti):
    """Advance the walk.

    ipos = [pos_index, n]; comp = (2, L) compensation terms for yp / ym;
    walls = [left_index, right_index] of reflecting sites (-1 / L if free).
    Returns (status, ui, ti).
    """
    L = z.shape[0]
    x = ipos[0]
    n = ipos[1]
    status = OK
    while n < n_stop:
        if x == walls[0]:
            right = True
        elif x == walls[1]:
            right = False
        else:
            if x == 0 or x == L - 1:
                status = GROW
                break
            if ui >= unif.shape[0]:
                break
            il = inv_w(z[x - 1], tab, kind, a, b, scale, aux)
            ir = inv_w(z[x + 1], tab, kind, a, b, scale, aux)
            right = unif[ui] * (il + ir) < il
            ui += 1
        if right:
            t = x + 1
            yp[x], comp[0, x] = neumaier_add(yp[x], comp[0, x], inv_w(z[t], tab, kind, a, b, scale, aux))
        else:
            t = x - 1
            ym[x], comp[1, x] = neumaier_add(ym[x], comp[1, x], inv_w(z[t], tab, kind, a, b, scale, aux))
        z[t] += 1
        n += 1
        last[t] = n
        x = t
        if cadence > 0 and n % cadence == 0 and ti < traj.shape[0]:
            traj[ti] = x
            ti += 1
    ipos[0] = x
    ipos[1] = n
    return status, ui, ti


# ---------------------------------------------------------------------------
# w-urns
#
# ist = [r, b, n, sign_changes, last_sign, last_red, last_blue, ties]
# fst = [wr, wr_c, wb, wb_c, yr, yr_c, yb, yb_c, t_red, t_blue]


@njit(cache=True)
def _urn_record(ist, fst, red, tab, kind, a, b, scale, aux):
    n = ist[2]
    d = inv_w(n, tab, kind, a, b, scale, aux)
    if red:
        fst[0], fst[1] = neumaier_add(fst[0], fst[1], inv_w(ist[0], tab, kind, a, b, scale, aux))
        fst[4], fst[5] = neumaier_add(fst[4], fst[5], d)
        ist[0] += 1
        ist[5] = n + 1
    else:
        fst[2], fst[3] = neumaier_add(fst[2], fst[3], inv_w(ist[1], tab, kind, a, b, scale, aux))
        fst[6], fst[7] = neumaier_add(fst[6], fst[7], d)
        ist[1] += 1
        ist[6] = n + 1
    ist[2] = n + 1
    # sign of mhat is the sign of r - b since W is strictly increasing
    diff = ist[0] - ist[1]
    s = 1 if diff > 0 else (-1 if diff < 0 else 0)
    if s != 0:
        if ist[4] != 0 and s != ist[4]:
            ist[3] += 1
        ist[4] = s


@njit(cache=True)
def urn_direct_kernel(ist, fst, n_stop, unif, ui, tab, kind, a, b, scale, aux, seq):
    """Draw until n_stop or uniforms run out; seq[n] = 1 for red (if long enough)."""
    while ist[2] < n_stop and ui < unif.shape[0]:
        ir = inv_w(ist[0], tab, kind, a, b, scale, aux)
        ib = inv_w(ist[1], tab, kind, a, b, scale, aux)
        # P(red) = w(r) / (w(r) + w(b)) = ib / (ir + ib)
        red = unif[ui] * (ir + ib) < ib
        ui += 1
        if ist[2] < seq.shape[0]:
            seq[ist[2]] = 1 if red else 0
        _urn_record(ist, fst, red, tab, kind, a, b, scale, aux)
    return ui


@njit(cache=True)
def urn_rubin_kernel(ist, fst, n_stop, unif, ui, tab, kind, a, b, scale, aux, seq):
    """Merge the two exponential time lines until n_stop events.

    fst[8] / fst[9] hold the next red / blue ring times and must be
    initialised (first ring times) by the caller; every later ball consumes
    one uniform through the inverse CDF.
    """
    while ist[2] < n_stop and ui < unif.shape[0]:
        tr = fst[8]
        tb = fst[9]
        if tr == tb:
            ist[7] += 1
        red = tr <= tb
        if ist[2] < seq.shape[0]:
            seq[ist[2]] = 1 if red else 0
        _urn_record(ist, fst, red, tab, kind, a, b, scale, aux)
        xi = -math.log1p(-unif[ui])
        ui += 1
        if red:
            fst[8] = tr + xi * inv_w(ist[0], tab, kind, a, b, scale, aux)
        else:
            fst[9] = tb + xi * inv_w(ist[1], tab, kind, a, b, scale, aux)
    return ui


# ---------------------------------------------------------------------------
# time-line construction
#
# Per site index i and direction d (0: edge (x, x-1), 1: edge (x, x+1)):
#   res[d, i]   remaining time of the live clock, -1 when no clock is live
#   dur[d, i]   full duration of the live clock
#   fsum[d, i]  started durations (finite clocks only)
#   ring[d, i]  durations of clocks that rang (the consumed time T_x)
#   njump[d, i] number of jumps along the edge = index of the next clock
#   tstart[d, i] time spent at the site when the live clock started
# ist = [pos_index, n, ties, lo, coupled_site, left_wall_site, right_wall_site, flags]
#   flags: 1 = xi_0^+(coupled_site) is fst[1], 2 / 4 = left / right wall frozen,
#          8 = every other xi equals fst[2] (degenerate fixtures)
# fst = [sim_time, u, constant_xi]


@njit(cache=True)
def _xi(seed, ist, fst, i, d, k):
    site = i + ist[3]
    if k == 0:
        fl = ist[7]
        if d == 1 and (fl & 1) != 0 and site == ist[4]:
            return fst[1]
        if d == 0 and (fl & 2) != 0 and site == ist[5]:
            return np.inf
        if d == 1 and (fl & 4) != 0 and site == ist[6]:
            return np.inf
    if (ist[7] & 8) != 0:
        return fst[2]
    return keyed_exponential(seed, site, d, k)


@njit(cache=True)
def _start_clock(seed, ist, fst, z, res, dur, fsum, njump, tstart, time_at, i, d, tab, kind, a, b, scale, aux):
    nb = i - 1 if d == 0 else i + 1
    xi = _xi(seed, ist, fst, i, d, njump[d, i])
    t = xi * inv_w(z[nb], tab, kind, a, b, scale, aux)
    res[d, i] = t
    dur[d, i] = t
    tstart[d, i] = time_at[i]
    if t < np.inf:
        fsum[d, i] += t


@njit(cache=True)
def timeline_init(seed, ist, fst, z, res, dur, fsum, njump, tstart, time_at, tab, kind, a, b, scale, aux):
    i = ist[0]
    _start_clock(seed, ist, fst, z, res, dur, fsum, njump, tstart, time_at, i, 0, tab, kind, a, b, scale, aux)
    _start_clock(seed, ist, fst, z, res, dur, fsum, njump, tstart, time_at, i, 1, tab, kind, a, b, scale, aux)


@njit(cache=True)
def timeline_kernel(seed, ist, fst, z, res, dur, fsum, ring, njump, tstart, time_at, yp, ym, comp, last,
                    n_stop, tab, kind, a, b, scale, aux, traj):
    """Run the clock construction until n_stop jumps.

    traj (if non-empty) receives the site after jump n at traj[n].  Returns a status code (OK, GROW or STUCK when both clocks are
    frozen).
    """
    L = z.shape[0]
    i = ist[0]
    n = ist[1]
    status = OK
    while n < n_stop:
        # the arrival clocks of the next site need its far neighbour
        if i <= 1 or i >= L - 2:
            status = GROW
            break
        rl = res[0, i]
        rr = res[1, i]
        if rr < rl:
            d = 1
        elif rl < rr:
            d = 0
        else:
            if rr == np.inf:
                status = STUCK
                break
            ist[2] += 1  # simultaneous ring: counted, broken toward the right
            d = 1
        dt = res[d, i]
        fst[0] += dt
        time_at[i] += dt
        res[1 - d, i] -= dt
        ring[d, i] += dur[d, i]
        res[d, i] = -1.0
        njump[d, i] += 1
        if d == 1:
            t = i + 1
            yp[i], comp[0, i] = neumaier_add(yp[i], comp[0, i], inv_w(z[t], tab, kind, a, b, scale, aux))
        else:
            t = i - 1
            ym[i], comp[1, i] = neumaier_add(ym[i], comp[1, i], inv_w(z[t], tab, kind, a, b, scale, aux))
        z[t] += 1
        n += 1
        last[t] = n
        # arrival at t: fresh clock back toward the source, resume or start the other
        back = 0 if d == 1 else 1
        _start_clock(seed, ist, fst, z, res, dur, fsum, njump, tstart, time_at, t, back,
                     tab, kind, a, b, scale, aux)
        if res[1 - back, t] < 0:
            _start_clock(seed, ist, fst, z, res, dur, fsum, njump, tstart, time_at, t, 1 - back,
                         tab, kind, a, b, scale, aux)
        i = t
        if traj.shape[0] > n:
            traj[n] = i + ist[3]
    ist[0] = i
    ist[1] = n
    return status


# ---------------------------------------------------------------------------
# replay of a trajectory for the coupling comparisons


@njit(cache=True)
def replay_events(traj, L, z0, tab, kind, a, b, scale, aux):
    """Visit and jump records of a recorded trajectory (site indices).

    Visit rows: (site, k, Z(site+1), Z(site-1), N(site,+), N(site,-)) at the
    k-th visit.  Jump rows: (site, dir, k) with float Y before the k-th jump
    along that edge.  Y is accumulated with plain addition, which keeps
    rounding monotone so termwise inequalities survive summation.
    """
    n = traj.shape[0] - 1
    z = z0.copy()
    nj = np.zeros((2, L), dtype=np.int64)
    y = np.zeros((2, L))
    vis = np.empty((n + 1, 6), dtype=np.int64)
    jmp = np.empty((n, 3), dtype=np.int64)
    jy = np.empty(n)
    s = traj[0]
    vis[0, 0] = s
    vis[0, 1] = z[s]
    vis[0, 2] = z[s + 1]
    vis[0, 3] = z[s - 1]
    vis[0, 4] = 0
    vis[0, 5] = 0
    for m in range(n):
        x = traj[m]
        t = traj[m + 1]
        d = 1 if t == x + 1 else 0
        jmp[m, 0] = x
        jmp[m, 1] = d
        jmp[m, 2] = nj[d, x] + 1
        jy[m] = y[d, x]
        y[d, x] += inv_w(z[t], tab, kind, a, b, scale, aux)
        nj[d, x] += 1
        z[t] += 1
        vis[m + 1, 0] = t
        vis[m + 1, 1] = z[t]
        vis[m + 1, 2] = z[t + 1]
        vis[m + 1, 3] = z[t - 1]
        vis[m + 1, 4] = nj[1, t]
        vis[m + 1, 5] = nj[0, t]
    return vis, jmp, jy
