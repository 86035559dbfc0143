"""Clock-per-edge construction: law, determinism, coupling, consumed time."""

from collections import Counter
from itertools import product

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vrrw._kernels import keyed_exponential
from vrrw.stats import path_law_chisq
from vrrw.timeline import (
    FixedRandomness,
    SimultaneousRing,
    TimelineState,
    compare_runs,
    conservation_audit,
    consumed_time_report,
    couple_family,
    couple_restricted,
    timeline_run,
    timeline_step,
)
from vrrw.urn import urn_path_probability
from vrrw.walk import Boundary, InitialConfig, check_ynpm, path_probability
from vrrw.weights import Constant, parse_weight_spec

LINEAR = parse_weight_spec("linear:1,1")


def test_randomness_is_addressable():
    fx = FixedRandomness(5)
    a = fx.xi(3, +1, 7)
    assert a == fx.xi(3, +1, 7)
    assert a != fx.xi(3, -1, 7)
    assert a != fx.xi(4, +1, 7)
    assert a == float(keyed_exponential(np.uint64(5), 3, 1, 7))
    assert fx.with_u(3, 0.25).xi(3, +1, 0) == 0.25
    assert fx.with_u(3, 0.25).xi(3, +1, 1) == fx.xi(3, +1, 1)


def test_keyed_exponential_is_exponential():
    vals = np.array([keyed_exponential(np.uint64(1), s, d, k)
                     for s in range(-20, 20) for d in (0, 1) for k in range(250)])
    from scipy.stats import kstest
    assert kstest(vals, "expon").pvalue > 1e-3


def test_determinism():
    a = timeline_run(LINEAR, 20_000, rng=3)
    b = timeline_run(LINEAR, 20_000, fixed=FixedRandomness(3))
    assert np.array_equal(a.trajectory, b.trajectory)
    assert np.array_equal(a.state.ring, b.state.ring)
    assert a.state.sim_time == b.state.sim_time


def test_step_by_step_matches_run():
    st_ = TimelineState(LINEAR, FixedRandomness(8))
    path = [st_.pos]
    for _ in range(200):
        timeline_step(st_)
        path.append(st_.pos)
    r = timeline_run(LINEAR, 200, rng=8)
    assert path == r.trajectory.tolist()


def test_first_step_uses_both_clocks():
    fx = FixedRandomness(4)
    r = timeline_run(Constant(1.0), 1, fixed=fx)
    right = fx.xi(0, +1, 0) < fx.xi(0, -1, 0)
    assert r.trajectory[1] == (1 if right else -1)
    assert r.state.sim_time == pytest.approx(min(fx.xi(0, +1, 0), fx.xi(0, -1, 0)))


def test_constant_clocks_tie():
    fx = FixedRandomness(0, constant=1.0)
    with pytest.raises(SimultaneousRing):
        timeline_run(Constant(1.0), 5, fixed=fx, strict=True)
    r = timeline_run(Constant(1.0), 5, fixed=fx)
    assert r.ties >= 1 and r.failed
    # ties are broken toward the right edge
    assert r.trajectory[1] == 1


def test_depth_four_path_law():
    runs = 20000
    counts = Counter(tuple(int(v) for v in timeline_run(LINEAR, 4, rng=s).trajectory) for s in range(runs))
    probs = {}
    for steps in product((-1, 1), repeat=4):
        p = tuple(int(v) for v in np.cumsum((0,) + steps))
        probs[p] = path_probability(LINEAR, p)
    assert path_law_chisq(counts, probs).p > 1e-3


def test_reflected_three_sites_is_an_urn():
    b = Boundary.reflect(0, 2)
    cfg = InitialConfig(origin=1)
    runs = 20000
    seqs = Counter()
    for s in range(runs):
        t = timeline_run(LINEAR, 6, rng=s, boundary=b, config=cfg).trajectory
        assert list(t[::2]) == [1, 1, 1, 1]
        seqs[tuple(int(v == 2) for v in t[1::2])] += 1
    probs = {s: urn_path_probability(LINEAR, s) for s in product((1, 0), repeat=3)}
    assert path_law_chisq(seqs, probs).p > 1e-3


def test_frozen_walls():
    b = Boundary.reflect(-1, 3)
    r = timeline_run(LINEAR, 50_000, rng=2, boundary=b)
    s = r.state
    assert r.trajectory.min() == -1 and r.trajectory.max() == 3
    assert s.jumps(-1, -1) == 0 and s.jumps(3, +1) == 0
    assert s.clock(-1, -1).frozen and s.clock(3, +1).frozen
    ct = consumed_time_report(s)
    assert ct[-1]["t_minus"] == 0.0
    assert ct[3]["t_plus"] == 0.0


def test_ynpm_holds_for_timeline():
    r = timeline_run(parse_weight_spec("nlogn:1"), 100_000, rng=1)
    assert check_ynpm(r.state.snapshot(), r.state.config, r.state.cache) <= 1e-9


@pytest.mark.parametrize("boundary", [Boundary(), Boundary.reflect(0, 4)])
def test_conservation_audit(boundary):
    cfg = InitialConfig(origin=0 if boundary.free else 2)
    r = timeline_run(LINEAR, 100_000, rng=5, boundary=boundary, config=cfg)
    assert conservation_audit(r.state) <= 1e-9


def test_consumed_time_unvisited_site():
    r = timeline_run(LINEAR, 10, fixed=FixedRandomness(0), boundary=Boundary.reflect(0, 8),
                     config=InitialConfig(origin=0))
    s = r.state
    ct = consumed_time_report(s)
    assert 8 not in ct
    assert s.local_time(8) == 0
    assert s.clock(8, +1).used_count == 0 and s.clock(8, -1).used_count == 0


def test_consumed_time_balance_reflected():
    b = Boundary.reflect(0, 4)
    r = timeline_run(LINEAR, 1_000_000, rng=7, boundary=b, config=InitialConfig(origin=2), record=False)
    ct = consumed_time_report(r.state)[2]
    # both clocks at an interior site run whenever the walk is there
    assert ct["t_plus"] + ct["partial_plus"] == pytest.approx(ct["time_at"], rel=1e-12)
    assert ct["t_minus"] + ct["partial_minus"] == pytest.approx(ct["time_at"], rel=1e-12)
    diff = abs(ct["t_plus"] - ct["t_minus"])
    assert diff == pytest.approx(abs(ct["partial_plus"] - ct["partial_minus"]), abs=1e-9 * ct["time_at"])


def test_equal_u_gives_equal_runs():
    _, rep = couple_family(LINEAR, 0, [1.0, 1.0], seed=3, steps=5000, keep_rows=True)
    assert rep.total_violations == 0
    assert rep.rows and all(row[4] == row[5] for row in rep.rows)


def test_coupling_changes_the_run():
    (lo, hi), rep = couple_family(LINEAR, 0, [0.05, 5.0], seed=1, steps=2000)
    assert not np.array_equal(lo.trajectory, hi.trajectory)
    assert rep.total_violations == 0
    assert sum(rep.comparisons.values()) > 0


@given(st.integers(0, 2 ** 32), st.floats(0.01, 3), st.floats(0.01, 3), st.integers(-2, 2))
def test_coupling_inequalities_hold(seed, u1, u2, x):
    lo_u, hi_u = sorted((u1, u2))
    _, rep = couple_family(LINEAR, x, [lo_u, hi_u], seed=seed, steps=2000)
    assert rep.invalid_trials or rep.total_violations == 0


def test_restricted_coupling():
    for seed in range(100):
        _, rep = couple_restricted(LINEAR, 0, 3, 5, seed=seed, steps=2000)
        assert rep.total_violations == 0


def test_coupling_requires_order():
    with pytest.raises(ValueError):
        couple_family(LINEAR, 0, [2.0, 0.5], seed=0, steps=10)
    with pytest.raises(ValueError):
        couple_restricted(LINEAR, 0, 5, 3, seed=0, steps=10)


def test_compare_detects_swapped_roles():
    # with the roles reversed the inequalities must fail somewhere
    found = False
    for seed in range(20):
        (lo, hi), _ = couple_family(LINEAR, 0, [0.05, 5.0], seed=seed, steps=2000)
        if compare_runs(hi, lo, LINEAR).total_violations > 0:
            found = True
            break
    assert found


def test_invalid_steps():
    with pytest.raises(ValueError):
        timeline_run(LINEAR, 0, rng=0)
