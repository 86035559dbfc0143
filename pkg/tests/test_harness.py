import json

import numpy as np
import pytest

from vrrw import harness
from vrrw._numeric import GOLDEN, mix64, mix64_array
from vrrw.harness import (
    AllReplicasFailed,
    ConfigError,
    ExperimentConfig,
    load_config,
    run_experiment,
    seed_stream,
    write_report,
)


def stream_array(master, count):
    base = np.uint64(mix64(master))
    idx = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64_array(base + np.uint64(GOLDEN) * idx)


def test_seed_golden_value():
    assert seed_stream(0, 0) == 0xE220A8397B1DCDAF


def test_seed_array_matches_scalar():
    arr = stream_array(123, 50)
    assert [int(v) for v in arr] == [seed_stream(123, i) for i in range(50)]


@pytest.mark.parametrize("master", [0, 1, 2 ** 64 - 1])
def test_no_seed_collisions(master):
    seeds = stream_array(master, 1_000_000)
    assert np.unique(seeds).size == seeds.size


def test_streams_differ_between_masters():
    a, b = stream_array(0, 10_000), stream_array(1, 10_000)
    assert np.intersect1d(a, b).size == 0


def walk_cfg(**kw):
    d = {"weight": "linear:1,1", "mode": "Walk", "steps": 5000, "replicas": 6, "master_seed": 3}
    d.update(kw)
    return d


def test_defaults_filled():
    cfg = ExperimentConfig.from_dict({"weight": "const:1", "mode": "Walk"})
    assert cfg.steps == 1000 and cfg.replicas == 1
    assert cfg.detector["window_fraction"] == 0.5
    assert cfg.tolerances["residual"] == 1e-9


@pytest.mark.parametrize("bad", [
    {"mode": "Walk"},
    {"weight": "linear:1,1"},
    {"weight": "linear:1,1", "mode": "Wander"},
    {"weight": "linear:1,1", "mode": "Walk", "steps": 0},
    {"weight": "linear:1,1", "mode": "Walk", "surprise": 1},
    {"weight": "linear:1,1", "mode": "Walk", "boundary": [3, 1]},
    {"weight": "poly:2", "mode": "Walk"},
    {"weight": "linear:1,1", "mode": "Walk", "master_seed": -1},
    {"weight": "linear:1,1", "mode": "Walk", "detector": {"window_fraction": 1.5}},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)
    p.write_text(json.dumps(walk_cfg()))
    assert load_config(p).weight == "linear:1,1"


def test_alpha_c_forces_one_replica():
    cfg = ExperimentConfig.from_dict({"weight": "nlogn:1", "mode": "AlphaC", "replicas": 9})
    assert cfg.replicas == 1


def test_hash_ignores_output_and_workers():
    a = ExperimentConfig.from_dict(walk_cfg(workers=4, output={"dir": "x"}))
    b = ExperimentConfig.from_dict(walk_cfg())
    c = ExperimentConfig.from_dict(walk_cfg(master_seed=4))
    assert a.config_hash() == b.config_hash() != c.config_hash()


def test_walk_experiment_report():
    rep = run_experiment(walk_cfg(expect={"max_frequency": {">10": 0.5}}))
    d = rep.to_dict()
    assert d["replicas"]["completed"] == 6
    assert sum(rep.range_counts.values()) == 6
    assert rep.residuals["ynpm"] <= 1e-9 and rep.residuals["eqw"] <= 1e-9
    assert rep.passed
    assert json.loads(json.dumps(d)) == d


def test_timeline_and_urn_modes():
    t = run_experiment({"weight": "linear:1,1", "mode": "Timeline", "steps": 5000, "replicas": 4})
    assert t.residuals["conservation"] <= 1e-9 and t.passed
    u = run_experiment({"weight": "poly:1,1", "mode": "Urn", "steps": 2000, "replicas": 150,
                        "urn": {"horizons": [100, 1000]},
                        "expect": {"sign_test": True, "sign_changes_increase": False}})
    assert u.tests["sign_test"]["n"] > 0
    assert set(u.extra["urn"]["median_sign_changes"]) == {"100", "1000", "2000"}
    assert u.passed


def test_couple_mode():
    rep = run_experiment({"weight": "linear:1,1", "mode": "Couple", "steps": 2000, "replicas": 5})
    assert rep.extra["coupling"]["total_violations"] == 0
    assert rep.passed


def test_alpha_c_mode():
    rep = run_experiment({"weight": "linear:1,1", "mode": "AlphaC", "expect": {"alpha_c_status": "Infinite"}})
    assert rep.extra["alpha_c"]["status"] == "Infinite"
    assert rep.passed


def test_failed_expectation_is_reported():
    rep = run_experiment(walk_cfg(expect={"modal_range_size": 99}))
    assert not rep.passed
    assert any(c["name"] == "modal_range_size" and not c["passed"] for c in rep.checks)


def test_quarantine(monkeypatch):
    real = harness._walk_replica

    def flaky(cfg, wf, seed, out):
        if seed == seed_stream(cfg["master_seed"], 2):
            raise RuntimeError("boom")
        return real(cfg, wf, seed, out)

    monkeypatch.setattr(harness, "_walk_replica", flaky)
    rep = run_experiment(walk_cfg())
    d = rep.to_dict()
    assert d["replicas"]["completed"] == 5
    assert d["replicas"]["failed"] == [{"replica": 2, "seed": seed_stream(3, 2), "error": "RuntimeError: boom"}]


def test_all_replicas_failed(monkeypatch):
    def broken(cfg, wf, seed, out):
        raise RuntimeError("nope")

    monkeypatch.setattr(harness, "_walk_replica", broken)
    with pytest.raises(AllReplicasFailed):
        run_experiment(walk_cfg())


def read_dir(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


def test_reproducible_and_worker_invariant(tmp_path):
    cfg = walk_cfg(replicas=8, trajectory_cadence=500, output={"per_replica_json": True})
    outs = []
    for i, workers in enumerate((1, 1, 3)):
        d = tmp_path / f"run{i}"
        write_report(run_experiment(cfg, workers=workers), d)
        outs.append(read_dir(d))
    assert outs[0] == outs[1] == outs[2]
    assert "trajectories/replica_00007.csv" in outs[0]
    assert "replicas/replica_00000.json" in outs[0]


def test_report_files(tmp_path):
    rep = run_experiment({"weight": "linear:1,1", "mode": "Couple", "steps": 1000, "replicas": 2,
                          "couple": {"all_rows": True}, "output": {"dir": str(tmp_path)}})
    assert rep.passed
    lines = (tmp_path / "coupling.csv").read_text().splitlines()
    assert lines[0] == "trial,y,k,family,lhs,rhs,violated"
    assert len(lines) > 1
    header = (tmp_path / "replicas.csv").read_text().splitlines()[0]
    assert header.split(",") == list(harness.REPLICA_COLUMNS)
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["format"] == "vrrw-report" and report["format_version"] == 1
