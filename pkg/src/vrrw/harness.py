"""Declarative Monte Carlo experiments.

An experiment is one JSON document (validated against
``schemas/config.schema.json``).  Replicas get independent seeds from
:func:`seed_stream`, run in a process pool, and are aggregated in replica
order, so the report does not depend on completion order or worker count.
A replica that raises is quarantined and listed in the report.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np

from . import __version__
from ._numeric import GOLDEN, _MASK64, mix64
from .stats import TooFewSamples, sign_symmetry_test, wilson_interval
from .weights import ParseError, estimate_alpha_c, get_cache, parse_weight_spec

__all__ = [
    "ConfigError",
    "AllReplicasFailed",
    "ExperimentConfig",
    "AggregateReport",
    "seed_stream",
    "run_replica",
    "run_experiment",
    "load_config",
    "write_report",
    "REPLICA_COLUMNS",
    "RANGE_COLUMNS",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = 1
REPORT_VERSION = 1

REPLICA_COLUMNS = ("replica", "seed", "status", "range_size", "range_lo", "range_hi",
                   "ynpm_residual", "eqw_drift", "conservation_error", "ties",
                   "mhat", "sign_changes", "frozen", "stabilized", "violations")
RANGE_COLUMNS = ("range_size", "count", "frequency", "wilson_low", "wilson_high")

MODES = ("Walk", "Urn", "Timeline", "Couple", "AlphaC")


class ConfigError(ValueError):
    pass


class AllReplicasFailed(RuntimeError):
    pass


def seed_stream(master_seed: int, replica_index: int) -> int:
    """64-bit seed of replica ``replica_index``.

    ``mix64(mix64(master) + GOLDEN * (index + 1))`` with the splitmix64
    finalizer; injective in the index for a fixed master seed.
    """
    base = mix64(int(master_seed) & _MASK64)
    return mix64((base + GOLDEN * (int(replica_index) + 1)) & _MASK64)


def _schema() -> dict:
    return json.loads(resources.files("vrrw").joinpath("schemas/config.schema.json").read_text())


_DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "steps": 1000,
    "replicas": 1,
    "master_seed": 0,
    "workers": 1,
    "boundary": None,
    "initial_config": {"origin": 0, "z0": {}},
    "detector": {"window_fraction": 0.5, "stabilization_threshold": 0.05, "frozen_start": 0.1,
                 "nonlocal_sites": 10},
    "snapshots": 8,
    "trajectory_cadence": 0,
    "urn": {"method": "direct", "horizons": []},
    "couple": {"x": 0, "us": [0.5, 2.0], "all_rows": False},
    "alpha_c": {"tol": 0.05, "alpha_max": 64.0},
    "tolerances": {"residual": 1e-9, "conservation": 1e-9},
    "expect": {},
    "output": {},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description (defaults filled in)."""

    data: dict

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(d, _schema())
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {path}: {exc.message}") from None
        full = json.loads(json.dumps(_DEFAULTS))
        for k, v in d.items():
            if isinstance(v, dict) and isinstance(full.get(k), dict) and k != "expect":
                full[k].update(v)
            else:
                full[k] = v
        try:
            parse_weight_spec(full["weight"])
        except ParseError as exc:
            raise ConfigError(f"weight: {exc}") from None
        b = full["boundary"]
        if b is not None and not b[0] < b[1]:
            raise ConfigError("boundary needs a < b")
        if full["mode"] == "AlphaC":
            full["replicas"] = 1
        return cls(full)

    def __getattr__(self, name):
        try:
            return self.data[name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def weight_spec(self) -> str:
        return self.data["weight"]

    def canonical(self) -> dict:
        """The fields that determine results (output location and worker count excluded)."""
        return {k: v for k, v in self.data.items() if k not in ("output", "workers")}

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return ExperimentConfig.from_dict(d)


# ---------------------------------------------------------------------------
# replicas


def _initial(cfg: dict):
    from .walk import InitialConfig

    ic = cfg["initial_config"]
    return InitialConfig({int(k): int(v) for k, v in ic.get("z0", {}).items()}, int(ic.get("origin", 0)))


def _boundary(cfg: dict):
    from .walk import FREE, Boundary

    b = cfg["boundary"]
    return FREE if b is None else Boundary.reflect(int(b[0]), int(b[1]))


def _range_of(traj, window_fraction):
    n = traj.shape[0] - 1
    n0 = n - int(window_fraction * n)
    sites = np.unique(traj[n0:])
    return sites


def _walk_replica(cfg, wf, seed, out):
    from .walk import check_eqw_constancy, check_ynpm, localization_report, profile_report, vrrw_run

    cache = get_cache(wf)
    res = vrrw_run(wf, _initial(cfg), _boundary(cfg), cfg["steps"], seed=seed,
                   snapshots=cfg["snapshots"], window_fraction=cfg["detector"]["window_fraction"],
                   cadence=cfg["trajectory_cadence"], cache=cache)
    rep = localization_report(res)
    drift = max(check_eqw_constancy(res, x, cache) for x in rep.recent_range)
    out.update(range_size=rep.range_size, range_lo=rep.recent_range[0], range_hi=rep.recent_range[-1],
               ynpm_residual=check_ynpm(res.state), eqw_drift=drift)
    out["localization"] = rep.to_dict()
    out["profile"] = profile_report(rep)
    return res.trajectory


def _timeline_replica(cfg, wf, seed, out):
    from .timeline import FixedRandomness, conservation_audit, timeline_run
    from .walk import check_ynpm

    cache = get_cache(wf)
    config = _initial(cfg)
    res = timeline_run(wf, cfg["steps"], fixed=FixedRandomness(seed), boundary=_boundary(cfg),
                       config=config, cache=cache)
    sites = _range_of(res.trajectory, cfg["detector"]["window_fraction"])
    out.update(range_size=int(sites.size), range_lo=int(sites[0]), range_hi=int(sites[-1]),
               ynpm_residual=check_ynpm(res.state.snapshot(), config, cache),
               conservation_error=conservation_audit(res.state), ties=res.ties)
    c = cfg["trajectory_cadence"]
    return res.trajectory[c::c] if c else None


def _urn_replica(cfg, wf, seed, out):
    from .urn import urn_run_direct, urn_run_rubin

    cache = get_cache(wf)
    det = cfg["detector"]
    horizons = sorted(set(cfg["urn"]["horizons"]) | {cfg["steps"]})
    horizons = [h for h in horizons if h <= cfg["steps"]]
    run = urn_run_rubin if cfg["urn"]["method"] == "rubin" else urn_run_direct
    tr = run(wf, cfg["steps"], np.random.Generator(np.random.PCG64(seed)), horizons=horizons, cache=cache)
    st = tr.state
    mh = float(st.mhat)
    recomputed = st.recomputed_mhat(cache)
    out.update(
        mhat=mh,
        sign_changes=st.sign_changes,
        frozen=st.frozen_color(det["frozen_start"]) or "",
        mhat_residual=abs(mh - recomputed) / max(1.0, abs(recomputed)),
        telescoping_residual=abs(st.y_red + st.y_blue - float(cache.big_w(float(st.n)))),
        horizons={str(r["n"]): {"mhat": r["mhat"], "sign_changes": r["sign_changes"]} for r in tr.rows},
        ties=st.ties,
    )
    if len(tr.rows) >= 2:
        out["stabilized"] = int(abs(tr.rows[-1]["mhat"] - tr.rows[-2]["mhat"]) < det["stabilization_threshold"])
    return None


def _couple_replica(cfg, wf, seed, out, index):
    from .timeline import couple_family, couple_restricted

    cp = cfg["couple"]
    if cp.get("restricted"):
        a, b, b_big = cp["restricted"]
        _, rep = couple_restricted(wf, a, b, b_big, seed, cfg["steps"], keep_rows=cp["all_rows"], trial=index)
    else:
        _, rep = couple_family(wf, cp["x"], sorted(cp["us"]), seed, cfg["steps"], boundary=_boundary(cfg),
                               config=_initial(cfg), keep_rows=cp["all_rows"], trial=index)
    out.update(violations=rep.total_violations, comparisons=rep.comparisons,
               violations_by_family=rep.violations, invalid=rep.invalid_trials)
    out["_rows"] = rep.rows
    return None


def run_replica(cfg: dict, index: int) -> dict:
    """Run one replica; errors are captured in the returned summary."""
    seed = seed_stream(cfg["master_seed"], index)
    out = {"replica": index, "seed": seed, "status": "ok"}
    try:
        wf = parse_weight_spec(cfg["weight"])
        mode = cfg["mode"]
        if mode == "Walk":
            traj = _walk_replica(cfg, wf, seed, out)
        elif mode == "Timeline":
            traj = _timeline_replica(cfg, wf, seed, out)
        elif mode == "Urn":
            traj = _urn_replica(cfg, wf, seed, out)
        elif mode == "Couple":
            traj = _couple_replica(cfg, wf, seed, out, index)
        else:
            raise ConfigError(f"mode {mode} has no replicas")
        if traj is not None:
            out["_trajectory"] = np.asarray(traj)
    except Exception as exc:  # quarantine
        out = {"replica": index, "seed": seed, "status": "failed",
               "error": f"{type(exc).__name__}: {exc}"}
    return out


def _run_one(args):
    return run_replica(*args)


# ---------------------------------------------------------------------------
# aggregation


@dataclass
class AggregateReport:
    config: ExperimentConfig
    summaries: list
    range_counts: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    tests: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    coupling_rows: list = field(default_factory=list)
    trajectories: dict = field(default_factory=dict)

    @property
    def completed(self) -> list:
        return [s for s in self.summaries if s["status"] == "ok"]

    @property
    def failed(self) -> list:
        return [s for s in self.summaries if s["status"] != "ok"]

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def frequency(self, size) -> float:
        n = sum(self.range_counts.values())
        return self.range_counts.get(size, 0) / n if n else 0.0

    def frequency_above(self, size) -> float:
        n = sum(self.range_counts.values())
        return sum(v for k, v in self.range_counts.items() if k > size) / n if n else 0.0

    @property
    def modal_range_size(self):
        if not self.range_counts:
            return None
        return max(sorted(self.range_counts), key=lambda k: self.range_counts[k])

    def range_table(self) -> list:
        n = sum(self.range_counts.values())
        rows = []
        for k in sorted(self.range_counts):
            c = self.range_counts[k]
            lo, hi = wilson_interval(c, n)
            rows.append({"range_size": k, "count": c, "frequency": c / n, "wilson_low": lo, "wilson_high": hi})
        return rows

    def to_dict(self) -> dict:
        cfg = self.config
        d = {
            "format": "vrrw-report",
            "format_version": REPORT_VERSION,
            "environment": {
                "package_version": __version__,
                "numpy_version": np.__version__,
                "master_seed": cfg.master_seed,
                "config_hash": cfg.config_hash(),
            },
            "config": cfg.canonical(),
            "replicas": {
                "requested": cfg.replicas,
                "completed": len(self.completed),
                "failed": [{"replica": s["replica"], "seed": s["seed"], "error": s["error"]} for s in self.failed],
            },
            "residuals": self.residuals,
            "tests": self.tests,
            "checks": self.checks,
            "passed": self.passed,
        }
        if self.range_counts:
            d["range_size"] = {
                "counts": {str(k): v for k, v in sorted(self.range_counts.items())},
                "modal": self.modal_range_size,
                "table": self.range_table(),
                "window_fraction": cfg.detector["window_fraction"],
            }
        d.update(self.extra)
        d["per_replica"] = [{k: v for k, v in s.items() if not k.startswith("_")} for s in self.summaries]
        return _jsonable(d)


def _jsonable(v):
    """Plain JSON values: numpy scalars unwrapped, non-finite floats -> None."""
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer, bool, np.bool_)):
        return v.item() if hasattr(v, "item") else v
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if np.isfinite(v) else None
    return v


def _check(report, name, value, threshold, passed):
    report.checks.append({"name": name, "value": value, "threshold": threshold, "passed": bool(passed)})


def _max_of(ok, key):
    vals = [s[key] for s in ok if s.get(key) is not None]
    return float(max(vals)) if vals else None


def _aggregate(cfg: ExperimentConfig, summaries: list) -> AggregateReport:
    rep = AggregateReport(cfg, sorted(summaries, key=lambda s: s["replica"]))
    ok = rep.completed
    tol = cfg.tolerances
    exp = cfg.expect
    mode = cfg.mode
    if not ok:
        raise AllReplicasFailed(f"all {len(summaries)} replicas failed; first error: {summaries[0]['error']}")

    if mode in ("Walk", "Timeline"):
        counts = {}
        for s in ok:
            counts[s["range_size"]] = counts.get(s["range_size"], 0) + 1
        rep.range_counts = dict(sorted(counts.items()))
        rep.residuals["ynpm"] = _max_of(ok, "ynpm_residual")
        _check(rep, "ynpm_residual", rep.residuals["ynpm"], tol["residual"],
               rep.residuals["ynpm"] <= tol["residual"])
        if mode == "Walk":
            rep.residuals["eqw"] = _max_of(ok, "eqw_drift")
            _check(rep, "eqw_drift", rep.residuals["eqw"], tol["residual"], rep.residuals["eqw"] <= tol["residual"])
            four = [s["profile"] for s in ok if s["range_size"] == 4]
            if four:
                rep.extra["profile"] = {
                    "four_site_runs": len(four),
                    "max_edge_fraction": float(max(max(p["edge"]) for p in four)),
                    "min_central_fraction": float(min(min(p["central"]) for p in four)),
                }
        else:
            rep.residuals["conservation"] = _max_of(ok, "conservation_error")
            _check(rep, "clock_conservation", rep.residuals["conservation"], tol["conservation"],
                   rep.residuals["conservation"] <= tol["conservation"])
            rep.extra["ties"] = int(sum(s["ties"] for s in ok))
        nl = cfg.detector["nonlocal_sites"]
        rep.extra["nonlocal"] = {"sites": nl, "frequency": rep.frequency_above(nl)}
        if "modal_range_size" in exp:
            _check(rep, "modal_range_size", rep.modal_range_size, exp["modal_range_size"],
                   rep.modal_range_size == exp["modal_range_size"])
        for key, val in exp.get("min_frequency", {}).items():
            f = rep.frequency_above(int(key[1:])) if key.startswith(">") else rep.frequency(int(key))
            _check(rep, f"frequency[{key}]>=", f, val, f >= val)
        for key, val in exp.get("max_frequency", {}).items():
            f = rep.frequency_above(int(key[1:])) if key.startswith(">") else rep.frequency(int(key))
            _check(rep, f"frequency[{key}]<=", f, val, f <= val)

    elif mode == "Urn":
        rep.residuals["mhat_recompute"] = _max_of(ok, "mhat_residual")
        rep.residuals["telescoping"] = _max_of(ok, "telescoping_residual")
        for k in ("mhat_recompute", "telescoping"):
            _check(rep, k, rep.residuals[k], tol["residual"], rep.residuals[k] <= tol["residual"])
        mh = np.array([s["mhat"] for s in ok])
        try:
            rep.tests["sign_test"] = sign_symmetry_test(mh).to_dict()
        except TooFewSamples as exc:
            rep.tests["sign_test"] = {"skipped": str(exc)}
        n = len(ok)
        frozen = sum(1 for s in ok if s["frozen"])
        hz = sorted({int(h) for s in ok for h in s["horizons"]})
        med = {str(h): float(np.median([s["horizons"][str(h)]["sign_changes"] for s in ok])) for h in hz}
        urn = {
            "mhat_mean": float(mh.mean()),
            "mhat_std": float(mh.std(ddof=1)) if n > 1 else 0.0,
            "frozen": {"count": frozen, "frequency": frozen / n, "wilson95": list(wilson_interval(frozen, n))},
            "median_sign_changes": med,
        }
        if len(hz) >= 2:
            diffs = [abs(s["horizons"][str(hz[-1])]["mhat"] - s["horizons"][str(hz[-2])]["mhat"]) for s in ok]
            st = sum(s.get("stabilized", 0) for s in ok)
            urn["stabilization"] = {
                "horizons": hz[-2:], "threshold": cfg.detector["stabilization_threshold"],
                "median_abs_change": float(np.median(diffs)),
                "count": st, "frequency": st / n, "wilson95": list(wilson_interval(st, n)),
            }
        rep.extra["urn"] = urn
        if exp.get("sign_test"):
            t = rep.tests["sign_test"]
            _check(rep, "sign_test", t.get("pvalue"), t.get("level"), t.get("passed", False))
        if "min_stabilized" in exp:
            f = urn.get("stabilization", {}).get("frequency", 0.0)
            _check(rep, "stabilized_frequency", f, exp["min_stabilized"], f >= exp["min_stabilized"])
        if exp.get("sign_changes_increase"):
            seq = [med[str(h)] for h in hz]
            _check(rep, "median_sign_changes_increase", seq, "strict",
                   len(seq) >= 2 and all(b > a for a, b in zip(seq, seq[1:])))
        for key, val in exp.get("min_frequency", {}).items():
            if key == "frozen":
                _check(rep, "frozen_frequency", frozen / n, val, frozen / n >= val)

    elif mode == "Couple":
        comps, viols = {}, {}
        for s in ok:
            for k, v in s["comparisons"].items():
                comps[k] = comps.get(k, 0) + v
            for k, v in s["violations_by_family"].items():
                viols[k] = viols.get(k, 0) + v
            rep.coupling_rows.extend(s.get("_rows", []))
        total = int(sum(viols.values()))
        rep.extra["coupling"] = {"trials": len(ok), "invalid_trials": int(sum(s["invalid"] for s in ok)),
                                 "comparisons": comps, "violations": viols, "total_violations": total}
        _check(rep, "coupling_violations", total, exp.get("max_violations", 0),
               total <= exp.get("max_violations", 0))

    for s in ok:
        if "_trajectory" in s:
            rep.trajectories[s["replica"]] = s["_trajectory"]
    return rep


def _alpha_c_report(cfg: ExperimentConfig) -> AggregateReport:
    wf = parse_weight_spec(cfg.weight)
    ac = cfg.alpha_c
    est = estimate_alpha_c(wf, get_cache(wf), tol=ac["tol"], alpha_max=ac["alpha_max"])
    summary = {"replica": 0, "seed": seed_stream(cfg.master_seed, 0), "status": "ok"}
    rep = AggregateReport(cfg, [summary])
    rep.extra["alpha_c"] = est.to_dict()
    exp = cfg.expect
    if "alpha_c_status" in exp:
        _check(rep, "alpha_c_status", est.status, exp["alpha_c_status"], est.status == exp["alpha_c_status"])
    if "alpha_c_contains" in exp:
        v = exp["alpha_c_contains"]
        _check(rep, "alpha_c_contains", [est.lower, est.upper], v, est.lower <= v <= est.upper)
    if "alpha_c_max_width" in exp:
        w = est.upper - est.lower
        _check(rep, "alpha_c_width", w, exp["alpha_c_max_width"], w <= exp["alpha_c_max_width"])
    return rep


def run_experiment(config, workers: int | None = None) -> AggregateReport:
    """Run every replica of ``config`` (dict or ExperimentConfig) and aggregate."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    if cfg.mode == "AlphaC":
        rep = _alpha_c_report(cfg)
    else:
        nw = workers or cfg.workers
        jobs = [(cfg.data, i) for i in range(cfg.replicas)]
        if nw <= 1 or cfg.replicas == 1:
            summaries = [run_replica(c, i) for c, i in jobs]
        else:
            with ProcessPoolExecutor(max_workers=nw) as ex:
                summaries = list(ex.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * nw))))
        rep = _aggregate(cfg, summaries)
    out_dir = cfg.output.get("dir")
    if out_dir:
        write_report(rep, out_dir)
    return rep


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def write_report(rep: AggregateReport, out_dir) -> list:
    """report.json plus CSV tables; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    p = os.path.join(out_dir, "report.json")
    with open(p, "w") as fh:
        json.dump(rep.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(p)
    p = os.path.join(out_dir, "replicas.csv")
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPLICA_COLUMNS)
        for s in rep.summaries:
            w.writerow([_fmt(s.get(c)) for c in REPLICA_COLUMNS])
    paths.append(p)
    if rep.range_counts:
        p = os.path.join(out_dir, "range_sizes.csv")
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RANGE_COLUMNS)
            for row in rep.range_table():
                w.writerow([_fmt(row[c]) for c in RANGE_COLUMNS])
        paths.append(p)
    if rep.config.mode == "Couple":
        from .timeline import COUPLING_COLUMNS

        p = os.path.join(out_dir, "coupling.csv")
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COUPLING_COLUMNS)
            for row in rep.coupling_rows:
                w.writerow([_fmt(v) for v in row])
        paths.append(p)
    if rep.trajectories:
        c = rep.config.trajectory_cadence
        tdir = os.path.join(out_dir, "trajectories")
        os.makedirs(tdir, exist_ok=True)
        for i, traj in sorted(rep.trajectories.items()):
            p = os.path.join(tdir, f"replica_{i:05d}.csv")
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(("step", "pos"))
                for j, x in enumerate(traj):
                    w.writerow((c * (j + 1), int(x)))
            paths.append(p)
    if rep.config.output.get("per_replica_json"):
        rdir = os.path.join(out_dir, "replicas")
        os.makedirs(rdir, exist_ok=True)
        for s in rep.to_dict()["per_replica"]:
            p = os.path.join(rdir, f"replica_{s['replica']:05d}.json")
            with open(p, "w") as fh:
                json.dump(s, fh, indent=2, sort_keys=True)
                fh.write("\n")
            paths.append(p)
    return paths
