"""Command-line front end.

    vrrw simulate    VRRW replicas (direct draw rule)
    vrrw timeline    VRRW replicas via the clock construction
    vrrw urn         w-urn replicas (direct or exponential embedding)
    vrrw couple      coupled time-line runs and monotonicity checks
    vrrw alpha-c     numerical bracket for the critical parameter
    vrrw experiment  run a JSON experiment config
    vrrw report      summarize (and check) a written report

Exit status: 0 success, 1 failed check (with --check), 2 usage error.
File formats are listed in FORMATS.md.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from . import __version__

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2

WEIGHT_HELP = ("weight spec: const:<v> | linear:<slope>,<offset> | poly:<p>,<offset> | nlogn:<offset> | "
               "nloglog:<c>,<offset> | factorial-step | table:<path>, optionally followed by *<lambda>")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _int_pair(text):
    try:
        a, b = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a,b with integers, got {text!r}") from None
    if not a < b:
        raise argparse.ArgumentTypeError("need a < b")
    return [a, b]


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _seed(text):
    v = int(text, 0)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _common(p, steps_default=10000, replicas=True):
    p.add_argument("--weight", required=True, help=WEIGHT_HELP)
    p.add_argument("--steps", type=_positive, default=steps_default, help=f"steps per replica (default {steps_default})")
    p.add_argument("--seed", type=_seed, default=0, help="master seed (default 0)")
    if replicas:
        p.add_argument("--replicas", type=_positive, default=1, help="number of replicas (default 1)")
        p.add_argument("--workers", type=_positive, default=1, help="worker processes (default 1)")
    p.add_argument("--out", default="out", help="output directory (default ./out)")
    p.add_argument("--check", action="store_true", help="exit 1 if any invariant or expectation fails")


def _walk_flags(p):
    p.add_argument("--boundary", type=_int_pair, metavar="A,B", help="reflect at A and B (default: free line)")
    p.add_argument("--origin", type=int, default=0, help="starting site (default 0)")
    p.add_argument("--window", type=float, default=0.5, help="final-window fraction for the range (default 0.5)")
    p.add_argument("--cadence", type=int, default=0, help="write step,pos every CADENCE steps (default 0: off)")
    p.add_argument("--tol", type=float, default=1e-9, help="invariant residual tolerance (default 1e-9)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="vrrw", description="Vertex-reinforced random walks, w-urns and critical-parameter numerics.")
    ap.add_argument("--version", action="version", version=f"vrrw {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", help="simulate VRRW replicas with the direct draw rule",
                       description="Simulate VRRW replicas with the direct draw rule.")
    _common(p)
    _walk_flags(p)

    p = sub.add_parser("timeline", help="simulate VRRW replicas with the clock construction",
                       description="Simulate VRRW replicas with the clock (time-line) construction. "
                                   "Also writes consumed_time.csv for replica 0.")
    _common(p)
    _walk_flags(p)

    p = sub.add_parser("urn", help="run w-urn replicas",
                       description="Run w-urn replicas. --steps is the number of draws.")
    _common(p)
    p.add_argument("--method", choices=("direct", "rubin"), default="direct", help="draw rule or exponential race")
    p.add_argument("--horizons", type=_int_list, default=[], metavar="N1,N2,...", help="extra snapshot horizons")
    p.add_argument("--cadence", type=int, default=0, help="write urn_trace.csv rows every CADENCE draws for replica 0")
    p.add_argument("--threshold", type=float, default=0.05, help="mhat stabilization threshold (default 0.05)")
    p.add_argument("--tol", type=float, default=1e-9, help="invariant residual tolerance (default 1e-9)")

    p = sub.add_parser("couple", help="coupled time-line runs and monotonicity checks",
                       description="Coupled time-line runs sharing clock randomness; counts violations of the "
                                   "monotone coupling inequalities.")
    _common(p)
    p.add_argument("--x", type=int, default=0, help="site whose first right clock is varied (default 0)")
    p.add_argument("--us", type=_float_list, default=[0.5, 2.0], metavar="U1,U2,...",
                   help="values of the varied clock (default 0.5,2.0)")
    p.add_argument("--restricted", type=_int_list, metavar="A,B,BIG",
                   help="compare reflected walks on [A,B] and [A,BIG] instead")
    p.add_argument("--boundary", type=_int_pair, metavar="A,B", help="reflect at A and B (default: free line)")
    p.add_argument("--all-rows", action="store_true", help="write every comparison to coupling.csv")

    p = sub.add_parser("alpha-c", help="bracket the critical parameter of a weight",
                       description="Bracket alpha_c = inf{alpha : I_alpha(w) < inf} numerically.")
    p.add_argument("--weight", required=True, help=WEIGHT_HELP)
    p.add_argument("--tol", type=float, default=0.05, help="bracket width target (default 0.05)")
    p.add_argument("--alpha-max", type=float, default=64.0, help="largest alpha probed (default 64)")
    p.add_argument("--out", default=None, help="also write alpha_c.json into this directory")

    p = sub.add_parser("experiment", help="run a JSON experiment config",
                       description="Run the experiment described by a JSON config (schema version 1).")
    p.add_argument("--config", required=True, help="path to the config JSON")
    p.add_argument("--seed", type=_seed, help="override master_seed")
    p.add_argument("--steps", type=_positive, help="override steps")
    p.add_argument("--replicas", type=_positive, help="override replicas")
    p.add_argument("--workers", type=_positive, help="override workers")
    p.add_argument("--out", help="override output directory")
    p.add_argument("--check", action="store_true", help="exit 1 if any invariant or expectation fails")

    p = sub.add_parser("report", help="summarize a written report",
                       description="Print the checks and headline numbers of a report.json.")
    p.add_argument("path", help="report.json or the directory containing it")
    p.add_argument("--check", action="store_true", help="exit 1 if the report did not pass")
    return ap


# ---------------------------------------------------------------------------


def _walk_config(args, mode):
    cfg = {
        "weight": args.weight, "mode": mode, "steps": args.steps, "replicas": args.replicas,
        "master_seed": args.seed, "workers": args.workers, "boundary": args.boundary,
        "initial_config": {"origin": args.origin},
        "detector": {"window_fraction": args.window},
        "trajectory_cadence": args.cadence,
        "tolerances": {"residual": args.tol, "conservation": args.tol},
        "output": {"dir": args.out},
    }
    return cfg


def _summary(rep) -> dict:
    d = rep.to_dict()
    keep = ("range_size", "residuals", "tests", "urn", "coupling", "alpha_c", "profile", "passed")
    out = {k: d[k] for k in keep if k in d}
    if "range_size" in out:
        out["range_size"] = {"counts": out["range_size"]["counts"], "modal": out["range_size"]["modal"]}
    out["replicas"] = d["replicas"]
    out["failed_checks"] = [c["name"] for c in d["checks"] if not c["passed"]]
    return out


def _run(cfg, check):
    from .harness import run_experiment

    rep = run_experiment(cfg)
    print(json.dumps(_summary(rep), indent=2, sort_keys=True))
    return rep, (EXIT_CHECK if check and not rep.passed else EXIT_OK)


def _cmd_simulate(args):
    _, code = _run(_walk_config(args, "Walk"), args.check)
    return code


def _cmd_timeline(args):
    from .harness import ExperimentConfig, seed_stream
    from .timeline import FixedRandomness, consumed_time_report, timeline_run
    from .weights import parse_weight_spec
    from .walk import Boundary, InitialConfig

    cfg = _walk_config(args, "Timeline")
    ExperimentConfig.from_dict(cfg)
    rep, code = _run(cfg, args.check)
    wf = parse_weight_spec(args.weight)
    bd = Boundary() if args.boundary is None else Boundary.reflect(*args.boundary)
    res = timeline_run(wf, args.steps, fixed=FixedRandomness(seed_stream(args.seed, 0)), boundary=bd,
                       config=InitialConfig(origin=args.origin), record=False)
    ct = consumed_time_report(res.state)
    with open(os.path.join(args.out, "consumed_time.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("site", "t_plus", "t_minus"))
        for x in sorted(ct):
            w.writerow((x, repr(ct[x]["t_plus"]), repr(ct[x]["t_minus"])))
    return code


def _cmd_urn(args):
    import numpy as np

    from .harness import seed_stream
    from .urn import TRACE_COLUMNS, urn_run_direct, urn_run_rubin
    from .weights import parse_weight_spec

    cfg = {
        "weight": args.weight, "mode": "Urn", "steps": args.steps, "replicas": args.replicas,
        "master_seed": args.seed, "workers": args.workers,
        "urn": {"method": args.method, "horizons": args.horizons},
        "detector": {"stabilization_threshold": args.threshold},
        "tolerances": {"residual": args.tol},
        "output": {"dir": args.out},
    }
    _, code = _run(cfg, args.check)
    if args.cadence > 0:
        wf = parse_weight_spec(args.weight)
        run = urn_run_rubin if args.method == "rubin" else urn_run_direct
        tr = run(wf, args.steps, np.random.Generator(np.random.PCG64(seed_stream(args.seed, 0))),
                 cadence=args.cadence, horizons=args.horizons)
        with open(os.path.join(args.out, "urn_trace.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for r in tr.rows:
                w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in TRACE_COLUMNS])
    return code


def _cmd_couple(args):
    cfg = {
        "weight": args.weight, "mode": "Couple", "steps": args.steps, "replicas": args.replicas,
        "master_seed": args.seed, "workers": args.workers, "boundary": args.boundary,
        "couple": {"x": args.x, "us": args.us, "all_rows": args.all_rows},
        "output": {"dir": args.out},
    }
    if args.restricted:
        if len(args.restricted) != 3:
            raise UsageError("--restricted needs exactly A,B,BIG")
        cfg["couple"]["restricted"] = args.restricted
    _, code = _run(cfg, args.check)
    return code


def _cmd_alpha_c(args):
    from .weights import estimate_alpha_c, get_cache, parse_weight_spec

    if not args.tol > 0:
        raise UsageError("--tol must be positive")
    wf = parse_weight_spec(args.weight)
    est = estimate_alpha_c(wf, get_cache(wf), tol=args.tol, alpha_max=args.alpha_max)
    d = {"weight": wf.spec, **est.to_dict()}
    text = json.dumps(d, indent=2, sort_keys=True)
    print(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "alpha_c.json"), "w") as fh:
            fh.write(text + "\n")
    return EXIT_OK


def _cmd_experiment(args):
    from .harness import ExperimentConfig, load_config

    if not os.path.isfile(args.config):
        raise UsageError(f"config file not found: {args.config}")
    d = dict(load_config(args.config).data)
    for key, val in (("master_seed", args.seed), ("steps", args.steps), ("replicas", args.replicas),
                     ("workers", args.workers)):
        if val is not None:
            d[key] = val
    if args.out:
        d["output"] = dict(d.get("output", {}), dir=args.out)
    if d["mode"] == "AlphaC":
        d.pop("replicas")
    _, code = _run(ExperimentConfig.from_dict(d), args.check)
    return code


def _cmd_report(args):
    path = os.path.join(args.path, "report.json") if os.path.isdir(args.path) else args.path
    if not os.path.isfile(path):
        raise UsageError(f"no report at {path}")
    with open(path) as fh:
        d = json.load(fh)
    print(f"mode {d['config']['mode']}  weight {d['config']['weight']}  "
          f"replicas {d['replicas']['completed']}/{d['replicas']['requested']}  "
          f"config {d['environment']['config_hash'][:12]}")
    if "range_size" in d:
        for row in d["range_size"]["table"]:
            print(f"  range {row['range_size']:>3}: {row['count']:>6}  "
                  f"{row['frequency']:.4f}  [{row['wilson_low']:.4f}, {row['wilson_high']:.4f}]")
    for c in d["checks"]:
        print(f"  {'PASS' if c['passed'] else 'FAIL'}  {c['name']}: {c['value']} (threshold {c['threshold']})")
    for f in d["replicas"]["failed"]:
        print(f"  quarantined replica {f['replica']}: {f['error']}")
    return EXIT_CHECK if args.check and not d["passed"] else EXIT_OK


COMMANDS = {
    "simulate": _cmd_simulate,
    "timeline": _cmd_timeline,
    "urn": _cmd_urn,
    "couple": _cmd_couple,
    "alpha-c": _cmd_alpha_c,
    "experiment": _cmd_experiment,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    from .harness import AllReplicasFailed, ConfigError
    from .weights import ParseError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (UsageError, ConfigError, ParseError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except AllReplicasFailed as exc:
        print(f"vrrw: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
