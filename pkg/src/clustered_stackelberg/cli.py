"""Command-line entry point."""

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import (
    ConfigError,
    RunConfig,
    barrier_gap_sweep,
    build_graph,
    build_spec,
    compare_schedules,
    make_seeker,
    run,
    write_json,
    _theory,
)


def _load(args):
    cfg = RunConfig.from_json(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _cmd_run(args):
    cfg = _load(args)
    res = run(cfg, out_dir=args.out)
    s = res.seeker
    print(f"{res.manifest['scenario']}: {s.n_iter_} outer iterations, "
          f"converged={s.converged_}, diverged={s.diverged_}")
    last = res.trajectory.rows[-1] if res.trajectory.rows else None
    if last is not None and last["rel_x_err"] is not None:
        print(f"final relative leader error {last['rel_x_err']:.3e}")
    return 0


def _cmd_compare(args):
    cfg = _load(args)
    out = compare_schedules(cfg)
    for name in ("constant", "diminishing"):
        hits = ", ".join(f"{thr:g}: {k if k is not None else 'not reached'}" for thr, k in out["hits"][name].items())
        flag = " (diverged)" if out["diverged"][name] else ""
        print(f"{name}{flag}: {hits}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        for name, traj in out["trajectories"].items():
            traj.to_csv(Path(args.out) / f"trajectory_{name}.csv")
        write_json(Path(args.out) / "compare.json",
                   {"hits": {n: {str(t): k for t, k in h.items()} for n, h in out["hits"].items()},
                    "diverged": out["diverged"], "n_iter": out["n_iter"]})
    return 0


def _cmd_sweep(args):
    cfg = _load(args)
    thetas = [float(t) for t in args.theta.split(",")] if args.theta else cfg.sweep_thetas
    spec = build_spec(cfg)
    rows = barrier_gap_sweep(spec, thetas, cfg.sweep_x)
    print("theta,gap,gap_bound,y_err,y_bound")
    for r in rows:
        print(f"{r['theta']:g},{r['gap']:.6e},{r['gap_bound']:.6e},{r['y_err']:.6e},{r['y_bound']:.6e}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_json(Path(args.out) / "barrier_sweep.json", rows)
    return 0


def _cmd_theory(args):
    cfg = _load(args)
    cfg.max_iter = 1
    cfg.oracle = False
    spec = build_spec(cfg)
    graph = build_graph(cfg, spec.m)
    seeker = make_seeker(cfg).fit(spec, graph)
    report = _theory(cfg, spec, graph, seeker)
    text = json.dumps(report.to_dict(), indent=2, default=str)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_json(Path(args.out) / "theory.json", report.to_dict())
    print(text)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="clustered-se", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the seeker and write trajectory/theory/manifest")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare-schedules", help="constant vs diminishing leader steps")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("barrier-sweep", help="cost gap of barrier responses over theta")
    p.add_argument("--config", required=True)
    p.add_argument("--theta", help="comma-separated list, e.g. 1e1,1e2,1e3")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("theory", help="print the theory report for a config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_theory)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
