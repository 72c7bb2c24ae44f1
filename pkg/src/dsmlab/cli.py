"""Command-line entry points.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import shutil
import sys
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from . import estimators, spectral, timing, topology
from .data import population_gradient_stats
from .errors import ConfigError, DsmLabError
from .experiment import parse_config, report, run_experiment


def _parse_k_range(text: str) -> np.ndarray:
    if ":" in text:
        lo, hi = text.split(":", 1)
        return np.arange(int(lo), int(hi) + 1)
    return np.array([int(text)])


def _cmd_topology(args) -> int:
    spec = topology.GraphSpec(
        kind=args.kind, M=args.M, d=args.d, seed=args.seed, candidates=args.candidates
    )
    cm = topology.generate(spec)
    dec = spectral.decompose(cm)
    if args.out:
        cm.save_csv(args.out)
    print(json.dumps({"spec": spec.to_json(), "gap": dec.gap, "out": args.out}))
    return 0


def _cmd_spectral(args) -> int:
    A = np.loadtxt(args.matrix, delimiter=",", ndmin=2)
    dec = spectral.decompose(A)
    print(json.dumps({"moduli": dec.moduli.tolist(), "gap": dec.gap, "Q": dec.Q}))
    return 0


def _cmd_train(args) -> int:
    out_dir = run_experiment(args.config)
    if args.out:
        with open(out_dir / "manifest.json") as fh:
            first_run = json.load(fh)["runs"][0]
        shutil.copyfile(out_dir / "runs" / first_run / "metrics.csv", args.out)
    print(str(out_dir))
    return 0


def _load_run_pieces(config_path):
    # Shared assembly for estimate/oracle: topology, data, objective, partition.
    from . import data as data_mod
    from .experiment import _build_dataset, _w0_vector

    cfg = parse_config(config_path)
    gspec = cfg.topologies[0]
    A = topology.generate(gspec)
    dec = spectral.decompose(A)
    objective = data_mod.objective_from_config(cfg["objective"])
    if cfg["partition"]["mode"] == "toy_aligned":
        u = data_mod.aligned_topology_vector(A)
        ds = data_mod.build_toy_dataset(u, objective.zeta)
        part = data_mod.toy_partition(A.M)
    else:
        ds = _build_dataset(cfg)
        if cfg["partition"]["mode"] == "by_label":
            part = data_mod.split_by_label(ds, A.M)
        else:
            part = data_mod.random_split(ds, A.M, cfg["partition"]["C"], cfg["seed"])
    w0 = _w0_vector(cfg, ds.n_features)
    return cfg, gspec, A, dec, objective, ds, part, w0


def _cmd_estimate(args) -> int:
    cfg, gspec, A, dec, objective, ds, part, w0 = _load_run_pieces(args.config)
    W0 = np.tile(w0[:, None], (1, A.M))
    stats = estimators.measure_stats(
        objective, ds, part, W0, cfg["B"],
        n_samples=args.samples, seed=cfg["seed"], dec=dec, alpha_topology=gspec.label(),
    )
    gns, ssq = population_gradient_stats(objective, ds, w0)
    prop2 = estimators.prop2_estimates(A.M, ds.S, cfg["B"], part.C, gns, ssq)
    from .experiment import _json_num, initial_distance_sq

    dist0_sq, exact = initial_distance_sq(objective, ds, w0)
    eta = cfg["eta"] if isinstance(cfg["eta"], (int, float)) else 1.0
    doc = {
        "topology": gspec.to_json(),
        "gap": dec.gap,
        "lambda2_mod": dec.lambda2_mod,
        "eta": eta,
        "gradient_stats": stats.to_json(),
        "prop2": prop2.to_json(),
        "beta": _json_num(estimators.beta(stats)),
        "beta_hat": _json_num(estimators.beta_hat(prop2, stats.alpha)),
        "dist0_approximate": not exact,
        "bound_inputs": bounds_mod.BoundInputs(
            M=A.M, eta=float(eta), lambda2_mod=dec.lambda2_mod, alpha=stats.alpha,
            E=stats.E, E_sp=stats.E_sp, H=stats.H, R=stats.R, R_sp=stats.R_sp,
            dist0_sq=dist0_sq,
        ).to_json(),
    }
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=2)
    print(args.out)
    return 0


def _cmd_oracle(args) -> int:
    cfg, _, A, _, objective, ds, part, w0 = _load_run_pieces(args.config)
    result = estimators.permutation_oracle(
        ds, objective, w0, A.M, cfg["B"], part.C, args.perms, seed=cfg["seed"]
    )
    with open(args.out, "w") as fh:
        json.dump(result.to_json(), fh, indent=2)
    print(args.out)
    return 0


def _cmd_bounds(args) -> int:
    with open(args.inputs) as fh:
        doc = json.load(fh)
    bi = bounds_mod.BoundInputs.from_json(doc["bound_inputs"] if "bound_inputs" in doc else doc)
    ks = _parse_k_range(args.K)
    vals = bounds_mod.bound_curve(bi, ks, args.kind)
    np.savetxt(
        args.out, np.column_stack([ks, vals]),
        delimiter=",", header=f"K,{args.kind}", comments="", fmt="%.17g",
    )
    print(args.out)
    return 0


def _cmd_predict_divergence(args) -> int:
    def load_inputs(path):
        with open(path) as fh:
            doc = json.load(fh)
        return bounds_mod.BoundInputs.from_json(doc["bound_inputs"] if "bound_inputs" in doc else doc)

    from .engine import MetricsLog

    ring, clique = load_inputs(args.ring), load_inputs(args.clique)
    loss = MetricsLog.from_csv(args.loss).column("loss_avg_time")
    k = bounds_mod.divergence_predictor(args.kind, ring, clique, loss, args.pct)
    print(json.dumps({"kind": args.kind, "pct": args.pct, "kprime": "inf" if math.isinf(k) else k}))
    return 0


def _cmd_simulate_time(args) -> int:
    A = np.loadtxt(args.matrix, delimiter=",", ndmin=2)
    dist = timing.load_trace(args.trace)
    sched = timing.simulate_schedule(A, dist, args.K, comm_delay=args.comm_delay, seed=args.seed)
    if args.out:
        sched.to_csv(args.out)
    print(
        json.dumps(
            {
                "K": sched.K,
                "mean_iteration_duration": sched.mean_iteration_duration(),
                "makespan": float(sched.t[:, -1].max()),
                "out": args.out,
            }
        )
    )
    return 0


def _cmd_report(args) -> int:
    text, rows = report(args.artifact_dir)
    if args.csv:
        import csv as _csv

        from .experiment import REPORT_COLUMNS

        with open(args.csv, "w", newline="") as fh:
            writer = _csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsmlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("topology", help="generate a consensus matrix")
    p.add_argument("--kind", required=True, choices=topology.GRAPH_KINDS)
    p.add_argument("-M", type=int, required=True)
    p.add_argument("-d", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--candidates", type=int, default=200)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_topology)

    p = sub.add_parser("spectral", help="inspect a matrix spectrum")
    p.add_argument("--matrix", required=True)
    p.set_defaults(func=_cmd_spectral)

    p = sub.add_parser("train", help="run a training experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="also copy the first run's metrics CSV here")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("estimate", help="measure gradient statistics")
    p.add_argument("--config", required=True)
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("oracle", help="permutation oracle for the placement expectations")
    p.add_argument("--config", required=True)
    p.add_argument("--perms", type=int, default=200000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("bounds", help="evaluate a bound curve")
    p.add_argument("--inputs", required=True)
    p.add_argument("--kind", default="new", choices=bounds_mod.BOUND_KINDS)
    p.add_argument("--K", required=True, help="single K or range lo:hi")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("predict-divergence", help="predict when two topologies separate")
    p.add_argument("--ring", required=True)
    p.add_argument("--clique", required=True)
    p.add_argument("--loss", required=True)
    p.add_argument("--pct", type=float, required=True)
    p.add_argument("--kind", default="new", choices=["new", "classic"])
    p.set_defaults(func=_cmd_predict_divergence)

    p = sub.add_parser("simulate-time", help="simulate a completion schedule")
    p.add_argument("--matrix", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("-K", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--comm-delay", type=float, default=0.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_simulate_time)

    p = sub.add_parser("report", help="summarize an artifact directory")
    p.add_argument("artifact_dir")
    p.add_argument("--csv", default=None)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DsmLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
