"""Experiment orchestration: config parsing, sweeps, artifacts, and reports.

A config describes one run or a sweep over topologies.  Each run writes
its metrics, measured statistics, and bound curves into its own
subdirectory; the experiment directory adds divergence predictions
against the best-connected run and a manifest recording every default
that shaped the results.  Runs in a sweep share the config seed so their
minibatch draws are coupled.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from . import bounds as bounds_mod
from . import data as data_mod
from . import estimators, spectral, timing, topology
from .engine import MetricsLog, knee_learning_rate, run
from .errors import ConfigError, MissingArtifacts

DEFAULTS = {
    "n_stat_samples": 64,
    "knee_rel_threshold": 0.05,
    "predictor_pcts": [0.04, 0.10],
    "eta_grid": {"lo": 1e-5, "hi": 10.0, "num": 25},
    "expander_candidates": 200,
    "centralized_ref_iters": 4000,
}

_TOPOLOGY_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": list(topology.GRAPH_KINDS)},
        "M": {"type": "integer", "minimum": 1},
        "d": {"type": ["integer", "null"], "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "candidates": {"type": "integer", "minimum": 1},
    },
    "required": ["kind", "M"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "topology": {
            "oneOf": [_TOPOLOGY_SCHEMA, {"type": "array", "items": _TOPOLOGY_SCHEMA, "minItems": 1}]
        },
        "dataset": {
            "type": "object",
            "properties": {
                "path": {"type": "string"},
                "columns": {
                    "type": "object",
                    "properties": {
                        "drop": {"type": "array", "items": {"type": "integer"}},
                        "target": {"type": ["string", "integer"]},
                    },
                    "additionalProperties": False,
                },
                "synthetic": {"type": "object"},
            },
            "additionalProperties": False,
        },
        "objective": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["linear_mse", "hinge_l2", "toy_linear"]},
                "mu": {"type": "number", "minimum": 0},
                "zeta": {"type": "number", "exclusiveMinimum": 0},
                "box": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "partition": {
            "type": "object",
            "properties": {
                "mode": {"enum": list(data_mod.PARTITION_MODES)},
                "C": {"type": "integer", "minimum": 1},
            },
            "required": ["mode"],
            "additionalProperties": False,
        },
        "B": {"type": "integer", "minimum": 1},
        "eta": {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "knee"}]},
        "eta_grid": {
            "type": "object",
            "properties": {
                "lo": {"type": "number", "exclusiveMinimum": 0},
                "hi": {"type": "number", "exclusiveMinimum": 0},
                "num": {"type": "integer", "minimum": 8},
            },
            "additionalProperties": False,
        },
        "K": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "w0": {"type": ["number", "array", "null"]},
        "clip_box": {"type": "boolean"},
        "n_stat_samples": {"type": "integer", "minimum": 2},
        "timing": {
            "type": "object",
            "properties": {
                "trace": {"type": "string"},
                "synthetic": {"type": "object"},
                "comm_delay": {"type": "number", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "outputs": {"type": "string"},
    },
    "required": ["topology", "objective", "partition", "B", "eta", "K", "seed", "outputs"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, normalized experiment description."""

    raw: dict

    @property
    def topologies(self) -> list[topology.GraphSpec]:
        return [topology.GraphSpec.from_json(t) for t in self.raw["topology"]]

    def __getitem__(self, key):
        return self.raw[key]

    def get(self, key, default=None):
        return self.raw.get(key, default)


def parse_config(source) -> ExperimentConfig:
    """Load, schema-validate, and normalize a config dict or JSON file path."""
    if isinstance(source, (str, Path)):
        try:
            with open(source) as fh:
                obj = json.load(fh)
        except FileNotFoundError:
            raise ConfigError("config", f"file not found: {source}")
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}")
    else:
        obj = json.loads(json.dumps(source))

    try:
        jsonschema.validate(obj, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path) or "config"
        raise ConfigError(path, exc.message)

    if isinstance(obj["topology"], dict):
        obj["topology"] = [obj["topology"]]

    mode = obj["partition"]["mode"]
    obj["partition"].setdefault("C", 1)
    dataset = obj.get("dataset")
    if mode != "toy_aligned":
        if dataset is None:
            raise ConfigError("dataset", "required unless partition.mode is toy_aligned")
        if ("path" in dataset) == ("synthetic" in dataset):
            raise ConfigError("dataset", "exactly one of path or synthetic is required")
        if "path" in dataset and not os.path.exists(dataset["path"]):
            raise ConfigError("dataset.path", f"file not found: {dataset['path']}")
    else:
        if obj["objective"]["kind"] != "toy_linear":
            raise ConfigError("objective.kind", "toy_aligned partition requires toy_linear")
    tcfg = obj.get("timing")
    if tcfg is not None:
        if ("trace" in tcfg) == ("synthetic" in tcfg):
            raise ConfigError("timing", "exactly one of trace or synthetic is required")
        if "trace" in tcfg and not os.path.exists(tcfg["trace"]):
            raise ConfigError("timing.trace", f"file not found: {tcfg['trace']}")
    return ExperimentConfig(raw=obj)


def serialize_config(cfg: ExperimentConfig) -> dict:
    return json.loads(json.dumps(cfg.raw))


def _build_dataset(cfg: ExperimentConfig) -> data_mod.Dataset:
    spec = cfg["dataset"]
    if "path" in spec:
        cols = spec.get("columns", {})
        return data_mod.load_csv_dataset(
            spec["path"], drop=tuple(cols.get("drop", ())), target=cols.get("target", "last")
        )
    syn = spec["synthetic"]
    kind = syn.get("kind", "regression")
    if kind == "regression":
        return data_mod.synthetic_regression(
            S=int(syn["S"]), n=int(syn["n"]), seed=int(syn.get("seed", 0)),
            noise=float(syn.get("noise", 0.1)),
        )
    if kind == "clustered_regression":
        return data_mod.synthetic_clustered_regression(
            S=int(syn["S"]), n=int(syn["n"]), n_clusters=int(syn["n_clusters"]),
            separation=float(syn.get("separation", 3.0)), seed=int(syn.get("seed", 0)),
        )
    raise ConfigError("dataset.synthetic.kind", f"unknown synthetic kind {kind!r}")


def _build_timing_dist(tcfg: dict) -> timing.EmpiricalDistribution:
    if "trace" in tcfg:
        return timing.load_trace(tcfg["trace"])
    syn = dict(tcfg["synthetic"])
    kind = syn.pop("kind")
    n = int(syn.pop("n", 100000))
    seed = int(syn.pop("seed", 0))
    truncate = syn.pop("truncate", None)
    return timing.synthetic_distribution(kind, n, seed, truncate=truncate, **syn)


def initial_distance_sq(objective, ds: data_mod.Dataset, w0: np.ndarray) -> tuple[float, bool]:
    """Squared distance from w0 to the minimizer; (value, exact?).

    Linear regression solves the normal equations; the toy problem's
    minimizer is the lower box edge; the hinge minimizer is approximated
    by a long centralized subgradient run.
    """
    if objective.kind == "linear_mse":
        w_star, *_ = np.linalg.lstsq(ds.features, ds.targets, rcond=None)
        return float(np.sum((w0 - w_star) ** 2)), True
    if objective.kind == "toy_linear":
        return float(np.sum((w0 - objective.box[0]) ** 2)), True
    w = w0.astype(float).copy()
    for t in range(DEFAULTS["centralized_ref_iters"]):
        g = data_mod.pointwise_subgradients(objective, ds, w).mean(axis=0)
        w -= 0.1 / math.sqrt(t + 1.0) * g
    return float(np.sum((w0 - w) ** 2)), False


def _w0_vector(cfg: ExperimentConfig, n: int) -> np.ndarray:
    w0 = cfg.get("w0")
    if w0 is None:
        return np.zeros(n)
    if np.isscalar(w0):
        return np.full(n, float(w0))
    return np.asarray(w0, dtype=float)


def _json_num(x):
    return "inf" if (isinstance(x, float) and math.isinf(x)) else x


def _run_one(cfg: ExperimentConfig, gspec: topology.GraphSpec, run_dir: Path) -> dict:
    run_dir.mkdir(parents=True, exist_ok=True)
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
    grid_cfg = {**DEFAULTS["eta_grid"], **cfg.get("eta_grid", {})}
    knee = None
    if cfg["eta"] == "knee":
        knee = knee_learning_rate(
            A, objective, ds, part, cfg["B"], cfg["seed"],
            np.geomspace(grid_cfg["lo"], grid_cfg["hi"], grid_cfg["num"]), w0=w0,
        )
        eta = knee.eta
    else:
        eta = float(cfg["eta"])

    clip = objective.box if (cfg.get("clip_box") and objective.kind == "toy_linear") else None
    metrics = run(
        A, objective, ds, part,
        B=cfg["B"], eta=eta, K=cfg["K"], seed=cfg["seed"], w0=w0, clip_box=clip,
    )
    metrics.to_csv(run_dir / "metrics.csv")

    n_samples = cfg.get("n_stat_samples", DEFAULTS["n_stat_samples"])
    W0 = np.tile(w0[:, None], (1, A.M))
    stats = estimators.measure_stats(
        objective, ds, part, W0, cfg["B"],
        n_samples=n_samples, seed=cfg["seed"], dec=dec, alpha_topology=gspec.label(),
    )
    grad_norm_sq, sigma_sq = data_mod.population_gradient_stats(objective, ds, w0)
    prop2 = estimators.prop2_estimates(A.M, ds.S, cfg["B"], part.C, grad_norm_sq, sigma_sq)
    dist0_sq, dist_exact = initial_distance_sq(objective, ds, w0)
    bi = bounds_mod.BoundInputs(
        M=A.M, eta=eta, lambda2_mod=dec.lambda2_mod, alpha=stats.alpha,
        E=stats.E, E_sp=stats.E_sp, H=stats.H, R=stats.R, R_sp=stats.R_sp,
        dist0_sq=dist0_sq,
    )
    stats_doc = {
        "run_id": run_dir.name,
        "topology": gspec.to_json(),
        "gap": dec.gap,
        "lambda2_mod": dec.lambda2_mod,
        "eta": eta,
        "knee": None
        if knee is None
        else {
            "eta": knee.eta, "eta_lo": knee.eta_lo, "eta_hi": knee.eta_hi,
            "degenerate": knee.degenerate,
        },
        "gradient_stats": stats.to_json(),
        "prop2": prop2.to_json(),
        "beta": _json_num(estimators.beta(stats)),
        "beta_hat": _json_num(estimators.beta_hat(prop2, stats.alpha)),
        "dist0_approximate": not dist_exact,
        "bound_inputs": bi.to_json(),
    }
    with open(run_dir / "stats.json", "w") as fh:
        json.dump(stats_doc, fh, indent=2)

    ks = np.arange(1, cfg["K"] + 1)
    curves = np.column_stack(
        [ks, bounds_mod.bound_curve(bi, ks, "new"), bounds_mod.bound_curve(bi, ks, "classic")]
    )
    header = "K,new,classic"
    np.savetxt(run_dir / "bounds.csv", curves, delimiter=",", header=header, comments="", fmt="%.17g")

    if cfg.get("timing") is not None:
        tcfg = cfg["timing"]
        dist = _build_timing_dist(tcfg)
        sched = timing.simulate_schedule(
            A, dist, cfg["K"],
            comm_delay=float(tcfg.get("comm_delay", 0.0)), seed=int(tcfg.get("seed", cfg["seed"])),
        )
        sched.to_csv(run_dir / "schedule.csv")
        times, completed = timing.throughput_curve(sched)
        np.savetxt(
            run_dir / "throughput.csv",
            np.column_stack([times, completed]),
            delimiter=",", header="time,avg_completed", comments="", fmt="%.17g",
        )

    return stats_doc


def _predictions(out_dir: Path, docs: list[dict], pcts) -> dict:
    ref = max(docs, key=lambda d: d["gap"])
    ref_loss = MetricsLog.from_csv(out_dir / "runs" / ref["run_id"] / "metrics.csv").column(
        "loss_avg_time"
    )
    comparisons = []
    for doc in docs:
        if doc["run_id"] == ref["run_id"]:
            continue
        loss = MetricsLog.from_csv(out_dir / "runs" / doc["run_id"] / "metrics.csv").column(
            "loss_avg_time"
        )
        entry = {"run_id": doc["run_id"]}
        for pct in pcts:
            key = f"pct_{int(round(pct * 100))}"
            try:
                experimental = bounds_mod.experimental_divergence_iteration(loss, ref_loss, pct)
                bi_run = bounds_mod.BoundInputs.from_json(doc["bound_inputs"])
                bi_ref = bounds_mod.BoundInputs.from_json(ref["bound_inputs"])
                entry[key] = {
                    "experimental": _json_num(experimental),
                    "new": _json_num(
                        bounds_mod.divergence_predictor("new", bi_run, bi_ref, ref_loss, pct)
                    ),
                    "classic": _json_num(
                        bounds_mod.divergence_predictor("classic", bi_run, bi_ref, ref_loss, pct)
                    ),
                }
            except (bounds_mod.EmptyCurve, bounds_mod.NonPositiveDecrease) as exc:
                entry[key] = {"error": str(exc)}
        comparisons.append(entry)
    return {"reference": ref["run_id"], "pcts": list(pcts), "comparisons": comparisons}


def run_experiment(cfg: ExperimentConfig | dict | str | Path) -> Path:
    """Execute the config end to end and return the artifact directory."""
    if not isinstance(cfg, ExperimentConfig):
        cfg = parse_config(cfg)
    out_dir = Path(cfg["outputs"])
    out_dir.mkdir(parents=True, exist_ok=True)

    specs = cfg.topologies
    run_dirs = [
        out_dir / "runs" / f"run{i:02d}_{s.kind}_M{s.M}_d{s.degree}" for i, s in enumerate(specs)
    ]
    max_workers = int(os.environ.get("DSMLAB_THREADS", "0")) or min(len(specs), os.cpu_count() or 1)
    if len(specs) == 1:
        docs = [_run_one(cfg, specs[0], run_dirs[0])]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            docs = list(pool.map(lambda sd: _run_one(cfg, *sd), zip(specs, run_dirs)))

    predictions = _predictions(out_dir, docs, DEFAULTS["predictor_pcts"])
    with open(out_dir / "predictions.json", "w") as fh:
        json.dump(predictions, fh, indent=2)

    import numpy, scipy  # versions recorded for reproducibility

    manifest = {
        "config": serialize_config(cfg),
        "runs": [d.name for d in run_dirs],
        "defaults": DEFAULTS,
        "versions": {"dsmlab": "0.1.0", "numpy": numpy.__version__, "scipy": scipy.__version__},
        "loss_column": "loss_avg_time",
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return out_dir


REPORT_COLUMNS = (
    "run_id",
    "gap",
    "sqrt_E_over_Esp",
    "sqrtE_over_H",
    "inv_alpha",
    "beta",
    "beta_hat",
    "kprime_classic_4pct",
    "kprime_new_4pct",
    "kprime_exp_4pct",
    "kprime_classic_10pct",
    "kprime_new_10pct",
    "kprime_exp_10pct",
)


def report(artifact_dir) -> tuple[str, list[dict]]:
    """Summary table over an artifact directory; (rendered text, rows)."""
    art = Path(artifact_dir)
    try:
        with open(art / "manifest.json") as fh:
            manifest = json.load(fh)
        with open(art / "predictions.json") as fh:
            predictions = json.load(fh)
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        raise MissingArtifacts(f"{artifact_dir}: {exc}")

    by_run = {c["run_id"]: c for c in predictions.get("comparisons", [])}
    rows = []
    for run_id in manifest["runs"]:
        try:
            with open(art / "runs" / run_id / "stats.json") as fh:
                doc = json.load(fh)
            MetricsLog.from_csv(art / "runs" / run_id / "metrics.csv")
        except (FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
            raise MissingArtifacts(f"{run_id}: {exc}")
        gs = doc["gradient_stats"]
        comp = by_run.get(run_id, {})

        def kprime(pct_key: str, which: str) -> str:
            block = comp.get(pct_key)
            if not block or "error" in block:
                return "inf"
            return str(block[which])

        rows.append(
            {
                "run_id": run_id,
                "gap": doc["gap"],
                "sqrt_E_over_Esp": math.sqrt(gs["E"] / gs["E_sp"]) if gs["E_sp"] > 0 else math.inf,
                "sqrtE_over_H": math.sqrt(gs["E"]) / gs["H"] if gs["H"] > 0 else math.inf,
                "inv_alpha": 1.0 / gs["alpha"],
                "beta": doc["beta"],
                "beta_hat": doc["beta_hat"],
                "kprime_classic_4pct": kprime("pct_4", "classic"),
                "kprime_new_4pct": kprime("pct_4", "new"),
                "kprime_exp_4pct": kprime("pct_4", "experimental"),
                "kprime_classic_10pct": kprime("pct_10", "classic"),
                "kprime_new_10pct": kprime("pct_10", "new"),
                "kprime_exp_10pct": kprime("pct_10", "experimental"),
            }
        )

    def fmt(v):
        if isinstance(v, float):
            return "inf" if math.isinf(v) else f"{v:.4g}"
        return str(v)

    widths = {c: max(len(c), *(len(fmt(r[c])) for r in rows)) for c in REPORT_COLUMNS}
    lines = ["  ".join(c.ljust(widths[c]) for c in REPORT_COLUMNS)]
    for r in rows:
        lines.append("  ".join(fmt(r[c]).ljust(widths[c]) for c in REPORT_COLUMNS))
    return "\n".join(lines), rows
