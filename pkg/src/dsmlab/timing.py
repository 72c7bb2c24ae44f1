"""Wall-clock simulation of synchronous training with heterogeneous node times.

Node j finishes iteration k+1 after it has its own result and every
in-neighbor's result for iteration k, plus one fresh computation-time
draw.  Draws come from an empirical distribution by uniform indexing, are
laid out per (node, iteration) up front, and depend only on the seed --
so schedules for different graphs with the same seed are coupled draw for
draw.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .engine import MetricsLog
from .errors import EmptyTrace, LengthMismatch, NonPositiveSample
from .topology import ConsensusMatrix

log = logging.getLogger(__name__)

SYNTHETIC_KINDS = ("uniform", "exponential", "pareto", "lognormal")


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Sorted positive computation-time samples."""

    samples: np.ndarray
    source: str = "unnamed"

    def __post_init__(self):
        s = np.sort(np.asarray(self.samples, dtype=float).ravel())
        if s.size == 0:
            raise EmptyTrace(f"{self.source}: no samples")
        if s[0] <= 0.0:
            raise NonPositiveSample(f"{self.source}: sample {s[0]} is not positive")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def mean(self) -> float:
        return float(self.samples.mean())

    def percentile(self, q: float) -> float:
        return float(np.percentile(self.samples, q))

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        """Inverse-CDF sampling via a uniform index into the sorted samples."""
        return self.samples[rng.integers(0, self.samples.size, size=size)]


def load_trace(path) -> EmpiricalDistribution:
    """Read one positive decimal per line (optional header) into a distribution."""
    values = []
    with open(path) as fh:
        for i, line in enumerate(fh):
            tok = line.strip()
            if not tok:
                continue
            try:
                values.append(float(tok))
            except ValueError:
                if i == 0:
                    continue  # header
                raise
    dist = EmpiricalDistribution(samples=np.array(values), source=str(path))
    log.info(
        "trace %s: %d samples, mean %.4g, p50 %.4g, p99 %.4g",
        path,
        dist.samples.size,
        dist.mean,
        dist.percentile(50),
        dist.percentile(99),
    )
    return dist


def synthetic_distribution(
    kind: str, n: int, seed: int, truncate: float | None = None, **params
) -> EmpiricalDistribution:
    """Sample a named family into an empirical distribution.

    pareto uses ``shape`` and optional ``scale`` (values are scale * (1 + X));
    uniform takes ``lo``/``hi``; exponential ``scale``; lognormal ``mu``/``sigma``.
    """
    rng = np.random.default_rng(seed)
    if kind == "uniform":
        s = rng.uniform(params.get("lo", 0.5), params.get("hi", 1.5), size=n)
    elif kind == "exponential":
        s = rng.exponential(params.get("scale", 1.0), size=n)
    elif kind == "pareto":
        scale = params.get("scale", 1.0)
        s = scale * (1.0 + rng.pareto(params.get("shape", 2.0), size=n))
    elif kind == "lognormal":
        s = rng.lognormal(params.get("mu", 0.0), params.get("sigma", 1.0), size=n)
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    if truncate is not None:
        s = np.minimum(s, truncate)
    s = np.maximum(s, 1e-12)
    return EmpiricalDistribution(samples=s, source=f"synthetic:{kind}")


@dataclass(frozen=True)
class CompletionSchedule:
    """t[j, k] is the time node j completes iteration k; t[:, 0] = 0."""

    t: np.ndarray

    @property
    def M(self) -> int:
        return self.t.shape[0]

    @property
    def K(self) -> int:
        return self.t.shape[1] - 1

    def iteration_times_max(self) -> np.ndarray:
        return self.t[:, 1:].max(axis=0)

    def iteration_times_min(self) -> np.ndarray:
        return self.t[:, 1:].min(axis=0)

    def mean_iteration_duration(self) -> float:
        """System-level duration: time until the slowest node finishes, per iteration."""
        return float(self.t[:, -1].max() / self.K)

    def to_csv(self, path) -> None:
        tmax, tmin = self.iteration_times_max(), self.iteration_times_min()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "t_complete_max", "t_complete_min"])
            for k in range(self.K):
                writer.writerow([k, f"{tmax[k]:.17g}", f"{tmin[k]:.17g}"])


def _in_neighbor_mask(graph) -> np.ndarray:
    if isinstance(graph, ConsensusMatrix):
        return graph.in_neighbor_mask()
    support = np.asarray(graph)
    mask = (support > 0).T if support.dtype != bool else support.T.copy()
    np.fill_diagonal(mask, False)
    return mask


def simulate_schedule(
    graph,
    dist: EmpiricalDistribution,
    K: int,
    comm_delay: float = 0.0,
    seed: int = 0,
    node_bias=None,
    per_node_draw: bool = False,
) -> CompletionSchedule:
    """Roll the synchronization recursion forward for K iterations.

    ``graph`` may be a ConsensusMatrix or a support/adjacency matrix.
    ``node_bias`` multiplies each node's draws (persistent stragglers);
    ``per_node_draw`` freezes one draw per node across iterations instead
    of redrawing each iteration.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    mask = _in_neighbor_mask(graph)
    M = mask.shape[0]
    rng = np.random.default_rng(seed)
    if per_node_draw:
        X = np.tile(dist.draw(rng, (M, 1)), (1, K))
    else:
        X = dist.draw(rng, (M, K))
    if node_bias is not None:
        X = X * np.asarray(node_bias, dtype=float)[:, None]

    t = np.zeros((M, K + 1))
    neigh = [np.flatnonzero(mask[j]) for j in range(M)]
    for k in range(K):
        tk = t[:, k]
        wait = np.array(
            [max(tk[j], (tk[nb] + comm_delay).max()) if nb.size else tk[j] for j, nb in enumerate(neigh)]
        )
        t[:, k + 1] = wait + X[:, k]
    return CompletionSchedule(t=t)


def throughput_curve(sched: CompletionSchedule) -> tuple[np.ndarray, np.ndarray]:
    """Step curve of (time, average completed iterations per node)."""
    events = np.unique(sched.t[:, 1:])
    per_node = sched.t[:, 1:]
    completed = np.zeros(events.size)
    for j in range(sched.M):
        completed += np.searchsorted(per_node[j], events, side="right")
    return events, completed / sched.M


def loss_vs_time(
    metrics: MetricsLog, sched: CompletionSchedule, column: str = "loss_avg_time"
) -> tuple[np.ndarray, np.ndarray]:
    """Join the per-iteration loss with each iteration's slowest completion time."""
    if len(metrics) != sched.K:
        raise LengthMismatch(f"{len(metrics)} metric records vs K={sched.K} schedule")
    return sched.iteration_times_max(), metrics.column(column)
