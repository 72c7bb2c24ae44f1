"""Synchronous distributed-subgradient iteration loop and metrics recording.

One step maps the n x M column-per-node state through
W(k+1) = W(k) A - eta G(k), with G(k) computed at W(k) before any mixing.
The record appended for a completed iteration k carries state-k
quantities: the losses of the time averages over states 0..k, the
consensus distance ||Delta W(k)||_F, and the gradient energies at k.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Partition, gradient_matrix
from .errors import NoDecrease, NonFiniteModel
from .topology import ConsensusMatrix

METRICS_COLUMNS = (
    "iter",
    "loss_avg_time",
    "loss_avg",
    "loss_worst_local",
    "dW_fro",
    "dG_fro_sq",
    "G_fro_sq",
)


@dataclass
class MetricsLog:
    """Per-iteration training metrics, one record per completed iteration."""

    iters: list = field(default_factory=list)
    loss_avg_time: list = field(default_factory=list)
    loss_avg: list = field(default_factory=list)
    loss_worst_local: list = field(default_factory=list)
    dW_fro: list = field(default_factory=list)
    dG_fro_sq: list = field(default_factory=list)
    G_fro_sq: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.iters)

    def append(self, k, lat, la, lw, dw, dg2, g2) -> None:
        self.iters.append(int(k))
        self.loss_avg_time.append(float(lat))
        self.loss_avg.append(float(la))
        self.loss_worst_local.append(float(lw))
        self.dW_fro.append(float(dw))
        self.dG_fro_sq.append(float(dg2))
        self.G_fro_sq.append(float(g2))

    def column(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name if name != "iter" else "iters"), dtype=float)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(METRICS_COLUMNS)
            for row in zip(
                self.iters,
                self.loss_avg_time,
                self.loss_avg,
                self.loss_worst_local,
                self.dW_fro,
                self.dG_fro_sq,
                self.G_fro_sq,
            ):
                writer.writerow([row[0]] + [f"{v:.17g}" for v in row[1:]])

    @classmethod
    def from_csv(cls, path) -> "MetricsLog":
        log = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != METRICS_COLUMNS:
                raise ValueError(f"unexpected metrics header {header}")
            for row in reader:
                log.append(int(row[0]), *[float(v) for v in row[1:]])
        return log


@dataclass
class TrainState:
    """Evolving state of one run: models, counter, running sums, recorder."""

    W: np.ndarray
    k: int
    sum_W: np.ndarray
    eta: float
    recorder: MetricsLog


def _record(state: TrainState, objective, ds: Dataset, G: np.ndarray, sum_W_next: np.ndarray):
    W, k = state.W, state.k
    avg_models = sum_W_next / (k + 1)
    w_bar_hat = avg_models.mean(axis=1)
    w_bar = W.mean(axis=1)
    local_losses = objective.mean_loss_multi(ds.features, ds.targets, avg_models)
    dW = W - w_bar[:, None]
    dG = G - G.mean(axis=1, keepdims=True)
    state.recorder.append(
        k,
        objective.mean_loss(ds.features, ds.targets, w_bar_hat),
        objective.mean_loss(ds.features, ds.targets, w_bar),
        float(local_losses.max()),
        float(np.linalg.norm(dW, "fro")),
        float(np.sum(dG * dG)),
        float(np.sum(G * G)),
    )


def dsm_step(
    state: TrainState,
    A: ConsensusMatrix,
    objective,
    ds: Dataset,
    part: Partition,
    B: int,
    rngs,
    clip_box: tuple[float, float] | None = None,
) -> TrainState:
    """One synchronous gossip-plus-correction step; appends a metrics record."""
    G = gradient_matrix(objective, ds, part, state.W, B, rngs)
    sum_W_next = state.sum_W + state.W
    _record(state, objective, ds, G, sum_W_next)

    W_next = state.W @ A.entries - state.eta * G
    if clip_box is not None:
        W_next = np.clip(W_next, clip_box[0], clip_box[1])
    if not np.isfinite(W_next).all():
        bad = int(np.flatnonzero(~np.isfinite(W_next).all(axis=0))[0])
        raise NonFiniteModel(f"non-finite model at node {bad}, iteration {state.k + 1}")
    return TrainState(
        W=W_next, k=state.k + 1, sum_W=sum_W_next, eta=state.eta, recorder=state.recorder
    )


def _initial_state(A, ds, eta, w0, init_jitter, seed) -> TrainState:
    n = ds.n_features
    if w0 is None:
        base = np.zeros(n)
    elif np.isscalar(w0):
        base = np.full(n, float(w0))
    else:
        base = np.asarray(w0, dtype=float).ravel()
    W0 = np.tile(base[:, None], (1, A.M))
    if init_jitter:
        W0 = W0 + init_jitter * np.random.default_rng(seed ^ 0x9E3779B9).normal(size=W0.shape)
    return TrainState(W=W0, k=0, sum_W=np.zeros_like(W0), eta=float(eta), recorder=MetricsLog())


def node_streams(seed: int, M: int) -> list[np.random.Generator]:
    """Independent per-node RNG streams so nodes sample reproducibly."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(M)]


def run(
    A: ConsensusMatrix,
    objective,
    ds: Dataset,
    part: Partition,
    *,
    B: int,
    eta: float,
    K: int,
    seed: int = 0,
    w0=None,
    init_jitter: float = 0.0,
    clip_box: tuple[float, float] | None = None,
) -> MetricsLog:
    """Execute K steps; deterministic per (seed, arguments).

    All nodes start from the same vector unless ``init_jitter`` is set,
    which adds per-node noise to exercise a nonzero initial spread.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    state = _initial_state(A, ds, eta, w0, init_jitter, seed)
    rngs = node_streams(seed, A.M)
    for _ in range(K):
        state = dsm_step(state, A, objective, ds, part, B, rngs, clip_box=clip_box)
    return state.recorder


@dataclass(frozen=True)
class KneeResult:
    """Learning rate from the one-step loss sweep, with the two knees.

    ``degenerate`` marks sweeps where the loss never rises again on the
    grid, so the upper knee sits at the grid edge and the result is
    grid-dependent.
    """

    eta: float
    eta_lo: float
    eta_hi: float
    losses: np.ndarray
    degenerate: bool


def knee_learning_rate(
    A: ConsensusMatrix,
    objective,
    ds: Dataset,
    part: Partition,
    B: int,
    seed: int,
    eta_grid,
    w0=None,
    rel_threshold: float = 0.05,
) -> KneeResult:
    """Geometric sweep of the one-step loss; returns sqrt(eta_lo * eta_hi).

    eta_lo is the first grid point whose drop from the zero-step loss
    exceeds ``rel_threshold`` of the largest observed drop; eta_hi is the
    last point before the loss re-rises above its minimum by the same
    margin.  The thresholds are a robustness choice, recorded with the
    result.
    """
    grid = np.asarray(list(eta_grid), dtype=float)
    if grid.size < 8 or grid.max() / grid.min() < 1e3:
        raise ValueError("learning-rate grid needs >= 8 points spanning >= 3 decades")
    grid = np.sort(grid)

    state0 = _initial_state(A, ds, 1.0, w0, 0.0, seed)
    loss0 = objective.mean_loss(ds.features, ds.targets, state0.W.mean(axis=1))
    losses = np.empty(grid.size)
    for i, eta in enumerate(grid):
        state = _initial_state(A, ds, eta, w0, 0.0, seed)
        rngs = node_streams(seed, A.M)
        state = dsm_step(state, A, objective, ds, part, B, rngs)
        losses[i] = objective.mean_loss(ds.features, ds.targets, state.W.mean(axis=1))

    drops = loss0 - losses
    max_drop = drops.max()
    if max_drop <= 0:
        raise NoDecrease("one-step loss never drops on the grid")
    margin = rel_threshold * max_drop

    lo_idx = int(np.flatnonzero(drops > margin)[0])
    min_idx = int(np.argmin(losses))
    rises = np.flatnonzero(losses[min_idx:] > losses[min_idx] + margin)
    if rises.size:
        hi_idx = max(min_idx + int(rises[0]) - 1, lo_idx)
        degenerate = False
    else:
        hi_idx = grid.size - 1
        degenerate = True
    return KneeResult(
        eta=float(np.sqrt(grid[lo_idx] * grid[hi_idx])),
        eta_lo=float(grid[lo_idx]),
        eta_hi=float(grid[hi_idx]),
        losses=losses,
        degenerate=degenerate,
    )
