"""Datasets, partitions with replication, convex objectives, and minibatches.

Loss conventions: per-point squared error is (w.x - y)^2 without the 1/2
factor; the hinge objective adds (mu/2)||w||^2 to every point and uses the
zero-side subgradient at the kink.  Local functions are shard means, and
the reported global loss is the mean over the unique dataset, which for
equal shards equals the average of the local functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from .errors import (
    BatchTooLarge,
    DegeneratePoint,
    GenerationFailure,
    InfeasibleReplication,
    LabelImbalance,
)

PARTITION_MODES = ("random_split", "by_label", "toy_aligned")


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (S x n) and target vector (length S)."""

    features: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=float))
        y = np.asarray(self.targets, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} feature rows vs {y.shape[0]} targets")
        if X.shape[0] < 1:
            raise ValueError("dataset is empty")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise ValueError("dataset contains NaN or Inf")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)

    @property
    def S(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Partition:
    """Per-node index lists into a dataset, with replication factor C."""

    assignment: tuple[np.ndarray, ...]
    C: int
    mode: str

    @property
    def M(self) -> int:
        return len(self.assignment)

    @property
    def local_size(self) -> int:
        return len(self.assignment[0])

    def validate(self, S: int) -> None:
        sizes = {len(a) for a in self.assignment}
        if len(sizes) != 1:
            raise InfeasibleReplication(f"unequal local sizes {sorted(sizes)}")
        if self.local_size * self.M != self.C * S:
            raise InfeasibleReplication("local sizes inconsistent with C*S/M")
        counts = np.zeros(S, dtype=int)
        for j, idx in enumerate(self.assignment):
            if np.unique(idx).size != idx.size:
                raise InfeasibleReplication(f"node {j} holds a duplicate point")
            counts[idx] += 1
        if not np.all(counts == self.C):
            raise InfeasibleReplication("some point is not replicated exactly C times")


def _check_replication(S: int, M: int, C: int) -> int:
    if not 1 <= C <= M:
        raise InfeasibleReplication(f"need 1 <= C <= M, got C={C}, M={M}")
    if (C * S) % M != 0:
        raise InfeasibleReplication(f"M={M} does not divide C*S={C * S}")
    return C * S // M


def _repair_bins(bins: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # Swap duplicate copies into bins that do not already hold the point.
    M, m = bins.shape
    for _ in range(10000):
        dirty = False
        for j in range(M):
            vals, first = np.unique(bins[j], return_index=True)
            if vals.size == bins[j].size:
                continue
            dirty = True
            dup_pos = np.setdiff1d(np.arange(m), first)[0]
            p = bins[j, dup_pos]
            for cand in rng.permutation(M):
                if cand == j:
                    continue
                if p in bins[cand]:
                    continue
                swap_pos = next(
                    (t for t in rng.permutation(m) if bins[cand, t] not in bins[j]), None
                )
                if swap_pos is None:
                    continue
                bins[j, dup_pos], bins[cand, swap_pos] = bins[cand, swap_pos], p
                break
            else:
                continue
        if not dirty:
            return bins
    raise GenerationFailure("partition repair did not converge")


def random_split(ds: Dataset, M: int, C: int, seed: int) -> Partition:
    """Uniformly random balanced assignment; copies of a point go to distinct nodes.

    For C = 1 this is a random permutation cut into M equal shards; for
    C = M every node holds the whole dataset.  Intermediate C uses
    rejection sampling over permutations of the replicated multiset (exact
    when it succeeds) with a swap-repair fallback.
    """
    m = _check_replication(ds.S, M, C)
    rng = np.random.default_rng(seed)
    if C == M:
        assignment = tuple(np.arange(ds.S) for _ in range(M))
    elif C == 1:
        perm = rng.permutation(ds.S)
        assignment = tuple(perm[j * m : (j + 1) * m] for j in range(M))
    else:
        expanded = np.repeat(np.arange(ds.S), C)
        bins = None
        for _ in range(1000):
            rng.shuffle(expanded)
            cand = expanded.reshape(M, m)
            if all(np.unique(row).size == m for row in cand):
                bins = cand.copy()
                break
        if bins is None:
            rng.shuffle(expanded)
            bins = _repair_bins(expanded.reshape(M, m).copy(), rng)
        assignment = tuple(bins[j] for j in range(M))
    part = Partition(assignment=assignment, C=C, mode="random_split")
    part.validate(ds.S)
    return part


def split_by_label(ds: Dataset, M: int) -> Partition:
    """Node j receives every point of the j-th target value (sorted order)."""
    labels, counts = np.unique(ds.targets, return_counts=True)
    if labels.size != M:
        raise LabelImbalance(f"{labels.size} distinct labels for M={M} nodes")
    if np.unique(counts).size != 1:
        raise LabelImbalance(f"unequal label counts {counts.tolist()}")
    assignment = tuple(np.flatnonzero(ds.targets == lab) for lab in labels)
    part = Partition(assignment=assignment, C=1, mode="by_label")
    part.validate(ds.S)
    return part


def toy_partition(M: int) -> Partition:
    """Identity placement for the one-point-per-node toy setting."""
    return Partition(assignment=tuple(np.array([j]) for j in range(M)), C=1, mode="toy_aligned")


# ---------------------------------------------------------------------------
# Objectives


@dataclass(frozen=True)
class LinearMSE:
    """Squared error (w.x - y)^2 per point."""

    kind: ClassVar[str] = "linear_mse"

    def point_losses(self, X, y, w):
        r = X @ w - y
        return r * r

    def point_subgradients(self, X, y, w):
        r = X @ w - y
        return 2.0 * r[:, None] * X

    def mean_loss(self, X, y, w) -> float:
        return float(np.mean(self.point_losses(X, y, w)))

    def mean_loss_multi(self, X, y, W) -> np.ndarray:
        R = X @ W - y[:, None]
        return np.mean(R * R, axis=0)


@dataclass(frozen=True)
class HingeL2:
    """Hinge loss max(0, 1 - y w.x) plus (mu/2)||w||^2 per point.

    At the kink the inactive-side subgradient (mu w alone) is used, which
    keeps runs deterministic.
    """

    mu: float = 0.0
    kind: ClassVar[str] = "hinge_l2"

    def point_losses(self, X, y, w):
        margin = 1.0 - y * (X @ w)
        return np.maximum(0.0, margin) + 0.5 * self.mu * float(w @ w)

    def point_subgradients(self, X, y, w):
        margin = 1.0 - y * (X @ w)
        active = (margin > 0.0).astype(float)
        return -(active * y)[:, None] * X + self.mu * w[None, :]

    def mean_loss(self, X, y, w) -> float:
        return float(np.mean(self.point_losses(X, y, w)))

    def mean_loss_multi(self, X, y, W) -> np.ndarray:
        margins = 1.0 - y[:, None] * (X @ W)
        return np.mean(np.maximum(0.0, margins), axis=0) + 0.5 * self.mu * np.sum(W * W, axis=0)


@dataclass(frozen=True)
class ToyLinear:
    """Linear classification loss 1 - y x w on scalar features.

    The subgradient -y x is constant in w; with the aligned construction it
    equals u + zeta at each node.  ``box`` is the admissible interval, only
    enforced when a run opts into clipping.
    """

    zeta: float = 0.1
    box: tuple[float, float] = (-30.0, 1.0)
    kind: ClassVar[str] = "toy_linear"

    def point_losses(self, X, y, w):
        return 1.0 - y * (X @ w)

    def point_subgradients(self, X, y, w):
        return -y[:, None] * X

    def mean_loss(self, X, y, w) -> float:
        return float(np.mean(self.point_losses(X, y, w)))

    def mean_loss_multi(self, X, y, W) -> np.ndarray:
        return np.mean(1.0 - y[:, None] * (X @ W), axis=0)


def objective_from_config(cfg: dict):
    kind = cfg.get("kind")
    if kind == "linear_mse":
        return LinearMSE()
    if kind == "hinge_l2":
        return HingeL2(mu=float(cfg.get("mu", 0.0)))
    if kind == "toy_linear":
        box = cfg.get("box", (-30.0, 1.0))
        return ToyLinear(zeta=float(cfg.get("zeta", 0.1)), box=(float(box[0]), float(box[1])))
    raise ValueError(f"unknown objective kind {kind!r}")


# ---------------------------------------------------------------------------
# Sampling and gradient oracles


def minibatch_subgradient(objective, ds: Dataset, part: Partition, node: int, w, B: int, rng):
    """Mean subgradient over a size-B batch drawn without replacement from the shard.

    B equal to the shard size is the deterministic full-batch case and does
    not consume randomness.
    """
    local = part.assignment[node]
    if not 1 <= B <= local.size:
        raise BatchTooLarge(f"B={B} outside [1, {local.size}] at node {node}")
    batch = local if B == local.size else rng.choice(local, size=B, replace=False)
    g = objective.point_subgradients(ds.features[batch], ds.targets[batch], np.asarray(w, float))
    return g.mean(axis=0)


def gradient_matrix(objective, ds: Dataset, part: Partition, W: np.ndarray, B: int, rngs) -> np.ndarray:
    """Column j is node j's minibatch subgradient at its own model W[:, j]."""
    n, M = W.shape
    G = np.empty((n, M))
    for j in range(M):
        G[:, j] = minibatch_subgradient(objective, ds, part, j, W[:, j], B, rngs[j])
    return G


def pointwise_subgradients(objective, ds: Dataset, w) -> np.ndarray:
    """Per-point subgradients at w over the whole dataset (S x n)."""
    return objective.point_subgradients(ds.features, ds.targets, np.asarray(w, float))


def population_gradient_stats(objective, ds: Dataset, w) -> tuple[float, float]:
    """Exact ||dF||_2^2 and sigma^2 (trace of the per-point subgradient covariance)."""
    g = pointwise_subgradients(objective, ds, w)
    gbar = g.mean(axis=0)
    grad_norm_sq = float(gbar @ gbar)
    sigma_sq = float(np.mean(np.sum((g - gbar) ** 2, axis=1)))
    return grad_norm_sq, sigma_sq


# ---------------------------------------------------------------------------
# Toy construction (aligned gradients) and synthetic datasets


def build_toy_dataset(u: np.ndarray, zeta: float) -> Dataset:
    """One scalar point per node: x = |u + zeta|, y = -sign(u + zeta).

    The per-point subgradient of the toy loss is then exactly u + zeta, so
    the centered gradient row equals u.
    """
    u = np.asarray(u, dtype=float).ravel()
    if zeta <= 0:
        raise ValueError(f"zeta must be positive, got {zeta}")
    if abs(u.sum()) > 1e-9 * max(1.0, np.abs(u).max()) * u.size:
        raise ValueError("u must sum to zero")
    v = u + zeta
    if np.any(np.abs(v) < 1e-12):
        raise DegeneratePoint("u + zeta vanishes at some node")
    return Dataset(features=np.abs(v)[:, None], targets=-np.sign(v))


def aligned_topology_vector(A: np.ndarray | "ConsensusMatrix") -> np.ndarray:
    """Eigenvector of the second-largest eigenvalue, scaled to inf-norm 1 with min -1.

    Only meaningful for symmetric matrices; the vector is automatically
    orthogonal to the all-ones vector, so it sums to zero.
    """
    entries = getattr(A, "entries", A)
    vals, vecs = np.linalg.eigh(np.asarray(entries, dtype=float))
    v = vecs[:, np.argsort(vals)[-2]]
    u = v / np.abs(v).max()
    if u.min() > -1.0 + 1e-12:
        u = -u
    return u


def synthetic_regression(S: int, n: int, seed: int, noise: float = 0.1) -> Dataset:
    """Well-conditioned linear regression data y = X w* + noise."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(S, n))
    w_star = rng.normal(size=n)
    y = X @ w_star + noise * rng.normal(size=S)
    return Dataset(features=X, targets=y)


def synthetic_clustered_regression(
    S: int, n: int, n_clusters: int, separation: float, seed: int
) -> Dataset:
    """Cluster-structured regression whose targets are the cluster ids.

    Targets take exactly ``n_clusters`` distinct values with equal counts,
    so the dataset supports both random and by-label splits; by-label makes
    local shards maximally heterogeneous.
    """
    if S % n_clusters != 0:
        raise ValueError(f"n_clusters={n_clusters} must divide S={S}")
    rng = np.random.default_rng(seed)
    per = S // n_clusters
    feats, targs = [], []
    for g in range(n_clusters):
        mu = np.zeros(n)
        mu[g % n] = separation * (1.0 + g // n)
        feats.append(mu + rng.normal(size=(per, n)))
        targs.append(np.full(per, float(g)))
    X = np.concatenate(feats)
    y = np.concatenate(targs)
    order = rng.permutation(S)
    return Dataset(features=X[order], targets=y[order])


def load_csv_dataset(path, drop: tuple[int, ...] = (), target: int | str = "last") -> Dataset:
    """CSV ingestion with optional header; a column-role map picks features/target."""
    with open(path) as fh:
        first = fh.readline()
        skip = 0
        try:
            [float(tok) for tok in first.strip().split(",") if tok]
        except ValueError:
            skip = 1
    raw = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    keep = [c for c in range(raw.shape[1]) if c not in set(drop)]
    raw = raw[:, keep]
    tcol = raw.shape[1] - 1 if target == "last" else int(target)
    y = raw[:, tcol]
    X = np.delete(raw, tcol, axis=1)
    return Dataset(features=X, targets=y)
