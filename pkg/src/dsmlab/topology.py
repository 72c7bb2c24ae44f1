"""Communication graphs and their uniform-weight consensus matrices.

Four graph families are supported: the clique, undirected and directed
ring lattices, and random d-regular expanders selected by spectral gap.
Every matrix uses homogeneous weights 1/(d+1) on the self-loop and on
each edge, which makes it doubly stochastic, non-negative, and normal
(symmetric or circulant) by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DisconnectedGraph, GenerationFailure, InfeasibleSpec

GRAPH_KINDS = (
    "clique",
    "undirected_ring_lattice",
    "directed_ring_lattice",
    "random_regular_expander",
)

STOCHASTIC_TOL = 1e-12
NORMALITY_TOL = 1e-10

# Graph draws allowed per requested candidate before giving up.
RETRY_FACTOR = 100


@dataclass(frozen=True)
class GraphSpec:
    """Parameters of one communication graph.

    ``d`` is the degree (in-degree for directed kinds).  For the clique it
    may be omitted and defaults to M - 1.  ``seed`` and ``candidates`` are
    only used by the expander kind.
    """

    kind: str
    M: int
    d: int | None = None
    seed: int = 0
    candidates: int = 200

    def __post_init__(self):
        if self.kind not in GRAPH_KINDS:
            raise InfeasibleSpec(f"unknown graph kind {self.kind!r}")
        if self.M < 1:
            raise InfeasibleSpec(f"M must be positive, got {self.M}")
        if self.kind == "clique" and self.d is None:
            object.__setattr__(self, "d", self.M - 1)

    @property
    def degree(self) -> int:
        return self.M - 1 if self.d is None else self.d

    def to_json(self) -> dict:
        out = {"kind": self.kind, "M": self.M, "d": self.degree}
        if self.kind == "random_regular_expander":
            out["seed"] = self.seed
            out["candidates"] = self.candidates
        return out

    @classmethod
    def from_json(cls, obj: dict | str) -> "GraphSpec":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(
            kind=obj["kind"],
            M=int(obj["M"]),
            d=None if obj.get("d") is None else int(obj["d"]),
            seed=int(obj.get("seed", 0)),
            candidates=int(obj.get("candidates", 200)),
        )

    def label(self) -> str:
        return f"{self.kind}(M={self.M},d={self.degree})"


@dataclass(frozen=True)
class ConsensusMatrix:
    """Dense mixing matrix plus the spec that produced it.

    ``entries[i, j]`` is the weight node j applies to node i's estimate,
    so one synchronous round maps the n x M state W to ``W @ entries``.
    """

    entries: np.ndarray
    spec: GraphSpec
    self_weight_included: bool = True

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def M(self) -> int:
        return self.entries.shape[0]

    def support(self) -> np.ndarray:
        """Boolean M x M adjacency including self-loops."""
        return self.entries > 0.0

    def in_neighbor_mask(self) -> np.ndarray:
        """mask[j, i] is True when node j waits for node i (i != j)."""
        mask = self.entries.T > 0.0
        np.fill_diagonal(mask, False)
        return mask

    def save_csv(self, path) -> None:
        np.savetxt(path, self.entries, delimiter=",", fmt="%.17g")


@dataclass(frozen=True)
class ValidationReport:
    row_stochastic: bool
    col_stochastic: bool
    nonnegative: bool
    positive_diagonal: bool
    normal: bool
    strongly_connected: bool
    residuals: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return (
            self.row_stochastic
            and self.col_stochastic
            and self.nonnegative
            and self.positive_diagonal
            and self.normal
            and self.strongly_connected
        )


def _ring_offsets(M: int, d: int) -> list[int]:
    # Even d: the d/2 nearest nodes on each side.  Odd d needs M even and
    # adds the antipodal node; d = M - 1 then reproduces the clique.
    if d % 2 == 0:
        half = d // 2
        return [off for k in range(1, half + 1) for off in (k, M - k)]
    half = (d - 1) // 2
    offs = [off for k in range(1, half + 1) for off in (k, M - k)]
    offs.append(M // 2)
    return offs


def _circulant(M: int, offsets: list[int], weight: float) -> np.ndarray:
    # weight at column (i + off) mod M for each row i, plus the self-loop
    A = np.eye(M) * weight
    idx = np.arange(M)
    for off in offsets:
        A[idx, (idx + off) % M] += weight
    return A


def strongly_connected(support: np.ndarray) -> bool:
    """Reachability check on the directed support (forward and backward BFS)."""
    M = support.shape[0]

    def reaches_all(adj: np.ndarray) -> bool:
        seen = np.zeros(M, dtype=bool)
        seen[0] = True
        frontier = [0]
        while frontier:
            nxt = adj[frontier].any(axis=0) & ~seen
            frontier = np.flatnonzero(nxt).tolist()
            seen |= nxt
        return bool(seen.all())

    adj = np.asarray(support, dtype=bool).copy()
    np.fill_diagonal(adj, False)
    return reaches_all(adj) and reaches_all(adj.T)


def _pairing_model_regular(M: int, d: int, rng: np.random.Generator) -> np.ndarray | None:
    """One configuration-model draw; None when it has a loop or multi-edge.

    Dense degrees (d > (M-1)/2) are drawn as the complement of an
    (M-1-d)-regular graph, since simple pairings become vanishingly rare
    there; the complement of a uniform simple regular graph is itself a
    uniform simple regular graph of the complementary degree.
    """
    if d > (M - 1) / 2:
        co = _pairing_model_regular(M, M - 1 - d, rng) if d < M - 1 else np.zeros((M, M), dtype=bool)
        if co is None:
            return None
        adj = ~co
        np.fill_diagonal(adj, False)
        return adj
    if d == 0:
        return np.zeros((M, M), dtype=bool)
    # Suitable-pair matching: pair shuffled stubs, keep the legal pairs, and
    # re-shuffle the leftovers; a pass without progress rejects the draw.
    adj = np.zeros((M, M), dtype=bool)
    stubs = np.repeat(np.arange(M), d)
    while stubs.size:
        rng.shuffle(stubs)
        a, b = stubs[0::2], stubs[1::2]
        legal = (a != b) & ~adj[a, b]
        first = np.zeros(a.size, dtype=bool)
        seen = set()
        for i in np.flatnonzero(legal):
            key = (min(a[i], b[i]), max(a[i], b[i]))
            if key not in seen:
                seen.add(key)
                first[i] = True
        if not first.any():
            return None
        adj[a[first], b[first]] = True
        adj[b[first], a[first]] = True
        keep = ~first
        stubs = np.concatenate([a[keep], b[keep]])
    return adj


def _second_modulus_symmetric(A: np.ndarray) -> float:
    vals = np.linalg.eigvalsh(A)
    mods = np.sort(np.abs(vals))
    return float(mods[-2])


def generate(spec: GraphSpec) -> ConsensusMatrix:
    """Build the consensus matrix for ``spec``.

    Raises InfeasibleSpec for parity/degree violations and
    GenerationFailure when the expander sampler exhausts its retry budget
    (``RETRY_FACTOR * candidates`` configuration-model draws).
    """
    M, d = spec.M, spec.degree
    if not 1 <= d <= M - 1:
        if not (spec.kind == "clique" and M == 1):
            raise InfeasibleSpec(f"need 1 <= d <= M-1, got d={d}, M={M}")
    w = 1.0 / (d + 1)

    if spec.kind == "clique":
        if d != M - 1:
            raise InfeasibleSpec(f"clique requires d = M-1, got d={d}, M={M}")
        A = np.full((M, M), 1.0 / M)
    elif spec.kind == "undirected_ring_lattice":
        if (M * d) % 2 != 0:
            raise InfeasibleSpec(f"M*d must be even for undirected graphs (M={M}, d={d})")
        offsets = _ring_offsets(M, d)
        if len(set(offsets)) != d:
            raise InfeasibleSpec(f"ring lattice offsets collide for M={M}, d={d}")
        A = _circulant(M, offsets, w)
    elif spec.kind == "directed_ring_lattice":
        A = _circulant(M, [off % M for off in range(1, d + 1)], w)
    else:  # random_regular_expander
        if (M * d) % 2 != 0:
            raise InfeasibleSpec(f"M*d must be even for undirected graphs (M={M}, d={d})")
        rng = np.random.default_rng(spec.seed)
        budget = RETRY_FACTOR * spec.candidates
        best_adj, best_mod = None, np.inf
        found = 0
        for _ in range(budget):
            adj = _pairing_model_regular(M, d, rng)
            if adj is None:
                continue
            try:
                if not strongly_connected(adj):
                    raise DisconnectedGraph("expander candidate is disconnected")
            except DisconnectedGraph:
                continue
            found += 1
            cand = np.eye(M) * w + adj * w
            mod = _second_modulus_symmetric(cand)
            if mod < best_mod:
                best_mod, best_adj = mod, adj
            if found >= spec.candidates:
                break
        if found < spec.candidates:
            raise GenerationFailure(
                f"collected {found}/{spec.candidates} connected d-regular graphs "
                f"within {budget} draws (M={M}, d={d})"
            )
        A = np.eye(M) * w + best_adj * w

    cm = ConsensusMatrix(entries=A, spec=spec)
    if not strongly_connected(cm.support()):
        raise GenerationFailure(f"generated graph for {spec.label()} is not strongly connected")
    return cm


def validate(matrix: ConsensusMatrix | np.ndarray) -> ValidationReport:
    """Diagnostic checks for the properties the theory requires; never raises."""
    A = matrix.entries if isinstance(matrix, ConsensusMatrix) else np.asarray(matrix, dtype=float)
    row_res = float(np.max(np.abs(A.sum(axis=1) - 1.0)))
    col_res = float(np.max(np.abs(A.sum(axis=0) - 1.0)))
    min_entry = float(A.min())
    min_diag = float(np.diag(A).min())
    norm_res = float(np.linalg.norm(A.T @ A - A @ A.T, "fro"))
    connected = strongly_connected(A > 0.0)
    return ValidationReport(
        row_stochastic=row_res <= STOCHASTIC_TOL,
        col_stochastic=col_res <= STOCHASTIC_TOL,
        nonnegative=min_entry >= -STOCHASTIC_TOL,
        positive_diagonal=min_diag > 0.0,
        normal=norm_res <= NORMALITY_TOL,
        strongly_connected=connected,
        residuals={
            "row": row_res,
            "col": col_res,
            "min_entry": min_entry,
            "min_diagonal": min_diag,
            "normality": norm_res,
        },
    )


def relabel(cm: ConsensusMatrix, perm: np.ndarray) -> ConsensusMatrix:
    """Permutation-conjugated copy (node relabeling); spectrum is unchanged."""
    P = np.eye(cm.M)[perm]
    return replace(cm, entries=P @ cm.entries @ P.T)
