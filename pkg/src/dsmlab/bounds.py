"""Convergence bounds, topology-insensitivity thresholds, and divergence prediction.

All bound evaluations are closed-form functions of the inputs; the
geometric factors are written so that the mixing-free case |lambda_2| = 0
evaluates to its algebraic limit for every K >= 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import EmptyCurve, InvalidInputs, NonPositiveDecrease

BOUND_KINDS = (
    "new",
    "classic",
    "classic_fullbatch",
    "new_local",
    "classic_local",
    "classic_local_fullbatch",
)


@dataclass(frozen=True)
class BoundInputs:
    """Constants entering the bound formulas.

    ``dist0_sq`` is the squared distance of the initial average model to
    the optimal set; ``L`` (a subgradient 2-norm bound) is used only by the
    full-batch variants.
    """

    M: int
    eta: float
    lambda2_mod: float
    alpha: float
    E: float
    E_sp: float
    H: float
    R: float = 0.0
    R_sp: float = 0.0
    dist0_sq: float = 0.0
    L: float = 0.0

    def __post_init__(self):
        if self.M < 1:
            raise InvalidInputs(f"M must be >= 1, got {self.M}")
        if not self.eta > 0:
            raise InvalidInputs(f"eta must be positive, got {self.eta}")
        if not 0.0 <= self.lambda2_mod < 1.0:
            raise InvalidInputs(f"lambda2_mod must lie in [0, 1), got {self.lambda2_mod}")
        if not 0.0 < self.alpha <= 1.0 + 1e-12:
            raise InvalidInputs(f"alpha must lie in (0, 1], got {self.alpha}")
        for name in ("E", "E_sp", "H", "R", "R_sp", "dist0_sq", "L"):
            if getattr(self, name) < 0:
                raise InvalidInputs(f"{name} must be non-negative")
        slack = 1e-9
        if self.E_sp > self.E * (1 + slack) + slack:
            raise InvalidInputs(f"E_sp={self.E_sp} exceeds E={self.E}")
        if self.H > math.sqrt(self.E) * (1 + slack) + slack:
            raise InvalidInputs(f"H={self.H} exceeds sqrt(E)={math.sqrt(self.E)}")
        if self.R_sp > self.R * (1 + slack) + slack:
            raise InvalidInputs(f"R_sp={self.R_sp} exceeds R={self.R}")

    def to_json(self) -> dict:
        return {
            "M": self.M,
            "eta": self.eta,
            "lambda2_mod": self.lambda2_mod,
            "alpha": self.alpha,
            "E": self.E,
            "E_sp": self.E_sp,
            "H": self.H,
            "R": self.R,
            "R_sp": self.R_sp,
            "dist0_sq": self.dist0_sq,
            "L": self.L,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BoundInputs":
        return cls(
            M=int(obj["M"]),
            eta=float(obj["eta"]),
            lambda2_mod=float(obj["lambda2_mod"]),
            alpha=float(obj["alpha"]),
            E=float(obj["E"]),
            E_sp=float(obj["E_sp"]),
            H=float(obj["H"]),
            R=float(obj.get("R", 0.0)),
            R_sp=float(obj.get("R_sp", 0.0)),
            dist0_sq=float(obj.get("dist0_sq", 0.0)),
            L=float(obj.get("L", 0.0)),
        )


def _geom_sum_avg(lam: float, K: int) -> float:
    # (1 - lam^K)/(1 - lam) = sum_{h<K} lam^h; this is its 1/K share.
    return (1.0 - lam**K) / ((1.0 - lam) * K)


def _tail_factor(lam: float, K: int) -> float:
    # (1/(1-lam)) (1 - (1/K)(1-lam^K)/(1-lam)) = (1/K) sum_{k<K} sum_{h<k} lam^h >= 0
    return (1.0 - _geom_sum_avg(lam, K)) / (1.0 - lam)


def _check_K(K: int) -> int:
    K = int(K)
    if K < 1:
        raise InvalidInputs(f"K must be >= 1, got {K}")
    return K


def new_bound(bi: BoundInputs, K: int) -> float:
    """Refined objective bound after K iterations (time-and-node average model)."""
    K = _check_K(K)
    lam = bi.lambda2_mod
    t1 = bi.M * bi.dist0_sq / (2.0 * bi.eta * K)
    t2 = bi.eta * bi.E / 2.0
    t3 = 2.0 * bi.H * math.sqrt(bi.R_sp) * math.sqrt(bi.M) * _geom_sum_avg(lam, K)
    t4 = (
        2.0
        * bi.eta
        * bi.H
        * math.sqrt(bi.E_sp)
        * ((1.0 - bi.alpha) * (K - 1) / K + bi.alpha * _tail_factor(lam, K))
    )
    return t1 + t2 + t3 + t4


def classic_bound(bi: BoundInputs, K: int) -> float:
    """Looser bound with (sqrt(E), sqrt(R)) in place of (H, sqrt(R_sp)) and alpha dropped."""
    K = _check_K(K)
    lam = bi.lambda2_mod
    t1 = bi.M * bi.dist0_sq / (2.0 * bi.eta * K)
    t2 = bi.eta * bi.E / 2.0
    t3 = 2.0 * math.sqrt(bi.E) * math.sqrt(bi.R) * math.sqrt(bi.M) * _geom_sum_avg(lam, K)
    t4 = 2.0 * bi.eta * bi.E * _tail_factor(lam, K)
    return t1 + t2 + t3 + t4


def classic_bound_fullbatch(bi: BoundInputs, K: int) -> float:
    """Full-batch variant with the subgradient norm bound L replacing the energies."""
    K = _check_K(K)
    lam = bi.lambda2_mod
    t1 = bi.M * bi.dist0_sq / (2.0 * bi.eta * K)
    t2 = bi.eta * bi.M * bi.L**2 / 2.0
    t3 = 2.0 * bi.L * math.sqrt(bi.R) * bi.M * _geom_sum_avg(lam, K)
    t4 = 2.0 * bi.eta * bi.L**2 * bi.M * _tail_factor(lam, K)
    return t1 + t2 + t3 + t4


def local_bounds(bi: BoundInputs, K: int) -> dict[str, float]:
    """Bounds for each node's own time-average model (coefficients 3M and 3 sqrt(M))."""
    K = _check_K(K)
    lam = bi.lambda2_mod
    t1 = bi.M * bi.dist0_sq / (2.0 * bi.eta * K)
    t2 = bi.eta * bi.E / 2.0
    consensus = (1.0 - bi.alpha) * (K - 1) / K + bi.alpha * _tail_factor(lam, K)
    new_local = (
        t1
        + t2
        + bi.H * 3.0 * bi.M * math.sqrt(bi.R_sp) * _geom_sum_avg(lam, K)
        + 3.0 * bi.eta * math.sqrt(bi.M) * bi.H * math.sqrt(bi.E_sp) * consensus
    )
    classic_local = (
        t1
        + t2
        + math.sqrt(bi.E) * 3.0 * bi.M * math.sqrt(bi.R) * _geom_sum_avg(lam, K)
        + 3.0 * bi.eta * math.sqrt(bi.M) * bi.E * _tail_factor(lam, K)
    )
    classic_local_fullbatch = (
        t1
        + bi.eta * bi.M * bi.L**2 / 2.0
        + bi.L * 3.0 * bi.M**1.5 * math.sqrt(bi.R) * _geom_sum_avg(lam, K)
        + 3.0 * bi.eta * bi.M**1.5 * bi.L**2 * _tail_factor(lam, K)
    )
    return {
        "new_local": new_local,
        "classic_local": classic_local,
        "classic_local_fullbatch": classic_local_fullbatch,
    }


def consensus_distance_bound(bi: BoundInputs, k: int) -> float:
    """Upper bound on ||Delta W(k)||_F under a constant learning rate."""
    k = int(k)
    if k < 0:
        raise InvalidInputs(f"k must be >= 0, got {k}")
    lam = bi.lambda2_mod
    geom = (1.0 - lam**k) / (1.0 - lam) if k > 0 else 0.0
    indicator = 1.0 if k >= 1 else 0.0
    return math.sqrt(bi.M) * math.sqrt(bi.R_sp) * lam**k + bi.eta * math.sqrt(bi.E_sp) * (
        (1.0 - bi.alpha) * indicator + bi.alpha * geom
    )


_BOUND_FUNCS = {
    "new": new_bound,
    "classic": classic_bound,
    "classic_fullbatch": classic_bound_fullbatch,
}


def evaluate_bound(bi: BoundInputs, K: int, kind: str) -> float:
    if kind in _BOUND_FUNCS:
        return _BOUND_FUNCS[kind](bi, K)
    if kind in ("new_local", "classic_local", "classic_local_fullbatch"):
        return local_bounds(bi, K)[kind]
    raise InvalidInputs(f"unknown bound kind {kind!r}")


def bound_curve(bi: BoundInputs, Ks, kind: str) -> np.ndarray:
    return np.array([evaluate_bound(bi, int(K), kind) for K in Ks])


def experimental_divergence_iteration(loss_a, loss_b, threshold_pct: float) -> float:
    """First iteration where |loss_a - loss_b| reaches the given share of
    the reference curve's total decrease; math.inf when it never does.

    ``loss_b`` is the reference (most connected) curve; entry i of either
    curve is the loss after i+1 iterations.
    """
    a = np.asarray(loss_a, dtype=float)
    b = np.asarray(loss_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise EmptyCurve("empty experimental loss curve")
    n = min(a.size, b.size)
    total = b[0] - b[n - 1]
    if total <= 0:
        raise NonPositiveDecrease("reference loss curve does not decrease")
    hits = np.flatnonzero(np.abs(a[:n] - b[:n]) >= threshold_pct * total)
    return float(hits[0] + 1) if hits.size else math.inf


def divergence_predictor(
    bound_kind: str,
    inputs_ring: BoundInputs,
    inputs_clique: BoundInputs,
    experimental_clique_loss,
    threshold_pct: float,
    K_end: int | None = None,
    remeasure=None,
) -> float:
    """Iteration at which the bounds predict the two loss curves separate.

    The clique bound curve is rescaled by c = min_k loss(k) / bound(k) so
    it touches the experimental curve, and the prediction is the first
    iteration k with c * (bound_ring - bound_clique) at least
    ``threshold_pct`` of the experimental total decrease.  The bound for
    iteration k is evaluated at horizon K = k + 1, whose time average
    covers states 0..k.  With ``remeasure`` (a callable k -> (ring, clique)
    inputs) the prediction is re-evaluated with the refreshed constants and
    the larger value is returned.
    """
    loss = np.asarray(experimental_clique_loss, dtype=float)
    if loss.size == 0:
        raise EmptyCurve("empty experimental loss curve")
    K_end = loss.size if K_end is None else min(int(K_end), loss.size)
    loss = loss[:K_end]
    total = loss[0] - loss[-1]
    if total <= 0:
        raise NonPositiveDecrease("experimental loss curve does not decrease")

    ks = np.arange(1, K_end + 1)
    b_clique = bound_curve(inputs_clique, ks + 1, bound_kind)
    b_ring = bound_curve(inputs_ring, ks + 1, bound_kind)
    scale = float(np.min(loss / b_clique))
    hits = np.flatnonzero(scale * (b_ring - b_clique) >= threshold_pct * total)
    k_pred = float(ks[hits[0]]) if hits.size else math.inf

    if remeasure is not None and math.isfinite(k_pred):
        ring2, clique2 = remeasure(int(k_pred))
        k2 = divergence_predictor(
            bound_kind, ring2, clique2, loss, threshold_pct, K_end=K_end, remeasure=None
        )
        k_pred = max(k_pred, k2)
    return k_pred


def lian_threshold(L: float, sigma_sq: float, M: int, lambda2_mod: float, f0: float) -> float:
    """Iteration count after which the rate becomes topology-independent
    under the Lipschitz-gradient analysis: 4 L^4 M^5 / (sigma^2 (f0+L)^2 gap^2)."""
    if L <= 0 or sigma_sq <= 0 or M < 1 or f0 < 0:
        raise InvalidInputs("lian_threshold needs L, sigma_sq > 0, M >= 1, f0 >= 0")
    if not 0.0 <= lambda2_mod < 1.0:
        raise InvalidInputs(f"lambda2_mod must lie in [0, 1), got {lambda2_mod}")
    return 4.0 * L**4 * M**5 / (sigma_sq * (f0 + L) ** 2 * (1.0 - lambda2_mod) ** 2)


@dataclass(frozen=True)
class OlshevskyThresholds:
    K0: int
    K1: int
    eta0: float
    Kprime_l: float

    def to_json(self) -> dict:
        return {"K0": self.K0, "K1": self.K1, "eta0": self.eta0, "Kprime_l": self.Kprime_l}


def olshevsky_threshold(
    L: float, mu: float, M: int, lambda2_mod: float, theta: float
) -> OlshevskyThresholds:
    """Strong-convexity thresholds: K0, K1, the initial step size, and K'_l."""
    if theta <= 2 or mu <= 0 or L <= 0 or M < 1:
        raise InvalidInputs("olshevsky_threshold needs theta > 2, mu > 0, L > 0, M >= 1")
    if not 0.0 <= lambda2_mod < 1.0:
        raise InvalidInputs(f"lambda2_mod must lie in [0, 1), got {lambda2_mod}")
    gap_sq = 1.0 - lambda2_mod**2
    K0 = math.ceil(2.0 * theta * L**2 / mu**2)
    K1 = math.ceil(24.0 * L**2 * theta / (gap_sq * mu**2))
    eta0 = theta / (mu * K0)
    Kprime_l = 6912.0 * M * L**4 / (mu**4 * gap_sq**2) - 4.0 * L**2 / mu**2 - 7.0
    return OlshevskyThresholds(K0=K0, K1=K1, eta0=eta0, Kprime_l=Kprime_l)


def toy_worst_objective(
    lambda2: float, eta: float, zeta: float, ks, convention: str = "derived"
) -> np.ndarray:
    """Worst-node objective of the aligned toy problem after k averaged states.

    The "derived" convention carries the time-average term -eta zeta^2 (k-1)/2
    obtained by summing 0..k-1 directly; "printed" uses -eta zeta^2 k/2.  The
    two differ by the constant eta zeta^2 / 2; simulation matches "derived".
    """
    if convention not in ("derived", "printed"):
        raise ValueError(f"unknown convention {convention!r}")
    ks = np.asarray(ks, dtype=float)
    if np.any(ks < 1):
        raise InvalidInputs("toy curve needs k >= 1")
    geom_avg = (1.0 - lambda2**ks) / (ks * (1.0 - lambda2))
    base = 1.0 + zeta + (eta * zeta / (1.0 - lambda2)) * (1.0 - geom_avg)
    timeavg = (ks - 1.0) / 2.0 if convention == "derived" else ks / 2.0
    return base - eta * zeta**2 * timeavg


def with_lambda2(bi: BoundInputs, lambda2_mod: float) -> BoundInputs:
    """Copy of the inputs with a different mixing factor (for topology sweeps)."""
    return replace(bi, lambda2_mod=lambda2_mod)
