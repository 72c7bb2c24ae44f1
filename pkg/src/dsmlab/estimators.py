"""Gradient-statistics constants: empirical, analytic, and a permutation oracle.

The empirical path draws independent gradient matrices at the initial
models.  The analytic path evaluates the closed-form expectations over
uniform balanced placements of a C-times replicated dataset.  The oracle
cross-checks the analytic path by Monte Carlo over placements, using the
exact finite-population identity for the inner minibatch expectation
(equivalent to enumerating every batch, for any batch size).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Partition, gradient_matrix, pointwise_subgradients, random_split
from .engine import node_streams
from .errors import InfeasibleBatch, InfeasibleReplication
from .spectral import SpectralDecomposition, energy_fractions


@dataclass(frozen=True)
class GradientStats:
    """Measured bounds E, E_sp, H and initial energies R, R_sp, plus alpha.

    ``H_bias`` estimates the upward bias of the sample-mean norm,
    sqrt(trace Var / n_samples).  ``alpha_topology`` records which matrix
    the energy fractions were projected on.
    """

    E: float
    E_sp: float
    H: float
    R: float
    R_sp: float
    alpha: float
    n_samples: int
    H_bias: float = 0.0
    alpha_topology: str | None = None
    alpha_degenerate: bool = False

    def to_json(self) -> dict:
        return {
            "E": self.E,
            "E_sp": self.E_sp,
            "H": self.H,
            "R": self.R,
            "R_sp": self.R_sp,
            "alpha": self.alpha,
            "n_samples": self.n_samples,
            "H_bias": self.H_bias,
            "alpha_topology": self.alpha_topology,
            "alpha_degenerate": self.alpha_degenerate,
        }


@dataclass(frozen=True)
class Prop2Estimates:
    """Closed-form placement expectations and the interval endpoints for H."""

    E_hat: float
    E_sp_hat: float
    H_hat: float
    H_lower: float
    inputs: dict

    def to_json(self) -> dict:
        return {
            "E_hat": self.E_hat,
            "E_sp_hat": self.E_sp_hat,
            "H_hat": self.H_hat,
            "H_lower": self.H_lower,
            "inputs": self.inputs,
        }


@dataclass(frozen=True)
class OracleEstimates:
    mean_E: float
    mean_Esp: float
    mean_H: float
    se_E: float
    se_Esp: float
    se_H: float
    n_perms: int

    def to_json(self) -> dict:
        return {
            "mean_E": self.mean_E,
            "mean_Esp": self.mean_Esp,
            "mean_H": self.mean_H,
            "se_E": self.se_E,
            "se_Esp": self.se_Esp,
            "se_H": self.se_H,
            "n_perms": self.n_perms,
        }


def measure_stats(
    objective,
    ds: Dataset,
    part: Partition,
    W0: np.ndarray,
    B: int,
    n_samples: int = 64,
    seed: int = 0,
    dec: SpectralDecomposition | None = None,
    alpha_mode: str = "mean",
    alpha_topology: str | None = None,
) -> GradientStats:
    """Empirical E, E_sp, H from fresh minibatch draws at W0, plus R, R_sp, alpha.

    With no decomposition alpha defaults to 1 (worst case).  Zero-gradient
    degenerate inputs return zeros with alpha 1 instead of failing.
    """
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")
    W0 = np.asarray(W0, dtype=float)
    rngs = node_streams(seed, part.M)
    samples = np.stack(
        [gradient_matrix(objective, ds, part, W0, B, rngs) for _ in range(n_samples)]
    )
    centered = samples - samples.mean(axis=2, keepdims=True)

    E = float(np.mean(np.sum(samples**2, axis=(1, 2))))
    E_sp = float(np.mean(np.sum(centered**2, axis=(1, 2))))
    G_bar = samples.mean(axis=0)
    H = float(np.linalg.norm(G_bar, "fro"))
    H_bias = float(np.sqrt(samples.var(axis=0, ddof=1).sum() / n_samples)) if n_samples > 1 else 0.0

    R = float(np.sum(W0**2))
    R_sp = float(np.sum((W0 - W0.mean(axis=1, keepdims=True)) ** 2))

    if dec is None:
        alpha, degenerate = 1.0, False
    else:
        profile = energy_fractions(dec, list(centered), mode=alpha_mode)
        alpha, degenerate = profile.alpha, profile.degenerate
    return GradientStats(
        E=E,
        E_sp=E_sp,
        H=H,
        R=R,
        R_sp=R_sp,
        alpha=alpha,
        n_samples=n_samples,
        H_bias=H_bias,
        alpha_topology=alpha_topology,
        alpha_degenerate=degenerate,
    )


def prop2_estimates(M: int, S: int, B: int, C: int, grad_norm_sq: float, sigma_sq: float) -> Prop2Estimates:
    """Closed-form expectations over uniform balanced placements.

    grad_norm_sq is ||dF||_2^2 at the evaluation point and sigma_sq the
    trace of the per-point subgradient covariance there.
    """
    if not 1 <= C <= M:
        raise InfeasibleReplication(f"need 1 <= C <= M, got C={C}, M={M}")
    if S < 2:
        raise ValueError(f"S must be >= 2, got {S}")
    local = C * S / M
    if not 1 <= B <= local:
        raise InfeasibleBatch(f"B={B} outside [1, {local:g}] for (M={M}, S={S}, C={C})")

    E_hat = M * (grad_norm_sq + (S - B) * sigma_sq / (B * (S - 1)))
    E_sp_hat = sigma_sq * (M * C * (S - B) - C * S + M * B) / (C * B * (S - 1))
    H_hat = math.sqrt(M) * math.sqrt(grad_norm_sq + (M - C) * sigma_sq / (C * (S - 1)))
    H_lower = math.sqrt(M) * math.sqrt(grad_norm_sq)
    return Prop2Estimates(
        E_hat=float(E_hat),
        E_sp_hat=float(E_sp_hat),
        H_hat=float(H_hat),
        H_lower=float(H_lower),
        inputs={
            "M": M,
            "S": S,
            "B": B,
            "C": C,
            "grad_norm_sq": grad_norm_sq,
            "sigma_sq": sigma_sq,
        },
    )


def _batch_mean_variance_factor(m: int, B: int) -> float:
    # Variance of a without-replacement sample mean: (sigma^2/B) (m-B)/(m-1),
    # with sigma^2 the population variance of the m shard points.  Exact for
    # every B; coincides with enumerating all C(m, B) batches.
    if m == 1:
        return 0.0
    return (m - B) / (B * (m - 1))


def _partition_moments(grads: np.ndarray, sq_norms: np.ndarray, bins: np.ndarray, B: int):
    # bins: (..., M, m) index arrays; returns per-partition (E, E_sp, H).
    m = bins.shape[-1]
    M = bins.shape[-2]
    fac = _batch_mean_variance_factor(m, B)
    means = grads[bins].mean(axis=-2)  # (..., M, n)
    mean_sq = (means**2).sum(axis=-1)  # (..., M)
    var_tr = sq_norms[bins].mean(axis=-1) - mean_sq  # population variance trace per node
    E = (mean_sq + fac * var_tr).sum(axis=-1)
    avg_mean = means.mean(axis=-2)  # (..., n)
    second = (avg_mean**2).sum(axis=-1) + fac * var_tr.sum(axis=-1) / M**2
    E_sp = E - M * second
    H = np.sqrt(mean_sq.sum(axis=-1))
    return E, E_sp, H


def permutation_oracle(
    ds: Dataset,
    objective,
    w,
    M: int,
    B: int,
    C: int,
    n_perms: int,
    seed: int = 0,
) -> OracleEstimates:
    """Monte Carlo over random balanced placements, exact over minibatches.

    Per placement the minibatch expectations are computed in closed form
    (see _batch_mean_variance_factor); randomness enters only through the
    placements, so the standard errors quantify placement variability.
    """
    if n_perms < 1000:
        raise ValueError(f"n_perms must be >= 1000, got {n_perms}")
    m = C * ds.S // M
    if (C * ds.S) % M != 0 or not 1 <= C <= M:
        raise InfeasibleReplication(f"invalid (S={ds.S}, M={M}, C={C})")
    if not 1 <= B <= m:
        raise InfeasibleBatch(f"B={B} outside [1, {m}]")

    grads = pointwise_subgradients(objective, ds, w)
    sq_norms = (grads**2).sum(axis=1)
    rng = np.random.default_rng(seed)

    if C == M:
        bins = np.tile(np.arange(ds.S), (M, 1))
        E, E_sp, H = _partition_moments(grads, sq_norms, bins, B)
        return OracleEstimates(float(E), float(E_sp), float(H), 0.0, 0.0, 0.0, n_perms)

    Es: list[float] = []
    Esps: list[float] = []
    Hs: list[float] = []
    if C == 1:
        chunk = 20000
        done = 0
        while done < n_perms:
            b = min(chunk, n_perms - done)
            perms = np.argsort(rng.random((b, ds.S)), axis=1)
            bins = perms.reshape(b, M, m)
            E, E_sp, H = _partition_moments(grads, sq_norms, bins, B)
            Es.extend(E.tolist())
            Esps.extend(E_sp.tolist())
            Hs.extend(H.tolist())
            done += b
    else:
        seeds = np.random.SeedSequence(seed).generate_state(n_perms, dtype=np.uint64)
        for s in seeds:
            part = random_split(ds, M, C, int(s))
            bins = np.stack(part.assignment)
            E, E_sp, H = _partition_moments(grads, sq_norms, bins, B)
            Es.append(float(E))
            Esps.append(float(E_sp))
            Hs.append(float(H))

    def mean_se(xs: list[float]) -> tuple[float, float]:
        n = len(xs)
        mean = math.fsum(xs) / n
        var = math.fsum((x - mean) ** 2 for x in xs) / (n - 1)
        return mean, math.sqrt(var / n)

    mE, seE = mean_se(Es)
    mEsp, seEsp = mean_se(Esps)
    mH, seH = mean_se(Hs)
    return OracleEstimates(mE, mEsp, mH, seE, seEsp, seH, n_perms)


def beta(stats: GradientStats) -> float:
    """Looseness ratio (1/alpha) * E / (sqrt(E_sp) * H); +inf when degenerate."""
    if stats.E_sp <= 0.0 or stats.H <= 0.0:
        return math.inf
    return (1.0 / stats.alpha) * stats.E / (math.sqrt(stats.E_sp) * stats.H)


def beta_hat(est: Prop2Estimates, alpha: float) -> float:
    """Analytic counterpart of beta from the placement expectations."""
    if est.E_sp_hat <= 0.0 or est.H_hat <= 0.0:
        return math.inf
    return (1.0 / alpha) * est.E_hat / (math.sqrt(est.E_sp_hat) * est.H_hat)
