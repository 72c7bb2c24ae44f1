"""Spectral decomposition of normal consensus matrices.

A normal matrix splits into orthogonal projectors, one per distinct
eigenvalue.  Here eigenvalues whose moduli agree within a tolerance are
merged into a single real projector (complex conjugate pairs always fall
in the same group), because every downstream quantity -- the spectral
gap, the mixing factors |lambda_q|^h, and the energy coefficient alpha --
depends on the moduli only.  Each group also keeps its exact matrix
contribution so the original matrix can be reconstructed and checked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateSpectrum, NotNormal
from .topology import NORMALITY_TOL, ConsensusMatrix

GROUP_TOL = 1e-9
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class SpectralDecomposition:
    """Modulus-ordered eigenvalue groups of a normal matrix.

    ``eigenvalues[q]`` is a representative of group q (largest real part,
    non-negative imaginary part), ``projectors[q]`` the real orthogonal
    projector onto the group's invariant subspace, and ``terms[q]`` the
    group's exact contribution (sum of lambda * P over group members), so
    that ``sum(terms)`` reconstructs the matrix.
    """

    eigenvalues: tuple[complex, ...]
    projectors: tuple[np.ndarray, ...]
    terms: tuple[np.ndarray, ...]
    gap: float

    @property
    def Q(self) -> int:
        return len(self.eigenvalues)

    @property
    def moduli(self) -> np.ndarray:
        return np.array([abs(v) for v in self.eigenvalues])

    @property
    def lambda2_mod(self) -> float:
        return float(self.moduli[1]) if self.Q > 1 else 0.0

    def reconstruct(self) -> np.ndarray:
        return np.sum(self.terms, axis=0)

    def subspace_energies(self, X: np.ndarray) -> np.ndarray:
        """Squared Frobenius norm of X projected on each group, ||X P_q||_F^2."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([float(np.sum((X @ P) ** 2)) for P in self.projectors])


@dataclass(frozen=True)
class EnergyProfile:
    """Per-subspace energy fractions e_2..e_Q and the coefficient alpha."""

    fractions: np.ndarray
    alpha: float
    degenerate: bool = False


def _group_indices(mods: np.ndarray) -> list[np.ndarray]:
    order = np.argsort(-mods, kind="stable")
    groups: list[list[int]] = []
    anchor = None
    for i in order:
        if anchor is None or abs(mods[i] - anchor) > GROUP_TOL:
            groups.append([i])
            anchor = mods[i]
        else:
            groups[-1].append(i)
    return [np.array(g) for g in groups]


def _representative(vals: np.ndarray) -> complex:
    best = max(vals, key=lambda v: (v.real, abs(v.imag)))
    if best.imag < 0:
        best = best.conjugate()
    if abs(best.imag) < 1e-12 * max(1.0, abs(best)):
        best = complex(best.real, 0.0)
    if abs(best - 1.0) <= 1e-10:
        best = complex(1.0, 0.0)
    if abs(best) < GROUP_TOL:
        best = complex(0.0, 0.0)
    return best


def decompose(matrix: ConsensusMatrix | np.ndarray) -> SpectralDecomposition:
    """Eigenvalue groups, projectors, and the spectral gap of a normal matrix.

    Raises NotNormal when ||A^T A - A A^T||_F exceeds the tolerance and
    DegenerateSpectrum when the numerical spectrum violates the structure
    guaranteed by strong connectivity (simple eigenvalue 1, |lambda_2| < 1).
    """
    A = matrix.entries if isinstance(matrix, ConsensusMatrix) else np.asarray(matrix, dtype=float)
    M = A.shape[0]
    norm_res = float(np.linalg.norm(A.T @ A - A @ A.T, "fro"))
    if norm_res > NORMALITY_TOL:
        raise NotNormal(f"normality residual {norm_res:.3e} exceeds {NORMALITY_TOL:.0e}")

    if np.linalg.norm(A - A.T, "fro") <= SYMMETRY_TOL:
        vals, vecs = np.linalg.eigh(A)
        vals = vals.astype(complex)
    else:
        T, Z = scipy.linalg.schur(A.astype(complex), output="complex")
        off = T - np.diag(np.diag(T))
        if np.linalg.norm(off, "fro") > 1e-8 * max(1.0, np.linalg.norm(A, "fro")):
            raise DegenerateSpectrum("Schur form of a normal matrix is not diagonal")
        vals, vecs = np.diag(T), Z

    groups = _group_indices(np.abs(vals))
    eigenvalues, projectors, terms = [], [], []
    for g in groups:
        V = vecs[:, g]
        P = V @ V.conj().T
        T_g = V @ np.diag(vals[g]) @ V.conj().T
        if max(np.abs(P.imag).max(), np.abs(T_g.imag).max()) > 1e-9:
            raise DegenerateSpectrum("projector for a modulus group is not real")
        eigenvalues.append(_representative(vals[g]))
        projectors.append(np.ascontiguousarray(P.real))
        terms.append(np.ascontiguousarray(T_g.real))

    if eigenvalues[0] != 1.0:
        raise DegenerateSpectrum(f"leading eigenvalue {eigenvalues[0]} is not 1")
    if len(groups[0]) != 1:
        raise DegenerateSpectrum("eigenvalue 1 is not simple (gap below grouping tolerance)")
    gap = 1.0 - abs(eigenvalues[1]) if len(eigenvalues) > 1 else 1.0
    for P in projectors:
        P.setflags(write=False)
    for T_g in terms:
        T_g.setflags(write=False)
    return SpectralDecomposition(
        eigenvalues=tuple(eigenvalues),
        projectors=tuple(projectors),
        terms=tuple(terms),
        gap=float(gap),
    )


def energy_fractions(
    dec: SpectralDecomposition,
    delta_g_samples: list[np.ndarray] | np.ndarray,
    mode: str = "mean",
) -> EnergyProfile:
    """Fractions of centered-gradient energy per eigen-subspace, and alpha.

    ``delta_g_samples`` holds matrices with zero row-means (already
    centered across columns).  Mode "mean" averages the projected energies
    over the samples, matching estimation from the minibatches of one
    iteration; mode "sup" takes the running maximum of cumulative
    energies over the samples, matching the worst-case definition over an
    iteration history.

    All-zero samples yield uniform fractions with alpha = 1 and the
    ``degenerate`` flag set, rather than an error.
    """
    if mode not in ("mean", "sup"):
        raise ValueError(f"unknown mode {mode!r}")
    samples = [np.atleast_2d(np.asarray(s, dtype=float)) for s in delta_g_samples]
    if not samples:
        raise ValueError("need at least one sample")
    if dec.Q < 2:
        return EnergyProfile(fractions=np.zeros(0), alpha=1.0, degenerate=False)

    per_sample = np.stack([dec.subspace_energies(s)[1:] for s in samples])
    if mode == "mean":
        num = per_sample.mean(axis=0)
        total = float(num.sum())
    else:
        cum_sup = np.cumsum(per_sample, axis=1).max(axis=0)
        total = float(cum_sup[-1])
        num = np.diff(np.concatenate([[0.0], cum_sup]))
    if total <= 0.0:
        Qm1 = dec.Q - 1
        return EnergyProfile(fractions=np.full(Qm1, 1.0 / Qm1), alpha=1.0, degenerate=True)

    fractions = num / total
    lam2 = dec.lambda2_mod
    if lam2 <= 0.0:
        alpha = 1.0
    else:
        ratios = dec.moduli[1:] / lam2
        alpha = float(np.sqrt(np.sum(fractions * ratios**2)))
    return EnergyProfile(fractions=fractions, alpha=alpha, degenerate=False)
