import numpy as np
import pytest

from dsmlab import GraphSpec, decompose, energy_fractions, generate
from dsmlab.errors import NotNormal
from dsmlab.spectral import SpectralDecomposition


def _random_specs(count, rng):
    specs = []
    kinds = ["clique", "undirected_ring_lattice", "directed_ring_lattice", "random_regular_expander"]
    while len(specs) < count:
        kind = kinds[rng.integers(len(kinds))]
        M = int(rng.integers(3, 30))
        if kind == "clique":
            specs.append(GraphSpec(kind, M))
            continue
        d = int(rng.integers(1, M - 1))
        if kind != "directed_ring_lattice":
            if (M * d) % 2:
                continue
        specs.append(GraphSpec(kind, M, d, seed=int(rng.integers(1 << 16)), candidates=10))
    return specs


def check_invariants(dec, A):
    M = A.shape[0]
    eye_res = np.linalg.norm(np.sum(dec.projectors, axis=0) - np.eye(M), "fro")
    assert eye_res <= 1e-9
    for q, P in enumerate(dec.projectors):
        assert np.linalg.norm(P - P.T, "fro") <= 1e-10
        assert np.linalg.norm(P @ P - P, "fro") <= 1e-9
        for r in range(q + 1, dec.Q):
            assert np.linalg.norm(P @ dec.projectors[r], "fro") <= 1e-9
    assert np.linalg.norm(dec.projectors[0] - np.ones((M, M)) / M, "fro") <= 1e-10
    assert np.linalg.norm(dec.reconstruct() - A, "fro") <= 1e-9
    assert dec.eigenvalues[0] == 1.0
    assert dec.lambda2_mod < 1.0 or dec.Q == 1


def test_clique_decomposition():
    cm = generate(GraphSpec("clique", 4))
    dec = decompose(cm)
    assert dec.Q == 2
    assert dec.eigenvalues == (1.0, 0.0)
    assert dec.gap == 1.0
    assert np.allclose(dec.projectors[0], np.ones((4, 4)) / 4, atol=1e-12)
    assert np.allclose(dec.projectors[1], np.eye(4) - np.ones((4, 4)) / 4, atol=1e-12)


def test_ring4_modulus_grouping():
    dec = decompose(generate(GraphSpec("undirected_ring_lattice", 4, 2)))
    assert dec.Q == 2  # {1} and {+1/3, -1/3} grouped by modulus
    assert abs(dec.lambda2_mod - 1 / 3) < 1e-12
    assert abs(dec.gap - 2 / 3) < 1e-12


def test_directed_ring4_gap():
    dec = decompose(generate(GraphSpec("directed_ring_lattice", 4, 1)))
    assert abs(dec.gap - (1 - np.sqrt(2) / 2)) < 1e-12


def test_invariants_on_generated_matrices():
    rng = np.random.default_rng(17)
    for spec in _random_specs(12, rng):
        cm = generate(spec)
        check_invariants(decompose(cm), cm.entries)


def test_power_norm_identity():
    rng = np.random.default_rng(5)
    for spec in (
        GraphSpec("directed_ring_lattice", 9, 2),
        GraphSpec("undirected_ring_lattice", 10, 4),
        GraphSpec("random_regular_expander", 12, 3, seed=4, candidates=10),
    ):
        A = generate(spec).entries
        dec = decompose(A)
        for _ in range(5):
            x = rng.normal(size=spec.M)
            for h in (0, 1, 5):
                lhs = np.linalg.norm(np.linalg.matrix_power(A, h) @ x) ** 2
                proj = np.array([np.linalg.norm(P @ x) ** 2 for P in dec.projectors])
                rhs = float(np.sum(dec.moduli ** (2 * h) * proj))
                assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(rhs))


def test_non_normal_rejected():
    A = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.25, 0.25]])
    with pytest.raises(NotNormal):
        decompose(A)


def _synthetic_dec(moduli):
    # orthonormal basis on R^4: group 0 is the ones direction
    V = np.linalg.qr(np.column_stack([np.ones(4), np.eye(4)[:, :3]]))[0]
    projectors = (
        np.outer(V[:, 0], V[:, 0]),
        np.outer(V[:, 1], V[:, 1]),
        V[:, 2:] @ V[:, 2:].T,
    )
    eigenvalues = (1.0 + 0j, moduli[1] + 0j, moduli[2] + 0j)
    terms = tuple(complex(v).real * P for v, P in zip(eigenvalues, projectors))
    return SpectralDecomposition(
        eigenvalues=eigenvalues, projectors=projectors, terms=terms, gap=1 - moduli[1]
    ), V


def test_alpha_direct_formula():
    # Q = 3, |lambda2| = 0.5, |lambda3| = 0.25, e2 = e3 = 0.5
    dec, V = _synthetic_dec([1.0, 0.5, 0.25])
    sample = np.outer(np.ones(1), V[:, 1]) + np.outer(np.ones(1), V[:, 2])
    profile = energy_fractions(dec, [sample])
    assert np.allclose(profile.fractions, [0.5, 0.5], atol=1e-12)
    assert abs(profile.alpha - np.sqrt(0.625)) < 1e-12


def test_aligned_samples_give_alpha_one():
    dec, V = _synthetic_dec([1.0, 0.5, 0.25])
    sample = np.outer(np.array([2.0, -1.0]), V[:, 1])  # rows in the lambda2 eigenspace
    profile = energy_fractions(dec, [sample])
    assert abs(profile.fractions[0] - 1.0) < 1e-12
    assert abs(profile.alpha - 1.0) < 1e-12


def test_clique_alpha_is_one_regardless_of_samples():
    dec = decompose(generate(GraphSpec("clique", 4)))
    rng = np.random.default_rng(0)
    G = rng.normal(size=(3, 4))
    dG = G - G.mean(axis=1, keepdims=True)
    assert energy_fractions(dec, [dG]).alpha == 1.0


def test_zero_energy_degenerate_flag():
    dec = decompose(generate(GraphSpec("undirected_ring_lattice", 6, 2)))
    profile = energy_fractions(dec, [np.zeros((2, 6))])
    assert profile.degenerate
    assert profile.alpha == 1.0
    assert abs(profile.fractions.sum() - 1.0) < 1e-12


def test_alpha_bounds_and_sup_mode():
    rng = np.random.default_rng(2)
    dec = decompose(generate(GraphSpec("undirected_ring_lattice", 10, 4)))
    samples = []
    for _ in range(6):
        G = rng.normal(size=(3, 10))
        samples.append(G - G.mean(axis=1, keepdims=True))
    for mode in ("mean", "sup"):
        profile = energy_fractions(dec, samples, mode=mode)
        assert abs(profile.fractions.sum() - 1.0) < 1e-9
        assert np.all(profile.fractions >= -1e-12)
        assert np.sqrt(profile.fractions[0]) - 1e-12 <= profile.alpha <= 1.0 + 1e-12
