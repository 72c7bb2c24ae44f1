import numpy as np
import pytest

from dsmlab import GraphSpec, decompose, generate, validate
from dsmlab.errors import InfeasibleSpec
from dsmlab.topology import relabel, strongly_connected


def test_clique_matrix_and_spectrum():
    cm = generate(GraphSpec("clique", 4))
    assert np.array_equal(cm.entries, np.full((4, 4), 0.25))
    mods = np.sort(np.abs(np.linalg.eigvals(cm.entries)))
    assert mods[-2] < 1e-14  # second modulus is 0


def test_undirected_ring_m4_closed_form():
    cm = generate(GraphSpec("undirected_ring_lattice", 4, 2))
    expected = np.array(
        [
            [1 / 3, 1 / 3, 0, 1 / 3],
            [1 / 3, 1 / 3, 1 / 3, 0],
            [0, 1 / 3, 1 / 3, 1 / 3],
            [1 / 3, 0, 1 / 3, 1 / 3],
        ]
    )
    assert np.allclose(cm.entries, expected, atol=1e-15)
    # circulant closed form: (1 + 2 cos(2 pi j / 4)) / 3
    oracle = np.sort(np.abs((1 + 2 * np.cos(2 * np.pi * np.arange(4) / 4)) / 3))
    mods = np.sort(np.abs(np.linalg.eigvals(cm.entries)))
    assert np.allclose(mods, oracle, atol=1e-12)
    assert abs(sorted(mods)[-2] - 1 / 3) < 1e-12


def test_directed_ring_m4_closed_form():
    cm = generate(GraphSpec("directed_ring_lattice", 4, 1))
    shift = np.roll(np.eye(4), 1, axis=1)
    assert np.allclose(cm.entries, (np.eye(4) + shift) / 2, atol=1e-15)
    # DFT closed form: eigenvalues (1 + exp(2 pi i j / 4)) / 2
    oracle = np.sort(np.abs((1 + np.exp(2j * np.pi * np.arange(4) / 4)) / 2))
    mods = np.sort(np.abs(np.linalg.eigvals(cm.entries)))
    assert np.allclose(mods, oracle, atol=1e-12)
    assert abs(mods[-2] - np.sqrt(2) / 2) < 1e-12


@pytest.mark.parametrize(
    "spec",
    [
        GraphSpec("clique", 4),
        GraphSpec("undirected_ring_lattice", 12, 4),
        GraphSpec("directed_ring_lattice", 100, 3),
        GraphSpec("random_regular_expander", 20, 3, seed=1, candidates=20),
    ],
)
def test_generated_matrices_validate(spec):
    rep = validate(generate(spec))
    assert rep.ok, rep.residuals


def test_validate_scaled_row_fails():
    A = np.full((4, 4), 0.25)
    A[0] *= 1.1
    rep = validate(A)
    assert not rep.row_stochastic
    assert abs(rep.residuals["row"] - 0.1) < 1e-12
    assert rep.col_stochastic is False  # columns also off after scaling one row


def test_validate_clique_normality_residual_zero():
    rep = validate(generate(GraphSpec("clique", 4)))
    assert rep.ok
    assert rep.residuals["normality"] == 0.0


def test_ones_vector_is_leading_eigenvector():
    for spec in (
        GraphSpec("clique", 5),
        GraphSpec("undirected_ring_lattice", 10, 2),
        GraphSpec("directed_ring_lattice", 7, 2),
    ):
        A = generate(spec).entries
        assert np.allclose(A @ np.ones(spec.M), np.ones(spec.M), atol=1e-12)


def test_expander_gap_dominates_ring():
    for d in (2, 4):
        exp_gap = decompose(generate(GraphSpec("random_regular_expander", 24, d, seed=3, candidates=40))).gap
        ring_gap = decompose(generate(GraphSpec("undirected_ring_lattice", 24, d))).gap
        assert exp_gap >= ring_gap - 1e-12


def test_expander_deterministic_per_seed():
    a = generate(GraphSpec("random_regular_expander", 30, 3, seed=11, candidates=25))
    b = generate(GraphSpec("random_regular_expander", 30, 3, seed=11, candidates=25))
    assert np.array_equal(a.entries, b.entries)
    c = generate(GraphSpec("random_regular_expander", 30, 3, seed=12, candidates=25))
    assert not np.array_equal(a.entries, c.entries)


def test_infeasible_specs():
    with pytest.raises(InfeasibleSpec):
        generate(GraphSpec("undirected_ring_lattice", 5, 3))  # M*d odd
    with pytest.raises(InfeasibleSpec):
        generate(GraphSpec("directed_ring_lattice", 4, 4))  # d >= M
    with pytest.raises(InfeasibleSpec):
        generate(GraphSpec("clique", 4, 2))  # clique requires d = M-1
    with pytest.raises(InfeasibleSpec):
        GraphSpec("pentagon", 4)


def test_gap_invariant_under_relabeling():
    cm = generate(GraphSpec("undirected_ring_lattice", 12, 4))
    perm = np.random.default_rng(0).permutation(12)
    assert abs(decompose(relabel(cm, perm)).gap - decompose(cm).gap) < 1e-12


def test_strong_connectivity_check():
    # two disjoint cliques are not connected
    A = np.zeros((4, 4), dtype=bool)
    A[:2, :2] = True
    A[2:, 2:] = True
    assert not strongly_connected(A)
    assert strongly_connected(generate(GraphSpec("directed_ring_lattice", 6, 1)).support())


def test_csv_roundtrip_bit_identical(tmp_path):
    cm = generate(GraphSpec("random_regular_expander", 16, 3, seed=2, candidates=10))
    path = tmp_path / "matrix.csv"
    cm.save_csv(path)
    back = np.loadtxt(path, delimiter=",", ndmin=2)
    assert np.array_equal(back, cm.entries)  # 17 significant digits reproduce doubles


def test_graphspec_json_roundtrip():
    spec = GraphSpec("random_regular_expander", 100, 4, seed=7, candidates=200)
    assert GraphSpec.from_json(spec.to_json()) == spec
    assert GraphSpec.from_json('{"kind": "clique", "M": 8}').degree == 7
