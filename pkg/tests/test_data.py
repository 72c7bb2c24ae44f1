import numpy as np
import pytest

from dsmlab import (
    Dataset,
    GraphSpec,
    HingeL2,
    LinearMSE,
    ToyLinear,
    aligned_topology_vector,
    build_toy_dataset,
    generate,
    load_csv_dataset,
    minibatch_subgradient,
    random_split,
    split_by_label,
    synthetic_clustered_regression,
    synthetic_regression,
    toy_partition,
)
from dsmlab.data import gradient_matrix, pointwise_subgradients
from dsmlab.errors import BatchTooLarge, DegeneratePoint, InfeasibleReplication, LabelImbalance


def _toy_ds(S=8, n=2, seed=0):
    return synthetic_regression(S, n, seed)


def test_random_split_c1_partitions_dataset():
    ds = _toy_ds(4)
    part = random_split(ds, 2, 1, seed=0)
    assert part.local_size == 2
    union = np.sort(np.concatenate(part.assignment))
    assert np.array_equal(union, np.arange(4))


def test_random_split_full_replication():
    ds = _toy_ds(4)
    part = random_split(ds, 2, 2, seed=0)
    for idx in part.assignment:
        assert np.array_equal(np.sort(idx), np.arange(4))


def test_random_split_seeds_differ_but_valid():
    ds = _toy_ds(12)
    p1 = random_split(ds, 3, 1, seed=1)
    p2 = random_split(ds, 3, 1, seed=2)
    assert not all(np.array_equal(a, b) for a, b in zip(p1.assignment, p2.assignment))
    p1.validate(12)
    p2.validate(12)
    again = random_split(ds, 3, 1, seed=1)
    assert all(np.array_equal(a, b) for a, b in zip(p1.assignment, again.assignment))


def test_random_split_errors():
    ds = _toy_ds(4)
    with pytest.raises(InfeasibleReplication):
        random_split(ds, 2, 3, seed=0)  # C > M
    with pytest.raises(InfeasibleReplication):
        random_split(ds, 3, 1, seed=0)  # M does not divide C*S


def test_partition_constraints_fuzz():
    rng = np.random.default_rng(0)
    configs = [(4, 2, 1), (12, 3, 1), (12, 4, 2), (20, 5, 2), (6, 3, 3), (8, 4, 3), (10, 5, 4)]
    for trial in range(1000):
        S, M, C = configs[trial % len(configs)]
        ds = Dataset(features=np.ones((S, 1)), targets=np.zeros(S))
        part = random_split(ds, M, C, seed=int(rng.integers(1 << 32)))
        part.validate(S)  # raises on any violation


def test_split_by_label():
    ds = Dataset(features=np.ones((4, 1)), targets=np.array([0.0, 1.0, 0.0, 1.0]))
    part = split_by_label(ds, 2)
    assert np.array_equal(part.assignment[0], [0, 2])
    assert np.array_equal(part.assignment[1], [1, 3])


def test_split_by_label_ten_classes_pure_shards():
    ds = synthetic_clustered_regression(S=100, n=4, n_clusters=10, separation=1.0, seed=3)
    part = split_by_label(ds, 10)
    labels = np.sort(np.unique(ds.targets))
    for j, idx in enumerate(part.assignment):
        assert np.all(ds.targets[idx] == labels[j])


def test_split_by_label_errors():
    ds = Dataset(features=np.ones((6, 1)), targets=np.array([0.0, 0.0, 1.0, 1.0, 2.0, 2.0]))
    with pytest.raises(LabelImbalance):
        split_by_label(ds, 2)  # 3 labels for 2 nodes
    ds2 = Dataset(features=np.ones((3, 1)), targets=np.array([0.0, 1.0, 1.0]))
    with pytest.raises(LabelImbalance):
        split_by_label(ds2, 2)  # unequal counts


def test_minibatch_subgradient_examples():
    rng = np.random.default_rng(0)
    # squared error at a single point: 2 (w.x - y) x = [-4]
    ds = Dataset(features=np.array([[1.0]]), targets=np.array([2.0]))
    part = toy_partition(1)
    g = minibatch_subgradient(LinearMSE(), ds, part, 0, np.array([0.0]), 1, rng)
    assert np.allclose(g, [-4.0])

    # toy point with u + zeta = 0.3: subgradient is 0.3 for any w
    toy = build_toy_dataset(np.array([0.2, -0.2]), 0.1)
    g = minibatch_subgradient(ToyLinear(0.1), toy, toy_partition(2), 0, np.array([5.0]), 1, rng)
    assert np.allclose(g, [0.3])

    # inactive hinge: only the regularizer contributes
    ds3 = Dataset(features=np.array([[2.0]]), targets=np.array([1.0]))
    g = minibatch_subgradient(HingeL2(mu=0.5), ds3, toy_partition(1), 0, np.array([3.0]), 1, rng)
    assert np.allclose(g, [1.5])


def test_minibatch_too_large():
    ds = _toy_ds(4)
    part = random_split(ds, 2, 1, seed=0)
    with pytest.raises(BatchTooLarge):
        minibatch_subgradient(LinearMSE(), ds, part, 0, np.zeros(2), 3, np.random.default_rng(0))


@pytest.mark.parametrize("objective", [LinearMSE(), HingeL2(mu=0.3)])
def test_subgradient_matches_finite_differences(objective):
    rng = np.random.default_rng(7)
    ds = _toy_ds(40, 3, seed=8)
    eps = 1e-6
    checked = 0
    while checked < 100:
        w = rng.normal(size=3)
        if isinstance(objective, HingeL2):
            margins = 1.0 - ds.targets * (ds.features @ w)
            if np.min(np.abs(margins)) <= 1e-3:
                continue  # stay away from the kink
        g = pointwise_subgradients(objective, ds, w).mean(axis=0)
        fd = np.empty(3)
        for i in range(3):
            e = np.zeros(3)
            e[i] = eps
            fplus = np.mean(objective.point_losses(ds.features, ds.targets, w + e))
            fminus = np.mean(objective.point_losses(ds.features, ds.targets, w - e))
            fd[i] = (fplus - fminus) / (2 * eps)
        assert np.linalg.norm(g - fd) <= 1e-4 * max(1.0, np.linalg.norm(fd))
        checked += 1


def test_full_replication_full_batch_equals_centralized():
    ds = _toy_ds(12, 2, seed=9)
    M = 4
    part = random_split(ds, M, M, seed=1)
    obj = LinearMSE()
    w = np.array([0.3, -1.2])
    W = np.tile(w[:, None], (1, M))
    rngs = [np.random.default_rng(i) for i in range(M)]
    G = gradient_matrix(obj, ds, part, W, part.local_size, rngs)
    centralized = pointwise_subgradients(obj, ds, w).mean(axis=0)
    assert np.max(np.abs(G.mean(axis=1) - centralized)) <= 1e-12
    assert np.max(np.abs(G - centralized[:, None])) <= 1e-12


def test_build_toy_dataset_definitions():
    ds = build_toy_dataset(np.array([1.0, -1.0]), 0.1)
    assert np.allclose(ds.features.ravel(), [1.1, 0.9])
    assert np.allclose(ds.targets, [-1.0, 1.0])
    grads = pointwise_subgradients(ToyLinear(0.1), ds, np.array([0.0])).ravel()
    assert np.allclose(grads, [1.1, -0.9])


def test_toy_global_loss_is_affine():
    # F(w) = 1 + zeta w since the mean of -y x equals zeta
    zeta = 0.1
    u = np.array([0.5, -0.5, 0.25, -0.25])
    ds = build_toy_dataset(u, zeta)
    obj = ToyLinear(zeta)
    for w in (-3.0, 0.0, 2.5):
        assert abs(obj.mean_loss(ds.features, ds.targets, np.array([w])) - (1 + zeta * w)) < 1e-12


def test_build_toy_degenerate_point():
    with pytest.raises(DegeneratePoint):
        build_toy_dataset(np.array([0.1, -0.1]), 0.1)


def test_aligned_vector_properties():
    cm = generate(GraphSpec("undirected_ring_lattice", 12, 2))
    u = aligned_topology_vector(cm)
    assert abs(u.sum()) < 1e-9
    assert abs(np.abs(u).max() - 1.0) < 1e-12
    assert u.min() <= -1.0 + 1e-9
    # eigenvector of the signed second-largest eigenvalue
    vals = np.linalg.eigvalsh(cm.entries)
    lam2 = np.sort(vals)[-2]
    assert np.max(np.abs(cm.entries @ u - lam2 * u)) < 1e-9


def test_load_csv_dataset(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("id,x1,x2,y\n7,1.0,2.0,3.0\n8,4.0,5.0,6.0\n")
    ds = load_csv_dataset(path, drop=(0,), target="last")
    assert ds.S == 2 and ds.n_features == 2
    assert np.allclose(ds.features, [[1, 2], [4, 5]])
    assert np.allclose(ds.targets, [3, 6])


def test_dataset_rejects_nan():
    with pytest.raises(ValueError):
        Dataset(features=np.array([[np.nan]]), targets=np.array([1.0]))
