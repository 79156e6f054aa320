import numpy as np
import numpy.testing as npt
import pytest
from sklearn.metrics import adjusted_rand_score

from trajrank.clustering import ClusterSpace, assign, dbi, kmeans, select_k
from trajrank.core import DisplacementSeries


def blobs(rng, centers, n_per, scale=0.05):
    rows = [rng.normal(c, scale, size=(n_per, len(c))) for c in centers]
    labels = np.repeat(np.arange(len(centers)), n_per)
    return np.vstack(rows), labels


def test_kmeans_two_blobs_ari(rng):
    x, labels = blobs(rng, [[0, 0, 0, 0], [5, 5, 5, 5]], 50)
    space = kmeans(x, 2, seed=1)
    assert adjusted_rand_score(labels, space.assignments) == 1.0


def test_kmeans_k1_centroid_is_mean(rng):
    x = rng.normal(size=(20, 6))
    space = kmeans(x, 1, seed=0)
    npt.assert_allclose(space.centroids[0], x.mean(axis=0), atol=1e-12)


def test_kmeans_k_equals_n_zero_inertia(rng):
    x = rng.normal(size=(7, 3))
    space = kmeans(x, 7, seed=0)
    assert space.meta["inertia"] < 1e-20
    assert sorted(np.bincount(space.assignments, minlength=7)) == [1] * 7


def test_kmeans_errors(rng):
    with pytest.raises(ValueError, match="empty"):
        kmeans([], 2)
    with pytest.raises(ValueError, match="exceeds"):
        kmeans(rng.normal(size=(3, 2)), 5)
    with pytest.raises(ValueError, match="k must be"):
        kmeans(rng.normal(size=(3, 2)), 0)


def test_kmeans_partition_and_weights(rng):
    x, _ = blobs(rng, [[0, 0], [3, 3], [9, 0]], 30)
    space = kmeans(x, 3, seed=2)
    counts = np.bincount(space.assignments, minlength=3)
    assert counts.sum() == len(x) and np.all(counts > 0)
    assert abs(space.weights.sum() - 1.0) < 1e-12


def test_kmeans_assign_reproduces_training_assignments(rng):
    x, _ = blobs(rng, [[0, 0], [4, 4]], 40)
    space = kmeans(x, 2, seed=3)
    got = [assign(space, row) for row in x]
    npt.assert_array_equal(got, space.assignments)


def test_kmeans_deterministic(rng):
    x, _ = blobs(rng, [[0, 0], [4, 4]], 40)
    a = kmeans(x, 2, seed=11)
    b = kmeans(x, 2, seed=11)
    npt.assert_array_equal(a.assignments, b.assignments)
    npt.assert_array_equal(a.centroids, b.centroids)


def test_dbi_zero_variance_far_clusters():
    x = np.array([[0.0, 0.0]] * 4 + [[100.0, 0.0]] * 4)
    space = kmeans(x, 2, seed=0)
    assert dbi(space, x) == 0.0


def test_dbi_hand_computed_fixture():
    # cluster 0: {(0,0), (2,0)} sigma=1; cluster 1: {(10,0), (12,0)} sigma=1
    # centroid distance 10 => DBI = (1+1)/10 = 0.2
    x = np.array([[0.0, 0.0], [2.0, 0.0], [10.0, 0.0], [12.0, 0.0]])
    space = ClusterSpace(k=2, metric="euclidean-flat",
                         centroids=np.array([[1.0, 0.0], [11.0, 0.0]]),
                         assignments=np.array([0, 0, 1, 1]))
    assert abs(dbi(space, x) - 0.2) < 1e-12


def test_dbi_duplication_invariant(rng):
    x, _ = blobs(rng, [[0, 0], [5, 5]], 20)
    space = kmeans(x, 2, seed=1)
    doubled = np.vstack([x, x])
    space2 = ClusterSpace(k=2, metric="euclidean-flat", centroids=space.centroids,
                          assignments=np.concatenate([space.assignments] * 2))
    assert abs(dbi(space, x) - dbi(space2, doubled)) < 1e-12


def test_dbi_errors(rng):
    x = rng.normal(size=(10, 2))
    space = kmeans(x, 1, seed=0)
    with pytest.raises(ValueError, match="k < 2"):
        dbi(space, x)
    bad = ClusterSpace(k=3, metric="euclidean-flat",
                       centroids=np.zeros((3, 2)) + np.arange(3)[:, None],
                       assignments=np.array([0, 1, 0, 1]))
    with pytest.raises(ValueError, match="empty"):
        dbi(bad, x[:4])


def test_select_k_three_regimes(rng):
    x, _ = blobs(rng, [[0, 0, 0], [6, 0, 0], [0, 6, 0]], 40, scale=0.2)
    k_best, table = select_k(x, [2, 3, 4, 5, 6], runs=5, seed=4)
    assert k_best == 3
    assert [row["k"] for row in table] == [2, 3, 4, 5, 6]
    assert all(len(row["dbi_runs"]) == 5 for row in table)


def test_select_k_single_candidate(rng):
    x, _ = blobs(rng, [[0, 0], [5, 5]], 20)
    k_best, table = select_k(x, [2], runs=1, seed=0)
    assert k_best == 2 and len(table) == 1


def test_select_k_tie_prefers_smaller(rng):
    x, _ = blobs(rng, [[0, 0], [5, 5]], 20)
    calls = []

    def fake_fit(data, k, seed):
        calls.append(k)
        return kmeans(data, 2, seed=0)  # constant DBI regardless of requested k

    k_best, _ = select_k(x, [4, 2, 3], runs=1, seed=0, fit=fake_fit)
    assert k_best == 2


def test_assign_exact_centroid_and_tie_break():
    space = ClusterSpace(k=4, metric="euclidean-flat",
                         centroids=np.array([[0.0, 0], [1, 0], [2, 0], [0, 0]]),
                         assignments=np.array([0, 1, 2, 3]))
    assert assign(space, np.array([2.0, 0.0])) == 2
    # equidistant between clusters 0 and 3 (identical centroids): smallest wins
    assert assign(space, np.array([0.0, 0.5])) == 0


def test_assign_matches_bruteforce(rng):
    x, _ = blobs(rng, [[0, 0, 0], [3, 3, 3], [6, 0, 3]], 25)
    space = kmeans(x, 3, seed=5)
    for _ in range(50):
        q = rng.normal(1.5, 3.0, size=3)
        brute = int(np.argmin([np.linalg.norm(q - c) for c in space.centroids]))
        assert assign(space, q) == brute


def test_assign_future_only_series_slices_centroids(rng):
    data = rng.normal(size=(30, 20, 2))
    space = kmeans(data.reshape(30, -1), 3, seed=1, t_obs=8, t_pred=12)
    fut = DisplacementSeries(rng.normal(size=(12, 2)), 0, 12)
    sliced = space.centroids[:, -24:]
    brute = int(np.argmin(np.linalg.norm(sliced - fut.deltas.reshape(-1), axis=1)))
    assert assign(space, fut) == brute


def test_assign_representation_mismatch(rng):
    x = rng.normal(size=(10, 8))
    space = kmeans(x, 2, seed=0)
    with pytest.raises(ValueError, match="values"):
        assign(space, np.zeros(6))


def test_cluster_space_validation(rng):
    with pytest.raises(ValueError, match="centroids"):
        ClusterSpace(k=3, metric="euclidean-flat", centroids=np.zeros((2, 4)),
                     assignments=np.zeros(5, dtype=int))
    with pytest.raises(ValueError, match="outside"):
        ClusterSpace(k=2, metric="euclidean-flat", centroids=np.zeros((2, 4)),
                     assignments=np.array([0, 2]))


def test_cluster_space_doc_roundtrip(rng):
    x, _ = blobs(rng, [[0, 0], [5, 5]], 20)
    space = kmeans(x, 2, seed=1, t_obs=8, t_pred=12)
    back = ClusterSpace.from_doc(space.to_doc())
    npt.assert_array_equal(back.centroids, space.centroids)
    npt.assert_array_equal(back.assignments, space.assignments)
    assert back.content_hash() == space.content_hash()
