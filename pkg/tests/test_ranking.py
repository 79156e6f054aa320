import numpy as np
import numpy.testing as npt
import pytest

from trajrank import clustering
from trajrank.core import DisplacementSeries, split
from trajrank.forecasters import ProposalSet
from trajrank.ranking import (
    AnetClassifier,
    RankerConfig,
    anet_rank,
    anet_train,
    build_displacement_bank,
    predicted_label,
    rank_centroids,
    rank_neighbors,
    ranking_accuracy,
    softargmax_inverse_distances,
)


def fut(deltas):
    return DisplacementSeries(np.asarray(deltas, dtype=float), 0, len(deltas))


def make_pset(rows, ids=None):
    props = tuple(fut(r) for r in rows)
    return ProposalSet(props, cluster_ids=ids or tuple(range(len(rows))))


# --- the inverse-distance softmax ------------------------------------------------

def test_equal_distances_are_uniform():
    npt.assert_allclose(softargmax_inverse_distances([2.0, 2.0], 1.0), [0.5, 0.5])


def test_hand_computed_two_distances():
    p = softargmax_inverse_distances([1.0, 2.0], 1.0)
    npt.assert_allclose(p, [0.622459, 0.377541], atol=1e-4)


def test_temperature_limits():
    m = np.array([0.5, 1.0, 4.0])
    hot = softargmax_inverse_distances(m, 1e6)
    npt.assert_allclose(hot, np.full(3, 1 / 3), atol=1e-4)
    cold = softargmax_inverse_distances(m, 1e-3)
    assert cold[0] > 0.999


def test_zero_distance_limits():
    npt.assert_allclose(softargmax_inverse_distances([0.0, 3.0], 1.0), [1.0, 0.0])
    npt.assert_allclose(softargmax_inverse_distances([0.0, 1.0, 0.0], 1.0), [0.5, 0.0, 0.5])


def test_scale_covariance():
    m = np.array([0.3, 1.2, 2.0])
    for s in (0.1, 3.0, 50.0):
        npt.assert_allclose(softargmax_inverse_distances(m * s, 1.7),
                            softargmax_inverse_distances(m, 1.7 * s), atol=1e-12)


def test_monotone_in_distance(rng):
    for _ in range(50):
        m = np.sort(rng.uniform(0.1, 5.0, size=6))
        p = softargmax_inverse_distances(m, rng.uniform(0.2, 3.0))
        assert np.all(np.diff(p) < 0)
        assert abs(p.sum() - 1.0) < 1e-9


def test_tau_validation():
    with pytest.raises(ValueError, match="tau"):
        softargmax_inverse_distances([1.0], 0.0)


# --- centroid ranking -------------------------------------------------------------

def _flat_space(centroid_rows, assignments, t_obs=2, t_pred=2):
    return clustering.ClusterSpace(
        k=len(centroid_rows), metric="euclidean-flat",
        centroids=np.asarray(centroid_rows, dtype=float),
        assignments=np.asarray(assignments), t_obs=t_obs, t_pred=t_pred)


def test_rank_centroids_prefers_nearby_centroid():
    # centroids store full series (t_obs=2, t_pred=2 -> 8 values)
    space = _flat_space(
        [[0, 0, 0, 0, 1, 0, 1, 0], [0, 0, 0, 0, 0, 1, 0, 1]], [0, 1])
    pset = make_pset([[[1, 0], [1, 0]], [[1, 0], [0.9, 0]]])
    ranked = rank_centroids(pset, space, tau=1.0)
    assert ranked.probabilities[0] > ranked.probabilities[1]
    assert abs(ranked.probabilities.sum() - 1.0) < 1e-9


def test_rank_centroids_exact_hit_gets_probability_one():
    space = _flat_space(
        [[0, 0, 0, 0, 1, 0, 1, 0], [0, 0, 0, 0, 0, 1, 0, 1]], [0, 1])
    pset = make_pset([[[1, 0], [1, 0]], [[3, 3], [3, 3]]])
    ranked = rank_centroids(pset, space, tau=1.0)
    npt.assert_allclose(ranked.probabilities, [1.0, 0.0])


def test_rank_centroids_full_operand_uses_observation():
    space = _flat_space(
        [[1, 0, 1, 0, 1, 0, 1, 0], [0, 1, 0, 1, 0, 1, 0, 1]], [0, 1])
    obs = DisplacementSeries([[1, 0], [1, 0]], 2, 2)
    # both proposals reproduce their own centroid's future exactly
    pset = make_pset([[[1, 0], [1, 0]], [[0, 1], [0, 1]]])
    future_only = rank_centroids(pset, space, tau=1.0)
    npt.assert_allclose(future_only.probabilities, [0.5, 0.5])
    full = rank_centroids(pset, space, tau=1.0, obs=obs, operand="full")
    assert full.probabilities[0] > 0.9  # the eastbound observation breaks the tie


def test_rank_neighbors_single_member_cluster():
    space = _flat_space(
        [[0, 0, 0, 0, 1, 0, 1, 0], [0, 0, 0, 0, 0, 1, 0, 1]], [0, 1])
    bank = [np.array([[1.0, 0.0, 1.0, 0.0]]), np.array([[0.0, 1.0, 0.0, 1.0]])]
    pset = make_pset([[[1, 0], [1, 0]], [[1, 0], [1, 0]]])
    ranked = rank_neighbors(pset, space, bank, tau=1.0, n_neig=5)
    npt.assert_allclose(ranked.probabilities, [1.0, 0.0])  # exact member hit


def test_rank_neighbors_matches_exhaustive_sort_oracle(rng):
    for _ in range(40):
        k = int(rng.integers(2, 5))
        t_pred = 3
        members = [rng.normal(size=(int(rng.integers(3, 30)), 2 * t_pred)) for _ in range(k)]
        space = clustering.ClusterSpace(
            k=k, metric="euclidean-flat",
            centroids=rng.normal(size=(k, 2 * (2 + t_pred))),
            assignments=np.concatenate([np.full(len(m), j) for j, m in enumerate(members)]),
            t_obs=2, t_pred=t_pred)
        pset = make_pset([rng.normal(size=(t_pred, 2)) for _ in range(k)])
        n_neig = int(rng.integers(1, 12))
        ranked = rank_neighbors(pset, space, members, tau=1.0, n_neig=n_neig)
        m = np.empty(k)
        for i, c in enumerate(pset.cluster_ids):
            flat = pset.proposals[i].deltas.reshape(-1)
            dists = sorted(float(np.linalg.norm(row - flat)) for row in members[c])
            m[i] = float(np.mean(dists[: min(n_neig, len(dists))]))
        # same neighbor selection; values agree up to float reassociation
        npt.assert_allclose(ranked.probabilities,
                            softargmax_inverse_distances(m, 1.0), rtol=0, atol=1e-12)


def test_rank_neighbors_empty_cluster_error():
    space = _flat_space(
        [[0, 0, 0, 0, 1, 0, 1, 0], [0, 0, 0, 0, 0, 1, 0, 1]], [0, 1])
    bank = [np.zeros((0, 4)), np.ones((2, 4))]
    pset = make_pset([[[1, 0], [1, 0]], [[0, 1], [0, 1]]])
    with pytest.raises(ValueError, match="no members"):
        rank_neighbors(pset, space, bank, tau=1.0)


def test_displacement_bank_groups_by_cluster(two_regime_corpus):
    space = clustering.kmeans(two_regime_corpus.flat_array(), 2, seed=0,
                              t_obs=8, t_pred=12)
    bank = build_displacement_bank(space, two_regime_corpus)
    assert len(bank) == 2
    assert sum(len(b) for b in bank) == len(two_regime_corpus)
    assert all(b.shape[1] == 24 for b in bank)
    full_bank = build_displacement_bank(space, two_regime_corpus, operand="full")
    assert all(b.shape[1] == 40 for b in full_bank)


# --- anet --------------------------------------------------------------------

def test_anet_learns_separable_clusters(two_regime_corpus, rng):
    space = clustering.kmeans(two_regime_corpus.flat_array(), 2, seed=0,
                              t_obs=8, t_pred=12)
    futures = two_regime_corpus.deltas_array()[:, 8:].reshape(len(two_regime_corpus), -1)

    def sampler(classes, sample_rng):
        rows = np.empty((len(classes), futures.shape[1]))
        for i, c in enumerate(classes):
            members = futures[space.assignments == c]
            rows[i] = members[sample_rng.integers(len(members))] + sample_rng.normal(0, 0.01, futures.shape[1])
        return rows

    cfg = RankerConfig(method="anet", anet_epochs=20, anet_samples_per_class=60)
    clf = anet_train(sampler, space, cfg, seed=3, t_pred=12)
    test_rows = futures[::3]
    pred = clf.predict_proba(test_rows).argmax(axis=1)
    acc = (pred == space.assignments[::3]).mean()
    assert acc >= 0.9


def test_anet_rank_renormalizes(rng):
    clf = AnetClassifier(4, (8,), 3, seed=0)
    clf.trained = True
    pset = make_pset([rng.normal(size=(2, 2)) for _ in range(3)])
    ranked = anet_rank(clf, pset)
    assert abs(ranked.probabilities.sum() - 1.0) < 1e-9
    assert np.all(ranked.probabilities >= 0)


def test_anet_k1_probability_one(rng):
    clf = AnetClassifier(4, (8,), 1, seed=0)
    clf.trained = True
    pset = make_pset([rng.normal(size=(2, 2))])
    npt.assert_array_equal(anet_rank(clf, pset).probabilities, [1.0])


def test_anet_untrained_error(rng):
    clf = AnetClassifier(4, (8,), 2, seed=0)
    with pytest.raises(ValueError, match="trained"):
        clf.predict_proba(np.zeros(4))


def test_anet_doc_roundtrip(rng):
    clf = AnetClassifier(6, (8, 8), 3, seed=1)
    clf.trained = True
    back = AnetClassifier.from_doc(clf.to_doc())
    x = rng.normal(size=(5, 6))
    npt.assert_array_equal(back.predict_proba(x), clf.predict_proba(x))


# --- accuracy ----------------------------------------------------------------

def test_ranking_accuracy_all_correct(rng):
    pairs = []
    for label in (0, 1, 2):
        probs = np.full(3, 0.1)
        probs[label] = 0.8
        pset = make_pset([rng.normal(size=(2, 2)) for _ in range(3)]).with_probabilities(probs)
        pairs.append((pset, label))
    assert ranking_accuracy(pairs) == 100.0


def test_ranking_accuracy_uniform_ties_pick_smallest_id(rng):
    pset = make_pset([rng.normal(size=(2, 2)) for _ in range(4)]).with_probabilities(
        np.full(4, 0.25))
    assert predicted_label(pset) == 0
    pairs = [(pset, label) for label in (0, 1, 2, 0, 3)]
    assert ranking_accuracy(pairs) == 100.0 * 2 / 5  # frequency of label 0


def test_end_to_end_cent_accuracy_on_separable_fixture(two_regime_corpus):
    from trajrank.forecasters import ForecasterConfig, ours_propose_batch, ours_train

    space = clustering.kmeans(two_regime_corpus.flat_array(), 2, seed=0,
                              t_obs=8, t_pred=12)
    cfg = ForecasterConfig(kind="gan-ours", epochs=10, batch=32, lam=0.9, seed=2)
    model = ours_train(two_regime_corpus, space, cfg)
    obs_list = [split(s)[0] for s in two_regime_corpus.samples[:60]]
    labels = [clustering.assign(space, split(s)[1]) for s in two_regime_corpus.samples[:60]]
    psets = ours_propose_batch(model, obs_list, space, n_z=4, seed=5)
    ranked = [rank_centroids(p, space, tau=1.0, obs=o, operand="full")
              for p, o in zip(psets, obs_list)]
    assert ranking_accuracy(list(zip(ranked, labels))) >= 90.0
