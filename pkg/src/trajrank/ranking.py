"""Assigning probabilities to proposal sets.

Distance-based methods map each proposal's distance m to its conditioning
cluster into a probability with a temperature softmax over inverse distances:

    p_i = exp((1 / m_i) / tau) / sum_j exp((1 / m_j) / tau)

``cent`` measures the L2 distance to the conditioning cluster's centroid,
``neigh`` the mean L2 distance to the N_neig nearest members of that cluster
(in displacement space or, for deep feature spaces, in feature space). The
``anet`` alternative trains an MLP classifier on generated samples and reads
the probability of the conditioning class.

Distances compare future segments only: proposals contain just futures, so
full-series centroids and members are sliced to their last t_pred steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import neural
from .autodiff import Tensor
from .clustering import ClusterSpace
from .core import DisplacementSeries
from .docio import derive_seed
from .forecasters import ProposalSet
from .ingestion import Corpus


@dataclass(frozen=True)
class RankerConfig:
    method: str = "cent"  # cent | neigh-ds | neigh-fs | anet
    tau: float = 1.0
    n_neig: int = 20
    operand: str = "future"  # future: d_hat_y only | full: dx (+) d_hat_y
    anet_hidden: tuple = (64, 64)
    anet_epochs: int = 30
    anet_lr: float = 1e-3
    anet_batch: int = 64
    anet_samples_per_class: int = 50

    def __post_init__(self):
        if self.method not in ("cent", "neigh-ds", "neigh-fs", "anet"):
            raise ValueError(f"unknown ranking method '{self.method}'")
        if self.operand not in ("future", "full"):
            raise ValueError(f"operand must be 'future' or 'full', got '{self.operand}'")
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.n_neig < 1:
            raise ValueError(f"n_neig must be >= 1, got {self.n_neig}")


def softargmax_inverse_distances(m, tau: float) -> np.ndarray:
    """Probabilities from distances via the inverse-distance softmax.

    Zero distances take the limit explicitly: one exact hit gets probability 1,
    several exact hits share it uniformly.
    """
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    m = np.asarray(m, dtype=np.float64)
    if np.any(m < 0):
        raise ValueError("distances must be non-negative")
    zeros = m == 0
    p = np.zeros_like(m)
    if np.any(zeros):
        p[zeros] = 1.0 / zeros.sum()
        return p
    logits = (1.0 / m) / tau
    z = np.exp(logits - logits.max())
    p = z / z.sum()
    return p / p.sum()


# ---------------------------------------------------------------------------
# proposal/space geometry


def _proposal_flat(pset: ProposalSet, space: ClusterSpace, obs, operand: str) -> np.ndarray:
    """Flat displacement vectors for each proposal, optionally prefixed with the observation."""
    rows = np.stack([p.deltas for p in pset.proposals])
    if space.standardizer is not None:
        rows = space.standardizer.transform(rows)
    flat = rows.reshape(len(pset), -1)
    if operand == "future":
        return flat
    if obs is None:
        raise ValueError("operand='full' needs the observed series")
    obs_deltas = obs.deltas[: obs.t_obs]
    if space.standardizer is not None:
        obs_deltas = space.standardizer.transform(obs_deltas)
    prefix = np.tile(obs_deltas.reshape(1, -1), (len(pset), 1))
    return np.hstack([prefix, flat])


def _centroid_flat(space: ClusterSpace, t_pred: int, operand: str) -> np.ndarray:
    if space.metric == "euclidean-flat":
        cents = space.centroids
    elif space.metric == "soft-dtw":
        cents = space.centroids.reshape(space.k, -1)
    else:
        raise ValueError("feature-l2 spaces need an embedder (see neigh-fs / cent)")
    return cents if operand == "full" else cents[:, -2 * t_pred:]


def _proposal_reprs(pset: ProposalSet, space: ClusterSpace, obs, embedder,
                    operand: str = "future") -> np.ndarray:
    """Per-proposal vectors commensurable with the space's centroids/banks."""
    if space.metric != "feature-l2":
        return _proposal_flat(pset, space, obs, operand)
    if embedder is None or obs is None:
        raise ValueError("feature-l2 ranking needs obs and an embedder")
    obs_deltas = obs.deltas[: obs.t_obs]
    reprs = [embedder(np.vstack([obs_deltas, p.deltas])) for p in pset.proposals]
    return np.stack(reprs)


def _require_conditioned(pset: ProposalSet) -> None:
    if pset.cluster_ids is None:
        raise ValueError("ranking needs conditioned proposals (cluster ids present)")


def rank_centroids(pset: ProposalSet, space: ClusterSpace, tau: float = 1.0,
                   obs: DisplacementSeries | None = None, embedder=None,
                   operand: str = "future") -> ProposalSet:
    """Rank by L2 distance to each proposal's own conditioning centroid.

    operand='future' compares the predicted future against the centroid's
    future segment; operand='full' compares the observed-plus-predicted series
    against the whole centroid. Feature spaces always embed the full series.
    """
    _require_conditioned(pset)
    t_pred = pset.proposals[0].t_pred
    reprs = _proposal_reprs(pset, space, obs, embedder, operand)
    cents = (space.centroids if space.metric == "feature-l2"
             else _centroid_flat(space, t_pred, operand))
    m = np.array([
        np.linalg.norm(reprs[i] - cents[c])
        for i, c in enumerate(pset.cluster_ids)
    ])
    return pset.with_probabilities(softargmax_inverse_distances(m, tau))


def build_displacement_bank(space: ClusterSpace, corpus: Corpus,
                            operand: str = "future") -> list[np.ndarray]:
    """Per-cluster flat displacement vectors (future segment or full series)."""
    rows = corpus.deltas_array()
    if operand == "future":
        rows = rows[:, corpus.t_obs:]
    if space.standardizer is not None:
        rows = space.standardizer.transform(rows)
    flat = rows.reshape(len(corpus), -1)
    return [flat[idx] for idx in space.member_index]


def build_feature_bank(space: ClusterSpace, corpus: Corpus, embedder) -> list[np.ndarray]:
    """Per-cluster feature vectors of the training members."""
    feats = np.stack([embedder(s.deltas) for s in corpus.samples])
    return [feats[idx] for idx in space.member_index]


def rank_neighbors(pset: ProposalSet, space: ClusterSpace, bank: list[np.ndarray],
                   tau: float = 1.0, n_neig: int = 20,
                   obs: DisplacementSeries | None = None,
                   operand: str = "future") -> ProposalSet:
    """Rank by mean L2 distance to the N_neig nearest members of the conditioning cluster.

    The nearest-neighbor search is an exact linear scan; n_neig is capped at
    the cluster size. The bank must be built with the same operand mode.
    """
    _require_conditioned(pset)
    if space.metric == "feature-l2":
        raise ValueError("feature-l2 banks need obs and an embedder; "
                         "use rank_neighbors_features")
    if len(bank) != space.k:
        raise ValueError(f"bank has {len(bank)} clusters, space has {space.k}")
    reprs = _proposal_reprs(pset, space, obs, None, operand)
    m = np.empty(len(pset))
    for i, c in enumerate(pset.cluster_ids):
        members = bank[c]
        if len(members) == 0:
            raise ValueError(f"cluster {c} has no members")
        d = np.linalg.norm(members - reprs[i], axis=1)
        nn = min(n_neig, len(d))
        m[i] = np.sort(d)[:nn].mean()
    return pset.with_probabilities(softargmax_inverse_distances(m, tau))


def rank_neighbors_features(pset: ProposalSet, space: ClusterSpace,
                            bank: list[np.ndarray], obs: DisplacementSeries,
                            embedder, tau: float = 1.0, n_neig: int = 20) -> ProposalSet:
    """neigh-fs: embed observed + proposal, compare to member features."""
    _require_conditioned(pset)
    reprs = _proposal_reprs(pset, space, obs, embedder)
    m = np.empty(len(pset))
    for i, c in enumerate(pset.cluster_ids):
        members = bank[c]
        if len(members) == 0:
            raise ValueError(f"cluster {c} has no members")
        d = np.linalg.norm(members - reprs[i], axis=1)
        nn = min(n_neig, len(d))
        m[i] = np.sort(d)[:nn].mean()
    return pset.with_probabilities(softargmax_inverse_distances(m, tau))


# ---------------------------------------------------------------------------
# auxiliary classifier


class AnetClassifier:
    """MLP over flattened future displacements -> cluster-class logits."""

    def __init__(self, in_dim: int, hidden, k: int, seed: int):
        rng = np.random.default_rng(derive_seed(seed, "anet-init"))
        self.in_dim = in_dim
        self.k = k
        self.hidden = tuple(int(h) for h in hidden)
        self.layers = []
        prev = in_dim
        for i, h in enumerate(self.hidden):
            self.layers.append(neural.Linear(prev, h, rng, f"anet{i}"))
            self.layers.append(neural.PReLU(f"anet{i}a"))
            prev = h
        self.layers.append(neural.Linear(prev, k, rng, "anet_out"))
        self.trained = False

    def params(self) -> list:
        return [p for l in self.layers for p in l.params()]

    def _logits(self, x) -> Tensor:
        t = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
        for layer in self.layers:
            t = layer(t)
        return t

    def predict_proba(self, flat: np.ndarray) -> np.ndarray:
        if not self.trained:
            raise ValueError("classifier has not been trained")
        flat = np.asarray(flat, dtype=np.float64)
        if flat.ndim == 1:
            flat = flat[None]
        return ad.softmax_np(self._logits(flat).data, axis=-1)

    def to_doc(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "anet",
            "in_dim": self.in_dim,
            "k": self.k,
            "hidden": list(self.hidden),
            "layers": neural.layers_to_doc({l.name: l for l in self.layers}),
            "trained": self.trained,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "AnetClassifier":
        clf = cls(int(doc["in_dim"]), doc["hidden"], int(doc["k"]), 0)
        restored = neural.layers_from_doc(doc["layers"])
        for layer in clf.layers:
            for p in layer.params():
                p.data = next(q.data for q in restored[layer.name].params()
                              if q.name == p.name)
        clf.trained = bool(doc.get("trained", True))
        return clf


def anet_train(sampler, space: ClusterSpace, cfg: RankerConfig, seed: int,
               t_pred: int) -> AnetClassifier:
    """Train the auxiliary classifier on generated future displacements.

    ``sampler(classes, rng) -> (len(classes), 2 * t_pred)`` must synthesize
    futures conditioned on the given cluster ids; classes are drawn from the
    space's empirical cluster distribution.
    """
    rng = np.random.default_rng(derive_seed(seed, "anet-train"))
    n = cfg.anet_samples_per_class * space.k
    classes = rng.choice(space.k, size=n, p=space.weights)
    x = np.asarray(sampler(classes, rng), dtype=np.float64)
    if x.shape != (n, 2 * t_pred):
        raise ValueError(f"sampler returned {x.shape}, expected {(n, 2 * t_pred)}")
    clf = AnetClassifier(2 * t_pred, cfg.anet_hidden, space.k, seed)
    params = clf.params()
    opt = neural.Adam(params, lr=cfg.anet_lr)
    for _ in range(cfg.anet_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.anet_batch):
            idx = perm[start: start + cfg.anet_batch]
            neural.zero_grads(params)
            loss = neural.loss_xent(clf._logits(x[idx]), classes[idx])
            loss.backward()
            opt.step()
    clf.trained = True
    return clf


def anet_rank(clf: AnetClassifier, pset: ProposalSet) -> ProposalSet:
    """Probability of each proposal = classifier probability of its own class,
    renormalized across the set."""
    _require_conditioned(pset)
    if len(pset) == 1:
        return pset.with_probabilities(np.array([1.0]))
    flat = np.stack([p.deltas.reshape(-1) for p in pset.proposals])
    proba = clf.predict_proba(flat)
    raw = np.array([proba[i, c] for i, c in enumerate(pset.cluster_ids)])
    total = raw.sum()
    if total <= 0:
        probs = np.full(len(pset), 1.0 / len(pset))
    else:
        probs = raw / total
    return pset.with_probabilities(probs / probs.sum())


# ---------------------------------------------------------------------------
# evaluation of rankers


def predicted_label(pset: ProposalSet) -> int:
    """Argmax-probability cluster id; exact ties break to the smallest id."""
    _require_conditioned(pset)
    if pset.probabilities is None:
        raise ValueError("proposal set has no probabilities")
    best = pset.probabilities.max()
    return min(c for c, p in zip(pset.cluster_ids, pset.probabilities) if p == best)


def ranking_accuracy(ranked_pairs) -> float:
    """Percentage of samples whose argmax-probability cluster matches the pseudo-label."""
    pairs = list(ranked_pairs)
    if not pairs:
        raise ValueError("no ranked samples")
    hits = sum(1 for pset, label in pairs if predicted_label(pset) == int(label))
    return 100.0 * hits / len(pairs)
