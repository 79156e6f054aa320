"""Deep feature clustering with a self-conditioned GAN over full displacement series.

A conditional MLP generator maps noise plus a one-hot cluster class to a full
displacement series; the discriminator's encoder (LSTM or MLP, configurable)
produces the feature space that is periodically re-partitioned with k-means.
Cluster ids are realigned across reclusterings by maximum-overlap matching so
the generator's conditioning semantics stay stable.

The discriminator trains with binary cross-entropy; the generator minimizes a
weighted sum of trajectory MSE and the least-squares discriminator terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import autodiff as ad
from . import neural
from .autodiff import Tensor
from .core import DisplacementSeries, Standardizer
from .docio import derive_seed
from .errors import DivergenceError
from .ingestion import Corpus
from .clustering import ClusterSpace, kmeans


@dataclass(frozen=True)
class FpScGanConfig:
    z_dim: int = 8
    encoder: str = "lstm"  # lstm | mlp
    embed_dim: int = 16
    feature_dim: int = 64
    gen_hidden: int = 64
    head_dim: int = 32
    lam: float = 0.5
    epochs: int = 30
    lr: float = 1e-3
    batch: int = 64
    recluster_every: int | None = None  # steps; None = once per epoch
    seed: int = 0

    def __post_init__(self):
        if self.encoder not in ("lstm", "mlp"):
            raise ValueError(f"encoder must be 'lstm' or 'mlp', got '{self.encoder}'")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        for name in ("z_dim", "embed_dim", "feature_dim", "gen_hidden", "head_dim",
                     "epochs", "batch"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


class FpScGanModel:
    """Conditional generator + discriminator whose encoder features define clusters."""

    kind = "fp-scgan"

    def __init__(self, cfg: FpScGanConfig, k: int, t_obs: int, t_pred: int, init_seed: int):
        rng = np.random.default_rng(derive_seed(init_seed, "fp-scgan-init"))
        self.config = cfg
        self.k = k
        self.t_obs = t_obs
        self.t_pred = t_pred
        t_total = t_obs + t_pred
        # generator: MLP decoder z (+) onehot(c) -> full flat displacement series
        self.g1 = neural.Linear(cfg.z_dim + k, cfg.gen_hidden, rng, "g1")
        self.ga1 = neural.PReLU("ga1")
        self.g2 = neural.Linear(cfg.gen_hidden, cfg.gen_hidden, rng, "g2")
        self.ga2 = neural.PReLU("ga2")
        self.g_out = neural.Linear(cfg.gen_hidden, 2 * t_total, rng, "g_out")
        # discriminator encoder (feature tap) + classifier head
        if cfg.encoder == "lstm":
            self.e_emb = neural.Linear(2, cfg.embed_dim, rng, "e_emb")
            self.e_act = neural.PReLU("e_act")
            self.e_lstm = neural.LSTMCell(cfg.embed_dim, cfg.feature_dim, rng, "e_lstm")
            self._enc_layers = [self.e_emb, self.e_act, self.e_lstm]
        else:
            self.e1 = neural.Linear(2 * t_total, cfg.feature_dim, rng, "e1")
            self.ea1 = neural.PReLU("ea1")
            self.e2 = neural.Linear(cfg.feature_dim, cfg.feature_dim, rng, "e2")
            self.ea2 = neural.PReLU("ea2")
            self._enc_layers = [self.e1, self.ea1, self.e2, self.ea2]
        self.c1 = neural.Linear(cfg.feature_dim, cfg.head_dim, rng, "c1")
        self.ca = neural.PReLU("ca")
        self.c_out = neural.Linear(cfg.head_dim, 1, rng, "c_out")
        self.standardizer: Standardizer | None = None
        self.feature_space: ClusterSpace | None = None
        self.trained = False

    # --- structure ---------------------------------------------------------
    def generator_layers(self) -> dict:
        return {l.name: l for l in (self.g1, self.ga1, self.g2, self.ga2, self.g_out)}

    def discriminator_layers(self) -> dict:
        layers = list(self._enc_layers) + [self.c1, self.ca, self.c_out]
        return {l.name: l for l in layers}

    def generator_params(self) -> list:
        return [p for l in self.generator_layers().values() for p in l.params()]

    def discriminator_params(self) -> list:
        return [p for l in self.discriminator_layers().values() for p in l.params()]

    # --- forward pieces ----------------------------------------------------
    def generate(self, z: np.ndarray, onehot: np.ndarray) -> Tensor:
        """Flat (B, 2 * (t_obs + t_pred)) displacement series."""
        x = ad.concat([Tensor(z), Tensor(onehot)], axis=1)
        return self.g_out(self.ga2(self.g2(self.ga1(self.g1(x)))))

    def encode(self, series) -> Tensor:
        """Feature vectors (B, feature_dim) from full series (B, T, 2) or Tensor."""
        cfg = self.config
        if cfg.encoder == "mlp":
            flat = (ad.reshape(series, (series.shape[0], -1))
                    if isinstance(series, Tensor)
                    else Tensor(np.asarray(series).reshape(len(series), -1)))
            return self.ea2(self.e2(self.ea1(self.e1(flat))))
        t = series.shape[1]
        b = series.shape[0]
        h, c = self.e_lstm.initial_state(b)
        for step in range(t):
            x = series[:, step, :] if isinstance(series, Tensor) else Tensor(series[:, step, :])
            h, c = self.e_lstm(self.e_act(self.e_emb(x)), (h, c))
        return h

    def score(self, features: Tensor) -> Tensor:
        return ad.sigmoid(self.c_out(self.ca(self.c1(features))))

    # --- public inference ---------------------------------------------------
    def embed_many(self, series: np.ndarray) -> np.ndarray:
        """Deterministic encoder features for (B, T, 2) raw series."""
        arr = np.asarray(series, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[1] != self.t_obs + self.t_pred:
            raise ValueError(
                f"expected (B, {self.t_obs + self.t_pred}, 2) series, got {arr.shape}"
            )
        if self.standardizer is not None:
            arr = self.standardizer.transform(arr)
        return self.encode(arr).data.copy()

    def embed(self, sample) -> np.ndarray:
        arr = sample.deltas if isinstance(sample, DisplacementSeries) else np.asarray(sample)
        return self.embed_many(arr[None])[0]

    def sample_displacements(self, c: int, n: int, seed: int) -> list[DisplacementSeries]:
        """Draw n full displacement series conditioned on cluster c."""
        if not 0 <= c < self.k:
            raise ValueError(f"cluster id {c} outside 0..{self.k - 1}")
        if n == 0:
            return []
        rng = np.random.default_rng(derive_seed(seed, "fp-scgan-sample", c))
        z = rng.standard_normal((n, self.config.z_dim))
        onehot = np.zeros((n, self.k))
        onehot[:, c] = 1.0
        flat = self.generate(z, onehot).data
        series = flat.reshape(n, self.t_obs + self.t_pred, 2)
        if self.standardizer is not None:
            series = self.standardizer.inverse(series)
        return [DisplacementSeries(s, self.t_obs, self.t_pred) for s in series]


def draw_classes(weights: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Sample cluster ids according to the empirical cluster-size distribution."""
    return rng.choice(len(weights), size=n, p=np.asarray(weights, dtype=np.float64))


def align_clusters(prev: np.ndarray, new: np.ndarray, k: int) -> np.ndarray:
    """Permutation remap[new_id] -> old_id maximizing assignment overlap.

    Solved exactly on the contingency table (Hungarian method).
    """
    prev = np.asarray(prev, dtype=np.int64)
    new = np.asarray(new, dtype=np.int64)
    table = np.zeros((k, k), dtype=np.int64)
    np.add.at(table, (prev, new), 1)
    rows, cols = linear_sum_assignment(-table)
    remap = np.empty(k, dtype=np.int64)
    remap[cols] = rows
    return remap


def train_fp_scgan(corpus: Corpus, k: int, cfg: FpScGanConfig,
                   standardizer: Standardizer | None = None) -> tuple[FpScGanModel, ClusterSpace]:
    """Adversarial training with periodic feature-space reclustering.

    Conditioning classes come from the current assignment of each real batch
    sample, so drawn classes follow the cluster-size distribution. Every
    recluster_every steps (default: once per epoch) all samples are embedded,
    re-partitioned with k-means, and cluster ids realigned to the previous
    assignment.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if len(corpus) < k:
        raise ValueError(f"k={k} exceeds corpus size {len(corpus)}")
    model = FpScGanModel(cfg, k, corpus.t_obs, corpus.t_pred, cfg.seed)
    model.standardizer = standardizer

    data = corpus.deltas_array()
    if standardizer is not None:
        data = standardizer.transform(data)
    n = len(data)
    flat = data.reshape(n, -1)
    true_pos = np.cumsum(data, axis=1)

    space = kmeans(flat, k, seed=derive_seed(cfg.seed, "fp-scgan-bootstrap"),
                   t_obs=corpus.t_obs, t_pred=corpus.t_pred, standardizer=standardizer)
    assignments = space.assignments.copy()
    model.feature_space = space

    rng = np.random.default_rng(derive_seed(cfg.seed, "fp-scgan-train"))
    steps_per_epoch = int(np.ceil(n / cfg.batch))
    recluster_every = cfg.recluster_every or steps_per_epoch
    opt_g = neural.Adam(model.generator_params(), lr=cfg.lr)
    opt_d = neural.Adam(model.discriminator_params(), lr=cfg.lr)
    all_params = model.generator_params() + model.discriminator_params()

    step = 0
    recluster_count = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch):
            idx = perm[start: start + cfg.batch]
            b = len(idx)
            reals = data[idx]
            onehot = np.zeros((b, k))
            onehot[np.arange(b), assignments[idx]] = 1.0

            # discriminator: BCE real vs fake
            neural.zero_grads(all_params)
            fake = model.generate(rng.standard_normal((b, cfg.z_dim)), onehot)
            d_real = model.score(model.encode(reals))
            d_fake = model.score(model.encode(ad.reshape(fake, (b, -1, 2))))
            d_loss = ad.add(neural.loss_bce(d_real, np.ones((b, 1))),
                            neural.loss_bce(d_fake, np.zeros((b, 1))))
            if not np.isfinite(d_loss.item()):
                raise DivergenceError(f"non-finite discriminator loss at step {step}")
            d_loss.backward()
            opt_d.step()

            # generator: lam * trajectory MSE + (1 - lam) * least-squares terms
            neural.zero_grads(all_params)
            fake = model.generate(rng.standard_normal((b, cfg.z_dim)), onehot)
            fake_series = ad.reshape(fake, (b, -1, 2))
            recon = neural.loss_mse(ad.cumsum(fake_series, axis=1), true_pos[idx])
            adv = ad.add(neural.loss_ls_real(model.score(model.encode(reals))),
                         neural.loss_ls_fake(model.score(model.encode(fake_series))))
            g_loss = ad.add(ad.mul(recon, cfg.lam), ad.mul(adv, 1.0 - cfg.lam))
            if not np.isfinite(g_loss.item()):
                raise DivergenceError(f"non-finite generator loss at step {step}")
            g_loss.backward()
            opt_g.step()

            step += 1
            if step % recluster_every == 0:
                feats = model.encode(data).data
                recluster_count += 1
                fs = kmeans(feats, k,
                            seed=derive_seed(cfg.seed, "fp-scgan-recluster", recluster_count))
                remap = align_clusters(assignments, fs.assignments, k)
                assignments = remap[fs.assignments]
                centroids = np.empty_like(fs.centroids)
                centroids[remap] = fs.centroids
                space = ClusterSpace(
                    k=k, metric="feature-l2", centroids=centroids,
                    assignments=assignments, t_obs=corpus.t_obs, t_pred=corpus.t_pred,
                    meta={"recluster": recluster_count, "step": step},
                )
                model.feature_space = space

    model.trained = True
    return model, model.feature_space


def fp_scgan_to_doc(model: FpScGanModel) -> dict:
    layers = {**model.generator_layers(), **model.discriminator_layers()}
    return {
        "schema_version": 1,
        "kind": model.kind,
        "config": vars(model.config),
        "k": model.k,
        "t_obs": model.t_obs,
        "t_pred": model.t_pred,
        "standardizer": model.standardizer.to_doc() if model.standardizer else None,
        "layers": neural.layers_to_doc(layers),
        "feature_space": model.feature_space.to_doc() if model.feature_space else None,
        "trained": model.trained,
    }


def fp_scgan_from_doc(doc: dict) -> FpScGanModel:
    cfg = FpScGanConfig(**doc["config"])
    model = FpScGanModel(cfg, int(doc["k"]), int(doc["t_obs"]), int(doc["t_pred"]), cfg.seed)
    restored = neural.layers_from_doc(doc["layers"])
    for group in (model.generator_layers(), model.discriminator_layers()):
        for name, layer in group.items():
            for p in layer.params():
                p.data = next(q.data for q in restored[name].params() if q.name == p.name)
    std = doc.get("standardizer")
    model.standardizer = Standardizer.from_doc(std) if std else None
    fs = doc.get("feature_space")
    model.feature_space = ClusterSpace.from_doc(fs) if fs else None
    model.trained = bool(doc.get("trained", True))
    return model
