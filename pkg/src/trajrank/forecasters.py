"""Forecasting models.

* ``cvm``      — constant-velocity heuristic with a Gaussian-kernel velocity
  estimate over the observed displacements.
* ``red``      — deterministic LSTM + MLP regressor predicting all future
  steps in one shot.
* ``cf-gan`` / ``cf-vae`` — context-free generative baselines; the
  reconstruction part of their loss is the variety (min-over-samples) loss.
* ``gan-ours`` / ``vae-ours`` — cluster-conditioned generators producing one
  proposal per cluster class.

All networks share the same stack: linear embedding (16), LSTM (64), and a
32-wide decoding head, PReLU after the non-recurrent layers. Decoding is
autoregressive from the last observed displacement; inference never sees the
ground-truth future.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from . import neural
from .autodiff import Tensor
from .core import DisplacementSeries, Standardizer
from .docio import derive_seed
from .errors import DivergenceError, LineageError
from .ingestion import Corpus

KINDS = ("cvm", "red", "cf-gan", "cf-vae", "gan-ours", "vae-ours")


@dataclass(frozen=True)
class ForecasterConfig:
    kind: str
    t_obs: int = 8
    t_pred: int = 12
    embed_dim: int = 16
    lstm_dim: int = 64
    decode_dim: int = 32
    z_dim: int = 8
    lam: float = 0.5       # weight of the reconstruction term
    beta: float = 1.0      # weight of the KL term (VAE variants)
    k_variety: int = 3     # samples in the variety loss (CF variants)
    epochs: int = 50
    lr: float = 1e-3
    batch: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown forecaster kind '{self.kind}'")
        for name in ("t_obs", "t_pred", "embed_dim", "lstm_dim", "decode_dim",
                     "z_dim", "k_variety", "epochs", "batch"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")


@dataclass(frozen=True, eq=False)
class ProposalSet:
    """K predicted futures, optionally with a probability per proposal."""

    proposals: tuple  # future-only DisplacementSeries
    cluster_ids: tuple | None = None  # conditioned models only
    probabilities: np.ndarray | None = None
    source: str = ""

    def __post_init__(self):
        props = tuple(self.proposals)
        if not props:
            raise ValueError("a proposal set cannot be empty")
        for p in props:
            if not isinstance(p, DisplacementSeries) or p.t_obs != 0:
                raise ValueError("proposals must be future-only DisplacementSeries")
        ids = None if self.cluster_ids is None else tuple(int(c) for c in self.cluster_ids)
        if ids is not None:
            if len(ids) != len(props):
                raise ValueError("cluster_ids length must match proposals")
            if len(set(ids)) != len(ids):
                raise ValueError("conditioned proposals need one proposal per cluster id")
        probs = self.probabilities
        if probs is not None:
            probs = np.asarray(probs, dtype=np.float64)
            if len(probs) != len(props):
                raise ValueError("probabilities length must match proposals")
            if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
                raise ValueError("probabilities must be non-negative and sum to 1")
            probs.setflags(write=False)
        object.__setattr__(self, "proposals", props)
        object.__setattr__(self, "cluster_ids", ids)
        object.__setattr__(self, "probabilities", probs)

    def __len__(self) -> int:
        return len(self.proposals)

    def with_probabilities(self, probs) -> "ProposalSet":
        return ProposalSet(self.proposals, self.cluster_ids, probs, self.source)


def _onehot(ids: np.ndarray, k: int) -> np.ndarray:
    m = np.zeros((len(ids), k))
    m[np.arange(len(ids)), np.asarray(ids, dtype=np.int64)] = 1.0
    return m


# ---------------------------------------------------------------------------
# constant velocity model


def cvm_predict(obs: DisplacementSeries, t_pred: int, sigma: float = 1.0) -> DisplacementSeries:
    """Repeat a kernel-weighted mean of the observed displacements.

    Weights follow exp(-(T_O - 1 - t)^2 / (2 sigma^2)); sigma == 0 degenerates
    to projecting the last observed displacement.
    """
    deltas = obs.deltas[: obs.t_obs] if obs.t_obs else obs.deltas
    n = len(deltas)
    if n < 1:
        raise ValueError("cvm needs at least one observed displacement")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        v = deltas[-1]
    else:
        t = np.arange(n)
        logw = -((n - 1 - t) ** 2) / (2.0 * sigma ** 2)
        w = np.exp(logw - logw.max())
        w /= w.sum()
        v = (w[:, None] * deltas).sum(axis=0)
    future = np.tile(v, (t_pred, 1))
    return DisplacementSeries(future, 0, t_pred, origin=obs.last_observed_position)


# ---------------------------------------------------------------------------
# shared network blocks


class _SeqEncoder:
    """Per-step linear embedding + PReLU feeding an LSTM; returns final state."""

    def __init__(self, rng, cfg: ForecasterConfig, cond_dim: int, prefix: str):
        self.cond_dim = cond_dim
        self.emb = neural.Linear(2, cfg.embed_dim, rng, f"{prefix}.emb")
        self.act = neural.PReLU(f"{prefix}.act")
        self.lstm = neural.LSTMCell(cfg.embed_dim + cond_dim, cfg.lstm_dim, rng, f"{prefix}.lstm")

    def layers(self) -> dict:
        return {l.name: l for l in (self.emb, self.act, self.lstm)}

    def run(self, deltas: np.ndarray, onehot: np.ndarray | None):
        b, t, _ = deltas.shape
        h, c = self.lstm.initial_state(b)
        cond = None if self.cond_dim == 0 else Tensor(onehot)
        for step in range(t):
            e = self.act(self.emb(Tensor(deltas[:, step, :])))
            x = e if cond is None else ad.concat([e, cond], axis=1)
            h, c = self.lstm(x, (h, c))
        return h, c


class _Decoder:
    """Autoregressive step decoder: embeds the previous displacement, runs the
    LSTM, and maps the hidden state through the decoding head."""

    def __init__(self, rng, cfg: ForecasterConfig, cond_dim: int, prefix: str):
        self.cond_dim = cond_dim
        self.emb = neural.Linear(2, cfg.embed_dim, rng, f"{prefix}.emb")
        self.act = neural.PReLU(f"{prefix}.act")
        self.lstm = neural.LSTMCell(cfg.embed_dim + cond_dim, cfg.lstm_dim, rng, f"{prefix}.lstm")
        self.head = neural.Linear(cfg.lstm_dim, cfg.decode_dim, rng, f"{prefix}.head")
        self.head_act = neural.PReLU(f"{prefix}.head_act")
        self.out = neural.Linear(cfg.decode_dim, 2, rng, f"{prefix}.out")

    def layers(self) -> dict:
        return {l.name: l for l in (self.emb, self.act, self.lstm,
                                    self.head, self.head_act, self.out)}

    def rollout(self, last_delta, h, c, steps: int, onehot: np.ndarray | None):
        prev = last_delta if isinstance(last_delta, Tensor) else Tensor(last_delta)
        cond = None if self.cond_dim == 0 else Tensor(onehot)
        outs = []
        for _ in range(steps):
            e = self.act(self.emb(prev))
            x = e if cond is None else ad.concat([e, cond], axis=1)
            h, c = self.lstm(x, (h, c))
            d = self.out(self.head_act(self.head(h)))
            outs.append(ad.reshape(d, (d.shape[0], 1, 2)))
            prev = d
        return ad.concat(outs, axis=1)  # (B, steps, 2)


class _Mixer:
    """Folds the latent vector into the encoder's hidden state."""

    def __init__(self, rng, cfg: ForecasterConfig, prefix: str):
        self.lin = neural.Linear(cfg.lstm_dim + cfg.z_dim, cfg.lstm_dim, rng, f"{prefix}.lin")
        self.act = neural.PReLU(f"{prefix}.act")

    def layers(self) -> dict:
        return {l.name: l for l in (self.lin, self.act)}

    def __call__(self, h: Tensor, z) -> Tensor:
        zt = z if isinstance(z, Tensor) else Tensor(z)
        return self.act(self.lin(ad.concat([h, zt], axis=1)))


class _Recognition:
    """VAE recognition network: encodes the future into (mu, logvar)."""

    def __init__(self, rng, cfg: ForecasterConfig, cond_dim: int, prefix: str):
        self.enc = _SeqEncoder(rng, cfg, cond_dim, f"{prefix}.enc")
        self.mu = neural.Linear(cfg.lstm_dim, cfg.z_dim, rng, f"{prefix}.mu")
        self.logvar = neural.Linear(cfg.lstm_dim, cfg.z_dim, rng, f"{prefix}.logvar")

    def layers(self) -> dict:
        return {**self.enc.layers(), self.mu.name: self.mu, self.logvar.name: self.logvar}

    def __call__(self, futures: np.ndarray, onehot: np.ndarray | None):
        h, _ = self.enc.run(futures, onehot)
        return self.mu(h), self.logvar(h)


class _FutureDiscriminator:
    """Scores future tracklets real vs fake through a sigmoid."""

    def __init__(self, rng, cfg: ForecasterConfig, prefix: str):
        self.enc = _SeqEncoder(rng, cfg, 0, f"{prefix}.enc")
        self.head = neural.Linear(cfg.lstm_dim, cfg.decode_dim, rng, f"{prefix}.head")
        self.act = neural.PReLU(f"{prefix}.act")
        self.out = neural.Linear(cfg.decode_dim, 1, rng, f"{prefix}.out")

    def layers(self) -> dict:
        return {**self.enc.layers(), self.head.name: self.head,
                self.act.name: self.act, self.out.name: self.out}

    def __call__(self, futures) -> Tensor:
        if isinstance(futures, Tensor):
            b, t, _ = futures.shape
            h, c = self.enc.lstm.initial_state(b)
            for step in range(t):
                e = self.enc.act(self.enc.emb(futures[:, step, :]))
                h, c = self.enc.lstm(e, (h, c))
        else:
            h, _ = self.enc.run(np.asarray(futures), None)
        return ad.sigmoid(self.out(self.act(self.head(h))))


def _collect_params(layer_groups) -> list:
    params = []
    for group in layer_groups:
        for layer in group.values():
            params.extend(layer.params())
    return params


def _check_finite(value: float, what: str) -> None:
    if not np.isfinite(value):
        raise DivergenceError(f"non-finite {what}")


def _batches(n: int, batch: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch):
        yield perm[start: start + batch]


# ---------------------------------------------------------------------------
# RED


class REDModel:
    """Deterministic one-shot regressor: embed + LSTM + 2-layer MLP head."""

    kind = "red"

    def __init__(self, cfg: ForecasterConfig, init_seed: int):
        rng = np.random.default_rng(derive_seed(init_seed, "red-init"))
        self.config = cfg
        self.enc = _SeqEncoder(rng, cfg, 0, "enc")
        self.mlp1 = neural.Linear(cfg.lstm_dim, cfg.decode_dim, rng, "mlp1")
        self.act1 = neural.PReLU("act1")
        self.mlp2 = neural.Linear(cfg.decode_dim, cfg.decode_dim // 2, rng, "mlp2")
        self.act2 = neural.PReLU("act2")
        self.out = neural.Linear(cfg.decode_dim // 2, 2 * cfg.t_pred, rng, "out")
        self.standardizer: Standardizer | None = None
        self.trained = False

    def layers(self) -> dict:
        extra = {l.name: l for l in (self.mlp1, self.act1, self.mlp2, self.act2, self.out)}
        return {**self.enc.layers(), **extra}

    def params(self) -> list:
        return _collect_params([self.layers()])

    def _forward(self, obs_deltas: np.ndarray) -> Tensor:
        h, _ = self.enc.run(obs_deltas, None)
        flat = self.out(self.act2(self.mlp2(self.act1(self.mlp1(h)))))
        return ad.reshape(flat, (obs_deltas.shape[0], self.config.t_pred, 2))

    def predict(self, obs: DisplacementSeries) -> DisplacementSeries:
        if not self.trained:
            raise ValueError("model has not been trained")
        x = obs.deltas[None, : self.config.t_obs]
        if self.standardizer is not None:
            x = self.standardizer.transform(x)
        pred = self._forward(x).data[0]
        if self.standardizer is not None:
            pred = self.standardizer.inverse(pred)
        return DisplacementSeries(pred, 0, self.config.t_pred,
                                  origin=obs.last_observed_position)


def red_train(corpus: Corpus, cfg: ForecasterConfig,
              standardizer: Standardizer | None = None) -> REDModel:
    """Train RED with MSE on future positions."""
    model = REDModel(cfg, cfg.seed)
    model.standardizer = standardizer
    obs, fut = _training_arrays(corpus, cfg, standardizer)
    params = model.params()
    opt = neural.Adam(params, lr=cfg.lr)
    rng = np.random.default_rng(derive_seed(cfg.seed, "red-train"))
    for _ in range(cfg.epochs):
        for idx in _batches(len(obs), cfg.batch, rng):
            neural.zero_grads(params)
            pred = model._forward(obs[idx])
            loss = neural.loss_mse(ad.cumsum(pred, axis=1), np.cumsum(fut[idx], axis=1))
            _check_finite(loss.item(), "RED loss")
            loss.backward()
            opt.step()
    model.trained = True
    return model


def _training_arrays(corpus: Corpus, cfg: ForecasterConfig,
                     standardizer: Standardizer | None):
    data = corpus.deltas_array()
    if standardizer is not None:
        data = standardizer.transform(data)
    return data[:, : cfg.t_obs], data[:, cfg.t_obs:]


# ---------------------------------------------------------------------------
# generative models (context-free and cluster-conditioned)


class GenerativeModel:
    """cGAN / cVAE forecaster; cond_dim == 0 gives the context-free variants."""

    def __init__(self, cfg: ForecasterConfig, cond_dim: int, init_seed: int):
        rng = np.random.default_rng(derive_seed(init_seed, "gen-init"))
        self.config = cfg
        self.cond_dim = cond_dim
        self.kind = cfg.kind
        self.enc = _SeqEncoder(rng, cfg, cond_dim, "enc")
        self.mixer = _Mixer(rng, cfg, "mix")
        self.dec = _Decoder(rng, cfg, cond_dim, "dec")
        self.disc = _FutureDiscriminator(rng, cfg, "disc") if "gan" in cfg.kind else None
        self.recog = _Recognition(rng, cfg, cond_dim, "recog") if "vae" in cfg.kind else None
        self.standardizer: Standardizer | None = None
        self.space_hash: str | None = None  # conditioned models record their space
        self.trained = False

    def layer_groups(self) -> list[dict]:
        groups = [self.enc.layers(), self.mixer.layers(), self.dec.layers()]
        if self.recog is not None:
            groups.append(self.recog.layers())
        return groups

    def generator_params(self) -> list:
        return _collect_params(self.layer_groups())

    def discriminator_params(self) -> list:
        return _collect_params([self.disc.layers()]) if self.disc else []

    def all_params(self) -> list:
        return self.generator_params() + self.discriminator_params()

    def decode(self, obs_deltas: np.ndarray, z: np.ndarray,
               onehot: np.ndarray | None) -> Tensor:
        """Autoregressive prediction of t_pred standardized displacements."""
        h, c = self.enc.run(obs_deltas, onehot)
        h0 = self.mixer(h, z)
        last = obs_deltas[:, -1, :]
        return self.dec.rollout(last, h0, c, self.config.t_pred, onehot)

    def _predict_batch(self, obs_deltas: np.ndarray, z: np.ndarray,
                       onehot: np.ndarray | None) -> np.ndarray:
        if not self.trained:
            raise ValueError("model has not been trained")
        x = obs_deltas
        if self.standardizer is not None:
            x = self.standardizer.transform(x)
        pred = self.decode(x, z, onehot).data
        if self.standardizer is not None:
            pred = self.standardizer.inverse(pred)
        return pred


def _gan_step(model: GenerativeModel, obs_b, fut_b, onehot_b, rng, opt_g, opt_d,
              n_fakes: int, variety: bool):
    cfg = model.config
    b = len(obs_b)
    all_params = model.all_params()

    def fakes():
        return [model.decode(obs_b, rng.standard_normal((b, cfg.z_dim)), onehot_b)
                for _ in range(n_fakes)]

    # discriminator: BCE real-vs-fake on future tracklets
    neural.zero_grads(all_params)
    d_real = model.disc(fut_b)
    fake_scores = [model.disc(f) for f in fakes()]
    d_loss = neural.loss_bce(d_real, np.ones((b, 1)))
    for s in fake_scores:
        d_loss = ad.add(d_loss, ad.mul(neural.loss_bce(s, np.zeros((b, 1))), 1.0 / n_fakes))
    _check_finite(d_loss.item(), "discriminator loss")
    d_loss.backward()
    opt_d.step()

    # generator: lam * reconstruction + (1 - lam) * least-squares terms
    neural.zero_grads(all_params)
    samples = fakes()
    true_pos = np.cumsum(fut_b, axis=1)
    if variety:
        recon = neural.loss_k_variety([ad.cumsum(s, axis=1) for s in samples], true_pos)
    else:
        recon = neural.loss_mse(ad.cumsum(samples[0], axis=1), true_pos)
    adv = neural.loss_ls_real(model.disc(fut_b))
    for s in samples:
        adv = ad.add(adv, ad.mul(neural.loss_ls_fake(model.disc(s)), 1.0 / len(samples)))
    g_loss = ad.add(ad.mul(recon, cfg.lam), ad.mul(adv, 1.0 - cfg.lam))
    _check_finite(g_loss.item(), "generator loss")
    g_loss.backward()
    opt_g.step()


def _vae_step(model: GenerativeModel, obs_b, fut_b, onehot_b, rng, opt,
              n_samples: int, variety: bool):
    cfg = model.config
    b = len(obs_b)
    params = model.generator_params()
    neural.zero_grads(params)
    mu, logvar = model.recog(fut_b, onehot_b)
    std = ad.exp(ad.mul(logvar, 0.5))
    preds = []
    for _ in range(n_samples):
        z = ad.add(mu, ad.mul(std, rng.standard_normal((b, cfg.z_dim))))
        h, c = model.enc.run(obs_b, onehot_b)
        h0 = model.mixer(h, z)
        preds.append(model.dec.rollout(obs_b[:, -1, :], h0, c, cfg.t_pred, onehot_b))
    true_pos = np.cumsum(fut_b, axis=1)
    if variety:
        recon = neural.loss_k_variety([ad.cumsum(p, axis=1) for p in preds], true_pos)
    else:
        recon = neural.loss_mse(ad.cumsum(preds[0], axis=1), true_pos)
    kl = neural.loss_kl_gaussian(mu, logvar)
    loss = ad.add(ad.mul(recon, cfg.lam), ad.mul(kl, (1.0 - cfg.lam) * cfg.beta))
    _check_finite(loss.item(), "VAE loss")
    loss.backward()
    opt.step()


def _train_generative(corpus: Corpus, cfg: ForecasterConfig, cond: np.ndarray | None,
                      cond_dim: int, standardizer: Standardizer | None) -> GenerativeModel:
    model = GenerativeModel(cfg, cond_dim, cfg.seed)
    model.standardizer = standardizer
    obs, fut = _training_arrays(corpus, cfg, standardizer)
    rng = np.random.default_rng(derive_seed(cfg.seed, "gen-train"))
    variety = cfg.kind.startswith("cf-")
    n_samples = cfg.k_variety if variety else 1
    opt_g = neural.Adam(model.generator_params(), lr=cfg.lr)
    opt_d = neural.Adam(model.discriminator_params(), lr=cfg.lr) if model.disc else None
    for _ in range(cfg.epochs):
        for idx in _batches(len(obs), cfg.batch, rng):
            onehot_b = None if cond is None else _onehot(cond[idx], cond_dim)
            if model.disc is not None:
                _gan_step(model, obs[idx], fut[idx], onehot_b, rng, opt_g, opt_d,
                          n_samples, variety)
            else:
                _vae_step(model, obs[idx], fut[idx], onehot_b, rng, opt_g,
                          n_samples, variety)
    model.trained = True
    return model


def cf_generative_train(corpus: Corpus, cfg: ForecasterConfig,
                        standardizer: Standardizer | None = None) -> GenerativeModel:
    """Train a context-free cGAN/cVAE with the variety reconstruction loss."""
    if cfg.kind not in ("cf-gan", "cf-vae"):
        raise ValueError(f"cf_generative_train got kind '{cfg.kind}'")
    return _train_generative(corpus, cfg, None, 0, standardizer)


def ours_train(corpus: Corpus, space, cfg: ForecasterConfig,
               standardizer: Standardizer | None = None) -> GenerativeModel:
    """Train a cluster-conditioned cGAN/cVAE on (observed, cluster id) pairs."""
    if cfg.kind not in ("gan-ours", "vae-ours"):
        raise ValueError(f"ours_train got kind '{cfg.kind}'")
    assignments = np.asarray(space.assignments)
    if len(assignments) != len(corpus):
        raise ValueError(
            f"space covers {len(assignments)} samples, corpus has {len(corpus)}"
        )
    if assignments.max() >= space.k or assignments.min() < 0:
        raise ValueError("cluster id outside the space")
    model = _train_generative(corpus, cfg, assignments, space.k, standardizer)
    model.space_hash = space.content_hash()
    return model


# ---------------------------------------------------------------------------
# inference


def cf_sample_batch(model: GenerativeModel, obs_list, n: int, seed: int) -> list[list[DisplacementSeries]]:
    """Draw n futures per observation; fresh noise per sample, shared batching."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cfg = model.config
    rng = np.random.default_rng(derive_seed(seed, "cf-sample"))
    obs_arr = np.stack([o.deltas[: cfg.t_obs] for o in obs_list])
    outs: list[list[DisplacementSeries]] = [[] for _ in obs_list]
    for _ in range(n):
        z = rng.standard_normal((len(obs_list), cfg.z_dim))
        pred = model._predict_batch(obs_arr, z, None)
        for i, o in enumerate(obs_list):
            outs[i].append(DisplacementSeries(pred[i], 0, cfg.t_pred,
                                              origin=o.last_observed_position))
    return outs


def cf_sample(model: GenerativeModel, obs: DisplacementSeries, n: int,
              seed: int) -> list[DisplacementSeries]:
    return cf_sample_batch(model, [obs], n, seed)[0]


def ours_propose_batch(model: GenerativeModel, obs_list, space, n_z: int = 1,
                       seed: int = 0) -> list[ProposalSet]:
    """One proposal per cluster id for each observation.

    The noise draw is shared across cluster ids so proposals differ only by
    conditioning; n_z > 1 averages that many draws per cluster.
    """
    cfg = model.config
    if model.space_hash is not None and model.space_hash != space.content_hash():
        raise LineageError(
            f"model was trained against space {model.space_hash[:12]}, "
            f"got {space.content_hash()[:12]}"
        )
    rng = np.random.default_rng(derive_seed(seed, "ours-propose"))
    obs_arr = np.stack([o.deltas[: cfg.t_obs] for o in obs_list])
    b = len(obs_list)
    zs = rng.standard_normal((n_z, b, cfg.z_dim))
    per_class = []
    for c in range(space.k):
        onehot = _onehot(np.full(b, c), space.k)
        acc = np.zeros((b, cfg.t_pred, 2))
        for zi in range(n_z):
            acc += model._predict_batch(obs_arr, zs[zi], onehot)
        per_class.append(acc / n_z)
    sets = []
    for i, o in enumerate(obs_list):
        props = tuple(
            DisplacementSeries(per_class[c][i], 0, cfg.t_pred,
                               origin=o.last_observed_position)
            for c in range(space.k)
        )
        sets.append(ProposalSet(props, cluster_ids=tuple(range(space.k)),
                                source=model.kind))
    return sets


def ours_propose(model: GenerativeModel, obs: DisplacementSeries, space,
                 n_z: int = 1, seed: int = 0) -> ProposalSet:
    return ours_propose_batch(model, [obs], space, n_z=n_z, seed=seed)[0]


# ---------------------------------------------------------------------------
# persistence


def model_to_doc(model) -> dict:
    layers = {}
    if isinstance(model, REDModel):
        layers = model.layers()
    else:
        for group in model.layer_groups():
            layers.update(group)
        if model.disc is not None:
            layers.update(model.disc.layers())
    return {
        "schema_version": 1,
        "kind": model.kind,
        "config": vars(model.config),
        "cond_dim": getattr(model, "cond_dim", 0),
        "space_hash": getattr(model, "space_hash", None),
        "standardizer": model.standardizer.to_doc() if model.standardizer else None,
        "layers": neural.layers_to_doc(layers),
        "trained": model.trained,
    }


def model_from_doc(doc: dict):
    cfg = ForecasterConfig(**doc["config"])
    if doc["kind"] == "red":
        model = REDModel(cfg, cfg.seed)
    else:
        model = GenerativeModel(cfg, int(doc.get("cond_dim", 0)), cfg.seed)
        model.space_hash = doc.get("space_hash")
    restored = neural.layers_from_doc(doc["layers"])
    groups = [model.layers()] if doc["kind"] == "red" else model.layer_groups() + (
        [model.disc.layers()] if model.disc is not None else [])
    for group in groups:
        for name, layer in group.items():
            for p in layer.params():
                p.data = next(q.data for q in restored[name].params()
                              if q.name == p.name)
    std = doc.get("standardizer")
    model.standardizer = Standardizer.from_doc(std) if std else None
    model.trained = bool(doc.get("trained", True))
    return model
