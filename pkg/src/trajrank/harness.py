"""Experiment configuration and pipeline orchestration.

A single JSON config drives every stage: ingest -> cluster -> train ->
propose -> rank -> evaluate -> report. All artifacts are canonical JSON
embedding the config hash and stage seed, so re-running a stage with the same
config and seed reproduces identical bytes; timestamps go only to a sidecar
run.log. Stages refuse to consume artifacts whose hash lineage does not match.
"""

from __future__ import annotations

import copy
import datetime
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import clustering, forecasters, fp_scgan, metrics, ranking
from .clustering import ClusterSpace
from .core import DisplacementSeries, Standardizer, integrate, split
from .docio import canonical_json, content_hash, derive_seed, load_doc, save_doc
from .errors import ConfigError, LineageError
from .forecasters import ForecasterConfig, GenerativeModel, ProposalSet, REDModel
from .fp_scgan import FpScGanConfig, FpScGanModel
from .ingestion import Corpus, Regime, Scenario, SplitPlan, load_trajnet, make_splits, segment
from .metrics import EvalReport, EvalRow, aggregate
from .ranking import RankerConfig
from .svgplot import render_overlay

SCHEMA_VERSION = 1

_DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "data": {
        "paths": [],
        "dt": 0.4,
        "t_obs": 8,
        "t_pred": 12,
        "overlap": False,
        "labels": {},
        "split": {
            "mode": "train-test-split",
            "fractions": [0.7, 0.1, 0.2],
            "held_out": None,
            "val_fraction": 0.1,
        },
    },
    "standardize": False,
    "clustering": {
        "method": "kmeans",  # kmeans | ts-kmeans | fp-scgan
        "k": None,
        "k_grid": [2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12],
        "runs": 5,
        "gamma": 1.0,
        "max_iter": 100,
        "fp_scgan": {},
    },
    "forecaster": {
        "kind": "gan-ours",
        "embed_dim": 16,
        "lstm_dim": 64,
        "decode_dim": 32,
        "z_dim": 8,
        "lam": 0.5,
        "beta": 1.0,
        "k_variety": 3,
        "epochs": 40,
        "lr": 1e-3,
        "batch": 64,
        "n_z": 1,  # proposal mode: noise draws averaged per cluster
    },
    "ranking": {
        "method": "cent",
        "tau": 1.0,
        "n_neig": 20,
        "operand": "future",  # future | full (observed series prefixed)
        "anet_hidden": [64, 64],
        "anet_epochs": 30,
        "anet_lr": 1e-3,
        "anet_batch": 64,
        "anet_samples_per_class": 50,
    },
    "metrics": {"topk": 3, "runs": 5},
    "cvm": {"sigma": 1.0},
    "figures": 4,
}


def _merge(defaults, overrides, path="config"):
    if not isinstance(overrides, dict):
        raise ConfigError(f"{path} must be an object")
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        if key == "out_dir":
            continue  # location only, never part of the experiment identity
        if key not in merged:
            raise ConfigError(f"unknown config key '{path}.{key}'")
        if isinstance(merged[key], dict) and key not in ("labels", "fp_scgan"):
            merged[key] = _merge(merged[key], value, f"{path}.{key}")
        else:
            merged[key] = value
    return merged


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, normalized experiment description."""

    doc: dict
    base_dir: Path

    @property
    def seed(self) -> int:
        return int(self.doc["seed"])

    @property
    def config_hash(self) -> str:
        return content_hash(self.doc)

    def data_paths(self) -> list[Path]:
        return [self._resolve(p) for p in self.doc["data"]["paths"]]

    def _resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def label_path(self, data_path: str) -> Path | None:
        sidecar = self.doc["data"]["labels"].get(str(data_path))
        return self._resolve(sidecar) if sidecar else None

    def forecaster_config(self, seed: int) -> ForecasterConfig:
        f = self.doc["forecaster"]
        d = self.doc["data"]
        return ForecasterConfig(
            kind=f["kind"], t_obs=int(d["t_obs"]), t_pred=int(d["t_pred"]),
            embed_dim=int(f["embed_dim"]), lstm_dim=int(f["lstm_dim"]),
            decode_dim=int(f["decode_dim"]), z_dim=int(f["z_dim"]),
            lam=float(f["lam"]), beta=float(f["beta"]), k_variety=int(f["k_variety"]),
            epochs=int(f["epochs"]), lr=float(f["lr"]), batch=int(f["batch"]),
            seed=seed,
        )

    def ranker_config(self) -> RankerConfig:
        r = self.doc["ranking"]
        return RankerConfig(
            method=r["method"], tau=float(r["tau"]), n_neig=int(r["n_neig"]),
            operand=r["operand"],
            anet_hidden=tuple(int(h) for h in r["anet_hidden"]),
            anet_epochs=int(r["anet_epochs"]), anet_lr=float(r["anet_lr"]),
            anet_batch=int(r["anet_batch"]),
            anet_samples_per_class=int(r["anet_samples_per_class"]),
        )

    def fp_scgan_config(self, seed: int) -> FpScGanConfig:
        overrides = dict(self.doc["clustering"].get("fp_scgan") or {})
        overrides["seed"] = seed
        return FpScGanConfig(**overrides)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = load_doc(path)
    except Exception as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return make_config(raw, base_dir=path.parent)


def make_config(raw: dict, base_dir=".") -> ExperimentConfig:
    doc = _merge(_DEFAULTS, raw)
    if int(doc["schema_version"]) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {doc['schema_version']}")
    if doc["clustering"]["method"] not in ("kmeans", "ts-kmeans", "fp-scgan"):
        raise ConfigError(f"unknown clustering method '{doc['clustering']['method']}'")
    if doc["forecaster"]["kind"] not in forecasters.KINDS:
        raise ConfigError(f"unknown forecaster kind '{doc['forecaster']['kind']}'")
    if doc["ranking"]["method"] not in ("cent", "neigh-ds", "neigh-fs", "anet"):
        raise ConfigError(f"unknown ranking method '{doc['ranking']['method']}'")
    if doc["ranking"]["method"] == "neigh-fs" and doc["clustering"]["method"] != "fp-scgan":
        raise ConfigError("neigh-fs ranking needs the fp-scgan clustering method")
    if not doc["data"]["paths"]:
        raise ConfigError("data.paths must list at least one TrajNet file")
    cfg = ExperimentConfig(doc=doc, base_dir=Path(base_dir))
    for p in cfg.data_paths():
        if not p.exists():
            raise ConfigError(f"data file {p} does not exist")
    for raw_path in doc["data"]["paths"]:
        lp = cfg.label_path(raw_path)
        if lp is not None and not lp.exists():
            raise ConfigError(f"label sidecar {lp} does not exist")
    return cfg


# ---------------------------------------------------------------------------
# scenario presets


def scenario_preset(name: str) -> Scenario:
    if name == "two-regime":
        return Scenario(
            regimes=(Regime("straight", speed=1.0, heading=0.0),
                     Regime("straight", speed=1.0, heading=np.pi / 2)),
            noise_std=0.03,
        )
    if name == "three-regime":
        # two regimes share a similar observed heading but diverge in the
        # future, so multimodal coverage matters; the third is fully distinct
        return Scenario(
            regimes=(Regime("straight", speed=1.0, heading=0.0),
                     Regime("arc", speed=1.0, heading=0.3, turn_rate=0.4),
                     Regime("straight", speed=1.0, heading=np.pi / 2)),
            noise_std=0.03,
        )
    if name == "constant-velocity":
        return Scenario(regimes=(Regime("straight", speed=1.0, heading=0.3),), noise_std=0.0)
    raise ConfigError(f"unknown scenario preset '{name}'")


# ---------------------------------------------------------------------------
# logging


def log(out_dir, message: str) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stamp = datetime.datetime.now().isoformat(timespec="seconds")
    with (out_dir / "run.log").open("a", encoding="utf-8") as fh:
        fh.write(f"{stamp} {message}\n")


# ---------------------------------------------------------------------------
# data stage


def load_corpora(cfg: ExperimentConfig) -> list[Corpus]:
    d = cfg.doc["data"]
    corpora = []
    for raw_path, path in zip(d["paths"], cfg.data_paths()):
        trajs = load_trajnet(path, dt=float(d["dt"]))
        labels_by_agent = None
        lp = cfg.label_path(raw_path)
        if lp is not None:
            labels_by_agent = {k: int(v) for k, v in load_doc(lp)["labels"].items()}
        corpora.append(segment(trajs, int(d["t_obs"]), int(d["t_pred"]),
                               overlap=bool(d["overlap"]), name=path.stem,
                               labels_by_agent=labels_by_agent))
    return corpora


def make_data_splits(cfg: ExperimentConfig) -> tuple[Corpus, Corpus, Corpus]:
    s = cfg.doc["data"]["split"]
    plan = SplitPlan(mode=s["mode"],
                     held_out=s["held_out"],
                     fractions=tuple(s["fractions"]),
                     val_fraction=float(s["val_fraction"]),
                     seed=derive_seed(cfg.seed, "split"))
    return make_splits(load_corpora(cfg), plan)


def fit_standardizer(cfg: ExperimentConfig, train: Corpus) -> Standardizer | None:
    if not cfg.doc["standardize"]:
        return None
    return Standardizer.fit(train.deltas_array())


# ---------------------------------------------------------------------------
# clustering stage


def fit_space(cfg: ExperimentConfig, train: Corpus, run_seed: int):
    """Fit the configured cluster space on the training corpus.

    Returns (space, dbi_table, fp_model); fp_model is None unless the method
    is fp-scgan.
    """
    c = cfg.doc["clustering"]
    std = fit_standardizer(cfg, train)
    t_obs, t_pred = train.t_obs, train.t_pred
    flat = train.flat_array()
    if std is not None:
        flat = std.transform(train.deltas_array()).reshape(len(train), -1)

    def kmeans_fit(data, k, seed):
        return clustering.kmeans(data, k, seed=seed, max_iter=int(c["max_iter"]),
                                 t_obs=t_obs, t_pred=t_pred, standardizer=std)

    if c["method"] == "kmeans":
        if c["k"] is not None:
            space = kmeans_fit(flat, int(c["k"]), derive_seed(run_seed, "cluster"))
            table = [{"k": int(c["k"]), "dbi_mean": clustering.dbi(space, flat),
                      "dbi_runs": []}]
            return space, table, None
        k_best, table = clustering.select_k(flat, c["k_grid"], runs=int(c["runs"]),
                                            seed=derive_seed(cfg.seed, "select_k"),
                                            fit=kmeans_fit)
        return kmeans_fit(flat, k_best, derive_seed(run_seed, "cluster")), table, None

    if c["method"] == "ts-kmeans":
        series = train.deltas_array()
        if std is not None:
            series = std.transform(series)
        gamma = float(c["gamma"])

        def ts_fit(data, k, seed):
            return clustering.ts_kmeans(data, k, gamma=gamma, seed=seed,
                                        t_obs=t_obs, t_pred=t_pred, standardizer=std)

        if c["k"] is not None:
            space = ts_fit(series, int(c["k"]), derive_seed(run_seed, "cluster"))
            table = [{"k": int(c["k"]), "dbi_mean": clustering.dbi(space, series),
                      "dbi_runs": []}]
            return space, table, None
        k_best, table = clustering.select_k(series, c["k_grid"], runs=int(c["runs"]),
                                            seed=derive_seed(cfg.seed, "select_k"),
                                            fit=ts_fit)
        return ts_fit(series, k_best, derive_seed(run_seed, "cluster")), table, None

    # fp-scgan: K selection (when requested) uses the flat k-means bootstrap DBI
    if c["k"] is not None:
        k_best, table = int(c["k"]), []
    else:
        k_best, table = clustering.select_k(flat, c["k_grid"], runs=int(c["runs"]),
                                            seed=derive_seed(cfg.seed, "select_k"),
                                            fit=kmeans_fit)
    fp_cfg = cfg.fp_scgan_config(derive_seed(run_seed, "cluster"))
    model, space = fp_scgan.train_fp_scgan(train, k_best, fp_cfg, standardizer=std)
    return space, table, model


def dbi_table_csv(table) -> str:
    lines = ["k,dbi_mean,dbi_runs"]
    for row in table:
        runs = "|".join(f"{v:.6f}" for v in row["dbi_runs"])
        lines.append(f"{row['k']},{row['dbi_mean']:.6f},{runs}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# forecaster stage


def train_forecaster(cfg: ExperimentConfig, train: Corpus, space: ClusterSpace | None,
                     run_seed: int):
    kind = cfg.doc["forecaster"]["kind"]
    std = fit_standardizer(cfg, train)
    if kind == "cvm":
        return {"kind": "cvm", "sigma": float(cfg.doc["cvm"]["sigma"])}
    fcfg = cfg.forecaster_config(derive_seed(run_seed, "train"))
    if kind == "red":
        return forecasters.red_train(train, fcfg, standardizer=std)
    if kind in ("cf-gan", "cf-vae"):
        return forecasters.cf_generative_train(train, fcfg, standardizer=std)
    if space is None:
        raise ConfigError(f"forecaster '{kind}' needs a cluster space")
    return forecasters.ours_train(train, space, fcfg, standardizer=std)


# ---------------------------------------------------------------------------
# propose + rank stages


@dataclass
class SamplePrediction:
    """Everything evaluate/report needs about one test sample."""

    sample_id: str
    obs: DisplacementSeries
    truth: DisplacementSeries
    pset: ProposalSet | None  # conditioned models
    samples: list | None      # sampled / point models


def propose(cfg: ExperimentConfig, model, test: Corpus, space: ClusterSpace | None,
            run_seed: int) -> list[SamplePrediction]:
    kind = cfg.doc["forecaster"]["kind"]
    topk = int(cfg.doc["metrics"]["topk"])
    pairs = [split(s) for s in test.samples]
    obs_list = [p[0] for p in pairs]
    futs = [p[1] for p in pairs]
    preds: list[SamplePrediction] = []
    if kind == "cvm":
        for sid, obs, fut in zip(test.sample_ids, obs_list, futs):
            p = forecasters.cvm_predict(obs, test.t_pred, sigma=float(model["sigma"]))
            preds.append(SamplePrediction(sid, obs, fut, None, [p]))
    elif kind == "red":
        for sid, obs, fut in zip(test.sample_ids, obs_list, futs):
            preds.append(SamplePrediction(sid, obs, fut, None, [model.predict(obs)]))
    elif kind in ("cf-gan", "cf-vae"):
        all_samples = forecasters.cf_sample_batch(model, obs_list, max(topk, 1),
                                                  seed=derive_seed(run_seed, "propose"))
        for sid, obs, fut, ss in zip(test.sample_ids, obs_list, futs, all_samples):
            preds.append(SamplePrediction(sid, obs, fut, None, ss))
    else:
        psets = forecasters.ours_propose_batch(model, obs_list, space,
                                               n_z=int(cfg.doc["forecaster"]["n_z"]),
                                               seed=derive_seed(run_seed, "propose"))
        for sid, obs, fut, pset in zip(test.sample_ids, obs_list, futs, psets):
            preds.append(SamplePrediction(sid, obs, fut, pset, None))
    return preds


def _ours_future_sampler(model: GenerativeModel, train: Corpus, space: ClusterSpace):
    cfg = model.config
    obs_all = train.deltas_array()[:, : cfg.t_obs]

    def sampler(classes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        idx = rng.integers(0, len(obs_all), size=len(classes))
        onehot = np.zeros((len(classes), space.k))
        onehot[np.arange(len(classes)), classes] = 1.0
        z = rng.standard_normal((len(classes), cfg.z_dim))
        if model.standardizer is not None:
            obs_std = model.standardizer.transform(obs_all[idx])
            pred = model.decode(obs_std, z, onehot).data
            pred = model.standardizer.inverse(pred)
        else:
            pred = model.decode(obs_all[idx], z, onehot).data
        return pred.reshape(len(classes), -1)

    return sampler


def rank_proposals(cfg: ExperimentConfig, preds: list[SamplePrediction],
                   space: ClusterSpace, train: Corpus, model,
                   fp_model: FpScGanModel | None, run_seed: int) -> ranking.AnetClassifier | None:
    """Fill probabilities in place (returns the anet classifier when trained)."""
    rcfg = cfg.ranker_config()
    method = rcfg.method
    if any(p.pset is None for p in preds):
        raise ConfigError(f"ranking needs a conditioned forecaster, got '{cfg.doc['forecaster']['kind']}'")

    embedder = fp_model.embed if fp_model is not None else None
    anet = None
    if method == "anet":
        if not isinstance(model, GenerativeModel):
            raise ConfigError("anet ranking needs a trained generative forecaster")
        sampler = _ours_future_sampler(model, train, space)
        anet = ranking.anet_train(sampler, space, rcfg, derive_seed(run_seed, "anet"),
                                  t_pred=train.t_pred)
    bank = None
    if method == "neigh-ds":
        bank = ranking.build_displacement_bank(space, train, operand=rcfg.operand)
    elif method == "neigh-fs":
        if fp_model is None:
            raise ConfigError("neigh-fs ranking needs the fp-scgan clustering model")
        bank = ranking.build_feature_bank(space, train, fp_model.embed)

    for p in preds:
        if method == "cent":
            p.pset = ranking.rank_centroids(p.pset, space, tau=rcfg.tau, obs=p.obs,
                                            embedder=embedder, operand=rcfg.operand)
        elif method == "neigh-ds":
            p.pset = ranking.rank_neighbors(p.pset, space, bank, tau=rcfg.tau,
                                            n_neig=rcfg.n_neig, obs=p.obs,
                                            operand=rcfg.operand)
        elif method == "neigh-fs":
            p.pset = ranking.rank_neighbors_features(p.pset, space, bank, p.obs,
                                                     fp_model.embed, tau=rcfg.tau,
                                                     n_neig=rcfg.n_neig)
        else:
            p.pset = ranking.anet_rank(anet, p.pset)
    return anet


def pseudo_labels(space: ClusterSpace, test: Corpus,
                  fp_model: FpScGanModel | None = None) -> np.ndarray:
    """Cluster id of each ground-truth future under the space's metric."""
    if space.metric == "feature-l2":
        if fp_model is None:
            raise ConfigError("feature-space pseudo-labels need the fp-scgan model")
        feats = fp_model.embed_many(test.deltas_array())
        d = clustering._distance_rows("feature-l2", space.centroids, feats)
        return np.argmin(d, axis=1)
    futures = test.deltas_array()[:, test.t_obs:]
    if space.standardizer is not None:
        futures = space.standardizer.transform(futures)
    if space.metric == "euclidean-flat":
        rows = futures.reshape(len(test), -1)
        cents = space.centroids[:, -2 * test.t_pred:]
        d = clustering._distance_rows("euclidean-flat", cents, rows)
    else:
        cents = space.centroids[:, -test.t_pred:, :]
        d = clustering._distance_rows("soft-dtw", cents, futures, space.gamma)
    return np.argmin(d, axis=1)


# ---------------------------------------------------------------------------
# evaluation


def _evaluate_run(cfg: ExperimentConfig, run_idx: int):
    """One full pipeline pass; returns per-run aggregates plus stage objects."""
    run_seed = derive_seed(cfg.seed, "run", run_idx)
    kind = cfg.doc["forecaster"]["kind"]
    train, val, test = make_data_splits(cfg)
    if len(test) == 0:
        raise ConfigError("test split is empty")

    space = fp_model = None
    table = []
    if kind in ("gan-ours", "vae-ours"):
        space, table, fp_model = fit_space(cfg, train, run_seed)
    model = train_forecaster(cfg, train, space, run_seed)
    preds = propose(cfg, model, test, space, run_seed)

    conditioned = kind in ("gan-ours", "vae-ours")
    acc = None
    if conditioned:
        rank_proposals(cfg, preds, space, train, model, fp_model, run_seed)
        labels = pseudo_labels(space, test, fp_model)
        acc = ranking.ranking_accuracy(
            [(p.pset, l) for p, l in zip(preds, labels)]
        )

    topk = int(cfg.doc["metrics"]["topk"])
    t1a, t1f, t3a, t3f = [], [], [], []
    for p in preds:
        if conditioned:
            k3 = min(topk, len(p.pset))
            a1, f1 = metrics.topk_by_likelihood(p.pset, p.truth, 1)
            a3, f3 = metrics.topk_by_likelihood(p.pset, p.truth, k3)
        else:
            k3 = min(topk, len(p.samples))
            a1, f1 = metrics.topk_by_sampling(p.samples, p.truth, 1)
            a3, f3 = metrics.topk_by_sampling(p.samples, p.truth, k3)
        t1a.append(a1); t1f.append(f1); t3a.append(a3); t3f.append(f3)

    run_metrics = {
        "top1_ade": float(np.mean(t1a)), "top1_fde": float(np.mean(t1f)),
        "top3_ade": float(np.mean(t3a)), "top3_fde": float(np.mean(t3f)),
        "ranking_accuracy": acc,
    }
    return run_metrics, {"train": train, "test": test, "space": space, "table": table,
                         "fp_model": fp_model, "model": model, "preds": preds,
                         "run_seed": run_seed}


def evaluate(cfg: ExperimentConfig) -> tuple[EvalReport, dict]:
    """Run the full pipeline over the configured number of seeded runs.

    Deterministic models (cvm) always use a single run. Returns the report and
    the final run's stage objects (for report rendering).
    """
    kind = cfg.doc["forecaster"]["kind"]
    runs = 1 if kind == "cvm" else int(cfg.doc["metrics"]["runs"])
    per_run = []
    last_stage = None
    for r in range(runs):
        m, stage = _evaluate_run(cfg, r)
        per_run.append(m)
        if r == 0:
            last_stage = stage  # run 0 matches the standalone stage commands
    accs = [m["ranking_accuracy"] for m in per_run]
    has_acc = all(a is not None for a in accs)
    t1a = aggregate(m["top1_ade"] for m in per_run)
    t1f = aggregate(m["top1_fde"] for m in per_run)
    t3a = aggregate(m["top3_ade"] for m in per_run)
    t3f = aggregate(m["top3_fde"] for m in per_run)
    acc_agg = aggregate(accs) if has_acc else (None, None)
    space = last_stage["space"]
    row = EvalRow(
        dataset="+".join(Path(p).stem for p in cfg.doc["data"]["paths"]),
        model=kind,
        clustering=cfg.doc["clustering"]["method"] if space is not None else "",
        ranking=cfg.doc["ranking"]["method"] if has_acc else "",
        k=space.k if space is not None else None,
        top1_ade=t1a[0], top1_ade_std=t1a[1],
        top1_fde=t1f[0], top1_fde_std=t1f[1],
        top3_ade=t3a[0], top3_ade_std=t3a[1],
        top3_fde=t3f[0], top3_fde_std=t3f[1],
        ranking_accuracy=acc_agg[0], ranking_accuracy_std=acc_agg[1],
        runs=runs,
        seeds=tuple(derive_seed(cfg.seed, "run", r) for r in range(runs)),
    )
    report = EvalReport(rows=(row,), config_hash=cfg.config_hash,
                        meta={"lam": cfg.doc["forecaster"]["lam"],
                              "beta": cfg.doc["forecaster"]["beta"],
                              "tau": cfg.doc["ranking"]["tau"],
                              "seed": cfg.seed})
    return report, last_stage


# ---------------------------------------------------------------------------
# artifact writing (stage commands)


def _space_artifact(cfg: ExperimentConfig, space, table, run_seed: int) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "space_artifact",
        "config_hash": cfg.config_hash,
        "seed": run_seed,
        "space": space.to_doc(),
        "dbi_table": table,
    }


def cmd_cluster(cfg: ExperimentConfig, out_dir) -> dict:
    out_dir = Path(out_dir)
    run_seed = derive_seed(cfg.seed, "run", 0)
    train, _, _ = make_data_splits(cfg)
    space, table, fp_model = fit_space(cfg, train, run_seed)
    save_doc(out_dir / "space.json", _space_artifact(cfg, space, table, run_seed))
    (out_dir / "dbi_table.csv").write_text(dbi_table_csv(table), encoding="utf-8")
    if fp_model is not None:
        save_doc(out_dir / "fp_scgan_model.json", {
            "schema_version": SCHEMA_VERSION, "kind": "fp_scgan_artifact",
            "config_hash": cfg.config_hash, "seed": run_seed,
            "model": fp_scgan.fp_scgan_to_doc(fp_model),
        })
    log(out_dir, f"cluster: k={space.k} metric={space.metric} hash={space.content_hash()[:12]}")
    return {"k": space.k, "metric": space.metric, "table": table}


def _load_space_artifact(cfg: ExperimentConfig, out_dir) -> tuple[ClusterSpace, FpScGanModel | None]:
    path = Path(out_dir) / "space.json"
    if not path.exists():
        raise ConfigError(f"missing upstream artifact {path}; run `cluster` first")
    doc = load_doc(path)
    if doc["config_hash"] != cfg.config_hash:
        raise LineageError(
            f"space.json was produced by config {doc['config_hash'][:12]}, "
            f"current config is {cfg.config_hash[:12]}"
        )
    space = ClusterSpace.from_doc(doc["space"])
    fp_model = None
    fp_path = Path(out_dir) / "fp_scgan_model.json"
    if fp_path.exists():
        fp_doc = load_doc(fp_path)
        if fp_doc["config_hash"] != cfg.config_hash:
            raise LineageError("fp_scgan_model.json does not match the current config")
        fp_model = fp_scgan.fp_scgan_from_doc(fp_doc["model"])
    return space, fp_model


def cmd_train(cfg: ExperimentConfig, out_dir) -> dict:
    out_dir = Path(out_dir)
    run_seed = derive_seed(cfg.seed, "run", 0)
    kind = cfg.doc["forecaster"]["kind"]
    train, _, _ = make_data_splits(cfg)
    space = None
    if kind in ("gan-ours", "vae-ours"):
        space, _ = _load_space_artifact(cfg, out_dir)
    model = train_forecaster(cfg, train, space, run_seed)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "forecaster_artifact",
        "config_hash": cfg.config_hash,
        "seed": run_seed,
        "model": model if isinstance(model, dict) else forecasters.model_to_doc(model),
    }
    save_doc(out_dir / "model.json", doc)
    log(out_dir, f"train: kind={kind}")
    return {"kind": kind}


def _load_model_artifact(cfg: ExperimentConfig, out_dir):
    path = Path(out_dir) / "model.json"
    if not path.exists():
        raise ConfigError(f"missing upstream artifact {path}; run `train` first")
    doc = load_doc(path)
    if doc["config_hash"] != cfg.config_hash:
        raise LineageError(
            f"model.json was produced by config {doc['config_hash'][:12]}, "
            f"current config is {cfg.config_hash[:12]}"
        )
    m = doc["model"]
    if m.get("kind") == "cvm":
        return m
    return forecasters.model_from_doc(m)


def _prediction_rows(preds: list[SamplePrediction], ranked: bool) -> list[dict]:
    rows = []
    for p in preds:
        obs_pos = integrate(p.obs)
        truth_pos = integrate(p.truth)
        entry = {
            "sample_id": p.sample_id,
            "origin": list(p.obs.origin),
            "obs_positions": obs_pos.tolist(),
            "truth_positions": truth_pos.tolist(),
        }
        if p.pset is not None:
            entry["proposals"] = [
                {
                    "cluster": int(c),
                    "deltas": prop.deltas.tolist(),
                    "positions": integrate(prop).tolist(),
                    "prob": (float(p.pset.probabilities[i]) if ranked else None),
                    "ade": metrics.ade(prop, p.truth),
                    "fde": metrics.fde(prop, p.truth),
                }
                for i, (c, prop) in enumerate(zip(p.pset.cluster_ids, p.pset.proposals))
            ]
        else:
            entry["proposals"] = [
                {"cluster": None, "deltas": s.deltas.tolist(),
                 "positions": integrate(s).tolist(), "prob": None,
                 "ade": metrics.ade(s, p.truth), "fde": metrics.fde(s, p.truth)}
                for s in p.samples
            ]
        rows.append(entry)
    return rows


def _write_jsonl(path, header: dict, rows: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [canonical_json(header)] + [canonical_json(r) for r in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_propose(cfg: ExperimentConfig, out_dir) -> dict:
    out_dir = Path(out_dir)
    run_seed = derive_seed(cfg.seed, "run", 0)
    kind = cfg.doc["forecaster"]["kind"]
    train, _, test = make_data_splits(cfg)
    space = None
    if kind in ("gan-ours", "vae-ours"):
        space, _ = _load_space_artifact(cfg, out_dir)
    model = _load_model_artifact(cfg, out_dir)
    preds = propose(cfg, model, test, space, run_seed)
    header = {"kind": "proposals_header", "config_hash": cfg.config_hash,
              "seed": run_seed, "ranked": False}
    _write_jsonl(out_dir / "proposals.jsonl", header, _prediction_rows(preds, ranked=False))
    log(out_dir, f"propose: {len(preds)} samples")
    return {"n": len(preds)}


def cmd_rank(cfg: ExperimentConfig, out_dir) -> dict:
    out_dir = Path(out_dir)
    run_seed = derive_seed(cfg.seed, "run", 0)
    kind = cfg.doc["forecaster"]["kind"]
    if kind not in ("gan-ours", "vae-ours"):
        raise ConfigError(f"ranking needs a conditioned forecaster, got '{kind}'")
    train, _, test = make_data_splits(cfg)
    space, fp_model = _load_space_artifact(cfg, out_dir)
    model = _load_model_artifact(cfg, out_dir)
    preds = propose(cfg, model, test, space, run_seed)
    anet = rank_proposals(cfg, preds, space, train, model, fp_model, run_seed)
    if anet is not None:
        save_doc(out_dir / "anet.json", {
            "schema_version": SCHEMA_VERSION, "kind": "anet_artifact",
            "config_hash": cfg.config_hash, "seed": run_seed,
            "classifier": anet.to_doc(),
        })
    header = {"kind": "ranked_header", "config_hash": cfg.config_hash,
              "seed": run_seed, "ranked": True,
              "space_hash": space.content_hash()}
    _write_jsonl(out_dir / "ranked.jsonl", header, _prediction_rows(preds, ranked=True))
    log(out_dir, f"rank: {len(preds)} samples via {cfg.doc['ranking']['method']}")
    return {"n": len(preds)}


def cmd_evaluate(cfg: ExperimentConfig, out_dir, runs: int | None = None) -> EvalReport:
    out_dir = Path(out_dir)
    if runs is not None:
        doc = copy.deepcopy(cfg.doc)
        doc["metrics"]["runs"] = int(runs)
        cfg = ExperimentConfig(doc=doc, base_dir=cfg.base_dir)
    report, stage = evaluate(cfg)
    save_doc(out_dir / "eval_report.json", report.to_doc())
    (out_dir / "eval_report.csv").write_text(report.to_csv(), encoding="utf-8")
    preds = stage["preds"]
    ranked = all(p.pset is not None and p.pset.probabilities is not None for p in preds)
    header = {"kind": "ranked_header" if ranked else "proposals_header",
              "config_hash": cfg.config_hash, "seed": stage["run_seed"], "ranked": ranked}
    if stage["space"] is not None:
        header["space_hash"] = stage["space"].content_hash()
    name = "ranked.jsonl" if ranked else "proposals.jsonl"
    _write_jsonl(out_dir / name, header, _prediction_rows(preds, ranked=ranked))
    log(out_dir, f"evaluate: {len(report.rows)} row(s), runs={report.rows[0].runs}")
    return report


def cmd_report(cfg: ExperimentConfig, out_dir, figures: int | None = None) -> dict:
    out_dir = Path(out_dir)
    report_path = out_dir / "eval_report.json"
    if not report_path.exists():
        raise ConfigError(f"missing {report_path}; run `evaluate` first")
    report = EvalReport.from_doc(load_doc(report_path))
    if not report.rows:
        raise ConfigError("eval report has no rows; nothing to report")
    if report.config_hash != cfg.config_hash:
        raise LineageError("eval_report.json does not match the current config")
    (out_dir / "report.csv").write_text(report.to_csv(), encoding="utf-8")

    n_figs = int(cfg.doc["figures"] if figures is None else figures)
    rows = []
    for name in ("ranked.jsonl", "proposals.jsonl"):
        path = out_dir / name
        if path.exists():
            lines = path.read_text(encoding="utf-8").strip().split("\n")
            header = json.loads(lines[0])
            if header["config_hash"] != cfg.config_hash:
                raise LineageError(f"{name} does not match the current config")
            rows = [json.loads(l) for l in lines[1:]]
            break
    if not rows:
        raise ConfigError("no proposals.jsonl or ranked.jsonl to render; run `rank` or `evaluate`")

    count = 0
    for row in rows[:n_figs]:
        props = row["proposals"]
        ordered = sorted(props, key=lambda p: -(p["prob"] if p["prob"] is not None else 0.0))
        overlays = [(np.asarray(p["positions"]), p["prob"] if p["prob"] is not None else 0.0)
                    for p in ordered[:3]]
        safe_id = row["sample_id"].replace("/", "_").replace("@", "_").replace(":", "_")
        render_overlay(np.asarray(row["obs_positions"]),
                       np.asarray(row["truth_positions"]),
                       overlays,
                       out_dir / "figures" / f"{safe_id}.svg",
                       title=row["sample_id"])
        count += 1
    log(out_dir, f"report: {count} figure(s)")
    return {"figures": count, "rows": len(report.rows)}
