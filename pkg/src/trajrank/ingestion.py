"""Corpus loading, segmentation, splitting, and synthetic corpora.

The single on-disk input format is the TrajNet-style text file: one record
per line, ``frame_id agent_id x y``, whitespace separated, positions in
meters. Sampling period dt comes from configuration (default 0.4 s).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import DisplacementSeries, Trajectory, to_displacements
from .docio import derive_seed
from .errors import ConfigError

WINDOW_EXTRA = 1  # positions per window beyond t_obs + t_pred (finite differences)


@dataclass(frozen=True, eq=False)
class Corpus:
    """A named collection of full displacement series with shared horizons."""

    name: str
    samples: tuple
    t_obs: int
    t_pred: int
    sample_ids: tuple = ()
    labels: tuple | None = None  # ground-truth regime ids, synthetic corpora only
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        samples = tuple(self.samples)
        for s in samples:
            if not isinstance(s, DisplacementSeries) or not s.is_full:
                raise ValueError("corpus samples must be full DisplacementSeries")
            if s.t_obs != self.t_obs or s.t_pred != self.t_pred:
                raise ValueError(
                    f"sample horizons ({s.t_obs}, {s.t_pred}) do not match corpus "
                    f"({self.t_obs}, {self.t_pred})"
                )
        ids = tuple(self.sample_ids) if self.sample_ids else tuple(
            f"{self.name}:{i}" for i in range(len(samples))
        )
        if len(ids) != len(samples):
            raise ValueError("sample_ids length must match samples")
        labels = None if self.labels is None else tuple(int(l) for l in self.labels)
        if labels is not None and len(labels) != len(samples):
            raise ValueError("labels length must match samples")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_ids", ids)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def n(self) -> int:
        return len(self.samples)

    def deltas_array(self) -> np.ndarray:
        """All samples stacked as one (N, T, 2) array."""
        return np.stack([s.deltas for s in self.samples]) if self.samples else np.zeros((0, self.t_obs + self.t_pred, 2))

    def flat_array(self) -> np.ndarray:
        """All samples flattened to (N, 2T), interleaved x, y."""
        return self.deltas_array().reshape(len(self), -1)


@dataclass(frozen=True)
class SplitPlan:
    """How to partition corpora into train/val/test."""

    mode: str = "train-test-split"  # or "leave-one-dataset-out"
    held_out: str | None = None
    fractions: tuple = (0.7, 0.15, 0.15)
    val_fraction: float = 0.1  # LODO mode: share of the training union kept for validation
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("train-test-split", "leave-one-dataset-out"):
            raise ConfigError(f"unknown split mode '{self.mode}'")
        if self.mode == "train-test-split":
            if len(self.fractions) != 3 or abs(sum(self.fractions) - 1.0) > 1e-12:
                raise ConfigError(f"fractions must sum to 1, got {self.fractions}")
        if self.mode == "leave-one-dataset-out" and not self.held_out:
            raise ConfigError("leave-one-dataset-out needs a held_out dataset name")


def load_trajnet(path, dt: float = 0.4) -> list[Trajectory]:
    """Parse a TrajNet text file into per-agent trajectories.

    Agents are split into separate trajectories wherever their frame sequence
    jumps by more than the file's base frame stride; fragments shorter than
    two points are discarded.
    """
    path = Path(path)
    records: dict[str, list[tuple[float, float, float]]] = {}
    order: list[str] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 4:
                raise ValueError(f"{path.name}:{lineno}: expected 4 fields, got {len(fields)}")
            try:
                frame, x, y = float(fields[0]), float(fields[2]), float(fields[3])
            except ValueError as exc:
                raise ValueError(f"{path.name}:{lineno}: non-numeric field ({exc})") from None
            agent = fields[1]
            if agent not in records:
                records[agent] = []
                order.append(agent)
            records[agent].append((frame, x, y))

    # base stride: smallest positive frame difference in the file
    diffs = []
    for agent in order:
        frames = [r[0] for r in records[agent]]
        for a, b in zip(frames, frames[1:]):
            if b <= a:
                raise ValueError(f"{path.name}: non-monotone frames for agent {agent} ({a} -> {b})")
            diffs.append(b - a)
    stride = min(diffs) if diffs else None

    trajectories: list[Trajectory] = []
    for agent in order:
        rows = records[agent]
        segment_pts: list[tuple[float, float]] = [(rows[0][1], rows[0][2])]
        part = 0
        for prev, cur in zip(rows, rows[1:]):
            if stride is not None and cur[0] - prev[0] > stride:
                if len(segment_pts) >= 2:
                    trajectories.append(Trajectory(f"{agent}.{part}" if part else agent,
                                                   np.asarray(segment_pts), dt=dt,
                                                   source_dataset=path.stem))
                part += 1
                segment_pts = []
            segment_pts.append((cur[1], cur[2]))
        if len(segment_pts) >= 2:
            trajectories.append(Trajectory(f"{agent}.{part}" if part else agent,
                                           np.asarray(segment_pts), dt=dt,
                                           source_dataset=path.stem))
    return trajectories


def segment(trajs: Sequence[Trajectory], t_obs: int, t_pred: int, overlap: bool = False,
            name: str = "", labels_by_agent: dict | None = None) -> Corpus:
    """Cut trajectories into fixed-length displacement windows.

    A window needs t_obs + t_pred + 1 positions. With overlap=False windows
    advance by the full window length so no position is reused; with
    overlap=True the stride is one position.
    """
    if t_obs < 1 or t_pred < 1:
        raise ValueError(f"horizons must be >= 1, got t_obs={t_obs}, t_pred={t_pred}")
    window = t_obs + t_pred + WINDOW_EXTRA
    stride = 1 if overlap else window
    samples, ids, labels = [], [], []
    for traj in trajs:
        for start in range(0, len(traj) - window + 1, stride):
            piece = Trajectory(traj.agent_id, traj.points[start:start + window],
                               dt=traj.dt, source_dataset=traj.source_dataset)
            samples.append(to_displacements(piece, t_obs, t_pred))
            ids.append(f"{traj.source_dataset}/{traj.agent_id}@{start}")
            if labels_by_agent is not None:
                labels.append(labels_by_agent[traj.agent_id])
    return Corpus(
        name=name or (trajs[0].source_dataset if trajs else "corpus"),
        samples=tuple(samples), t_obs=t_obs, t_pred=t_pred,
        sample_ids=tuple(ids),
        labels=tuple(labels) if labels_by_agent is not None else None,
        provenance={"overlap": overlap, "window": window, "n_trajectories": len(trajs)},
    )


def _allocate(n: int, fractions) -> list[int]:
    # largest-remainder allocation: exact totals, deterministic ties
    base = [int(np.floor(f * n)) for f in fractions]
    rest = n - sum(base)
    remainders = sorted(range(len(fractions)),
                        key=lambda i: (-(fractions[i] * n - base[i]), i))
    for i in remainders[:rest]:
        base[i] += 1
    return base


def _take(corpus_like, idx, name: str, provenance: dict) -> Corpus:
    samples, ids, labels = corpus_like
    return Corpus(
        name=name,
        samples=tuple(samples[i] for i in idx),
        t_obs=provenance["t_obs"],
        t_pred=provenance["t_pred"],
        sample_ids=tuple(ids[i] for i in idx),
        labels=tuple(labels[i] for i in idx) if labels is not None else None,
        provenance=provenance,
    )


def make_splits(corpora: Sequence[Corpus], plan: SplitPlan) -> tuple[Corpus, Corpus, Corpus]:
    """Partition corpora into (train, val, test) per the split plan."""
    if not corpora:
        raise ConfigError("no corpora to split")
    t_obs, t_pred = corpora[0].t_obs, corpora[0].t_pred
    rng = np.random.default_rng(derive_seed(plan.seed, "make_splits"))
    prov = {"mode": plan.mode, "seed": plan.seed, "t_obs": t_obs, "t_pred": t_pred}

    def pooled(cs):
        samples, ids = [], []
        labels: list | None = [] if all(c.labels is not None for c in cs) else None
        for c in cs:
            samples.extend(c.samples)
            ids.extend(c.sample_ids)
            if labels is not None:
                labels.extend(c.labels)
        return samples, ids, labels

    if plan.mode == "leave-one-dataset-out":
        names = [c.name for c in corpora]
        if plan.held_out not in names:
            raise ConfigError(f"held_out '{plan.held_out}' not among corpora {names}")
        test = corpora[names.index(plan.held_out)]
        rest = pooled([c for c in corpora if c.name != plan.held_out])
        n = len(rest[0])
        perm = rng.permutation(n)
        n_val = int(round(plan.val_fraction * n))
        val_idx, train_idx = perm[:n_val].tolist(), perm[n_val:].tolist()
        train = _take(rest, train_idx, "train", prov)
        val = _take(rest, val_idx, "val", prov)
        return train, val, Corpus(name="test", samples=test.samples, t_obs=t_obs,
                                  t_pred=t_pred, sample_ids=test.sample_ids,
                                  labels=test.labels, provenance={**prov, "held_out": plan.held_out})

    pool = pooled(list(corpora))
    n = len(pool[0])
    counts = _allocate(n, plan.fractions)
    perm = rng.permutation(n).tolist()
    cut1, cut2 = counts[0], counts[0] + counts[1]
    return (
        _take(pool, perm[:cut1], "train", prov),
        _take(pool, perm[cut1:cut2], "val", prov),
        _take(pool, perm[cut2:], "test", prov),
    )


@dataclass(frozen=True)
class Regime:
    """One synthetic motion pattern."""

    kind: str  # straight | arc | stop-and-go
    speed: float = 1.0        # meters per second
    heading: float = 0.0      # radians
    turn_rate: float = 0.0    # radians per second (arc)
    move_steps: int = 4       # stop-and-go: steps moving before each pause
    stop_steps: int = 4       # stop-and-go: steps paused
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in ("straight", "arc", "stop-and-go"):
            raise ConfigError(f"unknown regime kind '{self.kind}'")


@dataclass(frozen=True)
class Scenario:
    """Synthetic corpus description: a mixture of motion regimes."""

    regimes: tuple
    t_obs: int = 8
    t_pred: int = 12
    dt: float = 0.4
    noise_std: float = 0.0  # iid Gaussian position jitter, meters

    def __post_init__(self):
        object.__setattr__(self, "regimes", tuple(self.regimes))
        if not self.regimes:
            raise ConfigError("scenario needs at least one regime")

    def to_doc(self) -> dict:
        return {
            "regimes": [vars(r) for r in self.regimes],
            "t_obs": self.t_obs, "t_pred": self.t_pred,
            "dt": self.dt, "noise_std": self.noise_std,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Scenario":
        return cls(regimes=tuple(Regime(**r) for r in doc["regimes"]),
                   t_obs=int(doc.get("t_obs", 8)), t_pred=int(doc.get("t_pred", 12)),
                   dt=float(doc.get("dt", 0.4)), noise_std=float(doc.get("noise_std", 0.0)))


def _regime_positions(regime: Regime, n_steps: int, dt: float, start: np.ndarray) -> np.ndarray:
    pts = np.empty((n_steps + 1, 2))
    pts[0] = start
    heading = regime.heading
    for t in range(n_steps):
        if regime.kind == "stop-and-go":
            period = regime.move_steps + regime.stop_steps
            moving = (t % period) < regime.move_steps
            step = regime.speed * dt if moving else 0.0
        else:
            step = regime.speed * dt
        pts[t + 1] = pts[t] + step * np.array([np.cos(heading), np.sin(heading)])
        if regime.kind == "arc":
            heading += regime.turn_rate * dt
    return pts


def synth_trajectories(scenario: Scenario, n: int, seed: int) -> tuple[list[Trajectory], list[int]]:
    """Generate n labeled single-window trajectories from the scenario mixture."""
    rng = np.random.default_rng(derive_seed(seed, "synth"))
    weights = np.array([r.weight for r in scenario.regimes], dtype=np.float64)
    weights = weights / weights.sum()
    n_steps = scenario.t_obs + scenario.t_pred
    trajs, labels = [], []
    for i in range(n):
        r = int(rng.choice(len(scenario.regimes), p=weights))
        start = rng.uniform(-10.0, 10.0, size=2)
        pts = _regime_positions(scenario.regimes[r], n_steps, scenario.dt, start)
        if scenario.noise_std > 0:
            pts = pts + rng.normal(0.0, scenario.noise_std, size=pts.shape)
        trajs.append(Trajectory(f"{i:05d}", pts, dt=scenario.dt, source_dataset="synth"))
        labels.append(r)
    return trajs, labels


def synth_corpus(scenario: Scenario, n: int, seed: int, name: str = "synth") -> Corpus:
    """Generate a labeled synthetic corpus; labels record the generating regime."""
    trajs, labels = synth_trajectories(scenario, n, seed)
    samples = tuple(to_displacements(t, scenario.t_obs, scenario.t_pred) for t in trajs)
    return Corpus(
        name=name, samples=samples, t_obs=scenario.t_obs, t_pred=scenario.t_pred,
        sample_ids=tuple(f"{name}/{t.agent_id}@0" for t in trajs),
        labels=tuple(labels),
        provenance={"scenario": scenario.to_doc(), "n": n, "seed": seed},
    )


def write_trajnet(path, trajs: Sequence[Trajectory], frame_stride: int = 10) -> None:
    """Write trajectories in the TrajNet text format, one agent per trajectory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for traj in trajs:
        for i, (x, y) in enumerate(traj.points):
            lines.append(f"{i * frame_stride} {traj.agent_id} {float(x)!r} {float(y)!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def corpus_to_doc(corpus: Corpus) -> dict:
    return {
        "schema_version": 1,
        "kind": "corpus",
        "name": corpus.name,
        "t_obs": corpus.t_obs,
        "t_pred": corpus.t_pred,
        "sample_ids": list(corpus.sample_ids),
        "labels": list(corpus.labels) if corpus.labels is not None else None,
        "origins": [list(s.origin) for s in corpus.samples],
        "deltas": [s.deltas.tolist() for s in corpus.samples],
        "provenance": corpus.provenance,
    }


def corpus_from_doc(doc: dict) -> Corpus:
    samples = tuple(
        DisplacementSeries(np.asarray(d), doc["t_obs"], doc["t_pred"], origin=tuple(o))
        for d, o in zip(doc["deltas"], doc["origins"])
    )
    return Corpus(name=doc["name"], samples=samples, t_obs=doc["t_obs"], t_pred=doc["t_pred"],
                  sample_ids=tuple(doc["sample_ids"]),
                  labels=tuple(doc["labels"]) if doc.get("labels") is not None else None,
                  provenance=doc.get("provenance", {}))
