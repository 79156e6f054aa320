"""Position-space error metrics and the Top-K evaluation protocols."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DisplacementSeries, Trajectory, integrate
from .errors import LengthMismatchError
from .forecasters import ProposalSet


def _positions(x) -> np.ndarray:
    if isinstance(x, Trajectory):
        return x.points
    if isinstance(x, DisplacementSeries):
        return integrate(x)
    return np.asarray(x, dtype=np.float64)


def ade(pred, truth) -> float:
    """Mean Euclidean distance between predicted and true positions."""
    p, t = _positions(pred), _positions(truth)
    if p.shape != t.shape:
        raise LengthMismatchError(f"prediction shape {p.shape} != truth shape {t.shape}")
    return float(np.linalg.norm(p - t, axis=1).mean())


def fde(pred, truth) -> float:
    """Euclidean distance at the final predicted step."""
    p, t = _positions(pred), _positions(truth)
    if p.shape != t.shape:
        raise LengthMismatchError(f"prediction shape {p.shape} != truth shape {t.shape}")
    return float(np.linalg.norm(p[-1] - t[-1]))


def topk_by_likelihood(pset: ProposalSet, truth, k: int) -> tuple[float, float]:
    """Score the k most probable proposals: ADE of the closest, FDE from the same proposal.

    Probability ties order by smaller cluster id first.
    """
    if pset.probabilities is None:
        raise ValueError("proposal set has no probabilities")
    if k < 1 or k > len(pset):
        raise ValueError(f"k must be in 1..{len(pset)}, got {k}")
    ids = pset.cluster_ids or tuple(range(len(pset)))
    order = sorted(range(len(pset)), key=lambda i: (-pset.probabilities[i], ids[i]))
    chosen = order[:k]
    scores = [(ade(pset.proposals[i], truth), fde(pset.proposals[i], truth)) for i in chosen]
    return min(scores, key=lambda s: s[0])


def topk_by_sampling(samples, truth, k: int) -> tuple[float, float]:
    """Score the first k samples in generation order: ADE of the closest, FDE coupled."""
    samples = list(samples)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(samples) < k:
        raise ValueError(f"need at least k={k} samples, got {len(samples)}")
    scores = [(ade(s, truth), fde(s, truth)) for s in samples[:k]]
    return min(scores, key=lambda s: s[0])


@dataclass(frozen=True)
class EvalRow:
    """One evaluated configuration, aggregated over runs."""

    dataset: str
    model: str
    clustering: str
    ranking: str
    k: int | None
    top1_ade: float
    top1_ade_std: float
    top1_fde: float
    top1_fde_std: float
    top3_ade: float
    top3_ade_std: float
    top3_fde: float
    top3_fde_std: float
    ranking_accuracy: float | None
    ranking_accuracy_std: float | None
    runs: int
    seeds: tuple

    def __post_init__(self):
        for name in ("top1_ade", "top1_fde", "top3_ade", "top3_fde"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


CSV_COLUMNS = [
    "dataset", "model", "clustering", "ranking", "k",
    "top1_ade", "top1_ade_std", "top1_fde", "top1_fde_std",
    "top3_ade", "top3_ade_std", "top3_fde", "top3_fde_std",
    "ranking_accuracy", "ranking_accuracy_std", "runs", "seeds",
]


@dataclass(frozen=True)
class EvalReport:
    """Rows plus the run metadata needed to reproduce them."""

    rows: tuple
    config_hash: str
    meta: dict = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "eval_report",
            "config_hash": self.config_hash,
            "meta": self.meta,
            "rows": [vars(r) | {"seeds": list(r.seeds)} for r in self.rows],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "EvalReport":
        rows = tuple(EvalRow(**{**r, "seeds": tuple(r["seeds"])}) for r in doc["rows"])
        return cls(rows=rows, config_hash=doc["config_hash"], meta=doc.get("meta", {}))

    def to_csv(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for r in self.rows:
            vals = []
            for col in CSV_COLUMNS:
                v = getattr(r, col)
                if col == "seeds":
                    vals.append("|".join(str(s) for s in v))
                elif v is None:
                    vals.append("")
                elif isinstance(v, float):
                    vals.append(f"{v:.6f}")
                else:
                    vals.append(str(v))
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"


def aggregate(values) -> tuple[float, float]:
    """Mean and population std over runs (std is 0 for a single run)."""
    arr = np.asarray(list(values), dtype=np.float64)
    return float(arr.mean()), float(arr.std())
