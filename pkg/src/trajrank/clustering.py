"""Displacement clustering: flat k-means, soft-DTW time-series k-means, DBI.

Three cluster-space metrics exist:

* ``euclidean-flat``  — centroids are flat interleaved displacement vectors,
  distances are plain L2 (k-means).
* ``soft-dtw``        — centroids are time-indexed (T, 2) series, distances
  are soft-DTW values at the space's gamma (TS k-means).
* ``feature-l2``      — centroids live in a learned feature space (deep
  feature clustering); distances are L2 between feature vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import DisplacementSeries, FlatDisplacement, Standardizer, flatten
from .docio import content_hash, derive_seed
from .errors import TrajrankError


# ---------------------------------------------------------------------------
# cluster space


@dataclass(frozen=True, eq=False)
class ClusterSpace:
    """A K-partition of a training set plus the geometry needed to reuse it."""

    k: int
    metric: str  # euclidean-flat | soft-dtw | feature-l2
    centroids: np.ndarray  # (k, D) flat/feature or (k, T, 2) soft-dtw
    assignments: np.ndarray  # (N,) int cluster ids
    gamma: float | None = None  # soft-dtw only
    t_obs: int | None = None
    t_pred: int | None = None
    standardizer: Standardizer | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.metric not in ("euclidean-flat", "soft-dtw", "feature-l2"):
            raise ValueError(f"unknown metric '{self.metric}'")
        cents = np.asarray(self.centroids, dtype=np.float64)
        assign = np.asarray(self.assignments, dtype=np.int64)
        if len(cents) != self.k:
            raise ValueError(f"{len(cents)} centroids for k={self.k}")
        if assign.ndim != 1 or len(assign) == 0:
            raise ValueError("assignments must be a non-empty 1-D array")
        if assign.min() < 0 or assign.max() >= self.k:
            raise ValueError("assignments reference cluster ids outside 0..k-1")
        if self.metric == "soft-dtw" and (self.gamma is None or self.gamma <= 0):
            raise ValueError("soft-dtw spaces need gamma > 0")
        cents.setflags(write=False)
        assign.setflags(write=False)
        object.__setattr__(self, "centroids", cents)
        object.__setattr__(self, "assignments", assign)

    @property
    def n(self) -> int:
        return len(self.assignments)

    @property
    def weights(self) -> np.ndarray:
        """Empirical cluster weights |d_j| / N; they sum to one exactly."""
        counts = np.bincount(self.assignments, minlength=self.k).astype(np.float64)
        return counts / counts.sum()

    @property
    def member_index(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.assignments == j) for j in range(self.k)]

    def to_doc(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "cluster_space",
            "k": self.k,
            "metric": self.metric,
            "gamma": self.gamma,
            "t_obs": self.t_obs,
            "t_pred": self.t_pred,
            "centroids": self.centroids.tolist(),
            "assignments": self.assignments.tolist(),
            "weights": self.weights.tolist(),
            "standardizer": self.standardizer.to_doc() if self.standardizer else None,
            "meta": self.meta,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "ClusterSpace":
        std = doc.get("standardizer")
        return cls(
            k=int(doc["k"]), metric=doc["metric"],
            centroids=np.asarray(doc["centroids"], dtype=np.float64),
            assignments=np.asarray(doc["assignments"], dtype=np.int64),
            gamma=doc.get("gamma"), t_obs=doc.get("t_obs"), t_pred=doc.get("t_pred"),
            standardizer=Standardizer.from_doc(std) if std else None,
            meta=doc.get("meta", {}),
        )

    def content_hash(self) -> str:
        return content_hash(self.to_doc())


# ---------------------------------------------------------------------------
# data coercion


def as_flat_matrix(data) -> np.ndarray:
    """Coerce flat displacement collections to an (N, D) float64 matrix."""
    if isinstance(data, np.ndarray):
        mat = np.asarray(data, dtype=np.float64)
        if mat.ndim == 3:  # (N, T, 2) series stacked
            mat = mat.reshape(len(mat), -1)
        if mat.ndim != 2:
            raise ValueError(f"expected a 2-D matrix, got shape {mat.shape}")
        return mat
    rows = []
    for item in data:
        if isinstance(item, FlatDisplacement):
            rows.append(item.values)
        elif isinstance(item, DisplacementSeries):
            rows.append(flatten(item).values)
        else:
            rows.append(np.asarray(item, dtype=np.float64).reshape(-1))
    if not rows:
        raise ValueError("empty data")
    return np.asarray(rows, dtype=np.float64)


def as_series_tensor(data) -> np.ndarray:
    """Coerce series collections to an (N, T, 2) float64 tensor of equal-length series."""
    if isinstance(data, np.ndarray) and data.ndim == 3:
        return np.asarray(data, dtype=np.float64)
    rows = []
    for item in data:
        arr = item.deltas if isinstance(item, DisplacementSeries) else np.asarray(item, dtype=np.float64)
        rows.append(arr)
    if not rows:
        raise ValueError("empty data")
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise ValueError(f"series must share one length, got {sorted(lengths)}")
    return np.stack(rows).astype(np.float64)


# ---------------------------------------------------------------------------
# flat k-means


def _kmeanspp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    d2 = ((x - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:  # all remaining points coincide with a centroid
            idx = rng.integers(n)
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = x[idx]
        d2 = np.minimum(d2, ((x - centroids[j]) ** 2).sum(axis=1))
    return centroids


def _repair_empty(x: np.ndarray, centroids: np.ndarray, assign: np.ndarray) -> np.ndarray:
    """Reseed empty clusters from the points farthest from their centroid."""
    d2_own = ((x - centroids[assign]) ** 2).sum(axis=1)
    taken: set[int] = set()
    for j in range(len(centroids)):
        if np.any(assign == j):
            continue
        order = np.argsort(-d2_own)
        pick = next(int(i) for i in order if int(i) not in taken)
        taken.add(pick)
        centroids[j] = x[pick]
        assign[pick] = j
        d2_own[pick] = 0.0
    return centroids


def kmeans(data, k: int, seed: int = 0, max_iter: int = 100, tol: float = 1e-9,
           t_obs: int | None = None, t_pred: int | None = None,
           standardizer: Standardizer | None = None) -> ClusterSpace:
    """Lloyd's algorithm with k-means++ seeding on flat displacement vectors.

    Inertia is checked to be non-increasing at every iteration; empty clusters
    are reseeded from the point farthest from its current centroid.
    """
    x = as_flat_matrix(data)
    n = len(x)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n < k:
        raise ValueError(f"k={k} exceeds the number of samples ({n})")
    rng = np.random.default_rng(derive_seed(seed, "kmeans", k))
    centroids = _kmeanspp_init(x, k, rng)

    prev_inertia = np.inf
    assign = np.zeros(n, dtype=np.int64)
    for it in range(max_iter):
        d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(d2, axis=1).astype(np.int64)
        if np.any(np.bincount(assign, minlength=k) == 0):
            centroids = _repair_empty(x, centroids, assign)
            d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
            assign = np.argmin(d2, axis=1).astype(np.int64)
            for j in range(k):  # ties can re-empty a reseeded cluster
                if not np.any(assign == j):
                    assign[int(np.argmin(d2[:, j]))] = j
        inertia = float(d2[np.arange(n), assign].sum())
        if inertia > prev_inertia + 1e-12 * max(1.0, abs(prev_inertia)):
            raise TrajrankError(
                f"k-means inertia increased at iteration {it}: {prev_inertia} -> {inertia}"
            )
        new_centroids = np.stack([x[assign == j].mean(axis=0) for j in range(k)])
        shift = float(np.abs(new_centroids - centroids).max())
        centroids = new_centroids
        converged = shift < tol
        prev_inertia = inertia
        if converged:
            break

    return ClusterSpace(
        k=k, metric="euclidean-flat", centroids=centroids, assignments=assign,
        t_obs=t_obs, t_pred=t_pred, standardizer=standardizer,
        meta={"inertia": prev_inertia, "n_iter": it + 1, "seed": seed},
    )


# ---------------------------------------------------------------------------
# soft-DTW


def _softmin3(a, b, c, gamma: float):
    """Soft minimum of three arrays; exact at entries where the min is -inf-free."""
    stacked = np.stack([a, b, c])
    m = stacked.min(axis=0)
    # where m is +inf the cell is unreachable; keep inf without nan noise
    finite = np.isfinite(m)
    out = np.full_like(m, np.inf)
    if np.any(finite):
        z = np.exp(-(stacked[:, finite] - m[finite]) / gamma)
        out[finite] = m[finite] - gamma * np.log(z.sum(axis=0))
    return out


def _pair_costs(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Squared-Euclidean step cost matrices, batched: (P, n, m)."""
    return ((xs[:, :, None, :] - ys[:, None, :, :]) ** 2).sum(axis=3)


def _softdtw_forward(cost: np.ndarray, gamma: float) -> np.ndarray:
    """Batched soft-DTW DP over anti-diagonals. cost: (P, n, m) -> R: (P, n+1, m+1)."""
    p, n, m = cost.shape
    r = np.full((p, n + 1, m + 1), np.inf)
    r[:, 0, 0] = 0.0
    for s in range(2, n + m + 1):
        i = np.arange(max(1, s - m), min(n, s - 1) + 1)
        j = s - i
        prev = _softmin3(r[:, i - 1, j], r[:, i, j - 1], r[:, i - 1, j - 1], gamma)
        r[:, i, j] = cost[:, i - 1, j - 1] + prev
    return r


def soft_dtw_many(xs, ys, gamma: float) -> np.ndarray:
    """Soft-DTW values for P aligned pairs: xs (P, n, 2) vs ys (P, m, 2)."""
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    r = _softdtw_forward(_pair_costs(xs, ys), gamma)
    return r[:, -1, -1].copy()


def soft_dtw(a, b, gamma: float = 1.0) -> float:
    """Soft-DTW between two step series (DisplacementSeries or (T, 2) arrays)."""
    xa = a.deltas if isinstance(a, DisplacementSeries) else np.asarray(a, dtype=np.float64)
    xb = b.deltas if isinstance(b, DisplacementSeries) else np.asarray(b, dtype=np.float64)
    if len(xa) == 0 or len(xb) == 0:
        raise ValueError("soft_dtw needs non-empty series")
    return float(soft_dtw_many(xa[None], xb[None], gamma)[0])


def soft_dtw_grad(x: np.ndarray, ys: np.ndarray, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Values and gradients of soft-DTW(x, y_p) w.r.t. x, batched over ys.

    x: (n, 2); ys: (P, m, 2). Returns (values (P,), grads (P, n, 2)).
    Backward pass follows the alignment-matrix recursion: E[i, j] is the
    sensitivity of the final value to R[i, j].
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    x = np.asarray(x, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    p, m = ys.shape[0], ys.shape[1]
    n = len(x)
    xs = np.broadcast_to(x[None], (p, n, 2))
    cost = _pair_costs(xs, ys)
    r = _softdtw_forward(cost, gamma)
    values = r[:, -1, -1].copy()

    # padded tables for the reverse recursion
    rp = np.full((p, n + 2, m + 2), -np.inf)
    rp[:, : n + 1, : m + 1] = r
    rp[:, n + 1, m + 1] = r[:, n, m]
    cp = np.zeros((p, n + 2, m + 2))
    cp[:, 1: n + 1, 1: m + 1] = cost
    e = np.zeros((p, n + 2, m + 2))
    e[:, n + 1, m + 1] = 1.0

    with np.errstate(invalid="ignore"):
        for s in range(n + m, 1, -1):
            i = np.arange(max(1, s - m), min(n, s - 1) + 1)
            j = s - i
            here = rp[:, i, j]
            a = np.exp((rp[:, i + 1, j] - here - cp[:, i + 1, j]) / gamma)
            b = np.exp((rp[:, i, j + 1] - here - cp[:, i, j + 1]) / gamma)
            c = np.exp((rp[:, i + 1, j + 1] - here - cp[:, i + 1, j + 1]) / gamma)
            e[:, i, j] = (a * e[:, i + 1, j] + b * e[:, i, j + 1]
                          + c * e[:, i + 1, j + 1])

    align = e[:, 1: n + 1, 1: m + 1]  # (P, n, m)
    # d/dx_i of sum_j E_ij * ||x_i - y_j||^2
    mass = align.sum(axis=2)  # (P, n)
    grads = 2.0 * (mass[:, :, None] * xs - np.einsum("pnm,pmd->pnd", align, ys))
    return values, grads


def soft_dtw_barycenter(series: np.ndarray, init: np.ndarray, gamma: float,
                        iters: int = 30, lr: float = 0.1) -> np.ndarray:
    """Gradient descent on the summed soft-DTW from a barycenter to member series."""
    b = np.asarray(init, dtype=np.float64).copy()
    members = np.asarray(series, dtype=np.float64)
    for _ in range(iters):
        _, grads = soft_dtw_grad(b, members, gamma)
        b -= lr * grads.mean(axis=0)
    return b


def ts_kmeans(data, k: int, gamma: float = 1.0, seed: int = 0, max_iter: int = 30,
              barycenter_iters: int = 30, barycenter_lr: float = 0.1,
              t_obs: int | None = None, t_pred: int | None = None,
              standardizer: Standardizer | None = None) -> ClusterSpace:
    """Time-series k-means under soft-DTW with gradient-descent barycenters.

    Centroid updates are accepted only when they do not increase the cluster's
    summed soft-DTW, which keeps the outer objective non-increasing.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    x = as_series_tensor(data)
    n = len(x)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n < k:
        raise ValueError(f"k={k} exceeds the number of samples ({n})")
    rng = np.random.default_rng(derive_seed(seed, "ts_kmeans", k))

    # seed with member series picked by k-means++ in flat space
    flat = x.reshape(n, -1)
    init_flat = _kmeanspp_init(flat, k, rng)
    centroids = init_flat.reshape(k, x.shape[1], 2).copy()

    def distances(cents):
        cols = [soft_dtw_many(x, np.broadcast_to(c[None], x.shape), gamma) for c in cents]
        return np.stack(cols, axis=1)  # (N, k)

    prev_obj = np.inf
    assign = np.zeros(n, dtype=np.int64)
    for it in range(max_iter):
        d = distances(centroids)
        new_assign = np.argmin(d, axis=1).astype(np.int64)
        repaired = False
        for j in range(k):  # empty-cluster repair: reseed from the worst-fit series
            if not np.any(new_assign == j):
                repaired = True
                worst = int(np.argmax(d[np.arange(n), new_assign]))
                centroids[j] = x[worst]
                d[:, j] = soft_dtw_many(x, np.broadcast_to(centroids[j][None], x.shape), gamma)
                new_assign = np.argmin(d, axis=1).astype(np.int64)
                new_assign[worst] = j
        assign = new_assign
        obj = float(d[np.arange(n), assign].sum())
        # a reseed restarts the descent, so skip the monotonicity check then
        if not repaired and obj > prev_obj + 1e-9 * max(1.0, abs(prev_obj)):
            raise TrajrankError(f"ts_kmeans objective increased at iteration {it}")
        moved = False
        for j in range(k):
            members = x[assign == j]
            before = float(soft_dtw_many(members,
                                         np.broadcast_to(centroids[j][None], members.shape),
                                         gamma).sum())
            cand = soft_dtw_barycenter(members, centroids[j], gamma,
                                       iters=barycenter_iters, lr=barycenter_lr)
            after = float(soft_dtw_many(members,
                                        np.broadcast_to(cand[None], members.shape),
                                        gamma).sum())
            if after < before:
                centroids[j] = cand
                moved = True
        prev_obj = obj
        if not moved:
            break

    return ClusterSpace(
        k=k, metric="soft-dtw", centroids=centroids, assignments=assign, gamma=gamma,
        t_obs=t_obs, t_pred=t_pred, standardizer=standardizer,
        meta={"objective": prev_obj, "n_iter": it + 1, "seed": seed},
    )


# ---------------------------------------------------------------------------
# space geometry helpers


def _distance_rows(metric: str, centroids: np.ndarray, rows: np.ndarray,
                   gamma: float | None = None) -> np.ndarray:
    """Distances from each row to each centroid under a metric. Returns (N, k)."""
    if metric == "soft-dtw":
        cols = [soft_dtw_many(rows, np.broadcast_to(c[None], rows.shape), gamma)
                for c in centroids]
        return np.stack(cols, axis=1)
    diffs = rows[:, None, :] - centroids[None, :, :]
    return np.sqrt((diffs ** 2).sum(axis=2))


def _coerce_for_space(space: ClusterSpace, sample) -> tuple[np.ndarray, np.ndarray]:
    """Match a sample to the space's representation.

    Typed displacement inputs are raw meters (the space applies its own
    standardizer); plain arrays are taken as already being in the space's
    coordinates. Centroids are sliced to the future segment when the sample
    is a future-only series shorter than the fitted ones.
    """
    cents = space.centroids
    if space.metric == "feature-l2":
        if isinstance(sample, (DisplacementSeries, FlatDisplacement)):
            raise ValueError("feature-l2 spaces take precomputed feature vectors")
        vec = np.asarray(sample, dtype=np.float64).reshape(-1)
        if vec.shape[0] != cents.shape[1]:
            raise ValueError(f"feature dim {vec.shape[0]} != centroid dim {cents.shape[1]}")
        return vec[None], cents

    future_only = False
    if isinstance(sample, DisplacementSeries):
        arr = sample.deltas
        if space.standardizer is not None:
            arr = space.standardizer.transform(arr)
        future_only = sample.t_obs == 0
    elif isinstance(sample, FlatDisplacement):
        arr = sample.values.reshape(-1, 2)
        if space.standardizer is not None:
            arr = space.standardizer.transform(arr)
    else:
        arr = np.asarray(sample, dtype=np.float64)

    if space.metric == "euclidean-flat":
        dim = cents.shape[1]
        flat = arr.reshape(-1)
        if flat.size == dim:
            return flat[None], cents
        if space.t_pred is not None and flat.size == 2 * space.t_pred:
            return flat[None], cents[:, -2 * space.t_pred:]
        raise ValueError(
            f"sample has {flat.size} values; space expects {dim}"
            + (f" or a {2 * space.t_pred}-value future segment" if space.t_pred else "")
        )

    # soft-dtw: centroids are (k, T, 2)
    arr = arr.reshape(-1, 2)
    t = cents.shape[1]
    if len(arr) == t:
        return arr[None], cents
    if space.t_pred is not None and len(arr) == space.t_pred:
        return arr[None], cents[:, -space.t_pred:, :]
    raise ValueError(f"sample has {len(arr)} steps; space expects {t}"
                     + (f" or future-only {space.t_pred}" if space.t_pred else ""))


def assign(space: ClusterSpace, sample) -> int:
    """Nearest-centroid cluster id; ties break to the smallest id."""
    rows, cents = _coerce_for_space(space, sample)
    d = _distance_rows(space.metric, cents, rows, space.gamma)[0]
    return int(np.argmin(d))


# ---------------------------------------------------------------------------
# Davies-Bouldin index and K selection


def dbi(space: ClusterSpace, data) -> float:
    """Davies-Bouldin index of a fitted space over its training data (lower is better)."""
    if space.k < 2:
        raise ValueError("DBI is undefined for k < 2")
    if space.metric == "soft-dtw":
        rows = as_series_tensor(data)
    else:
        rows = as_flat_matrix(data)
    if len(rows) != space.n:
        raise ValueError(f"data has {len(rows)} rows, space was fitted on {space.n}")

    members = space.member_index
    for j, idx in enumerate(members):
        if len(idx) == 0:
            raise ValueError(f"cluster {j} is empty")

    if space.metric == "soft-dtw":
        sigma = np.array([
            soft_dtw_many(rows[idx], np.broadcast_to(space.centroids[j][None],
                                                     rows[idx].shape), space.gamma).mean()
            for j, idx in enumerate(members)
        ])
        cc = np.zeros((space.k, space.k))
        for a in range(space.k):
            for b in range(a + 1, space.k):
                v = soft_dtw_many(space.centroids[a][None], space.centroids[b][None], space.gamma)[0]
                cc[a, b] = cc[b, a] = v
    else:
        sigma = np.array([
            np.sqrt(((rows[idx] - space.centroids[j]) ** 2).sum(axis=1)).mean()
            for j, idx in enumerate(members)
        ])
        diffs = space.centroids[:, None, :] - space.centroids[None, :, :]
        cc = np.sqrt((diffs ** 2).sum(axis=2))

    ratios = np.zeros(space.k)
    for i in range(space.k):
        vals = [(sigma[i] + sigma[j]) / cc[i, j] for j in range(space.k)
                if j != i and cc[i, j] > 0]
        if not vals:
            raise ValueError("coincident centroids make DBI undefined")
        ratios[i] = max(vals)
    return float(ratios.mean())


def select_k(data, k_candidates: Sequence[int], runs: int = 5, seed: int = 0,
             fit: Callable | None = None, **fit_kwargs) -> tuple[int, list[dict]]:
    """Pick K by the smallest DBI averaged over seeded clustering runs.

    ``fit(data, k, seed)`` defaults to :func:`kmeans`; ties go to the
    smallest candidate.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if not k_candidates:
        raise ValueError("no candidate k values")
    if fit is None:
        fit = lambda d, k, s: kmeans(d, k, seed=s, **fit_kwargs)

    table = []
    for k in sorted(k_candidates):
        vals = []
        for r in range(runs):
            space = fit(data, k, derive_seed(seed, "select_k", k, r))
            vals.append(dbi(space, data))
        table.append({"k": int(k), "dbi_mean": float(np.mean(vals)),
                      "dbi_runs": [float(v) for v in vals]})
    best = min(table, key=lambda row: (row["dbi_mean"], row["k"]))
    return best["k"], table
