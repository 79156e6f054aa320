"""Trajectory and displacement-space data model.

Positions are meters on the XY plane, displacements are per-step finite
differences of positions. All arithmetic is float64; arrays are frozen after
construction so instances can be shared across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatchError


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Evenly spaced 2D position sequence for one agent."""

    agent_id: str
    points: np.ndarray  # (N, 2) meters
    dt: float = 0.4
    source_dataset: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"points must have shape (N, 2), got {pts.shape}")
        if len(pts) < 2:
            raise ValueError(f"a trajectory needs at least 2 points, got {len(pts)}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "points", _freeze(pts))

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True, eq=False)
class DisplacementSeries:
    """Finite-difference form of a trajectory.

    A *full* series holds ``t_obs + t_pred`` steps. An *observation-only*
    series holds just the ``t_obs`` observed steps, with ``t_pred`` recording
    the intended prediction horizon. A future-only series (e.g. a forecast) is
    a full series with ``t_obs == 0``. ``origin`` is always the position from
    which ``deltas[0]`` steps, so integration never needs outside context.
    """

    deltas: np.ndarray  # (T, 2) meters per step
    t_obs: int
    t_pred: int
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        d = np.asarray(self.deltas, dtype=np.float64)
        if d.ndim != 2 or d.shape[1] != 2:
            raise ValueError(f"deltas must have shape (T, 2), got {d.shape}")
        if len(d) == 0:
            raise ValueError("deltas must hold at least one step")
        if self.t_obs < 0 or self.t_pred < 0:
            raise ValueError(f"negative step counts: t_obs={self.t_obs}, t_pred={self.t_pred}")
        n = len(d)
        full = n == self.t_obs + self.t_pred and self.t_pred >= 1
        obs_only = n == self.t_obs
        if not (full or obs_only):
            raise LengthMismatchError(
                f"deltas length {n} matches neither t_obs + t_pred = "
                f"{self.t_obs + self.t_pred} (full) nor t_obs = {self.t_obs} (observation-only)"
            )
        object.__setattr__(self, "deltas", _freeze(d))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    def __len__(self) -> int:
        return len(self.deltas)

    @property
    def is_full(self) -> bool:
        return len(self.deltas) == self.t_obs + self.t_pred and self.t_pred >= 1

    @property
    def last_observed_position(self) -> tuple[float, float]:
        p = np.asarray(self.origin) + self.deltas[: self.t_obs].sum(axis=0)
        return (float(p[0]), float(p[1]))


@dataclass(frozen=True, eq=False)
class FlatDisplacement:
    """Displacement series flattened to interleaved order dx1, dy1, ..., dxT, dyT."""

    values: np.ndarray  # (2T,)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if len(v) == 0 or len(v) % 2 != 0:
            raise ValueError(f"flat displacement length must be positive and even, got {len(v)}")
        object.__setattr__(self, "values", _freeze(v))

    def __len__(self) -> int:
        return len(self.values)


def to_displacements(traj: Trajectory, t_obs: int, t_pred: int) -> DisplacementSeries:
    """Convert a trajectory of t_obs + t_pred + 1 positions into per-step displacements."""
    if t_obs < 1:
        raise ValueError(f"t_obs must be >= 1, got {t_obs}")
    expected = t_obs + t_pred + 1
    if len(traj.points) != expected:
        raise LengthMismatchError(
            f"trajectory '{traj.agent_id}' has {len(traj.points)} points, "
            f"expected {expected} for t_obs={t_obs}, t_pred={t_pred}"
        )
    deltas = np.diff(traj.points, axis=0)
    return DisplacementSeries(deltas, t_obs, t_pred, origin=(traj.points[0, 0], traj.points[0, 1]))


def integrate(disp: DisplacementSeries, start=None) -> np.ndarray:
    """Cumulatively sum displacements into positions, one per step.

    The starting point itself is not included in the output; it defaults to
    the series' own origin.
    """
    s = np.asarray(disp.origin if start is None else start, dtype=np.float64)
    return s + np.cumsum(disp.deltas, axis=0)


def to_trajectory(disp: DisplacementSeries, agent_id: str = "", dt: float = 0.4,
                  source_dataset: str = "") -> Trajectory:
    """Rebuild the position sequence (origin included) as a Trajectory."""
    pts = np.vstack([np.asarray(disp.origin)[None, :], integrate(disp)])
    return Trajectory(agent_id, pts, dt=dt, source_dataset=source_dataset)


def flatten(disp: DisplacementSeries) -> FlatDisplacement:
    """Flatten to interleaved x, y order."""
    return FlatDisplacement(disp.deltas.reshape(-1))


def unflatten(flat, t_obs: int, t_pred: int, origin=(0.0, 0.0)) -> DisplacementSeries:
    """Inverse of :func:`flatten`. Accepts a FlatDisplacement or a flat array."""
    values = flat.values if isinstance(flat, FlatDisplacement) else np.asarray(flat, dtype=np.float64)
    deltas = values.reshape(-1, 2)
    if len(deltas) != t_obs + t_pred and len(deltas) != t_obs:
        raise LengthMismatchError(
            f"flat vector encodes {len(deltas)} steps, expected {t_obs + t_pred} or {t_obs}"
        )
    return DisplacementSeries(deltas, t_obs, t_pred, origin=origin)


def split(disp: DisplacementSeries) -> tuple[DisplacementSeries, DisplacementSeries]:
    """Split a full series into (observed, future) parts."""
    if not disp.is_full:
        raise ValueError(
            f"split needs a full series with t_pred >= 1; got {len(disp)} deltas "
            f"for t_obs={disp.t_obs}, t_pred={disp.t_pred}"
        )
    if disp.t_obs < 1:
        raise ValueError("split needs at least one observed step")
    obs = DisplacementSeries(disp.deltas[: disp.t_obs], disp.t_obs, disp.t_pred, origin=disp.origin)
    fut = DisplacementSeries(
        disp.deltas[disp.t_obs:], 0, disp.t_pred, origin=disp.last_observed_position
    )
    return obs, fut


def concat(observed: DisplacementSeries, future: DisplacementSeries) -> DisplacementSeries:
    """Rejoin the two halves produced by :func:`split`."""
    if observed.is_full:
        raise ValueError("first argument must be observation-only")
    if future.t_obs != 0:
        raise ValueError("second argument must be future-only (t_obs == 0)")
    deltas = np.vstack([observed.deltas, future.deltas])
    return DisplacementSeries(deltas, observed.t_obs, future.t_pred, origin=observed.origin)


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-coordinate affine map fitted on training displacements.

    Stored with every model and cluster space that was fitted on standardized
    data so that inference can invert it.
    """

    mean: np.ndarray  # (2,)
    std: np.ndarray   # (2,)

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=np.float64).reshape(2)
        s = np.asarray(self.std, dtype=np.float64).reshape(2)
        if np.any(s <= 0):
            raise ValueError(f"std must be positive, got {s}")
        object.__setattr__(self, "mean", _freeze(m))
        object.__setattr__(self, "std", _freeze(s))

    @classmethod
    def fit(cls, deltas) -> "Standardizer":
        flat = np.asarray(deltas, dtype=np.float64).reshape(-1, 2)
        std = flat.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        return cls(flat.mean(axis=0), std)

    @classmethod
    def identity(cls) -> "Standardizer":
        return cls(np.zeros(2), np.ones(2))

    def transform(self, deltas: np.ndarray) -> np.ndarray:
        return (np.asarray(deltas, dtype=np.float64) - self.mean) / self.std

    def inverse(self, deltas: np.ndarray) -> np.ndarray:
        return np.asarray(deltas, dtype=np.float64) * self.std + self.mean

    def to_doc(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_doc(cls, doc: dict) -> "Standardizer":
        return cls(np.asarray(doc["mean"]), np.asarray(doc["std"]))
