"""Finite metric spaces, discrete measures, couplings and exact W1."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import EmptySpace, InvalidMetric, MassMismatch, NegativeMass, SpaceMismatch, ValidationError

TRIANGLE_TOL = 1e-12
MASS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MetricSpace:
    points: np.ndarray
    distance_mode: str = "euclidean"
    distance_matrix: np.ndarray | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.size == 0:
            pts = pts.reshape(0, 1)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.distance_mode not in ("euclidean", "explicit"):
            raise InvalidMetric(f"unknown distance mode {self.distance_mode!r}")
        if self.distance_mode == "explicit":
            if self.distance_matrix is None:
                raise InvalidMetric("explicit mode needs a distance matrix")
            d = np.asarray(self.distance_matrix, dtype=float)
            _check_metric(d, pts.shape[0])
            d = d.copy()
            d.setflags(write=False)
            object.__setattr__(self, "distance_matrix", d)
        elif self.distance_matrix is not None:
            raise InvalidMetric("euclidean mode takes no distance matrix")

    @classmethod
    def line(cls, coords) -> "MetricSpace":
        return cls(np.asarray(coords, dtype=float).reshape(-1, 1))

    @classmethod
    def explicit(cls, matrix, points=None) -> "MetricSpace":
        m = np.asarray(matrix, dtype=float)
        pts = np.arange(m.shape[0], dtype=float).reshape(-1, 1) if points is None else points
        return cls(pts, "explicit", m)

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @cached_property
    def distances(self) -> np.ndarray:
        if self.distance_mode == "explicit":
            return self.distance_matrix
        diff = self.points[:, None, :] - self.points[None, :, :]
        d = np.sqrt(np.sum(diff * diff, axis=-1))
        d.setflags(write=False)
        return d

    def distance(self, i: int, j: int) -> float:
        return float(self.distances[i, j])

    def same_as(self, other: "MetricSpace") -> bool:
        if self is other:
            return True
        return (
            self.n == other.n
            and self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.distances, other.distances)
        )


def _check_metric(d: np.ndarray, n: int) -> None:
    if d.shape != (n, n):
        raise InvalidMetric(f"distance matrix must be {n}x{n}, got {d.shape}")
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise InvalidMetric("distances must be finite and nonnegative")
    if np.any(np.abs(np.diag(d)) > 0):
        raise InvalidMetric("diagonal of the distance matrix must vanish")
    if not np.array_equal(d, d.T):
        raise InvalidMetric("distance matrix must be symmetric")
    # d[i,k] <= d[i,j] + d[j,k] for all triples
    via = d[:, :, None] + d[None, :, :]
    worst = d - via.min(axis=1)
    if n and np.max(worst) > TRIANGLE_TOL * max(1.0, float(d.max())):
        raise InvalidMetric("triangle inequality violated")


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    space: MetricSpace
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1).copy()
        if w.shape[0] != self.space.n:
            raise SpaceMismatch(f"{w.shape[0]} weights for {self.space.n} points")
        if not np.all(np.isfinite(w)):
            raise ValidationError("weights must be finite")
        if np.any(w < 0):
            raise NegativeMass("weights must be nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    @property
    def support(self) -> np.ndarray:
        return np.nonzero(self.weights > 0)[0]

    def __add__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        _same_space(self.space, other.space)
        return DiscreteMeasure(self.space, self.weights + other.weights)

    def scaled(self, factor: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.space, self.weights * factor)


@dataclass(frozen=True, eq=False)
class Coupling:
    space: MetricSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float).copy()
        n = self.space.n
        if m.shape != (n, n):
            raise SpaceMismatch(f"coupling must be {n}x{n}, got {m.shape}")
        if np.any(m < 0):
            raise NegativeMass("coupling entries must be nonnegative")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def cost(self) -> float:
        return float(np.sum(self.space.distances * self.matrix))


def _same_space(a: MetricSpace, b: MetricSpace) -> None:
    if not a.same_as(b):
        raise SpaceMismatch("measures live on different metric spaces")


def marginals(pi: Coupling) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    return (
        DiscreteMeasure(pi.space, pi.matrix.sum(axis=1)),
        DiscreteMeasure(pi.space, pi.matrix.sum(axis=0)),
    )


def w1_distance(rho0: DiscreteMeasure, rho1: DiscreteMeasure, method: str = "simplex") -> tuple[float, Coupling]:
    """Balanced transport with cost ``d``; LP over the full bipartite plan."""
    from .lp import LinearProgram, lp_solve

    _same_space(rho0.space, rho1.space)
    space = rho0.space
    n = space.n
    if n == 0:
        raise EmptySpace("metric space has no points")
    m0, m1 = rho0.mass, rho1.mass
    if abs(m0 - m1) > MASS_TOL * max(1.0, m0):
        raise MassMismatch(f"masses differ: {m0!r} vs {m1!r}")
    if np.array_equal(rho0.weights, rho1.weights):
        return 0.0, Coupling(space, np.diag(rho0.weights))
    # Rescale the second marginal so the LP is exactly balanced.
    w1 = rho1.weights * (m0 / m1) if m1 > 0 else rho1.weights
    rows = np.zeros((2 * n, n * n))
    for i in range(n):
        rows[i, i * n : (i + 1) * n] = 1.0
        rows[n + i, i::n] = 1.0
    lp = LinearProgram(
        c=space.distances.reshape(-1),
        A=rows,
        b=np.concatenate([rho0.weights, w1]),
        senses=["="] * (2 * n),
    )
    res = lp_solve(lp, method=method)
    plan = np.maximum(res.x.reshape(n, n), 0.0)
    return float(np.sum(space.distances * plan)), Coupling(space, plan)


# -- JSON ----------------------------------------------------------------------

def space_from_json(doc: dict) -> MetricSpace:
    pts = doc.get("points")
    if pts is None:
        raise ValidationError("measure file needs 'points'")
    metric = doc.get("metric", "euclidean")
    arr = np.asarray(pts, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if metric == "euclidean":
        return MetricSpace(arr)
    if isinstance(metric, dict) and "matrix" in metric:
        return MetricSpace(arr, "explicit", np.asarray(metric["matrix"], dtype=float))
    raise InvalidMetric(f"unknown metric {metric!r}")


def measure_from_json(doc: dict, space: MetricSpace | None = None) -> DiscreteMeasure:
    sp = space_from_json(doc)
    if space is not None:
        if not sp.same_as(space):
            raise SpaceMismatch("measure files describe different spaces")
        sp = space
    w = doc.get("weights")
    if w is None or len(w) != sp.n:
        raise SpaceMismatch(f"weights must list one value per point ({sp.n})")
    return DiscreteMeasure(sp, w)


def load_measure(path: str | Path, space: MetricSpace | None = None) -> DiscreteMeasure:
    with open(path) as fh:
        return measure_from_json(json.load(fh), space)


def measure_to_json(rho: DiscreteMeasure) -> dict:
    sp = rho.space
    metric = "euclidean" if sp.distance_mode == "euclidean" else {"matrix": sp.distance_matrix.tolist()}
    return {"points": sp.points.tolist(), "metric": metric, "weights": rho.weights.tolist()}
