"""The alphabet M: a finite weighted point set with a metric of diameter <= 1."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

WEIGHT_SUM_TOL = 1e-12
CIRCLE_TOL = 1e-12

DISCRETE = "discrete"
CIRCLE_ARC = "circle-arc"

PROBABILITY = "probability"
COUNTING = "counting"


class StateSpaceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Alphabet points, their a priori weights, and the metric kind.

    ``coords`` has shape ``(N, d)``: one numeric coordinate vector per point.
    The constructor checks shapes only; use :func:`validate` for the
    measure-theoretic invariants.
    """

    labels: tuple
    coords: np.ndarray
    weights: np.ndarray
    metric_kind: str = DISCRETE
    _dist: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        weights = np.array(self.weights, dtype=float)
        if len(self.labels) != coords.shape[0] or weights.shape != (len(self.labels),):
            raise StateSpaceError("labels, coords and weights must have matching lengths")
        if self.metric_kind not in (DISCRETE, CIRCLE_ARC):
            raise StateSpaceError(f"unknown metric kind {self.metric_kind!r}")
        coords.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "_dist", _distance_matrix(coords, self.metric_kind))

    @property
    def size(self) -> int:
        return len(self.labels)

    def __len__(self) -> int:
        return self.size

    @property
    def distance(self) -> np.ndarray:
        return self._dist

    @property
    def diameter(self) -> float:
        return float(self._dist.max())

    @property
    def scalar_coords(self) -> np.ndarray:
        """Coordinates of a one-dimensional alphabet as a flat array."""
        if self.coords.shape[1] != 1:
            raise StateSpaceError("alphabet points are not scalars")
        return self.coords[:, 0]

    def index(self, label) -> int:
        return self.labels.index(label)

    def log_weights(self, convention: str = PROBABILITY) -> np.ndarray:
        """Log a priori masses.

        ``"counting"`` gives every point mass one, the classical unnormalized
        Ruelle operator on a finite alphabet.
        """
        if convention == PROBABILITY:
            with np.errstate(divide="ignore"):
                return np.log(self.weights)
        if convention == COUNTING:
            return np.zeros(self.size)
        raise StateSpaceError(f"unknown a priori convention {convention!r}")

    def same_as(self, other: "StateSpace") -> bool:
        return self is other or (
            self.labels == other.labels
            and self.metric_kind == other.metric_kind
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.coords, other.coords)
        )


def _distance_matrix(coords: np.ndarray, kind: str) -> np.ndarray:
    n = coords.shape[0]
    if kind == DISCRETE:
        d = 1.0 - np.eye(n)
    else:
        angles = np.arctan2(coords[:, 1], coords[:, 0])
        gap = np.abs(angles[:, None] - angles[None, :]) % (2 * math.pi)
        d = np.minimum(gap, 2 * math.pi - gap) / math.pi
    d.setflags(write=False)
    return d


def make_finite_alphabet(labels: Sequence, weights="uniform") -> StateSpace:
    """Finite alphabet with the discrete metric.

    Weights are rescaled to sum to one. Numeric labels double as the point
    coordinates; other labels get their position index.
    """
    labels = list(labels)
    if not labels:
        raise StateSpaceError("alphabet must contain at least one label")
    if len(set(labels)) != len(labels):
        raise StateSpaceError("alphabet labels must be distinct")
    if isinstance(weights, str):
        if weights != "uniform":
            raise StateSpaceError(f"unknown weight spec {weights!r}")
        w = np.full(len(labels), 1.0 / len(labels))
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(labels),):
            raise StateSpaceError(f"expected {len(labels)} weights, got {w.size}")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            bad = [i for i, v in enumerate(w) if not (v > 0 and math.isfinite(v))]
            raise StateSpaceError(f"weights must be positive; offending positions {bad}")
        w = w / w.sum()
    if all(isinstance(a, (int, float)) and not isinstance(a, bool) for a in labels):
        coords = np.array(labels, dtype=float)
    else:
        coords = np.arange(len(labels), dtype=float)
    return StateSpace(tuple(labels), coords, w, DISCRETE)


def make_circle(node_count: int) -> StateSpace:
    """Uniform quadrature nodes on the unit circle, arc metric scaled to diameter 1."""
    if int(node_count) != node_count or node_count < 2:
        raise StateSpaceError("node_count must be an integer >= 2")
    node_count = int(node_count)
    theta = 2 * math.pi * np.arange(node_count) / node_count
    coords = np.column_stack([np.cos(theta), np.sin(theta)])
    weights = np.full(node_count, 1.0 / node_count)
    return StateSpace(tuple(float(t) for t in theta), coords, weights, CIRCLE_ARC)


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple  # (name, passed, detail)

    @property
    def ok(self) -> bool:
        return all(passed for _, passed, _ in self.checks)

    def failed(self) -> list[str]:
        return [name for name, passed, _ in self.checks if not passed]


def validate(space: StateSpace) -> ValidationReport:
    w = space.weights
    checks = [
        ("nonempty", space.size >= 1, f"{space.size} points"),
        ("full_support", bool(space.size and np.all(w > 0)), f"min weight {w.min() if w.size else float('nan')}"),
        ("sum_to_one", bool(abs(w.sum() - 1.0) <= WEIGHT_SUM_TOL), f"sum {w.sum()!r}"),
        ("diameter_le_one", space.diameter <= 1.0 + 1e-15, f"diam {space.diameter}"),
    ]
    if space.metric_kind == CIRCLE_ARC:
        radii = np.hypot(space.coords[:, 0], space.coords[:, 1])
        checks.append(("on_unit_circle", bool(np.all(np.abs(radii - 1) <= CIRCLE_TOL)), f"max radius error {np.abs(radii - 1).max()}"))
    return ValidationReport(tuple(checks))
