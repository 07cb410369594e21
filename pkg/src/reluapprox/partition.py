"""Piecewise function types on the unit interval and grid class partitions."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidInputError, ShapeError


def _nodes(points, name):
    t = np.array(points, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise ShapeError(f"{name} needs at least two nodes")
    if t[0] != 0.0 or t[-1] != 1.0:
        raise DomainError(f"{name} must start at 0 and end at 1")
    if not np.all(np.diff(t) > 0):
        raise DomainError(f"{name} must be strictly increasing")
    t.setflags(write=False)
    return t


def _finite(values, size, name):
    v = np.array(values, dtype=float)
    if v.shape != (size,):
        raise ShapeError(f"{name} has shape {v.shape}, expected ({size},)")
    if not np.all(np.isfinite(v)):
        raise DomainError(f"{name} must be finite")
    v.setflags(write=False)
    return v


@dataclass(frozen=True, eq=False)
class StepFn1D:
    """Piecewise constant function; ``values[t]`` holds on ``[cuts[t], cuts[t+1])``.

    The last cell is closed at 1.
    """

    cuts: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        cuts = _nodes(self.cuts, "cuts")
        object.__setattr__(self, "cuts", cuts)
        object.__setattr__(self, "values", _finite(self.values, cuts.size - 1, "values"))

    @classmethod
    def uniform(cls, values):
        values = np.asarray(values, dtype=float)
        return cls(np.linspace(0.0, 1.0, values.size + 1), values)

    @property
    def cell_count(self):
        return self.values.size

    @property
    def jump_heights(self):
        return np.diff(self.values)

    def cell_index(self, x):
        idx = np.searchsorted(self.cuts, np.asarray(x, dtype=float), side="right") - 1
        return np.clip(idx, 0, self.cell_count - 1)

    def __call__(self, x):
        return self.values[self.cell_index(x)]


@dataclass(frozen=True, eq=False)
class Cpwl1D:
    """Continuous piecewise-linear function given by its nodes on [0, 1]."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = _nodes(self.breakpoints, "breakpoints")
        object.__setattr__(self, "breakpoints", t)
        object.__setattr__(self, "values", _finite(self.values, t.size, "values"))

    @classmethod
    def constant(cls, value):
        return cls([0.0, 1.0], [value, value])

    @classmethod
    def identity(cls):
        return cls([0.0, 1.0], [0.0, 1.0])

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.breakpoints, self.values)

    @property
    def slopes(self):
        return np.diff(self.values) / np.diff(self.breakpoints)


@dataclass(frozen=True, eq=False)
class IndicatorSpec:
    """Axis-aligned grid partition of the unit cube into labelled cells.

    Parameters
    ----------
    axis_cuts : sequence of sequences
        Interior cut points per axis, strictly increasing in (0, 1).
    cell_labels : array_like
        1-based class labels, row-major over the cell grid (may be given
        flat or already shaped).
    """

    input_dim: int
    class_count: int
    axis_cuts: tuple
    cell_labels: np.ndarray

    def __post_init__(self):
        d, m = int(self.input_dim), int(self.class_count)
        if d < 1:
            raise DomainError("input_dim must be positive")
        if m < 2:
            raise DomainError("an indicator needs at least two classes")
        if len(self.axis_cuts) != d:
            raise ShapeError(f"expected cut lists for {d} axes, got {len(self.axis_cuts)}")
        cuts = []
        for axis, c in enumerate(self.axis_cuts):
            c = np.array(c, dtype=float).reshape(-1)
            if c.size and (c[0] <= 0.0 or c[-1] >= 1.0 or np.any(np.diff(c) <= 0)):
                raise DomainError(f"cuts on axis {axis} must be strictly increasing in (0, 1)")
            c.setflags(write=False)
            cuts.append(c)
        shape = tuple(c.size + 1 for c in cuts)
        labels = np.array(self.cell_labels).reshape(-1)
        if labels.size != math.prod(shape):
            raise ShapeError(f"expected {math.prod(shape)} cell labels, got {labels.size}")
        if not np.all(np.equal(np.mod(labels, 1), 0)):
            raise InvalidInputError("cell labels must be integers")
        labels = labels.astype(int).reshape(shape)
        if labels.min() < 1 or labels.max() > m:
            raise InvalidInputError(f"cell labels must lie in 1..{m}")
        labels.setflags(write=False)
        object.__setattr__(self, "input_dim", d)
        object.__setattr__(self, "class_count", m)
        object.__setattr__(self, "axis_cuts", tuple(cuts))
        object.__setattr__(self, "cell_labels", labels)

    @property
    def grid_shape(self):
        return self.cell_labels.shape

    def edges(self, axis):
        return np.concatenate([[0.0], self.axis_cuts[axis], [1.0]])

    def cell_volumes(self):
        widths = [np.diff(self.edges(k)) for k in range(self.input_dim)]
        vol = widths[0]
        for w in widths[1:]:
            vol = np.multiply.outer(vol, w)
        return vol

    def cells(self):
        """Yield ``(lower_corner, upper_corner, label)`` for every cell."""
        edges = [self.edges(k) for k in range(self.input_dim)]
        for idx in itertools.product(*(range(s) for s in self.grid_shape)):
            lo = np.array([edges[k][i] for k, i in enumerate(idx)])
            hi = np.array([edges[k][i + 1] for k, i in enumerate(idx)])
            yield lo, hi, int(self.cell_labels[idx])

    def labels(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1 and self.input_dim == 1:
            X = X[:, None]
        X = np.atleast_2d(X)
        if X.shape[1] != self.input_dim:
            raise ShapeError(f"expected {self.input_dim} features, got {X.shape[1]}")
        idx = tuple(
            np.clip(np.searchsorted(self.axis_cuts[k], X[:, k], side="right"),
                    0, self.grid_shape[k] - 1)
            for k in range(self.input_dim))
        return self.cell_labels[idx]

    def __call__(self, X):
        """One-hot indicator values, shape (N, m)."""
        lab = self.labels(X)
        out = np.zeros((lab.size, self.class_count))
        out[np.arange(lab.size), lab - 1] = 1.0
        return out

    def class_step_functions(self, values_on=1.0, values_off=0.0):
        """Per-class StepFn1D for a one-dimensional spec."""
        if self.input_dim != 1:
            raise InvalidInputError("step functions exist only for one-dimensional specs")
        edges = self.edges(0)
        return [StepFn1D(edges, np.where(self.cell_labels == i + 1, values_on, values_off))
                for i in range(self.class_count)]

    # -- interchange -------------------------------------------------------

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "class_count": self.class_count,
            "axis_cuts": [c.tolist() for c in self.axis_cuts],
            "cell_labels": self.cell_labels.reshape(-1).tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(data["input_dim"], data["class_count"], data["axis_cuts"],
                       data["cell_labels"])
        except KeyError as exc:
            raise InvalidInputError(f"indicator document is missing field {exc}") from None

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    # -- constructors ------------------------------------------------------

    @classmethod
    def half_split(cls, input_dim=1, axis=0, at=0.5):
        """Two classes separated by the hyperplane ``x[axis] = at``."""
        cuts = [[] for _ in range(input_dim)]
        cuts[axis] = [at]
        shape = [1] * input_dim
        shape[axis] = 2
        labels = np.ones(shape, dtype=int)
        labels[(slice(None),) * axis + (1,)] = 2
        return cls(input_dim, 2, cuts, labels)

    @classmethod
    def random(cls, rng, input_dim, class_count, max_cuts=4):
        """Random grid spec; cut points are drawn uniformly and sorted."""
        cuts = []
        for _ in range(input_dim):
            k = int(rng.integers(0, max_cuts + 1))
            c = np.unique(rng.uniform(0.02, 0.98, size=k))
            cuts.append(c)
        shape = [c.size + 1 for c in cuts]
        labels = rng.integers(1, class_count + 1, size=shape)
        return cls(input_dim, class_count, cuts, labels)
