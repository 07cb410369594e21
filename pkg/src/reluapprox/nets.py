"""Single-hidden-layer networks with ReLU or clipped-ramp hidden units.

A network computes, for every output ``i``,

    g_i(x) = sum_j A[i, j] * act(W[j] . x + b[j])

optionally followed by a softmax over the outputs. Evaluation is plain
double precision and is not restricted to the unit cube.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidInputError, ShapeError

_ACTIVATION_BLOCK = 1 << 22


class ActivationKind(enum.Enum):
    RELU = "relu"
    SIGMA1 = "sigma1"


def activate(kind, t):
    """Vectorized hidden-unit activation.

    ``SIGMA1`` is the clipped ramp: 0 for t <= -0.5, t + 0.5 in between and
    1 for t >= 0.5. Both breakpoints evaluate to the closed-branch values.
    """
    t = np.asarray(t, dtype=float)
    kind = ActivationKind(kind)
    if kind is ActivationKind.RELU:
        return np.maximum(t, 0.0)
    return np.clip(t + 0.5, 0.0, 1.0)


def eval_hidden_unit(kind, t):
    """Scalar activation; raises ``DomainError`` for non-finite input."""
    t = float(t)
    if not math.isfinite(t):
        raise DomainError(f"activation argument must be finite, got {t}")
    return float(activate(kind, t))


def softmax(logits, axis=-1):
    """Max-shifted softmax; safe for arbitrarily large finite logits."""
    z = np.asarray(logits, dtype=float)
    if z.size == 0 or z.shape[axis] == 0:
        raise DomainError("softmax of an empty vector is undefined")
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def _frozen(a, ndim, name):
    a = np.array(a, dtype=float)
    if a.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} contains non-finite entries")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Net:
    """Immutable single-hidden-layer network.

    Parameters
    ----------
    hidden_weights : array of shape (n, d)
        Row ``j`` is the input weight vector of hidden unit ``j``.
    hidden_biases : array of shape (n,)
    output_weights : array of shape (m, n)
    activation : ActivationKind or str
    softmax_head : bool
        If set, outputs are passed through a softmax (requires m >= 2).
    """

    hidden_weights: np.ndarray
    hidden_biases: np.ndarray
    output_weights: np.ndarray
    activation: ActivationKind = ActivationKind.RELU
    softmax_head: bool = False

    def __post_init__(self):
        W = _frozen(self.hidden_weights, 2, "hidden_weights")
        b = _frozen(self.hidden_biases, 1, "hidden_biases")
        A = _frozen(self.output_weights, 2, "output_weights")
        n, d = W.shape
        if n < 1 or d < 1:
            raise ShapeError(f"need n >= 1 hidden units and d >= 1 inputs, got {W.shape}")
        if b.shape != (n,):
            raise ShapeError(f"hidden_biases has shape {b.shape}, expected ({n},)")
        if A.ndim != 2 or A.shape[1] != n or A.shape[0] < 1:
            raise ShapeError(f"output_weights has shape {A.shape}, expected (m, {n})")
        if self.softmax_head and A.shape[0] < 2:
            raise InvalidInputError("a softmax head needs at least two outputs")
        object.__setattr__(self, "hidden_weights", W)
        object.__setattr__(self, "hidden_biases", b)
        object.__setattr__(self, "output_weights", A)
        object.__setattr__(self, "activation", ActivationKind(self.activation))
        object.__setattr__(self, "softmax_head", bool(self.softmax_head))

    @property
    def input_dim(self):
        return self.hidden_weights.shape[1]

    @property
    def hidden_count(self):
        return self.hidden_weights.shape[0]

    @property
    def output_count(self):
        return self.output_weights.shape[0]

    def _check_inputs(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1 and self.input_dim == 1:
            X = X[:, None]
        X = np.atleast_2d(X)
        if X.shape[-1] != self.input_dim:
            raise ShapeError(f"expected inputs with {self.input_dim} features, got {X.shape[-1]}")
        return X

    def hidden_activations(self, X):
        X = self._check_inputs(X)
        return activate(self.activation, X @ self.hidden_weights.T + self.hidden_biases)

    def logits(self, X):
        """Pre-softmax outputs for a batch, shape (N, m).

        Rows are processed in blocks so the (N, n) activation matrix never
        exceeds a few million entries for wide nets.
        """
        X = self._check_inputs(X)
        rows = max(1, _ACTIVATION_BLOCK // self.hidden_count)
        if X.shape[0] <= rows:
            return self.hidden_activations(X) @ self.output_weights.T
        return np.concatenate([self.hidden_activations(X[i:i + rows]) @ self.output_weights.T
                               for i in range(0, X.shape[0], rows)])

    def __call__(self, X):
        """Network outputs for a batch, shape (N, m)."""
        z = self.logits(X)
        return softmax(z, axis=1) if self.softmax_head else z

    def with_softmax_head(self, enabled=True):
        return Net(self.hidden_weights, self.hidden_biases, self.output_weights,
                   self.activation, enabled)

    def structurally_equal(self, other):
        return (self.activation is other.activation
                and self.softmax_head == other.softmax_head
                and np.array_equal(self.hidden_weights, other.hidden_weights)
                and np.array_equal(self.hidden_biases, other.hidden_biases)
                and np.array_equal(self.output_weights, other.output_weights))

    # -- interchange -------------------------------------------------------

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "hidden_count": self.hidden_count,
            "output_count": self.output_count,
            "activation": self.activation.value,
            "softmax_head": self.softmax_head,
            "hidden_weights": self.hidden_weights.tolist(),
            "hidden_biases": self.hidden_biases.tolist(),
            "output_weights": self.output_weights.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        try:
            net = cls(
                hidden_weights=data["hidden_weights"],
                hidden_biases=data["hidden_biases"],
                output_weights=data["output_weights"],
                activation=data["activation"],
                softmax_head=data.get("softmax_head", False),
            )
        except KeyError as exc:
            raise InvalidInputError(f"network document is missing field {exc}") from None
        declared = (data.get("input_dim"), data.get("hidden_count"), data.get("output_count"))
        actual = (net.input_dim, net.hidden_count, net.output_count)
        if any(x is not None and x != y for x, y in zip(declared, actual)):
            raise ShapeError(f"declared dimensions {declared} disagree with arrays {actual}")
        return net

    def to_json(self):
        # float repr is the shortest string that round-trips bit-identically
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def eval_net(net, x):
    """Evaluate ``net`` at a single input vector of length d."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != net.input_dim:
        raise ShapeError(f"expected a vector of length {net.input_dim}, got shape {x.shape}")
    return net(x[None, :])[0]
