"""Random-feature least-squares fitting of ReLU nets on [0,1]^d.

Hidden weights are drawn once from a seeded generator and frozen; only the
output layer is solved, by ridge-regularized normal equations. The result
is an ordinary :class:`~reluapprox.nets.Net`, so every output shares one
hidden layer. L1 error is always measured afterwards by Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import DomainError, SolverError
from .measure import mc_l1_distance
from .nets import ActivationKind, Net
from .surgery import indicator_logits

MAX_RIDGE = 1e-2

# child-seed slots; each consumer draws from its own stream
_HIDDEN, _TRAIN, _MEASURE = 0, 1, 2


def _rng(seed, slot):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(slot,)))


def sample_hidden_layer(input_dim, hidden_count, scale, seed):
    """Weights uniform in [-s, s]; biases uniform in [-s sqrt(d), s sqrt(d)].

    Weights are drawn first (row-major), then biases.
    """
    rng = _rng(seed, _HIDDEN)
    W = rng.uniform(-scale, scale, size=(hidden_count, input_dim))
    reach = scale * math.sqrt(input_dim)
    b = rng.uniform(-reach, reach, size=hidden_count)
    return W, b


def sample_inputs(input_dim, count, seed):
    return _rng(seed, _TRAIN).random((count, input_dim))


def relu_features(X, W, b):
    return np.maximum(X @ W.T + b, 0.0)


def solve_ridge(features, targets, ridge):
    """Minimize mean ||features @ coef - targets||^2 + ridge ||coef||^2.

    Solved through a Cholesky factorization of the normal equations, with
    one step of iterative refinement. If factorization fails the ridge is
    raised tenfold (up to 1e-2). Returns ``(coef, ridge_used)``.
    """
    if ridge < 0:
        raise DomainError("ridge must be nonnegative")
    N = features.shape[0]
    gram = features.T @ features / N
    rhs = features.T @ targets / N
    lam = ridge
    while True:
        try:
            factor = linalg.cho_factor(gram + lam * np.eye(gram.shape[0]), check_finite=False)
            break
        except linalg.LinAlgError:
            if lam == 0:
                raise SolverError("normal equations are singular at ridge=0; use ridge > 0") from None
            if lam * 10 > MAX_RIDGE:
                raise SolverError(f"normal equations stay singular up to ridge={lam:g}") from None
            lam *= 10
    coef = linalg.cho_solve(factor, rhs)
    if not np.all(np.isfinite(coef)):
        raise SolverError("least-squares solution is not finite; increase ridge")
    system = gram + lam * np.eye(gram.shape[0])
    coef = coef + linalg.cho_solve(factor, rhs - system @ coef)
    return coef, lam


def ridge_gradient(features, targets, coef, ridge):
    """Gradient of the ridge objective at ``coef``."""
    N = features.shape[0]
    return 2.0 * (features.T @ (features @ coef - targets) / N + ridge * coef)


class RandomFeatureReLURegressor(RegressorMixin, BaseEstimator):
    """Single-hidden-layer ReLU regressor with random frozen hidden units.

    Parameters
    ----------
    hidden_count : int
        Number of hidden units.
    scale : float
        Hidden weights are uniform in [-scale, scale].
    ridge : float
        L2 penalty on the output weights.
    random_state : int
        Seed; identical parameters give bit-identical fits.
    """

    def __init__(self, hidden_count=64, scale=4.0, ridge=1e-8, random_state=0):
        self.hidden_count = hidden_count
        self.scale = scale
        self.ridge = ridge
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True, dtype=float)
        if self.hidden_count < 1:
            raise DomainError("hidden_count must be at least 1")
        self._single_output = y.ndim == 1
        Y = y[:, None] if self._single_output else y
        W, b = sample_hidden_layer(X.shape[1], self.hidden_count, self.scale, self.random_state)
        features = relu_features(X, W, b)
        coef, self.ridge_used_ = solve_ridge(features, Y, self.ridge)
        self.coef_ = coef.T
        self.net_ = Net(W, b, self.coef_, ActivationKind.RELU)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=float)
        out = self.net_.logits(X)
        return out[:, 0] if self._single_output else out


class SoftmaxIndicatorClassifier(ClassifierMixin, BaseEstimator):
    """Softmax-headed ReLU net fitted to scaled one-hot logit targets.

    Labels are turned into one-hot rows ``f``; the pre-softmax outputs are
    regressed onto ``(2m/eps) * (f - 1/2)``. ``y`` may also be an (N, m)
    one-hot matrix, in which case the classes are ``1..m``.
    """

    def __init__(self, eps=0.1, hidden_count=256, scale=4.0, ridge=1e-8, random_state=0):
        self.eps = eps
        self.hidden_count = hidden_count
        self.scale = scale
        self.ridge = ridge
        self.random_state = random_state

    def fit(self, X, y):
        if not self.eps > 0:
            raise DomainError("eps must be positive")
        y = np.asarray(y)
        if y.ndim == 2:
            X, onehot = check_X_y(X, y, multi_output=True, dtype=float)
            self.classes_ = np.arange(1, onehot.shape[1] + 1)
        else:
            X, y = check_X_y(X, y, dtype=float)
            self.classes_, idx = np.unique(y, return_inverse=True)
            onehot = np.eye(self.classes_.size)[idx]
        m = self.classes_.size
        if m < 2:
            raise DomainError("need at least two classes")
        targets = (2.0 * m / self.eps) * (onehot - 0.5)
        reg = RandomFeatureReLURegressor(self.hidden_count, self.scale, self.ridge,
                                         self.random_state).fit(X, targets)
        self.ridge_used_ = reg.ridge_used_
        self.net_ = reg.net_.with_softmax_head()
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "net_")
        return self.net_(check_array(X, dtype=float))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


@dataclass(frozen=True)
class FitConfig:
    hidden_count: int
    scale: float = 4.0
    seed: int = 0
    ridge: float = 1e-8
    sample_count: int = 4096

    def __post_init__(self):
        if self.hidden_count < 1:
            raise DomainError("hidden_count must be at least 1")
        if self.ridge < 0:
            raise DomainError("ridge must be nonnegative")
        if self.sample_count < 1:
            raise DomainError("sample_count must be positive")

    def regressor(self):
        return RandomFeatureReLURegressor(self.hidden_count, self.scale, self.ridge, self.seed)


@dataclass(frozen=True)
class FitResult:
    net: Net
    report: object
    ridge_used: float


@dataclass(frozen=True)
class IndicatorFit:
    net: Net
    reports: list
    success: bool
    eps: float
    ridge_used: float

    def to_dict(self):
        return {"eps": self.eps, "success": self.success,
                "per_class": [r.to_dict() for r in self.reports]}


def fit_random_features(target, input_dim, cfg, mc_samples=100_000):
    """Fit ``target`` (scalar or m-vector valued) and measure the L1 error.

    The report compares the fitted pre-softmax outputs with the target on
    fresh Monte Carlo points (components summed for vector targets).
    """
    X = sample_inputs(input_dim, cfg.sample_count, cfg.seed)
    reg = cfg.regressor().fit(X, np.asarray(target(X), dtype=float))
    net = reg.net_
    report = mc_l1_distance(target, net.logits, input_dim, mc_samples, _measure_seed(cfg.seed))
    return FitResult(net, report, reg.ridge_used_)


def _measure_seed(seed):
    return int(np.random.SeedSequence(seed, spawn_key=(_MEASURE,)).generate_state(1)[0])


def fit_indicator_softmax(spec, eps, cfg, mc_samples=200_000):
    """Fit the scaled logit targets of ``spec`` and measure per-class error.

    Success means every class's Monte Carlo error estimate is below ``eps``.
    A miss is reported through ``success=False``, never raised.
    """
    logits = indicator_logits(spec, eps)
    X = sample_inputs(spec.input_dim, cfg.sample_count, cfg.seed)
    reg = cfg.regressor().fit(X, logits(X))
    net = reg.net_.with_softmax_head()
    reports = mc_l1_distance(net, spec, spec.input_dim, mc_samples, _measure_seed(cfg.seed),
                             componentwise=True)
    success = all(r.value < eps for r in reports)
    return IndicatorFit(net, reports, success, float(eps), reg.ridge_used_)
