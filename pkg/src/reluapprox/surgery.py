"""Exact network transformations and the softmax indicator construction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .certificate import CERTIFIED, MEASURED, ApproxCertificate, Stage
from .errors import BudgetInfeasibleError, DomainError, InvalidInputError
from .measure import class_measures
from .nets import ActivationKind, Net


def sigma1_expand_to_relu(net):
    """Rewrite a sigma1 net as an equivalent ReLU net with twice the units.

    Uses sigma1(t) = ReLU(t + 0.5) - ReLU(t - 0.5): units 1..n keep their
    weights with bias + 0.5 and output weight alpha; units n+1..2n repeat
    the weights with bias - 0.5 and output weight -alpha.
    """
    if net.activation is not ActivationKind.SIGMA1:
        raise InvalidInputError("expansion takes a sigma1 net; ReLU nets have no inverse rewrite here")
    W = np.vstack([net.hidden_weights, net.hidden_weights])
    b = np.concatenate([net.hidden_biases + 0.5, net.hidden_biases - 0.5])
    A = np.hstack([net.output_weights, -net.output_weights])
    return Net(W, b, A, ActivationKind.RELU, net.softmax_head)


def stack_outputs(first, second):
    """Single net whose outputs are those of ``first`` followed by ``second``.

    Hidden layers are concatenated and the output matrix is block diagonal,
    so each output group only sees its own hidden units.
    """
    if first.input_dim != second.input_dim:
        raise InvalidInputError(
            f"input dimensions differ: {first.input_dim} vs {second.input_dim}")
    if first.activation is not second.activation:
        raise InvalidInputError("both nets must use the same activation")
    if first.softmax_head or second.softmax_head:
        raise InvalidInputError("stacking is defined on pre-softmax nets only")
    m1, n1 = first.output_weights.shape
    m2, n2 = second.output_weights.shape
    A = np.zeros((m1 + m2, n1 + n2))
    A[:m1, :n1] = first.output_weights
    A[m1:, n1:] = second.output_weights
    return Net(np.vstack([first.hidden_weights, second.hidden_weights]),
               np.concatenate([first.hidden_biases, second.hidden_biases]),
               A, first.activation)


def stack_all(nets):
    out = nets[0]
    for net in nets[1:]:
        out = stack_outputs(out, net)
    return out


@dataclass(frozen=True)
class IndicatorLogits:
    """Scaled indicator targets (2m/eps) * (f_i - 1/2).

    Each class logit is ``high = m/eps`` on its own region and
    ``low = -m/eps`` elsewhere.
    """

    spec: object
    eps: float

    @property
    def scale(self):
        return 2.0 * self.spec.class_count / self.eps

    @property
    def high(self):
        return self.spec.class_count / self.eps

    @property
    def low(self):
        return -self.high

    def __call__(self, X):
        return self.scale * (self.spec(X) - 0.5)

    def step_functions(self):
        return self.spec.class_step_functions(self.high, self.low)


def indicator_logits(spec, eps):
    if not eps > 0:
        raise DomainError("eps must be positive")
    return IndicatorLogits(spec, float(eps))


def _tail_factor(m, eps):
    # 1 / (exp(2m/eps) + m - 1), written to stay finite for huge exponents
    q = math.exp(-2.0 * m / eps)
    return q / (1.0 + (m - 1) * q)


def indicator_error_closed_form(spec, eps):
    """Per-class L1 distance between softmax of the scaled targets and f.

    On a class's own region the softmax output falls short of 1 by
    (m-1)/(e^{2m/eps} + m - 1); elsewhere it exceeds 0 by
    1/(e^{2m/eps} + m - 1). Weighting by the class measure mu_i gives
    [mu_i (m-1) + (1 - mu_i)] / (e^{2m/eps} + m - 1).
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    m = spec.class_count
    mu = class_measures(spec).mu
    return (mu * (m - 1) + (1.0 - mu)) * _tail_factor(m, eps)


@dataclass(frozen=True)
class TailBound:
    bound: float
    guarantee: float
    swapped_exponent_value: float

    def to_dict(self):
        return {"bound": self.bound, "guarantee": self.guarantee,
                "swapped_exponent_value": self.swapped_exponent_value}


def theorem2_bound(m, eps):
    """Tail bound m * exp(-2m/eps) on the per-class indicator error.

    ``guarantee`` is eps/2, which dominates the bound because
    exp(-x) <= 1/x with x = 2m/eps. ``swapped_exponent_value`` is
    m * exp(-2 eps/m), the same expression with m and eps swapped in the
    exponent, kept for comparison; it does not follow from the logit
    scaling and is not a valid bound in general.
    """
    if int(m) != m or m < 2:
        raise DomainError("m must be an integer >= 2")
    if not eps > 0:
        raise DomainError("eps must be positive")
    return TailBound(m * math.exp(-2.0 * m / eps), eps / 2.0, m * math.exp(-2.0 * eps / m))


def build_softmax_indicator_net(spec, eps, backend=None):
    """ReLU net with softmax head approximating an indicator to within eps per class.

    With ``backend=None`` and a one-dimensional spec the construction is
    certified: each scaled class target is a step function realized exactly
    off small ramp windows (the per-class windows have total measure
    <= eps/(4m)), so the logits match the targets everywhere except on a
    set of measure <= eps/4 where softmax outputs can move by at most 1.
    The softmax tail of the exact targets adds the closed-form error,
    which is below eps/2.

    Passing a :class:`reluapprox.fitnd.FitConfig` as ``backend`` uses
    random-feature least squares instead; the certificate is then
    ``measured``.

    Returns ``(net, certificate)``.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    if backend is not None:
        return _build_measured(spec, eps, backend)
    if spec.input_dim != 1:
        raise InvalidInputError("the certified construction needs a one-dimensional spec; "
                                "pass a FitConfig backend for d >= 2")
    from .approx1d import plan_ramps, ramps_to_sigma1_net, ROUNDING_ALLOWANCE
    from .measure import indicator_l1_1d

    m = spec.class_count
    logits = indicator_logits(spec, eps)
    window_budget = eps / (4.0 * m)
    plans = []
    for step in logits.step_functions():
        # the jump-height ramp budget matching the window budget exactly
        ramp_budget = logits.scale * window_budget / 4.0
        plans.append(plan_ramps(step, ramp_budget, max_window_measure=window_budget))
    net = stack_all([sigma1_expand_to_relu(ramps_to_sigma1_net(p)) for p in plans])
    net = net.with_softmax_head()

    window = math.fsum(p.window_measure for p in plans) * (1.0 + ROUNDING_ALLOWANCE)
    closed = indicator_error_closed_form(spec, eps)
    tail = theorem2_bound(m, eps)
    measured = indicator_l1_1d(net, spec)
    per_class = [r.value for r in measured]
    cert = ApproxCertificate(
        requested_eps=eps,
        stages=(Stage("logit_approximation", eps / 2.0, window),
                Stage("softmax_tail", eps / 2.0, float(np.max(closed)))),
        mode=CERTIFIED,
        details={
            "delta_sup": 0.0,
            "delta_measure": window_budget,
            "per_class_certified": (window + closed).tolist(),
            "closed_form": closed.tolist(),
            "tail_bound": tail.to_dict(),
            "measured_per_class": per_class,
            "measured_sum": math.fsum(per_class),
            "measured_method": measured[0].method,
            "hidden_units": net.hidden_count,
        },
    )
    worst = max(r.upper for r in measured)
    if not worst < eps:
        raise BudgetInfeasibleError(f"measured per-class error {worst:.3e} is not below {eps}",
                                    achieved=worst)
    return net, cert


def _build_measured(spec, eps, cfg):
    from .fitnd import fit_indicator_softmax

    fit = fit_indicator_softmax(spec, eps, cfg)
    per_class = [r.value for r in fit.reports]
    cert = ApproxCertificate(
        requested_eps=eps,
        stages=(Stage("measured_per_class_max", eps, max(per_class)),),
        mode=MEASURED,
        details={
            "measured_per_class": per_class,
            "ci_halfwidth": [r.ci_halfwidth for r in fit.reports],
            "measured_sum": math.fsum(per_class),
            "measured_method": fit.reports[0].method,
            "hidden_units": fit.net.hidden_count,
        },
    )
    if not fit.success:
        raise BudgetInfeasibleError(
            f"fitted per-class error {max(per_class):.3e} is not below {eps}",
            achieved=max(per_class))
    return fit.net, cert
