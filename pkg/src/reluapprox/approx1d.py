"""Constructive ReLU approximation of integrable functions on [0, 1].

Pipeline: uniform-grid cell averages -> clipped-ramp (sigma1) superposition
with one ramp per jump -> ReLU net via the exact two-unit expansion. The
tolerance is split evenly between the averaging stage and the ramp stage.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .certificate import CERTIFIED, ApproxCertificate, Stage
from .errors import BudgetInfeasibleError, DomainError, InvalidInputError
from .measure import (
    exact_l1_distance_1d,
    exact_l1_step_vs_cpwl,
    exact_l1_step_vs_step,
    l1_function_1d,
    net_to_cpwl_1d,
)
from .nets import ActivationKind, Net
from .partition import Cpwl1D, StepFn1D
from .quadrature import integrate_intervals
from .surgery import sigma1_expand_to_relu

DEFAULT_MAX_CELLS = 2 ** 20
# relative slack added to analytic ramp bounds to absorb rounding in the
# realized weights; ramps are planned against a budget shrunk by twice this
# factor so the certificate still closes
ROUNDING_ALLOWANCE = 1e-9
_PLAN_SHRINK = 1.0 - 2.0 * ROUNDING_ALLOWANCE


@dataclass(frozen=True)
class Target1D:
    """A function on [0, 1] to approximate.

    ``breakpoints`` lists kinks, jumps and integrable singularities so that
    quadrature can split there. ``exact`` optionally carries an exact
    piecewise representation (Cpwl1D or StepFn1D) used for exact error
    measurement. ``lipschitz`` enables the analytic averaging bound L/(4k).
    """

    func: Callable
    name: str = "target"
    lipschitz: Optional[float] = None
    breakpoints: tuple = ()
    exact: object = None

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)


def _sign_half(x):
    return np.sign(x - 0.5)


TARGETS = {
    "x": Target1D(lambda x: x, "x", lipschitz=1.0, exact=Cpwl1D.identity()),
    "x2": Target1D(lambda x: x * x, "x2", lipschitz=2.0),
    "sin2pi": Target1D(lambda x: np.sin(2 * np.pi * x), "sin2pi", lipschitz=2 * np.pi),
    "sign": Target1D(_sign_half, "sign", breakpoints=(0.5,),
                     exact=StepFn1D([0.0, 0.5, 1.0], [-1.0, 1.0])),
    "rsqrt": Target1D(lambda x: 1.0 / np.sqrt(np.maximum(x, 1e-4)), "rsqrt",
                      breakpoints=(1e-4,)),
}


def get_target(name):
    try:
        return TARGETS[name]
    except KeyError:
        raise InvalidInputError(
            f"unknown target {name!r}; choose from {sorted(TARGETS)}") from None


def target_from_samples(path):
    """Piecewise-linear interpolant of ``x,value`` rows read from a CSV file.

    Outside the sampled range the end values are held constant.
    """
    xs, ys = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() in ("x", "#"):
                continue
            try:
                xs.append(float(row[0]))
                ys.append(float(row[1]))
            except (ValueError, IndexError):
                raise InvalidInputError(f"{path}: malformed sample row {row!r}") from None
    if len(xs) < 1:
        raise InvalidInputError(f"{path} contains no samples")
    order = np.argsort(xs, kind="stable")
    x, y = np.asarray(xs)[order], np.asarray(ys)[order]
    if x[0] < 0.0 or x[-1] > 1.0 or np.any(np.diff(x) <= 0):
        raise InvalidInputError("sample abscissae must be distinct and lie in [0, 1]")
    if x[0] > 0.0:
        x, y = np.concatenate([[0.0], x]), np.concatenate([[y[0]], y])
    if x[-1] < 1.0:
        x, y = np.concatenate([x, [1.0]]), np.concatenate([y, [y[-1]]])
    cpwl = Cpwl1D(x, y)
    lip = float(np.max(np.abs(cpwl.slopes)))
    return Target1D(cpwl, str(path), lipschitz=lip, exact=cpwl)


def step_approximate(f, k, tol=1e-10):
    """Uniform k-cell step function holding the cell averages of ``f``.

    Averages are computed by adaptive quadrature to ``tol`` per cell, with
    cells split at the target's declared breakpoints.
    """
    if k < 1:
        raise DomainError("need at least one cell")
    cuts = np.linspace(0.0, 1.0, k + 1)
    bps = np.asarray([p for p in f.breakpoints if 0.0 < p < 1.0], dtype=float)
    nodes = np.union1d(cuts, bps)
    owner = np.searchsorted(cuts, nodes[:-1], side="right") - 1
    width = 1.0 / k
    vals, _ = integrate_intervals(f, nodes[:-1], nodes[1:],
                                  tol=tol * np.diff(nodes), points=bps)
    totals = np.bincount(owner, weights=vals, minlength=k)
    return StepFn1D(cuts, totals / width)


def measure_step_error(f, step, tol=1e-11):
    """L1 distance between target and step function (exact when possible)."""
    if isinstance(f.exact, Cpwl1D):
        return exact_l1_step_vs_cpwl(step, f.exact)
    if isinstance(f.exact, StepFn1D):
        return exact_l1_step_vs_step(step, f.exact)
    return l1_function_1d(lambda x: f(x) - step(x),
                          breakpoints=np.union1d(step.cuts, f.breakpoints), tol=tol)


def measure_net_error(f, net, tol=1e-11):
    """L1 distance between a target and a scalar d=1 net (exact when possible)."""
    c = net_to_cpwl_1d(net)
    if isinstance(f.exact, Cpwl1D):
        return exact_l1_distance_1d(f.exact, c)
    if isinstance(f.exact, StepFn1D):
        return exact_l1_step_vs_cpwl(f.exact, c)
    return l1_function_1d(lambda x: f(x) - c(x),
                          breakpoints=np.union1d(c.breakpoints, f.breakpoints), tol=tol)


@dataclass(frozen=True)
class RampPlan:
    """Ramp placement for a step function.

    Jump ``t`` at ``positions[t]`` of height ``heights[t]`` is replaced by the
    ramp ``heights[t] * sigma1(slopes[t] * (x - positions[t]))``, which differs
    from the step only on a window of width ``1/slope`` centred on the jump,
    contributing exactly ``|h| / (4 s)`` of L1 error.
    """

    base: float
    positions: np.ndarray
    heights: np.ndarray
    slopes: np.ndarray

    @property
    def l1_bound(self):
        return math.fsum(np.abs(self.heights) / (4.0 * self.slopes))

    @property
    def window_measure(self):
        return math.fsum(1.0 / self.slopes)

    @property
    def sup_deviation(self):
        return float(np.max(np.abs(self.heights), initial=0.0))


def plan_ramps(step, ramp_budget, max_window_measure=None):
    """Choose one slope per nonzero jump.

    Each jump gets an equal share of ``ramp_budget``; slopes are raised where
    needed so that a ramp window never reaches past the middle of either
    neighbouring cell and, if ``max_window_measure`` is given, so that the
    windows have total measure at most that value.
    """
    if not ramp_budget > 0:
        raise DomainError("ramp budget must be positive")
    if max_window_measure is not None and not max_window_measure > 0:
        raise DomainError("window measure budget must be positive")
    h = step.jump_heights
    live = np.flatnonzero(h != 0)
    count = live.size
    if count == 0:
        empty = np.zeros(0)
        return RampPlan(float(step.values[0]), empty, empty, empty)
    share = ramp_budget * _PLAN_SHRINK / count
    slopes = np.abs(h[live]) / (4.0 * share)
    widths = np.diff(step.cuts)
    slopes = np.maximum(slopes, 1.0 / np.minimum(widths[live], widths[live + 1]))
    if max_window_measure is not None:
        slopes = np.maximum(slopes, count / (max_window_measure * _PLAN_SHRINK))
    return RampPlan(float(step.values[0]), step.cuts[live + 1].copy(), h[live].copy(), slopes)


def ramps_to_sigma1_net(plan):
    """Sigma1 net realizing a ramp plan.

    Unit 0 is saturated on all inputs (weight 0, bias 0.5) and carries the
    base value, so the output layer stays bias-free.
    """
    W = np.concatenate([[0.0], plan.slopes])[:, None]
    b = np.concatenate([[0.5], -plan.slopes * plan.positions])
    A = np.concatenate([[plan.base], plan.heights])[None, :]
    return Net(W, b, A, ActivationKind.SIGMA1)


def step_to_sigma1_net(step, ramp_budget, max_window_measure=None):
    """Sigma1 net within ``ramp_budget`` L1 distance of ``step``."""
    return ramps_to_sigma1_net(plan_ramps(step, ramp_budget, max_window_measure))


@dataclass(frozen=True)
class Build1D:
    net: Net
    certificate: ApproxCertificate
    step: StepFn1D
    plan: RampPlan
    measured: object = field(default=None)


def _choose_step(f, budget, max_cells, tol):
    if f.lipschitz is not None:
        need = f.lipschitz / (4.0 * budget)
        k = 1 if need <= 1 else 1 << math.ceil(math.log2(need))
        if k > max_cells:
            raise BudgetInfeasibleError(
                f"averaging stage needs {k} cells, above the cap of {max_cells}",
                achieved=f.lipschitz / (4.0 * max_cells))
        step = step_approximate(f, k)
        return step, f.lipschitz / (4.0 * k), "lipschitz_bound"
    k = 1
    while True:
        step = step_approximate(f, k)
        err = measure_step_error(f, step, tol=tol).upper
        if err <= budget:
            return step, err, "measured"
        if 2 * k > max_cells:
            raise BudgetInfeasibleError(
                f"averaging error {err:.3e} still above {budget:.3e} at {k} cells",
                achieved=err)
        k *= 2


def build_relu_approx_1d(f, eps, max_cells=DEFAULT_MAX_CELLS):
    """ReLU net with L1 distance below ``eps`` from ``f`` on [0, 1].

    Returns a :class:`Build1D` holding the net, its certificate, the
    intermediate step function and ramp plan, and the final measurement.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    step_budget = ramp_budget = eps / 2.0
    tol = min(1e-11, 1e-6 * step_budget)
    step, step_err, how = _choose_step(f, step_budget, max_cells, tol)
    plan = plan_ramps(step, ramp_budget)
    net = sigma1_expand_to_relu(ramps_to_sigma1_net(plan))
    ramp_err = plan.l1_bound * (1.0 + ROUNDING_ALLOWANCE)
    measured = measure_net_error(f, net, tol=tol)
    cert = ApproxCertificate(
        requested_eps=eps,
        stages=(Stage("step", step_budget, step_err), Stage("ramp", ramp_budget, ramp_err)),
        mode=CERTIFIED,
        details={
            "cells": step.cell_count,
            "jumps": int(plan.slopes.size),
            "step_bound_source": how,
            "measured": measured.value,
            "measured_method": measured.method,
            "hidden_units": net.hidden_count,
        },
    )
    if not measured.upper < eps:
        raise BudgetInfeasibleError(
            f"measured error {measured.value:.3e} is not below {eps}", achieved=measured.value)
    return Build1D(net, cert, step, plan, measured)
