"""L1 distances on the unit cube.

Exact integration is used wherever both sides are piecewise linear in one
dimension; tensor midpoint quadrature and seeded Monte Carlo serve as
cross-checks for everything else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInputError, ShapeError, UseMonteCarloError, DomainError
from .nets import ActivationKind, Net, activate
from .partition import Cpwl1D
from .quadrature import integrate_intervals

EXACT_CPWL = "exact_cpwl"
GRID_QUADRATURE = "grid_quadrature"
MONTE_CARLO = "monte_carlo"
ADAPTIVE_QUADRATURE = "adaptive_quadrature"

Z_99 = 2.576
KINK_MERGE_TOL = 1e-14
_BLOCK = 1 << 16


@dataclass(frozen=True)
class L1Report:
    value: float
    method: str
    n: int
    ci_halfwidth: Optional[float] = None
    seed: Optional[int] = None
    error_estimate: Optional[float] = None

    def __post_init__(self):
        if not self.value >= 0:
            raise DomainError(f"L1 value must be nonnegative, got {self.value}")
        if (self.ci_halfwidth is None) != (self.method != MONTE_CARLO):
            raise InvalidInputError("a confidence interval is reported iff the method is monte_carlo")

    @property
    def upper(self):
        """Value plus its CI halfwidth or quadrature error estimate."""
        return self.value + (self.ci_halfwidth or 0.0) + (self.error_estimate or 0.0)

    def to_dict(self):
        out = {"value": self.value, "method": self.method, "n": self.n}
        for key in ("ci_halfwidth", "seed", "error_estimate"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        return out


@dataclass(frozen=True)
class ClassMeasures:
    mu: np.ndarray


# -- one-dimensional exact engine ---------------------------------------------


def _kink_table(net):
    """Raw kinks inside (0, 1) with the unit that owns each one.

    Returns ``(kinks, units, levels)`` where ``levels`` is the exact value
    of the owning unit's activation at its own kink.
    """
    if net.input_dim != 1:
        raise InvalidInputError("kinks are only enumerated for one-dimensional nets")
    w = net.hidden_weights[:, 0]
    b = net.hidden_biases
    live = np.flatnonzero(w != 0)
    if net.activation is ActivationKind.RELU:
        k = -b[live] / w[live]
        units, levels = live, np.zeros(live.size)
    else:
        k = np.concatenate([(-0.5 - b[live]) / w[live], (0.5 - b[live]) / w[live]])
        units = np.concatenate([live, live])
        levels = np.concatenate([np.zeros(live.size), np.ones(live.size)])
    inside = (k > 0.0) & (k < 1.0)
    return k[inside], units[inside], levels[inside]


def _merge_kinks(k):
    k = np.sort(k)
    if k.size:
        keep = np.concatenate([[True], np.diff(k) > KINK_MERGE_TOL])
        k = k[keep]
        k = k[(k > KINK_MERGE_TOL) & (k < 1.0 - KINK_MERGE_TOL)]
    return k


def net_kinks_1d(net):
    """Sorted kink locations of a d=1 net inside (0, 1), near-duplicates merged."""
    return _merge_kinks(_kink_table(net)[0])


def net_to_cpwl_1d(net):
    """Canonical piecewise-linear form of a scalar d=1 net restricted to [0, 1].

    At a unit's own kink its pre-activation ``w*x + b`` is computed with
    cancellation, which for steep units leaves a residual far above one ulp
    of the output. Each unit's contribution at its own kink is therefore
    pinned to the exact regime value, so flat stretches stay flat.
    """
    if net.softmax_head:
        raise InvalidInputError("a softmax head does not produce a piecewise-linear function")
    if net.input_dim != 1 or net.output_count != 1:
        raise InvalidInputError("need a net with one input and one output")
    raw, units, levels = _kink_table(net)
    t = np.concatenate([[0.0], _merge_kinks(raw), [1.0]])
    values = net.logits(t)[:, 0]
    at = np.searchsorted(t, raw)
    hit = (at < t.size) & (t[np.minimum(at, t.size - 1)] == raw)
    if hit.any():
        at, units, levels = at[hit], units[hit], levels[hit]
        w = net.hidden_weights[units, 0]
        b = net.hidden_biases[units]
        a = net.output_weights[0, units]
        computed = activate(net.activation, w * t[at] + b)
        np.add.at(values, at, a * (levels - computed))
    return Cpwl1D(t, values)


def _abs_affine_integrals(h, d0, d1):
    """Integral of |affine| on segments of width h with end values d0, d1."""
    a0, a1 = np.abs(d0), np.abs(d1)
    same = (d0 * d1) >= 0
    denom = np.where(same, 1.0, a0 + a1)
    return np.where(same, 0.5 * h * (a0 + a1), 0.5 * h * (d0 * d0 + d1 * d1) / denom)


def exact_l1_distance_1d(a, b):
    """Exact integral of |a - b| over [0, 1] for two Cpwl1D functions."""
    t = np.union1d(a.breakpoints, b.breakpoints)
    diff = a(t) - b(t)
    parts = _abs_affine_integrals(np.diff(t), diff[:-1], diff[1:])
    return L1Report(math.fsum(parts), EXACT_CPWL, int(t.size - 1))


def exact_l1_step_vs_cpwl(s, c):
    """Exact integral of |s - c| for a step function and a Cpwl1D."""
    t = np.union1d(s.cuts, c.breakpoints)
    v = s(t[:-1])
    ct = c(t)
    parts = _abs_affine_integrals(np.diff(t), ct[:-1] - v, ct[1:] - v)
    return L1Report(math.fsum(parts), EXACT_CPWL, int(t.size - 1))


def exact_l1_step_vs_step(s, r):
    t = np.union1d(s.cuts, r.cuts)
    parts = np.diff(t) * np.abs(s(t[:-1]) - r(t[:-1]))
    return L1Report(math.fsum(parts), EXACT_CPWL, int(t.size - 1))


def _sign_change_roots(fn, t, samples):
    """Roots of ``fn`` bracketed by sign changes on a per-segment sample grid.

    Each segment of ``t`` is sampled at ``samples + 1`` evenly spaced
    points; every bracket with a strict sign change is narrowed by
    vectorized bisection to the floating-point resolution of its ends.
    """
    frac = np.linspace(0.0, 1.0, samples + 1)
    grid = (t[:-1, None] + np.diff(t)[:, None] * frac[None, :]).ravel()
    grid = np.unique(grid)
    y = np.asarray(fn(grid), dtype=float)
    hit = np.flatnonzero(np.sign(y[:-1]) * np.sign(y[1:]) < 0)
    lo, hi, ylo = grid[hit], grid[hit + 1], y[hit]
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        live = (mid > lo) & (mid < hi)
        if not live.any():
            break
        ym = np.asarray(fn(mid), dtype=float)
        left = np.sign(ym) == np.sign(ylo)
        lo = np.where(live & left, mid, lo)
        ylo = np.where(live & left, ym, ylo)
        hi = np.where(live & ~left, mid, hi)
    return 0.5 * (lo + hi)


def l1_function_1d(fn, breakpoints=(), tol=1e-11, root_samples=16):
    """Adaptive-quadrature integral of |fn| on [0, 1].

    ``breakpoints`` should hold every kink, jump and singularity of ``fn``
    so that each segment integrand is smooth. Zero crossings of ``fn``
    put a kink into ``|fn|``; those found by sampling each segment at
    ``root_samples`` points are located and added as extra breakpoints.
    ``tol`` is the total absolute tolerance, spread over the segments in
    proportion to their width.
    """
    t = np.union1d([0.0, 1.0], np.asarray(breakpoints, dtype=float))
    t = t[(t >= 0.0) & (t <= 1.0)]
    if root_samples:
        t = np.union1d(t, _sign_change_roots(fn, t, root_samples))
    h = np.diff(t)
    vals, errs = integrate_intervals(lambda x: np.abs(fn(x)), t[:-1], t[1:],
                                     tol=tol * h, points=t)
    return L1Report(math.fsum(vals), ADAPTIVE_QUADRATURE, int(h.size),
                    error_estimate=math.fsum(errs))


def indicator_l1_1d(net, spec, tol=1e-12):
    """Per-class L1 error of a softmax-headed d=1 net against an indicator.

    Segments are bounded by the cell cuts and every kink of the net, so on
    each segment the logits are affine and the indicator is constant; the
    smooth integrand is then resolved by adaptive quadrature.
    """
    if net.input_dim != 1 or spec.input_dim != 1:
        raise InvalidInputError("one-dimensional net and spec required")
    if net.output_count != spec.class_count:
        raise ShapeError("net outputs and class count differ")
    bps = np.union1d(net_kinks_1d(net), spec.axis_cuts[0])
    reports = []
    for i in range(spec.class_count):
        def err(x, i=i):
            return net(x)[:, i] - spec(x)[:, i]
        reports.append(l1_function_1d(err, breakpoints=bps, tol=tol))
    return reports


# -- general-dimension estimators ---------------------------------------------


def _as_callable(fn):
    if isinstance(fn, Net):
        return fn
    if callable(fn):
        return fn
    value = float(fn)
    return lambda X: np.full(np.shape(X)[0], value)


def _abs_diff(f, g, X):
    fx = np.asarray(f(X), dtype=float)
    gx = np.asarray(g(X), dtype=float)
    if fx.ndim == 1:
        fx = fx[:, None]
    if gx.ndim == 1:
        gx = gx[:, None]
    if fx.shape != gx.shape:
        raise ShapeError(f"functions disagree in output shape: {fx.shape} vs {gx.shape}")
    return np.abs(fx - gx)


def grid_l1_distance(f, g, input_dim, resolution):
    """Midpoint tensor rule for the L1 distance of two functions on [0,1]^d.

    Vector-valued functions are compared by the sum of component distances.
    Biased for kinked integrands; meant for cross-checks.
    """
    if input_dim > 3:
        raise UseMonteCarloError(f"grid quadrature supports d <= 3, got d={input_dim}; use monte carlo")
    if resolution < 2:
        raise DomainError("grid resolution must be at least 2")
    f, g = _as_callable(f), _as_callable(g)
    mids = (np.arange(resolution) + 0.5) / resolution
    total = resolution ** input_dim
    sums = []
    for start in range(0, total, _BLOCK):
        idx = np.arange(start, min(start + _BLOCK, total))
        coords = np.stack(np.unravel_index(idx, (resolution,) * input_dim), axis=1)
        sums.append(float(np.sum(_abs_diff(f, g, mids[coords]))))
    return L1Report(math.fsum(sums) / total, GRID_QUADRATURE, int(resolution))


def _block_rng(seed, block):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def mc_l1_distance(f, g, input_dim, n_samples, seed, componentwise=False):
    """Seeded Monte Carlo estimate of the L1 distance on [0,1]^d.

    Samples are drawn in fixed-size blocks, block ``k`` from its own child
    seed, and block statistics are merged in block order, so the estimate is
    a pure function of ``(f, g, n_samples, seed)``. The reported interval is
    the 99% normal-approximation halfwidth.

    With ``componentwise`` a list of reports (one per output) is returned;
    otherwise components are summed.
    """
    if n_samples < 100:
        raise DomainError("Monte Carlo needs at least 100 samples")
    f, g = _as_callable(f), _as_callable(g)
    count = 0
    mean = None
    m2 = None
    for block, start in enumerate(range(0, n_samples, _BLOCK)):
        size = min(_BLOCK, n_samples - start)
        X = _block_rng(seed, block).random((size, input_dim))
        y = _abs_diff(f, g, X)
        if not componentwise:
            y = y.sum(axis=1, keepdims=True)
        b_mean = y.mean(axis=0)
        b_m2 = ((y - b_mean) ** 2).sum(axis=0)
        if mean is None:
            mean, m2, count = b_mean, b_m2, size
            continue
        # Chan et al. pairwise merge
        delta = b_mean - mean
        total = count + size
        mean = mean + delta * size / total
        m2 = m2 + b_m2 + delta ** 2 * count * size / total
        count = total
    std = np.sqrt(m2 / (count - 1))
    half = Z_99 * std / math.sqrt(count)
    reports = [L1Report(float(mu), MONTE_CARLO, int(count), ci_halfwidth=float(ci), seed=seed)
               for mu, ci in zip(mean, half)]
    return reports if componentwise else reports[0]


def class_measures(spec):
    """Exact Lebesgue measure of each class region of an IndicatorSpec."""
    vol = spec.cell_volumes().reshape(-1)
    lab = spec.cell_labels.reshape(-1) - 1
    mu = np.array([math.fsum(vol[lab == i]) for i in range(spec.class_count)])
    return ClassMeasures(mu)
