"""Command-line interface.

Subcommands: build, transform, fit, verify, sweep, bound, replay.

Exit codes: 0 success, 1 internal error, 2 precondition or budget failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .approx1d import (
    DEFAULT_MAX_CELLS,
    TARGETS,
    build_relu_approx_1d,
    get_target,
    measure_net_error,
    target_from_samples,
)
from .errors import (
    BudgetInfeasibleError,
    DomainError,
    IntegrationError,
    InvalidInputError,
    ShapeError,
    SolverError,
    UseMonteCarloError,
)
from .fitnd import FitConfig, fit_indicator_softmax, fit_random_features
from .measure import grid_l1_distance, indicator_l1_1d, mc_l1_distance
from .nets import Net
from .partition import IndicatorSpec
from .surgery import (
    build_softmax_indicator_net,
    indicator_error_closed_form,
    sigma1_expand_to_relu,
    stack_all,
    theorem2_bound,
)

EXIT_OK, EXIT_INTERNAL, EXIT_PRECONDITION = 0, 1, 2
VERIFY_POINTS = 10_000
VERIFY_TOL = 1e-12

_PRECONDITION_ERRORS = (DomainError, InvalidInputError, ShapeError, UseMonteCarloError,
                        SolverError, IntegrationError, FileNotFoundError,
                        json.JSONDecodeError)


class PreconditionFailed(Exception):
    pass


# d >= 2 fit targets, addressed by name
FIT_TARGETS = {
    "x": (1, lambda X: X[:, 0]),
    "x1x2": (2, lambda X: X[:, 0] * X[:, 1]),
    "zero": (None, lambda X: np.zeros(X.shape[0])),
    "prod": (None, lambda X: np.prod(X, axis=1)),
}


def write_atomic(path, text):
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj):
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _names(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _load_net(path):
    with open(path) as fh:
        return Net.from_json(fh.read())


def _load_spec(path):
    with open(path) as fh:
        return IndicatorSpec.from_json(fh.read())


# -- commands -----------------------------------------------------------------


def cmd_build(args, outputs):
    target = target_from_samples(args.samples) if args.samples else get_target(args.target)
    result = build_relu_approx_1d(target, args.eps, max_cells=args.max_cells)
    cert_path = args.cert or _sibling(args.out, ".cert.json")
    write_atomic(args.out, result.net.to_json() + "\n")
    write_atomic(cert_path, result.certificate.to_json() + "\n")
    outputs += [args.out, cert_path]
    cert = result.certificate
    print(dump_json({"total_achieved": cert.total_achieved, "measured": result.measured.value,
                     "hidden_units": result.net.hidden_count}), end="")
    if not (cert.is_sound() and cert.total_achieved < args.eps):
        raise PreconditionFailed(f"certificate total {cert.total_achieved} not below {args.eps}")
    return EXIT_OK


def _sibling(path, suffix):
    root, _ = os.path.splitext(path)
    return root + suffix


def _verify_equivalence(reference, transformed, dim, seed):
    X = np.random.default_rng(seed).random((VERIFY_POINTS, dim))
    dev = float(np.max(np.abs(reference(X) - transformed.logits(X))))
    if not dev <= VERIFY_TOL:
        raise RuntimeError(f"transform changed the function: max deviation {dev:.3e}")
    return dev


def cmd_transform(args, outputs):
    nets = [_load_net(p) for p in args.inputs]
    op = args.op
    deviation = None
    if op == "expand":
        if len(nets) != 1:
            raise PreconditionFailed("expand takes exactly one input net")
        out = sigma1_expand_to_relu(nets[0])
        if args.verify:
            deviation = _verify_equivalence(nets[0].logits, out, out.input_dim, args.seed)
    elif op == "stack":
        if len(nets) < 2:
            raise PreconditionFailed("stack needs at least two input nets")
        out = stack_all(nets)
        if args.verify:
            deviation = _verify_equivalence(
                lambda X: np.hstack([n.logits(X) for n in nets]), out, out.input_dim, args.seed)
    else:
        if len(nets) != 1:
            raise PreconditionFailed("softmax-wrap takes exactly one input net")
        if nets[0].output_count < 2:
            raise PreconditionFailed("softmax-wrap needs a net with m >= 2 outputs")
        out = nets[0].with_softmax_head()
    write_atomic(args.out, out.to_json() + "\n")
    outputs.append(args.out)
    print(dump_json({"op": op, "hidden_count": out.hidden_count,
                     "output_count": out.output_count, "max_deviation": deviation}), end="")
    return EXIT_OK


def _fit_config(args):
    return FitConfig(hidden_count=args.hidden_count, scale=args.scale, seed=args.seed,
                     ridge=args.ridge, sample_count=args.sample_count)


def cmd_fit(args, outputs):
    cfg = _fit_config(args)
    if args.spec:
        if args.eps is None:
            raise PreconditionFailed("--eps is required with --spec")
        spec = _load_spec(args.spec)
        fit = fit_indicator_softmax(spec, args.eps, cfg, mc_samples=args.mc_samples)
        net, report = fit.net, fit.to_dict()
        ok = fit.success
    else:
        if args.target not in FIT_TARGETS:
            raise PreconditionFailed(f"unknown fit target {args.target!r}; "
                                     f"choose from {sorted(FIT_TARGETS)}")
        dim, fn = FIT_TARGETS[args.target]
        dim = dim or args.dim
        fit = fit_random_features(fn, dim, cfg, mc_samples=args.mc_samples)
        net, report = fit.net, fit.report.to_dict()
        ok = args.eps is None or fit.report.upper < args.eps
    report["config"] = {"hidden_count": cfg.hidden_count, "scale": cfg.scale, "seed": cfg.seed,
                        "ridge": cfg.ridge, "sample_count": cfg.sample_count}
    report_path = args.report or _sibling(args.out, ".report.json")
    write_atomic(args.out, net.to_json() + "\n")
    write_atomic(report_path, dump_json(report))
    outputs += [args.out, report_path]
    print(dump_json(report), end="")
    return EXIT_OK if ok else EXIT_PRECONDITION


def _verify_reports(args, net):
    method = args.method
    if args.spec:
        spec = _load_spec(args.spec)
        if spec.input_dim != net.input_dim or spec.class_count != net.output_count:
            raise PreconditionFailed("net and spec disagree in dimension or class count")
        if method == "exact":
            if net.input_dim != 1 or not net.softmax_head:
                raise PreconditionFailed("exact verification needs a d=1 softmax net")
            return indicator_l1_1d(net, spec)
        if method == "grid":
            return [grid_l1_distance(lambda X, i=i: net(X)[:, i], lambda X, i=i: spec(X)[:, i],
                                     net.input_dim, args.resolution)
                    for i in range(spec.class_count)]
        return mc_l1_distance(net, spec, net.input_dim, args.n_samples, args.seed,
                              componentwise=True)

    if args.samples or args.target:
        target = target_from_samples(args.samples) if args.samples else get_target(args.target)
        if net.input_dim != 1 or net.output_count != 1 or net.softmax_head:
            raise PreconditionFailed("1-D targets need a scalar d=1 net without softmax head")
        fn, g = (lambda X: target(X[:, 0])), (lambda X: net.logits(X)[:, 0])
        dim = 1
        if method == "exact":
            return [measure_net_error(target, net)]
    elif args.fit_target:
        dim, fn = FIT_TARGETS[args.fit_target]
        dim = dim or net.input_dim
        if dim != net.input_dim:
            raise PreconditionFailed("fit target dimension differs from the net's")
        g = lambda X: net.logits(X)[:, 0]
        if method == "exact":
            if dim != 1:
                raise PreconditionFailed("exact verification requires d = 1")
            raise PreconditionFailed("exact verification needs a 1-D --target or --samples")
    else:
        raise PreconditionFailed("give one of --target, --samples, --spec, --fit-target")
    if method == "grid":
        return [grid_l1_distance(fn, g, dim, args.resolution)]
    return [mc_l1_distance(fn, g, dim, args.n_samples, args.seed)]


def cmd_verify(args, outputs):
    net = _load_net(args.net)
    reports = _verify_reports(args, net)
    doc = reports[0].to_dict() if len(reports) == 1 and not args.spec else {
        "per_class": [r.to_dict() for r in reports]}
    if args.out:
        write_atomic(args.out, dump_json(doc))
        outputs.append(args.out)
    print(dump_json(doc), end="")
    if args.eps is not None and not all(
            r.value + (r.ci_halfwidth or 0.0) < args.eps for r in reports):
        return EXIT_PRECONDITION
    return EXIT_OK


SWEEP_COLUMNS = ["kind", "target", "m", "eps", "seed", "status", "method", "value", "ci",
                 "closed_form", "tail_bound", "half_eps", "hidden_units", "seconds"]


def _sweep_rows(args):
    targets, eps_grid, ms, seeds = (_names(args.targets), _floats(args.eps),
                                    _ints(args.m), _ints(args.seeds))
    if not eps_grid or not (targets or ms) or not seeds:
        raise PreconditionFailed("sweep grids must be non-empty")
    for name in targets:
        get_target(name)
    for name in targets:
        for eps in eps_grid:
            row = dict(kind="build", target=name, eps=eps)
            start = time.perf_counter()
            try:
                result = build_relu_approx_1d(get_target(name), eps, max_cells=args.max_cells)
                row.update(status="ok", method=result.measured.method,
                           value=result.measured.value, hidden_units=result.net.hidden_count)
            except BudgetInfeasibleError as exc:
                row.update(status="infeasible", value=exc.achieved)
            row["seconds"] = round(time.perf_counter() - start, 4)
            yield row
    for m in ms:
        for eps in eps_grid:
            for seed in seeds:
                row = dict(kind="indicator", target="random_grid_1d", m=m, eps=eps, seed=seed)
                start = time.perf_counter()
                spec = IndicatorSpec.random(np.random.default_rng(seed), 1, m)
                tail = theorem2_bound(m, eps)
                row.update(closed_form=float(np.max(indicator_error_closed_form(spec, eps))),
                           tail_bound=tail.bound, half_eps=tail.guarantee)
                try:
                    net, cert = build_softmax_indicator_net(spec, eps)
                    row.update(status="ok", method=cert.details["measured_method"],
                               value=max(cert.details["measured_per_class"]),
                               hidden_units=net.hidden_count)
                except BudgetInfeasibleError as exc:
                    row.update(status="infeasible", value=exc.achieved)
                row["seconds"] = round(time.perf_counter() - start, 4)
                yield row


def cmd_sweep(args, outputs):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, restval="", lineterminator="\n")
    writer.writeheader()
    for row in _sweep_rows(args):
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    write_atomic(args.out, buf.getvalue())
    outputs.append(args.out)
    return EXIT_OK


def cmd_bound(args, outputs):
    ms, eps_grid = _ints(args.m), _floats(args.eps)
    if not ms or not eps_grid:
        raise PreconditionFailed("bound needs non-empty --m and --eps lists")
    rows = []
    for m in ms:
        for eps in eps_grid:
            tb = theorem2_bound(m, eps)
            rows.append(dict(m=m, eps=eps, **tb.to_dict(), holds=tb.bound <= tb.guarantee))
    text = dump_json(rows)
    if args.out:
        write_atomic(args.out, text)
        outputs.append(args.out)
    print(text, end="")
    return EXIT_OK


def cmd_replay(args, outputs):
    with open(args.manifest_in) as fh:
        manifest = json.load(fh)
    argv = list(manifest["argv"])
    return main(argv)


# -- parser -------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="reluapprox", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.set_defaults(func=func)
        p.add_argument("--manifest", help="write a run manifest to this path")
        return p

    p = add("build", cmd_build, "constructive certified ReLU approximation of a 1-D target")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--target", choices=sorted(TARGETS))
    src.add_argument("--samples", help="CSV of x,value rows (piecewise-linear target)")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--out", default="net.json")
    p.add_argument("--cert")
    p.add_argument("--max-cells", type=int, default=DEFAULT_MAX_CELLS)

    p = add("transform", cmd_transform, "exact network surgery")
    p.add_argument("--op", choices=["expand", "stack", "softmax-wrap"], required=True)
    p.add_argument("--in", dest="inputs", action="append", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--verify", action="store_true")
    p.add_argument("--seed", type=int, default=0)

    p = add("fit", cmd_fit, "random-feature least-squares fit")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--target", help=f"one of {sorted(FIT_TARGETS)}")
    src.add_argument("--spec", help="indicator spec JSON")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--eps", type=float)
    p.add_argument("--hidden-count", type=int, default=256)
    p.add_argument("--scale", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ridge", type=float, default=1e-8)
    p.add_argument("--sample-count", type=int, default=4096)
    p.add_argument("--mc-samples", type=int, default=200_000)
    p.add_argument("--out", default="fit.json")
    p.add_argument("--report")

    p = add("verify", cmd_verify, "measure the L1 error of a net")
    p.add_argument("--net", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--target", choices=sorted(TARGETS))
    src.add_argument("--samples")
    src.add_argument("--spec")
    src.add_argument("--fit-target", choices=sorted(FIT_TARGETS))
    p.add_argument("--method", choices=["exact", "grid", "mc"], default="exact")
    p.add_argument("--resolution", type=int, default=1000)
    p.add_argument("--n-samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float)
    p.add_argument("--out")

    p = add("sweep", cmd_sweep, "convergence tables over targets, eps and class counts")
    p.add_argument("--targets", default="")
    p.add_argument("--eps", required=True)
    p.add_argument("--m", default="")
    p.add_argument("--seeds", default="0")
    p.add_argument("--max-cells", type=int, default=DEFAULT_MAX_CELLS)
    p.add_argument("--out", required=True)

    p = add("bound", cmd_bound, "print the softmax tail bound m*exp(-2m/eps) against eps/2")
    p.add_argument("--m", required=True)
    p.add_argument("--eps", required=True)
    p.add_argument("--out")

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest_in")
    p.set_defaults(func=cmd_replay, manifest=None)
    return parser


def _write_manifest(path, args, argv, outputs, started):
    flags = {k: v for k, v in vars(args).items() if k not in ("func", "manifest")}
    manifest = {
        "command": args.command,
        "argv": argv,
        "flags": flags,
        "seeds": {k: v for k, v in flags.items() if "seed" in k},
        "version": __version__,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "outputs": outputs,
    }
    write_atomic(path, dump_json(manifest))


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    started = datetime.now(timezone.utc).isoformat()
    outputs = []
    try:
        code = args.func(args, outputs)
    except BudgetInfeasibleError as exc:
        print(f"error: budget infeasible: {exc}; achieved={exc.achieved!r}", file=sys.stderr)
        code = EXIT_PRECONDITION
    except (PreconditionFailed, *_PRECONDITION_ERRORS) as exc:
        print(f"error: precondition: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = EXIT_PRECONDITION
    except Exception as exc:
        print(f"error: internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = EXIT_INTERNAL
    if args.manifest:
        _write_manifest(args.manifest, args, argv, outputs, started)
    return code


if __name__ == "__main__":
    sys.exit(main())
