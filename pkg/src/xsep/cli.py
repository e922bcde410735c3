"""``xsep`` command-line interface.

Exit codes: 0 success, 1 a check failed, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import conv as K
from .arch import Node, build_named, load as load_arch, node_macs, projection_shortcut_params, \
    report_costs, strip_residuals, structure
from .errors import NonFiniteLossError, XsepError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
HELP_WIDTH = 88


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kw):
        kw.setdefault("formatter_class", lambda prog: argparse.HelpFormatter(prog, width=HELP_WIDTH))
        super().__init__(*args, **kw)


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _shape4(text: str) -> tuple:
    parts = _int_list(text)
    if len(parts) != 4 or min(parts) < 1:
        raise argparse.ArgumentTypeError(f"shape must be n,c,h,w with positive entries, got {text!r}")
    return parts


# ---------------------------------------------------------------------------
# commands


def cmd_params(args) -> int:
    path = args.arch_file or (args.arch if os.path.isfile(args.arch) else None)
    if path:
        if not os.path.isfile(path):
            raise XsepError(f"archspec file not found: {path}")
        spec = load_arch(path)
        if args.no_residuals:
            spec = strip_residuals(spec)
    else:
        fc = (4096, 4096) if args.with_fc else args.fc
        spec = build_named(args.arch, args.classes, fc, residuals=not args.no_residuals,
                           intermediate_activation=args.activation)
    costs = report_costs(spec)
    st = structure(spec)
    fields = {
        "arch": spec.name,
        "input_shape": "x".join(str(d) for d in spec.input_shape),
        "num_classes": spec.num_classes,
        "trainable_params": costs.trainable_params,
        "non_trainable_params": costs.non_trainable_params,
        "total_params": costs.total_params,
        "macs_per_example": costs.macs_per_example,
        "activation_peak": costs.activation_peak,
        "conv_layers": st.conv_layers,
        "modules": st.modules,
        "residual_connections": st.residual_connections,
        "projection_shortcuts": st.projection_shortcuts,
        "projection_shortcut_params": projection_shortcut_params(spec),
    }
    if args.json:
        print(json.dumps(fields, indent=2))
    else:
        for key, value in fields.items():
            print(f"{key}={value}")
    return EXIT_OK


def cmd_equiv(args) -> int:
    from .equiv import run_equiv

    report = run_equiv(args.check, args.seed, args.instances)
    if args.verbose:
        for i, inst in enumerate(report.instances):
            print(f"instance {i}: deviation={inst.deviation:.3e} {inst.description}")
    print(f"check={report.check} seed={report.seed} instances={len(report.instances)} "
          f"max_relative_deviation={report.max_deviation:.3e} tol={args.tol:g}")
    if report.max_deviation < args.tol:
        return EXIT_OK
    print(f"FAILED: seed {args.seed}, worst instance: {report.worst.description}", file=sys.stderr)
    return EXIT_FAIL


def cmd_gradcheck(args) -> int:
    from .gradcheck import TOLERANCE, run_gradcheck

    results = run_gradcheck(args.layer, args.seed)
    worst = {}
    for r in results:
        if r.family not in worst or r.error > worst[r.family].error:
            worst[r.family] = r
    for fam, r in worst.items():
        print(f"layer={fam} worst_relative_error={r.error:.3e} at {r.case}/{r.tensor}")
    failed = [r for r in results if not r.ok]
    for r in failed:
        print(f"FAILED: layer={r.family} case={r.case} tensor={r.tensor} index={r.worst_index} "
              f"error={r.error:.3e} >= {TOLERANCE:g}", file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_train(args) -> int:
    from .config import load_config, run_config
    from .train import PROFILE_COLUMNS, _fmt

    cfg = load_config(args.config)
    if args.steps is not None:
        cfg.run.steps = args.steps
    log = None if args.quiet else (lambda line: print(line, flush=True))
    result = run_config(cfg, log=log)
    if result.rows:
        last = result.rows[-1]
        print("final " + " ".join(f"{c}={_fmt(last[c])}" for c in PROFILE_COLUMNS))
    print(f"profile={cfg.run.profile} checkpoint={cfg.run.checkpoint}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .config import datasets, load_config
    from .data import load_dataset
    from .train import _fmt, check_compatible, evaluate, model_from_checkpoint

    if not os.path.isfile(args.checkpoint):
        raise XsepError(f"checkpoint not found: {args.checkpoint}")
    model, opt, _ = model_from_checkpoint(args.checkpoint)
    if args.data:
        for p in args.data + ([args.class_weights] if args.class_weights else []):
            if not os.path.isfile(p):
                raise XsepError(f"data file not found: {p}")
        dataset = load_dataset(args.data[0], args.data[1], "val", args.class_weights)
    else:
        _, dataset = datasets(load_config(args.config), model.spec)
        if dataset is None:
            raise XsepError("config defines no validation split")
    check_compatible(model.spec, dataset)
    rep = evaluate(model, dataset, opt)
    for key, value in (("val_top1", rep.top1), ("val_top5", rep.top5),
                       ("val_wmap100", rep.wmap100), ("val_loss", rep.loss)):
        print(f"{key}={_fmt(value)}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .config import ablation_run, datasets, arch_spec, load_config
    from .train import ABLATIONS

    cfg = load_config(args.config)
    if args.steps is not None:
        cfg.run.steps = args.steps
    os.makedirs(args.out_dir, exist_ok=True)
    tr, va = datasets(cfg, arch_spec(cfg))
    variants = ABLATIONS if args.variant == "all" else (args.variant,)
    for v in variants:
        res = ablation_run(cfg, v, args.out_dir, train_set=tr, val_set=va)
        final = res.rows[-1]["train_loss"] if res.rows else float("nan")
        print(f"variant={v} profile={os.path.join(args.out_dir, v + '.csv')} final_train_loss={final!r}")
    return EXIT_OK


def cmd_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    n, c, h, w = args.shape
    k = args.kernel
    geom = K.ConvGeometry.square(k, 1, K.SAME)
    oh, ow = geom.output_hw(h, w)
    x = rng.standard_normal((n, c, h, w), dtype=np.float32)
    if args.op == "conv":
        kern = rng.standard_normal((args.cout, c, k, k), dtype=np.float32)
        node = Node("conv", {"in": c, "filters": args.cout, "kernel": k})
        fwd = lambda: K.conv2d_im2col(x, kern, geom)  # noqa: E731
        bwd = lambda dy: K.conv2d_im2col_backward(x, kern, geom, dy)  # noqa: E731
    else:
        dw = rng.standard_normal((1, c, k, k), dtype=np.float32)
        pw = rng.standard_normal((args.cout, c, 1, 1), dtype=np.float32)
        node = Node("sepconv", {"in": c, "filters": args.cout, "kernel": k})
        fwd = lambda: K.separable_conv2d(x, dw, pw, geom)  # noqa: E731
        bwd = lambda dy: K.separable_conv2d_backward(x, dw, pw, geom, dy)  # noqa: E731
    macs = n * node_macs(node, (args.cout, oh, ow))
    dy = fwd()
    t0 = time.perf_counter()
    for _ in range(args.iters):
        fwd()
    t_fwd = (time.perf_counter() - t0) / args.iters
    t0 = time.perf_counter()
    for _ in range(args.iters):
        fwd()
        bwd(dy)
    t_both = (time.perf_counter() - t0) / args.iters
    print("op,n,c,h,w,cout,kernel,iters,macs,fwd_s,fwd_bwd_s,fwd_macs_per_s")
    print(f"{args.op},{n},{c},{h},{w},{args.cout},{k},{args.iters},{macs},"
          f"{t_fwd:.6g},{t_both:.6g},{macs / t_fwd if t_fwd > 0 else float('inf'):.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="xsep", description="Depthwise separable convolution toolkit: parameter "
                "counts, equivalence and gradient checks, training, evaluation, benchmarks.")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="BLAS threads (default: $XSEP_THREADS, else library default); "
                        "1 gives bit-reproducible runs")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    q = sub.add_parser("params", help="parameter and cost report for an architecture")
    which = q.add_mutually_exclusive_group(required=True)
    which.add_argument("--arch", help="preset name (xception, toy_xception, sepconv_vgg) "
                       "or path to an archspec file")
    which.add_argument("--arch-file", help="path to an archspec text file")
    q.add_argument("--classes", type=_positive_int, default=None, help="number of output classes")
    fcs = q.add_mutually_exclusive_group()
    fcs.add_argument("--fc", type=_int_list, default=(), help="widths of optional FC layers, e.g. 512,256")
    fcs.add_argument("--with-fc", action="store_true", help="add two FC layers of 4096 units")
    q.add_argument("--no-residuals", action="store_true", help="drop all residual connections")
    q.add_argument("--activation", choices=("none", "relu", "elu"), default="none",
                   help="activation between depthwise and pointwise steps")
    q.add_argument("--json", action="store_true", help="emit one JSON object instead of key=value lines")
    q.set_defaults(func=cmd_params)

    q = sub.add_parser("equiv", help="randomised numerical equivalence checks")
    q.add_argument("--check", required=True, choices=("inception-reformulation", "spectrum-endpoints"))
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--tol", type=_positive_float, default=1e-5, help="relative tolerance (> 0)")
    q.add_argument("--instances", type=_positive_int, default=20)
    q.add_argument("--verbose", action="store_true", help="print every instance")
    q.set_defaults(func=cmd_equiv)

    q = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    q.add_argument("--layer", default="all",
                   choices=("all", "conv", "sepconv", "bn", "dense", "pool", "act", "model"))
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=cmd_gradcheck)

    q = sub.add_parser("train", help="train from a config file")
    q.add_argument("--config", required=True, help="path to a [arch]/[optim]/[data]/[run] config")
    q.add_argument("--steps", type=int, default=None, help="override [run] steps")
    q.add_argument("--quiet", action="store_true", help="do not echo profile rows")
    q.set_defaults(func=cmd_train)

    q = sub.add_parser("eval", help="evaluate a checkpoint")
    q.add_argument("--checkpoint", required=True)
    src = q.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", nargs=2, metavar=("IMAGES", "LABELS"), help="XTSR images and XLBL labels")
    src.add_argument("--config", help="use the validation split described by a config file")
    q.add_argument("--class-weights", default=None, help="class_index weight file for MAP@100")
    q.set_defaults(func=cmd_eval)

    q = sub.add_parser("ablate", help="run ablation variants with identical seeds")
    q.add_argument("--config", required=True)
    q.add_argument("--variant", default="all",
                   choices=("all", "baseline", "residuals-off", "relu", "elu"))
    q.add_argument("--out-dir", required=True, help="directory for <variant>.csv and .ckpt")
    q.add_argument("--steps", type=int, default=None, help="override [run] steps")
    q.set_defaults(func=cmd_ablate)

    q = sub.add_parser("bench", help="time a convolution kernel")
    q.add_argument("--op", required=True, choices=("conv", "sepconv"))
    q.add_argument("--shape", required=True, type=_shape4, help="input shape n,c,h,w")
    q.add_argument("--cout", required=True, type=_positive_int, help="output channels")
    q.add_argument("--kernel", type=_positive_int, default=3)
    q.add_argument("--iters", type=_positive_int, default=10)
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=cmd_bench)
    return p


def _thread_limit(threads: int | None):
    if threads is None:
        env = os.environ.get("XSEP_THREADS")
        if env:
            threads = _positive_int(env)
    if threads is None:
        return None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=threads)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        limiter = _thread_limit(args.threads)
    except argparse.ArgumentTypeError as exc:
        print(f"xsep: error: XSEP_THREADS: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except NonFiniteLossError as exc:
        print(f"xsep {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except XsepError as exc:
        print(f"xsep {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
