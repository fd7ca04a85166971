"""Command-line surface.

Results go to standard output, diagnostics to standard error.  Exit codes:
0 success, 1 usage/configuration error, 2 data or file-format error,
3 failed numerical check.
"""

import argparse
import sys

import numpy as np

from . import analyzer, dataio, gradcheck, toyseg
from .errors import ConfigError, DataError, FormatError, ShapeError
from .model import (CLASSIFICATION, SEGMENTATION, VARIANT_NAMES, build_variant,
                    make_spec, predict_mask, validate_store)
from .tensor import Tensor

_TASKS = {"seg": SEGMENTATION, "cls": CLASSIFICATION}


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract wants 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="lrformer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("info", help="parameter and FLOPs summary for one variant")
    p.add_argument("--variant", default="S", choices=VARIANT_NAMES)
    p.add_argument("--task", default="seg", choices=sorted(_TASKS))
    p.add_argument("--classes", type=int, default=None,
                   help="default: 150 for seg, 1000 for cls")
    p.add_argument("--input", type=int, nargs="+", required=True, metavar="H [W]")

    p = sub.add_parser("flops", help="comparison table over variants and input sizes")
    p.add_argument("--variant", default="S",
                   help="comma-separated variant names, e.g. S or T,S,B")
    p.add_argument("--task", default="seg", choices=sorted(_TASKS))
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--input", type=int, nargs="+", required=True)
    p.add_argument("--format", default="text", choices=("text", "csv"))

    p = sub.add_parser("compare-attention", help="closed-form scheme cost table")
    p.add_argument("--schemes", default="vanilla,downsampled,lrsa",
                   help=f"comma-separated subset of: {','.join(analyzer.SCHEMES)}")
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--sizes", type=int, nargs="+", required=True,
                   help="token counts N")
    p.add_argument("--m", type=int, default=256, help="fixed pooled token count")
    p.add_argument("--sr", type=int, default=2, help="downsampling ratio")
    p.add_argument("--window", type=int, default=49, help="window token count")

    p = sub.add_parser("gradcheck", help="64-bit finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--scope", default="all", choices=("ops", "model", "all"))

    p = sub.add_parser("train-toy", help="train the micro variant on synthetic data")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--variant", default="micro", choices=VARIANT_NAMES)
    p.add_argument("--out", required=True, help="weight file to write (.lrw)")

    p = sub.add_parser("eval-toy", help="evaluate saved weights on synthetic data")
    p.add_argument("--weights", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--variant", default="micro", choices=VARIANT_NAMES)

    p = sub.add_parser("segment", help="predict a PGM label mask for a PPM image")
    p.add_argument("--weights", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", default="micro", choices=VARIANT_NAMES)
    p.add_argument("--classes", type=int, default=2)
    return parser


def _default_classes(task: str, classes) -> int:
    if classes is not None:
        return classes
    return 1000 if task == CLASSIFICATION else 150


def _cmd_info(args) -> int:
    task = _TASKS[args.task]
    classes = _default_classes(task, args.classes)
    h = args.input[0]
    w = args.input[1] if len(args.input) > 1 else h
    spec = make_spec(args.variant, task=task, num_classes=classes)
    params = analyzer.count_params(spec)
    report = analyzer.count_flops(spec, h, w)
    att = analyzer.attention_flops(report)
    print(f"variant: {args.variant}  task: {task}  input: {h}x{w}  classes: {classes}")
    print(f"params: {params} ({analyzer.format_count(params)})")
    print(f"flops_mac: {report.headline} ({analyzer.format_count(report.headline)})")
    print(f"att_flops_mac: {att} ({analyzer.format_count(att)})")
    for category, macs in sorted(report.by_category().items()):
        print(f"  {category}: {macs}")
    return 0


def _cmd_flops(args) -> int:
    task = _TASKS[args.task]
    variants = [v.strip() for v in args.variant.split(",") if v.strip()]
    table = analyzer.emit_comparison_table(
        variants, args.input, fmt=args.format, task=task,
        num_classes=_default_classes(task, args.classes))
    sys.stdout.write(table)
    return 0


def _cmd_compare_attention(args) -> int:
    schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
    print("scheme,tokens,channels,projections,attention,upsample,total_mac")
    for scheme in schemes:
        for n in args.sizes:
            cost = analyzer.scheme_cost(scheme, n, args.channels, m=args.m,
                                        s_r=args.sr, window=args.window)
            terms = cost.terms
            print(f"{scheme},{n},{args.channels},{terms.get('projections', 0)},"
                  f"{terms.get('attention', 0)},{terms.get('upsample', 0)},{cost.total}")
    return 0


def _cmd_gradcheck(args) -> int:
    results = gradcheck.run_suite(seed=args.seed, tol=args.tol, scope=args.scope)
    failed = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"{status} {res.name} rel_err={res.rel_err:.3e} tol={res.tol:g}")
        failed += not res.passed
    if failed:
        print(f"{failed} of {len(results)} gradient checks failed", file=sys.stderr)
        return 3
    return 0


def _cmd_train_toy(args) -> int:
    store, spec = build_variant(args.variant, task=SEGMENTATION, num_classes=2,
                                seed=args.seed)
    def progress(step, loss):
        if (step + 1) % 25 == 0:
            print(f"step {step + 1}/{args.steps} loss {loss:.4f}", file=sys.stderr)

    result = toyseg.train_toy(store, spec, steps=args.steps, seed=args.seed,
                              lr=args.lr, batch_size=args.batch, size=args.size,
                              progress=progress)
    dataio.save_weights(store, args.out)
    print(f"wrote weights to {args.out}", file=sys.stderr)
    heldout = toyseg.generate_dataset(args.seed + 1000, 8, args.size)
    metrics = toyseg.evaluate(store, spec, heldout)
    print(f"final_loss: {result.final_loss:.6f}")
    print(f"heldout_pixel_accuracy: {metrics['pixel_accuracy']:.6f}")
    print(f"heldout_miou: {metrics['miou']:.6f}")
    return 0


def _load_for_spec(path, variant: str, classes: int):
    store = dataio.load_weights(path)
    spec = make_spec(variant, task=SEGMENTATION, num_classes=classes)
    validate_store(store, spec)
    return store, spec


def _cmd_eval_toy(args) -> int:
    store, spec = _load_for_spec(args.weights, args.variant, 2)
    dataset = toyseg.generate_dataset(args.seed, args.count, args.size)
    metrics = toyseg.evaluate(store, spec, dataset)
    print(f"pixel_accuracy: {metrics['pixel_accuracy']:.6f}")
    print(f"miou: {metrics['miou']:.6f}")
    for idx, iou in enumerate(metrics["iou"]):
        shown = "nan" if iou is None else f"{iou:.6f}"
        print(f"iou_class{idx}: {shown}")
    return 0


def _cmd_segment(args) -> int:
    store, spec = _load_for_spec(args.weights, args.variant, args.classes)
    image = dataio.read_image(args.image)
    _, h, w = image.shape
    ph = (32 - h % 32) % 32
    pw = (32 - w % 32) % 32
    padded = np.pad(image, ((0, 0), (0, ph), (0, pw)))
    mask = predict_mask(Tensor(padded[None]), store, spec)[0, :h, :w]
    dataio.write_mask(args.out, mask)
    print(f"wrote mask to {args.out}", file=sys.stderr)
    return 0


_COMMANDS = {
    "info": _cmd_info,
    "flops": _cmd_flops,
    "compare-attention": _cmd_compare_attention,
    "gradcheck": _cmd_gradcheck,
    "train-toy": _cmd_train_toy,
    "eval-toy": _cmd_eval_toy,
    "segment": _cmd_segment,
}


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except SystemExit as exc:
        code = exc.code if exc.code is not None else 0
        return int(code)
    except (ConfigError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    raise SystemExit(run())


if __name__ == "__main__":
    main()
