"""Command-line front end.

Exit status: 0 success, 1 verification failure, 2 usage, configuration or
I/O error.  Failures print ``error: <ErrorClass>: message`` on stderr.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, store, verify
from .errors import AdderQuantError, ConfigError
from .grouping import Feature, GroupingConfig
from .pipeline import QuantizedLayer, QuantizedModel, calibrate, forward_quantized, forward_reference, quantize_model
from .quantizer import check_bits

EXIT_OK, EXIT_VERIFY, EXIT_USAGE = 0, 1, 2


def _check_config(args) -> GroupingConfig:
    check_bits(args.bits)
    if not 0 < args.alpha <= 1:
        raise ConfigError(f"alpha must lie in (0, 1], got {args.alpha}")
    if args.model is None or args.calib is None:
        raise ConfigError("--model and --calib are required")
    return GroupingConfig(args.groups, args.feature)


def _load_fp(path) -> list:
    model = store.load(path)
    if isinstance(model, QuantizedModel) or not model or not hasattr(model[0], "weights"):
        raise ConfigError(f"{path} does not hold a full-precision model")
    return model


def _quantize(args):
    grouping = _check_config(args)
    model = _load_fp(args.model)
    calib = store.load_tensors(args.calib)
    ranges = calibrate(model, calib, args.alpha)
    return model, calib, quantize_model(model, ranges, args.bits, grouping, threads=args.threads)


def cmd_toy(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = store.toy_model(args.seed, tuple(args.widths), fp_ends=not args.all_adder)
    store.save(model, out / "model.adq")
    store.save_tensors(store.toy_inputs(args.seed + 1, args.samples, channels=args.widths[0]), out / "calib.adq")
    store.save_tensors(store.toy_inputs(args.seed + 2, 1, channels=args.widths[0]), out / "input.adq")
    print(f"wrote {out / 'model.adq'}, {out / 'calib.adq'}, {out / 'input.adq'}")
    return EXIT_OK


def cmd_quantize(args) -> int:
    if args.out is None:
        raise ConfigError("--out is required")
    _, _, qm = _quantize(args)
    store.save(qm, args.out)
    print(f"bits={qm.bits} groups={qm.g} alpha={qm.alpha} feature={qm.feature}")
    for i, layer in enumerate(qm.layers):
        if not isinstance(layer, QuantizedLayer):
            print(f"layer {i}: {layer.kind} (full precision)")
            continue
        sizes = ",".join(str(len(ix)) for ix in layer.plan.groups)
        scales = ",".join(f"{s.scale:.6g}" for s in layer.specs)
        print(
            f"layer {i}: adder r_x={layer.act_range.r_x:.6g} group_sizes=[{sizes}] "
            f"scales=[{scales}] |bias_fold|_1={np.abs(layer.bias_fold).sum():.6g}"
        )
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_infer(args) -> int:
    if args.out is None or args.input is None:
        raise ConfigError("--input and --out are required")
    model = store.load(args.model)
    xs = store.load_tensors(args.input)
    if args.fp:
        if isinstance(model, QuantizedModel):
            raise ConfigError("--fp needs a full-precision model")
        ys = [forward_reference(model, x) for x in xs]
    else:
        if not isinstance(model, QuantizedModel):
            raise ConfigError("quantized inference needs a quantized model (or pass --fp)")
        ys = [forward_quantized(model, x) for x in xs]
    store.save_tensors(ys, args.out)
    print(f"wrote {len(ys)} output tensor(s) to {args.out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    render = diagnostics.to_csv if args.report == "csv" else diagnostics.to_text
    chunks = []
    if args.model is not None:
        model, calib, qm = _quantize(args)
        per_input = [diagnostics.analyze_model(model, qm, x) for x in calib]
        rows = []
        for k, row in enumerate(per_input[0]):
            merged = dict(row)
            for key, v in row.items():
                if isinstance(v, float):
                    merged[key] = float(np.mean([p[k][key] for p in per_input]))
            rows.append(merged)
        if not rows:
            raise ConfigError("model has no quantizable layers")
        chunks.append(render(rows, diagnostics.REPORT_COLUMNS))
    if args.flops_table or args.model is None:
        rows = diagnostics.flops_table(args.channels, args.size)
        chunks.append(render(rows))
    sys.stdout.write("\n".join(chunks))
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verify.run(args.filter, seed=args.seed, corrupt_scale=args.corrupt_scale)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adderquant", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)

    quant = argparse.ArgumentParser(add_help=False)
    quant.add_argument("--model")
    quant.add_argument("--calib")
    quant.add_argument("--bits", type=int, default=8)
    quant.add_argument("--groups", type=int, default=4)
    quant.add_argument("--alpha", type=float, default=0.999)
    quant.add_argument("--feature", choices=[f.value for f in Feature], default="max")
    quant.add_argument("--out")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toy", parents=[common], help="write a seeded toy model and tensors")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--widths", type=int, nargs="+", default=[3, 8, 8, 4])
    p.add_argument("--samples", type=int, default=8)
    p.add_argument("--all-adder", action="store_true")
    p.set_defaults(func=cmd_toy)

    p = sub.add_parser("quantize", parents=[common, quant], help="calibrate and quantize a model")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("infer", parents=[common], help="run a model on a tensor file")
    p.add_argument("--model", required=True)
    p.add_argument("--input")
    p.add_argument("--out")
    p.add_argument("--fp", action="store_true", help="full-precision reference forward")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("analyze", parents=[common, quant], help="per-layer and FLOPs reports")
    p.add_argument("--report", choices=["text", "csv"], default="text")
    p.add_argument("--flops-table", action="store_true")
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--size", type=int, default=32)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("verify", parents=[common], help="run the built-in property suites")
    p.add_argument("--filter", nargs="+", choices=list(verify.SUITES))
    p.add_argument("--corrupt-scale", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (AdderQuantError, OSError, ValueError, OverflowError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
