"""Command-line interface.

Subcommands: ``shapes`` (geometry queries), ``lower`` (patch-matrix dumps),
``conv`` (run one engine), ``verify`` (cross-engine equivalence check),
``bench`` (engine/backend timing CSV), ``train-equiv`` (the CONV-vs-dense
training experiment).

Every randomized subcommand takes an explicit ``--seed`` (default 42), so
reports are reproducible artifacts. Exit codes: 0 success, 1 verification
failure, 2 usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import backend as _backend
from .bench import BenchCase, checksum, default_cases, run_bench, write_csv
from .data import IdxFormatError, load_idx_images, synthetic_images
from .engines import Engine, run_engine
from .geometry import (
    ConvGeometry,
    GeometryError,
    output_shape,
    pad_zeros,
    padded_output_shape,
)
from .lowering import FilterBank, im2col
from .nn import ExperimentData, TrainConfig, train_equivalence_experiment
from .tensors import DumpFormatError, Tensor4, read_dump, write_dump

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convlower",
        description="Convolution lowering toolkit: run convolutions as matrix "
        "multiplication, verify engines against the direct reference, and "
        "reproduce the CONV-vs-dense training equivalence experiment.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("shapes", help="print output shape and patch count for a geometry")
    p.add_argument("--h", type=int, required=True, help="input rows (unpadded)")
    p.add_argument("--w", type=int, required=True, help="input cols (unpadded)")
    _geometry_flags(p)
    p.add_argument("--filters", type=int, default=1, help="filter count f (default 1)")
    p.add_argument("--allow-truncate", action="store_true",
                   help="floor non-divisible strides instead of rejecting them")

    p = sub.add_parser("lower", help="stretch an input into the patch matrix M")
    p.add_argument("--input", required=True, help="IDX image file or tensor dump")
    _geometry_flags(p)
    p.add_argument("--dump", help="write M in dump format to this path")
    p.add_argument("--allow-truncate", action="store_true",
                   help="floor non-divisible strides instead of rejecting them")

    p = sub.add_parser("conv", help="run one convolution engine on an input")
    p.add_argument("--engine", choices=[e.value for e in Engine], default="direct")
    p.add_argument("--input", required=True, help="IDX image file or tensor dump")
    p.add_argument("--filters-file", help="rank-4 dump of shape (f, k_h, k_w, c_in)")
    p.add_argument("--num-filters", type=int, default=1,
                   help="filter count for seeded random filters (when no --filters-file)")
    _geometry_flags(p)
    p.add_argument("--seed", type=int, default=42, help="seed for random filters")
    p.add_argument("--out", help="write the output tensor dump to this path")
    p.add_argument("--backend", choices=["compiled", "fallback"], default=None)

    p = sub.add_parser("verify", help="check GEMM engines against the direct reference")
    p.add_argument("--cases", type=int, default=200)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)

    p = sub.add_parser("bench", help="time engines x backends, write a CSV report")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--threads", type=int, default=1,
                   help="opt into row-parallel GEMM (default single-threaded)")
    p.add_argument("--backends", choices=["auto", "both", "compiled", "fallback"],
                   default="auto",
                   help="'both' compares the compiled core against the numpy fallback")
    p.add_argument("--cases", help="semicolon-separated b,h,w,c,f,kh,kw,s,p tuples")

    p = sub.add_parser("train-equiv", help="train CONV-first and dense-first networks "
                                           "side by side and report their divergence")
    p.add_argument("--data", default="synthetic",
                   help="'synthetic', 'mnist:<dir>', or 'mnist' with CONVLOWER_DATA_DIR set")
    p.add_argument("--n", type=int, default=1000,
                   help="images per split (train, validation, held-out)")
    p.add_argument("--kh", type=int, default=4)
    p.add_argument("--kw", type=int, default=4)
    p.add_argument("--stride", type=int, default=2)
    p.add_argument("--pad", type=int, default=0)
    p.add_argument("--filters", type=int, default=128)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--opt", choices=["sgd", "adam"], default="sgd")
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True, help="report JSON path (loss CSV written beside it)")
    return parser


def _geometry_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kh", type=int, required=True, help="kernel rows")
    p.add_argument("--kw", type=int, required=True, help="kernel cols")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--pad", type=int, default=0)


def _load_input(path: str) -> Tensor4:
    with open(path, "rb") as fh:
        first = fh.read(1)
    if first == b"{":
        obj = read_dump(path)
        if not isinstance(obj, Tensor4):
            raise ValueError(f"{path}: expected a rank-4 tensor dump")
        return obj
    return load_idx_images(path)


def _cmd_shapes(args) -> int:
    geom = ConvGeometry(args.kh, args.kw, c_in=1, f=args.filters, s=args.stride, p=args.pad)
    h_out, w_out, c_out = output_shape(geom, args.h, args.w, truncate=args.allow_truncate)
    print(json.dumps({
        "h_out": h_out,
        "w_out": w_out,
        "c_out": c_out,
        "patches": h_out * w_out,
    }))
    return EXIT_OK


def _cmd_lower(args) -> int:
    src = _load_input(args.input)
    geom = ConvGeometry(args.kh, args.kw, c_in=src.c, f=1, s=args.stride, p=args.pad)
    padded = pad_zeros(src, geom.p)
    if args.allow_truncate:
        # trim the ragged edge so strict shape math holds downstream
        h_out, w_out, _ = padded_output_shape(geom, padded.h, padded.w, truncate=True)
        h_keep = (h_out - 1) * geom.s + geom.k_h
        w_keep = (w_out - 1) * geom.s + geom.k_w
        padded = Tensor4._wrap(np.ascontiguousarray(padded.data[:, :h_keep, :w_keep, :]))
    lowered = im2col(padded, geom)
    if args.dump:
        write_dump(args.dump, lowered.m)
    print(json.dumps({
        "rows": lowered.m.rows,
        "cols": lowered.m.cols,
        "bytes": lowered.m.rows * lowered.m.cols * 8,
        "dump": args.dump or None,
    }))
    return EXIT_OK


def _cmd_conv(args) -> int:
    src = _load_input(args.input)
    if args.filters_file:
        dumped = read_dump(args.filters_file)
        if not isinstance(dumped, Tensor4):
            raise ValueError(f"{args.filters_file}: expected a rank-4 filter dump")
        bank = FilterBank(dumped.data)
    else:
        rng = np.random.default_rng(args.seed)
        bank = FilterBank(rng.standard_normal((args.num_filters, args.kh, args.kw, src.c)))
    geom = ConvGeometry(args.kh, args.kw, c_in=src.c, f=bank.f, s=args.stride, p=args.pad)
    padded = pad_zeros(src, geom.p)
    out = run_engine(args.engine, padded, bank, geom, backend=args.backend)
    if args.out:
        write_dump(args.out, out)
    print(json.dumps({
        "engine": args.engine,
        "shape": list(out.shape),
        "checksum": checksum(out.data),
        "out": args.out or None,
    }))
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .verify import run_verify

    result = run_verify(args.cases, args.seed, tol=args.tol, corrupt=args.corrupt)
    print(json.dumps(result.summary()))
    return EXIT_OK if result.ok else EXIT_VERIFY_FAILED


def _parse_bench_cases(text: str) -> list[BenchCase]:
    cases = []
    for i, chunk in enumerate(text.split(";")):
        fields = [int(x) for x in chunk.split(",")]
        if len(fields) != 9:
            raise ValueError(f"bench case {chunk!r} needs 9 integers b,h,w,c,f,kh,kw,s,p")
        b, h, w, c, f, kh, kw, s, p = fields
        cases.append(BenchCase(f"case{i}", b, h, w, c, f, kh, kw, s, p))
    return cases


def _cmd_bench(args) -> int:
    if args.backends == "auto":
        backends = [_backend.ACTIVE_NAME]
    elif args.backends == "both":
        backends = ["compiled", "fallback"] if _backend.COMPILED_AVAILABLE else ["fallback"]
    else:
        backends = [args.backends]
    cases = _parse_bench_cases(args.cases) if args.cases else default_cases()
    rows = run_bench(cases, reps=args.reps, seed=args.seed, backends=backends,
                     threads=args.threads)
    write_csv(rows, args.out)
    print(json.dumps({"rows": len(rows), "out": args.out, "backends": backends}))
    return EXIT_OK


def _resolve_data(spec: str, n: int, seed: int) -> ExperimentData:
    from .data import sample_without_replacement

    if spec == "synthetic":
        pool = synthetic_images(3 * n, 28, 28, seed)
    else:
        if spec.startswith("mnist:"):
            root = Path(spec.split(":", 1)[1])
        elif spec == "mnist":
            env = os.environ.get("CONVLOWER_DATA_DIR")
            if not env:
                raise ValueError("--data mnist needs a directory or CONVLOWER_DATA_DIR")
            root = Path(env)
        else:
            root = Path(spec)
        path = None
        for candidate in ("train-images-idx3-ubyte", "train-images-idx3-ubyte.gz",
                          "train-images.idx3-ubyte"):
            if (root / candidate).exists():
                path = root / candidate
                break
        if path is None:
            raise FileNotFoundError(f"no IDX image file found under {root}")
        pool = load_idx_images(path)
    sampled = sample_without_replacement(pool, 3 * n, seed)
    arr = sampled.data
    return ExperimentData(
        train=Tensor4._wrap(np.ascontiguousarray(arr[:n])),
        val=Tensor4._wrap(np.ascontiguousarray(arr[n : 2 * n])),
        heldout=Tensor4._wrap(np.ascontiguousarray(arr[2 * n :])),
    )


def _cmd_train_equiv(args) -> int:
    data = _resolve_data(args.data, args.n, args.seed)
    geom = ConvGeometry(args.kh, args.kw, c_in=1, f=args.filters, s=args.stride, p=args.pad)
    config = TrainConfig(
        lr=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        optimizer=args.opt,
        beta1=args.beta1,
        beta2=args.beta2,
        eps=args.eps,
        seed=args.seed,
    )
    cnn_rep, fc_rep, metrics = train_equivalence_experiment(data, geom, config)
    report = {
        "config": dict(asdict(config), data=args.data, n=args.n,
                       geometry=asdict(geom), backend=_backend.ACTIVE_NAME,
                       pixel_scaling="value/255 for IDX sources",
                       loss_reduction="mean over batch x features"),
        "cnn": {"train_loss": cnn_rep.train_loss, "val_loss": cnn_rep.val_loss},
        "fc": {"train_loss": fc_rep.train_loss, "val_loss": fc_rep.val_loss},
        "metrics": {
            "act_fnorm_over_n": metrics.act_fnorm_over_n,
            "weight_fnorm": metrics.weight_fnorm,
            "hist": {
                "edges": metrics.hist_edges,
                "cnn_counts": metrics.cnn_hist,
                "fc_counts": metrics.fc_hist,
            },
        },
    }
    out = Path(args.out)
    with open(out, "w") as fh:
        json.dump(report, fh, indent=2)
    csv_path = out.with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "cnn_train", "fc_train", "cnn_val", "fc_val"])
        for epoch in range(config.epochs):
            writer.writerow([
                epoch,
                cnn_rep.train_loss[epoch],
                fc_rep.train_loss[epoch],
                cnn_rep.val_loss[epoch],
                fc_rep.val_loss[epoch],
            ])
    print(json.dumps({
        "out": str(out),
        "csv": str(csv_path),
        "act_fnorm_over_n": metrics.act_fnorm_over_n,
        "weight_fnorm": metrics.weight_fnorm,
    }))
    return EXIT_OK


_COMMANDS = {
    "shapes": _cmd_shapes,
    "lower": _cmd_lower,
    "conv": _cmd_conv,
    "verify": _cmd_verify,
    "bench": _cmd_bench,
    "train-equiv": _cmd_train_equiv,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (OSError, IdxFormatError, DumpFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (GeometryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
