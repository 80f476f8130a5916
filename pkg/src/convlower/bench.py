"""Micro-benchmark harness: engines x backends over a set of geometries.

Each row records the best wall time over the timed repetitions, an
order-independent checksum of the output (exactly rounded sum, so equal
results give equal checksums on every backend), and the peak intermediate
bytes the engine allocated for the patch matrix -- the memory cost that
buying GEMM throughput with im2col incurs and the lazy engine avoids.

The true2d engine computes a different function (flipped kernels), so the
harness hands it a pre-flipped bank; every row of a case is then the same
mathematical result and the checksums must agree.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass

import numpy as np

from . import backend as _backend
from .engines import Engine, conv_direct, conv_true2d, conv_via_gemm, flip_bank
from .geometry import ConvGeometry, pad_zeros, padded_output_shape
from .lowering import FilterBank
from .tensors import Tensor4

__all__ = ["BenchCase", "default_cases", "run_bench", "write_csv", "CSV_FIELDS"]

CSV_FIELDS = [
    "case",
    "engine",
    "backend",
    "b",
    "h",
    "w",
    "c_in",
    "f",
    "k_h",
    "k_w",
    "s",
    "p",
    "reps",
    "best_ns",
    "checksum",
    "intermediate_bytes",
    "status",
]


@dataclass(frozen=True)
class BenchCase:
    name: str
    b: int
    h: int
    w: int
    c_in: int
    f: int
    k_h: int
    k_w: int
    s: int
    p: int = 0

    def geometry(self) -> ConvGeometry:
        return ConvGeometry(self.k_h, self.k_w, self.c_in, self.f, self.s, self.p)


def default_cases() -> list[BenchCase]:
    return [
        BenchCase("28x28-k4-s4", b=8, h=28, w=28, c_in=1, f=8, k_h=4, k_w=4, s=4),
        BenchCase("28x28-k4-s2", b=8, h=28, w=28, c_in=1, f=16, k_h=4, k_w=4, s=2),
        BenchCase("16x16-k3-s1", b=4, h=16, w=16, c_in=3, f=8, k_h=3, k_w=3, s=1, p=1),
    ]


def checksum(arr: np.ndarray) -> float:
    """Exactly rounded element sum: independent of summation order."""
    return math.fsum(arr.reshape(-1).tolist())


def _intermediate_bytes(engine: Engine, geom: ConvGeometry, padded: Tensor4) -> int:
    # size of the materialized patch matrix; every other engine skips it
    if engine is not Engine.IM2COL_GEMM:
        return 0
    h_out, w_out, _ = padded_output_shape(geom, padded.h, padded.w)
    return padded.b * h_out * w_out * geom.patch_len * 8


def run_bench(
    cases: list[BenchCase] | None = None,
    reps: int = 3,
    seed: int = 42,
    backends: list[str] | None = None,
    engines: list[Engine] | None = None,
    threads: int = 1,
) -> list[dict]:
    """Time every engine/backend pair on every case; failures become rows.

    Single-threaded by default so timings are interpretable; ``threads``
    opts the materialized-GEMM engine into row-parallel execution.
    """
    if cases is None:
        cases = default_cases()
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    if backends is None:
        backends = [_backend.ACTIVE_NAME]
    if engines is None:
        engines = list(Engine)
    rng = np.random.default_rng(seed)
    rows = []
    for case in cases:
        geom = case.geometry()
        src = Tensor4._wrap(rng.random((case.b, case.h, case.w, case.c_in)))
        bank = FilterBank(rng.standard_normal((case.f, case.k_h, case.k_w, case.c_in)))
        flipped = flip_bank(bank)
        padded = pad_zeros(src, geom.p)
        for engine in engines:
            for backend_name in backends:
                row = {
                    "case": case.name,
                    "engine": engine.value,
                    "backend": backend_name,
                    "b": case.b,
                    "h": case.h,
                    "w": case.w,
                    "c_in": case.c_in,
                    "f": case.f,
                    "k_h": case.k_h,
                    "k_w": case.k_w,
                    "s": case.s,
                    "p": case.p,
                    "reps": reps,
                }
                try:
                    run = _runner(engine, padded, bank, flipped, geom, backend_name, threads)
                    run()  # warm-up
                    best = min(_timed(run) for _ in range(reps))
                    out = run()
                    row["best_ns"] = best
                    row["checksum"] = repr(checksum(out.data))
                    row["intermediate_bytes"] = _intermediate_bytes(engine, geom, padded)
                    row["status"] = "ok"
                except Exception as exc:  # record and continue
                    row["best_ns"] = ""
                    row["checksum"] = ""
                    row["intermediate_bytes"] = ""
                    row["status"] = f"error: {exc}"
                rows.append(row)
    return rows


def _runner(engine, padded, bank, flipped, geom, backend_name, threads):
    if engine is Engine.DIRECT:
        return lambda: conv_direct(padded, bank, geom, backend=backend_name)
    if engine is Engine.TRUE2D:
        # pre-flipped bank: true2d then computes the same result as direct
        return lambda: conv_true2d(padded, flipped, geom, backend=backend_name)
    lazy = engine is Engine.LAZY_GEMM
    return lambda: conv_via_gemm(
        padded, bank, geom, lazy=lazy, backend=backend_name, threads=threads
    )


def _timed(run) -> int:
    t0 = time.perf_counter_ns()
    run()
    return time.perf_counter_ns() - t0


def write_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
