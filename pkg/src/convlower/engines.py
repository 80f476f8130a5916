"""Convolution evaluation engines and the GEMM primitive.

Four interchangeable engines compute the same sliding-window product:

* ``direct``  -- literal nested-loop sliding window (the reference).
* ``true2d``  -- textbook convolution; equals ``direct`` with the kernel
  flipped along both spatial axes.
* ``gemm``    -- stretch to the patch matrix, multiply, reshape back.
* ``lazy``    -- same product, but patch elements are fetched through the
  index map instead of materializing the patch matrix.

All engines accumulate each output element in the canonical ascending
(i', j', d) order with one float64 accumulator, so direct, gemm, and lazy
agree bit for bit; true2d agrees bit for bit with direct after the flip.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import backend as _backend
from .geometry import ConvGeometry, GeometryError, padded_output_shape
from .lowering import FilterBank, im2col, stretch_filters
from .tensors import Matrix2, Tensor4

__all__ = [
    "Engine",
    "GemmSpec",
    "conv1d",
    "cross_correlate_patch",
    "flip_kernel",
    "flip_bank",
    "conv_direct",
    "conv_true2d",
    "conv_via_gemm",
    "gemm",
    "transpose",
    "run_engine",
]


class Engine(Enum):
    DIRECT = "direct"
    TRUE2D = "true2d"
    IM2COL_GEMM = "gemm"
    LAZY_GEMM = "lazy"


@dataclass(frozen=True)
class GemmSpec:
    """Operand dimensions plus the k-block size used for cache tiling.

    The block size tunes traversal only; results are independent of it.
    """

    m: int
    n: int
    k: int
    kc: int = 256


def conv1d(g, h) -> np.ndarray:
    """Full 1-D discrete convolution: out[n] = sum_t g[t] * h[n - t].

    Both sequences must be finite and non-empty; the output has length
    len(g) + len(h) - 1. Terms are summed in ascending t.
    """
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if g.ndim != 1 or h.ndim != 1:
        raise ValueError("conv1d takes 1-D sequences")
    if g.size == 0 or h.size == 0:
        raise ValueError("conv1d inputs must be non-empty")
    out = np.zeros(g.size + h.size - 1, dtype=np.float64)
    for n in range(out.size):
        acc = 0.0
        t_lo = max(0, n - h.size + 1)
        t_hi = min(n, g.size - 1)
        for t in range(t_lo, t_hi + 1):
            acc += g[t] * h[n - t]
        out[n] = acc
    return out


def cross_correlate_patch(patch, filt) -> float:
    """Sum of element-wise products of two equal-shape blocks.

    This is the per-position primitive of the direct engine: no kernel
    flip, terms accumulated in row-major (i', j', d) order.
    """
    patch = np.asarray(patch, dtype=np.float64)
    filt = np.asarray(filt, dtype=np.float64)
    if patch.shape != filt.shape:
        raise ValueError(f"shape mismatch: patch {patch.shape} vs filter {filt.shape}")
    acc = 0.0
    for a, b in zip(patch.reshape(-1), filt.reshape(-1)):
        acc += a * b
    return acc


def flip_kernel(filt) -> np.ndarray:
    """Reverse a (k_h, k_w, ...) block along both spatial axes.

    Channels are never reversed: flipping relates cross-correlation to
    textbook convolution, and that definition is spatial.
    """
    filt = np.asarray(filt, dtype=np.float64)
    if filt.ndim < 2:
        raise ValueError("flip_kernel needs at least 2 spatial axes")
    return np.ascontiguousarray(filt[::-1, ::-1])


def flip_bank(bank: FilterBank) -> FilterBank:
    """Flip every filter in a bank along its spatial axes."""
    return FilterBank(np.ascontiguousarray(bank.data[:, ::-1, ::-1, :]))


def _check_conv_args(src: Tensor4, bank: FilterBank, geom: ConvGeometry, truncate: bool):
    if not bank.matches(geom):
        raise GeometryError(
            f"filter bank {bank!r} does not match geometry "
            f"(k={geom.k_h}x{geom.k_w}, c_in={geom.c_in}, f={geom.f})"
        )
    if src.c != geom.c_in:
        raise GeometryError(f"source has {src.c} channels but geometry expects {geom.c_in}")
    return padded_output_shape(geom, src.h, src.w, truncate=truncate)


def conv_direct(
    src: Tensor4,
    bank: FilterBank,
    geom: ConvGeometry,
    truncate: bool = False,
    backend: str | None = None,
) -> Tensor4:
    """Slide every filter across the pre-padded input; the reference engine."""
    h_out, w_out, f = _check_conv_args(src, bank, geom, truncate)
    out = np.empty((src.b, h_out, w_out, f), dtype=np.float64)
    _backend.get_backend(backend).conv_direct_fill(src.data, bank.data, geom.s, out)
    return Tensor4._wrap(out)


def conv_true2d(
    src: Tensor4,
    bank: FilterBank,
    geom: ConvGeometry,
    truncate: bool = False,
    backend: str | None = None,
) -> Tensor4:
    """Textbook 2-D convolution: the direct engine with flipped kernels."""
    return conv_direct(src, flip_bank(bank), geom, truncate=truncate, backend=backend)


def gemm(
    a: Matrix2,
    b: Matrix2,
    spec: GemmSpec | None = None,
    threads: int = 1,
    backend: str | None = None,
) -> Matrix2:
    """Matrix product with a fixed k-ascending per-element summation order.

    Deterministic across runs, block sizes, and thread counts. With
    threads > 1, disjoint row blocks are filled concurrently (the compiled
    backend releases the GIL; the fallback runs them sequentially).
    """
    if a.cols != b.rows:
        raise ValueError(f"gemm dimension mismatch: {a.rows}x{a.cols} @ {b.rows}x{b.cols}")
    if spec is None:
        spec = GemmSpec(a.rows, b.cols, a.cols)
    impl = _backend.get_backend(backend)
    out = np.empty((a.rows, b.cols), dtype=np.float64)
    if threads <= 1 or a.rows < 2 * threads:
        impl.gemm_fill(a.data, b.data, out, spec.kc)
    else:
        bounds = np.linspace(0, a.rows, threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(impl.gemm_fill, a.data, b.data, out, spec.kc, r0, r1)
                for r0, r1 in zip(bounds[:-1], bounds[1:])
                if r1 > r0
            ]
            for fut in futures:
                fut.result()
    return Matrix2._wrap(out)


def transpose(m: Matrix2) -> Matrix2:
    """Materialized transpose (relabeling copy)."""
    return Matrix2(m.data.T)


def conv_via_gemm(
    src: Tensor4,
    bank: FilterBank,
    geom: ConvGeometry,
    lazy: bool = False,
    truncate: bool = False,
    backend: str | None = None,
    threads: int = 1,
) -> Tensor4:
    """Convolution as a matrix product: stretch, multiply, reshape back.

    With ``lazy=True`` the patch matrix is never materialized; elements are
    fetched through the index map during the product. Both routes return
    bit-identical results.
    """
    h_out, w_out, f = _check_conv_args(src, bank, geom, truncate)
    lmat = stretch_filters(bank)
    if lazy:
        out = np.empty((src.b * h_out * w_out, f), dtype=np.float64)
        _backend.get_backend(backend).lazy_gemm_fill(
            src.data, lmat.m.data, geom.k_h, geom.k_w, geom.s, out
        )
        product = Matrix2._wrap(out)
    else:
        lowered = im2col(src, geom)
        product = gemm(lowered.m, lmat.m, backend=backend, threads=threads)
    return Tensor4._wrap(product.data.reshape(src.b, h_out, w_out, f))


def run_engine(
    engine: Engine | str,
    src: Tensor4,
    bank: FilterBank,
    geom: ConvGeometry,
    backend: str | None = None,
) -> Tensor4:
    """Dispatch by engine name; used by the CLI, verifier, and benchmarks."""
    engine = Engine(engine) if not isinstance(engine, Engine) else engine
    if engine is Engine.DIRECT:
        return conv_direct(src, bank, geom, backend=backend)
    if engine is Engine.TRUE2D:
        return conv_true2d(src, bank, geom, backend=backend)
    if engine is Engine.IM2COL_GEMM:
        return conv_via_gemm(src, bank, geom, lazy=False, backend=backend)
    return conv_via_gemm(src, bank, geom, lazy=True, backend=backend)
