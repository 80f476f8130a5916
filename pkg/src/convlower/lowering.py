"""Lowering convolution to matrix multiplication.

Stretching copies every kernel-aligned patch of the (pre-padded) input into
one row of the patch matrix M, and flattens every filter into one column of
the filter matrix L, after which the convolution output is simply M @ L.

Both stretches share one canonical flatten order. Matrix row::

    p = (l * h_out + i'') * w_out + j''        batch-major, scan left-to-right
                                               then top-to-bottom

matrix column::

    q = (i' * k_w + j') * c_in + d             patch row-major, channel fastest

and the source coordinate each cell reads is::

    i = i'' * s + i'        j = j'' * s + j'

:class:`IndexMap` exposes that mapping directly, which is how the lazy
engine multiplies against M without ever materializing it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend as _backend
from .geometry import ConvGeometry, GeometryError, padded_output_shape
from .tensors import Matrix2, Tensor3View, Tensor4

__all__ = [
    "FilterBank",
    "FilterMatrix",
    "LoweredMatrix",
    "IndexMap",
    "index_map",
    "im2col",
    "stretch_filters",
    "unstretch_filters",
    "lowered_view3",
]


class FilterBank:
    """A set of f filters, each (k_h, k_w, c_in), stored (f, k_h, k_w, c_in)."""

    __slots__ = ("data",)

    def __init__(self, data) -> None:
        arr = np.array(data, dtype=np.float64, order="C")
        if arr.ndim != 4:
            raise ValueError(f"FilterBank needs 4 axes (f, k_h, k_w, c_in), got {arr.ndim}")
        if min(arr.shape) < 1:
            raise ValueError(f"FilterBank dimensions must be >= 1, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "FilterBank":
        bank = object.__new__(cls)
        arr.setflags(write=False)
        object.__setattr__(bank, "data", arr)
        return bank

    def __setattr__(self, name, value):
        raise AttributeError("FilterBank is immutable")

    @property
    def f(self) -> int:
        return self.data.shape[0]

    @property
    def k_h(self) -> int:
        return self.data.shape[1]

    @property
    def k_w(self) -> int:
        return self.data.shape[2]

    @property
    def c_in(self) -> int:
        return self.data.shape[3]

    def matches(self, geom: ConvGeometry) -> bool:
        return (self.k_h, self.k_w, self.c_in, self.f) == (
            geom.k_h,
            geom.k_w,
            geom.c_in,
            geom.f,
        )

    def __repr__(self) -> str:
        return f"FilterBank(f={self.f}, k={self.k_h}x{self.k_w}, c_in={self.c_in})"


@dataclass(frozen=True)
class FilterMatrix:
    """Stretched filters: column i is filter i flattened in (i', j', d) order."""

    m: Matrix2

    @property
    def patch_len(self) -> int:
        return self.m.rows

    @property
    def f(self) -> int:
        return self.m.cols


@dataclass(frozen=True)
class LoweredMatrix:
    """The patch matrix M plus the geometry that produced it.

    ``src_shape`` records the padded source (b, h, w, c): row/column indices
    of M map back into that tensor via :class:`IndexMap`.
    """

    m: Matrix2
    geom: ConvGeometry
    src_shape: tuple[int, int, int, int]

    @property
    def h_out(self) -> int:
        return padded_output_shape(self.geom, self.src_shape[1], self.src_shape[2])[0]

    @property
    def w_out(self) -> int:
        return padded_output_shape(self.geom, self.src_shape[1], self.src_shape[2])[1]


@dataclass(frozen=True)
class IndexMap:
    """Bidirectional index bookkeeping between M cells and source coordinates.

    The forward direction (matrix cell -> source element) is total and
    deterministic. The reverse direction returns *all* cells that read a
    source element: overlapping patches make it one-to-many.
    """

    geom: ConvGeometry
    src_shape: tuple[int, int, int, int]

    def __post_init__(self) -> None:
        b, h, w, c = self.src_shape
        if c != self.geom.c_in:
            raise GeometryError(
                f"source has {c} channels but geometry expects {self.geom.c_in}"
            )
        # Validates kernel fit and stride divisibility up front.
        padded_output_shape(self.geom, h, w)

    @property
    def h_out(self) -> int:
        return padded_output_shape(self.geom, self.src_shape[1], self.src_shape[2])[0]

    @property
    def w_out(self) -> int:
        return padded_output_shape(self.geom, self.src_shape[1], self.src_shape[2])[1]

    @property
    def rows(self) -> int:
        return self.src_shape[0] * self.h_out * self.w_out

    @property
    def cols(self) -> int:
        return self.geom.patch_len

    def source_index(self, p: int, q: int) -> tuple[int, int, int, int]:
        """Source coordinate (l, i, j, d) read by matrix cell (p, q)."""
        if not 0 <= p < self.rows:
            raise IndexError(f"row index {p} out of range [0, {self.rows})")
        if not 0 <= q < self.cols:
            raise IndexError(f"column index {q} out of range [0, {self.cols})")
        g = self.geom
        h_out, w_out = self.h_out, self.w_out
        l, r = divmod(p, h_out * w_out)
        i2, j2 = divmod(r, w_out)
        rest, d = divmod(q, g.c_in)
        i1, j1 = divmod(rest, g.k_w)
        return l, i2 * g.s + i1, j2 * g.s + j1, d

    def matrix_cells(self, l: int, i: int, j: int, d: int) -> list[tuple[int, int]]:
        """Every matrix cell (p, q) that reads source element (l, i, j, d)."""
        b, h, w, c = self.src_shape
        for value, size, axis in ((l, b, "batch"), (i, h, "row"), (j, w, "col"), (d, c, "channel")):
            if not 0 <= value < size:
                raise IndexError(f"{axis} index {value} out of range [0, {size})")
        g = self.geom
        cells = []
        for i1 in range(g.k_h):
            i2, rem = divmod(i - i1, g.s)
            if rem != 0 or not 0 <= i2 < self.h_out:
                continue
            for j1 in range(g.k_w):
                j2, rem = divmod(j - j1, g.s)
                if rem != 0 or not 0 <= j2 < self.w_out:
                    continue
                p = (l * self.h_out + i2) * self.w_out + j2
                q = (i1 * g.k_w + j1) * g.c_in + d
                cells.append((p, q))
        return cells


def index_map(
    p: int, q: int, geom: ConvGeometry, src_shape: tuple[int, int, int, int]
) -> tuple[int, int, int, int]:
    """Source coordinate read by patch-matrix cell (p, q); see IndexMap."""
    return IndexMap(geom, src_shape).source_index(p, q)


def im2col(src: Tensor4, geom: ConvGeometry) -> LoweredMatrix:
    """Stretch a pre-padded tensor into the patch matrix M.

    M has one row per kernel position (batch-major, left-to-right then
    top-to-bottom) and one column per patch element in (i', j', d) order:
    M[p, q] == src[index_map(p, q)] for every cell.
    """
    if src.c != geom.c_in:
        raise GeometryError(f"source has {src.c} channels but geometry expects {geom.c_in}")
    h_out, w_out, _ = padded_output_shape(geom, src.h, src.w)
    out = np.empty((src.b * h_out * w_out, geom.patch_len), dtype=np.float64)
    _backend.ACTIVE.im2col_fill(src.data, geom.k_h, geom.k_w, geom.s, out)
    return LoweredMatrix(Matrix2._wrap(out), geom, src.shape)


def stretch_filters(bank: FilterBank) -> FilterMatrix:
    """Flatten each filter to a column; column order matches im2col's rows."""
    # (f, kh, kw, c) -> rows (kh*kw*c) x cols f. Row-major flatten of each
    # filter is exactly the canonical (i', j', d) order.
    f = bank.f
    flat = bank.data.reshape(f, -1)
    return FilterMatrix(Matrix2(flat.T))


def unstretch_filters(fm: FilterMatrix, geom: ConvGeometry) -> FilterBank:
    """Inverse relabeling of stretch_filters."""
    if fm.patch_len != geom.patch_len or fm.f != geom.f:
        raise GeometryError(
            f"filter matrix {fm.patch_len}x{fm.f} does not match geometry "
            f"({geom.patch_len}x{geom.f})"
        )
    bank = fm.m.data.T.reshape(geom.f, geom.k_h, geom.k_w, geom.c_in)
    return FilterBank(bank)


def lowered_view3(lm: LoweredMatrix) -> Tensor3View:
    """Zero-copy (b, h_out*w_out, patch_len) view of M, one block per sample."""
    return Tensor3View(lm.m, lm.src_shape[0])
