"""Convolution geometry: kernel/stride/padding and the shape relations.

The output spatial size for a convolution is::

    h_out = (h_in + 2p - k_h) / s + 1
    w_out = (w_in + 2p - k_w) / s + 1
    c_out = f

Strict mode rejects geometries where the stride does not divide exactly,
surfacing silent shape bugs; ``truncate=True`` applies floor division
instead, matching common framework behaviour.

Convolution engines in this package take *pre-padded* inputs (padding is a
separate, explicit step via :func:`pad_zeros`); the ``p`` field on
:class:`ConvGeometry` describes the padding that was applied, and
:func:`padded_output_shape` does the shape math on already-padded sizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .tensors import Tensor4

__all__ = [
    "GeometryError",
    "ConvGeometry",
    "PaddingMode",
    "resolve_padding",
    "output_shape",
    "padded_output_shape",
    "pad_zeros",
]


class GeometryError(ValueError):
    """Raised when a kernel/stride/padding combination is unusable."""


@dataclass(frozen=True)
class ConvGeometry:
    """Kernel extents, channel counts, stride, and symmetric padding.

    One stride value serves both axes, and one padding value pads every
    side (top/bottom and left/right) equally.
    """

    k_h: int
    k_w: int
    c_in: int
    f: int
    s: int = 1
    p: int = 0

    def __post_init__(self) -> None:
        for name in ("k_h", "k_w", "c_in", "f", "s"):
            if getattr(self, name) < 1:
                raise GeometryError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.p < 0:
            raise GeometryError(f"p must be >= 0, got {self.p}")

    @property
    def patch_len(self) -> int:
        """Length of one flattened patch: k_h * k_w * c_in."""
        return self.k_h * self.k_w * self.c_in


class PaddingMode(Enum):
    VALID = "valid"
    HALF = "half"
    FULL = "full"


def resolve_padding(mode: PaddingMode | int, k_h: int, k_w: int) -> int:
    """Per-side padding for a mode: valid -> 0, half -> k//2, full -> k-1.

    An int passes through unchanged (explicit padding). Half and full need
    a square kernel since one value pads both axes; half additionally needs
    an odd kernel so the output can be centred.
    """
    if isinstance(mode, int):
        if mode < 0:
            raise GeometryError(f"explicit padding must be >= 0, got {mode}")
        return mode
    if mode is PaddingMode.VALID:
        return 0
    if k_h != k_w:
        raise GeometryError(
            f"{mode.value} padding needs a square kernel, got {k_h}x{k_w}"
        )
    if mode is PaddingMode.HALF:
        if k_h % 2 == 0:
            raise GeometryError(f"half padding needs an odd kernel, got {k_h}")
        return k_h // 2
    return k_h - 1  # FULL


def output_shape(
    g: ConvGeometry, h_in: int, w_in: int, truncate: bool = False
) -> tuple[int, int, int]:
    """(h_out, w_out, c_out) for an unpadded (h_in, w_in) input under g."""
    h_out = _axis_out(h_in + 2 * g.p, g.k_h, g.s, "rows", truncate)
    w_out = _axis_out(w_in + 2 * g.p, g.k_w, g.s, "cols", truncate)
    return h_out, w_out, g.f


def padded_output_shape(
    g: ConvGeometry, h_pad: int, w_pad: int, truncate: bool = False
) -> tuple[int, int, int]:
    """Shape math for an input whose sizes already include the padding."""
    h_out = _axis_out(h_pad, g.k_h, g.s, "rows", truncate)
    w_out = _axis_out(w_pad, g.k_w, g.s, "cols", truncate)
    return h_out, w_out, g.f


def _axis_out(padded: int, k: int, s: int, axis: str, truncate: bool) -> int:
    if padded < k:
        raise GeometryError(
            f"kernel does not fit: {k} {axis} vs padded input of {padded}"
        )
    span = padded - k
    if not truncate and span % s != 0:
        raise GeometryError(
            f"stride {s} does not divide the {axis} span {span} "
            f"(remainder {span % s}); pass truncate to floor instead"
        )
    return span // s + 1


def pad_zeros(t: Tensor4, p: int) -> Tensor4:
    """Surround every image with p rows/cols of zeros on each side."""
    if p < 0:
        raise GeometryError(f"padding must be >= 0, got {p}")
    if p == 0:
        return t
    b, h, w, c = t.shape
    out = np.zeros((b, h + 2 * p, w + 2 * p, c), dtype=np.float64)
    out[:, p : p + h, p : p + w, :] = t.data
    return Tensor4._wrap(out)
