"""Dense float64 containers with a fixed row-major memory layout.

Every value in this package lives in one of three containers:

* :class:`Tensor4` -- a batched feature map laid out batch/row/col/channel,
  so index ``(l, i, j, d)`` sits at flat offset ``((l*h + i)*w + j)*c + d``.
* :class:`Matrix2` -- a plain row-major matrix.
* :class:`Tensor3View` -- a zero-copy partition of a :class:`Matrix2` into
  equally sized row blocks.

Containers are frozen after construction (the backing array is marked
read-only), so they can be shared across threads freely. There is no
broadcasting and no implicit reshaping; every shape mismatch raises.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Tensor4",
    "Matrix2",
    "Tensor3View",
    "DumpFormatError",
    "tensor4_at",
    "reshape_matrix_to_tensor4",
    "frobenius_norm",
    "write_dump",
    "read_dump",
]


class DumpFormatError(ValueError):
    """Raised when a dump file's header or payload is malformed."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class Tensor4:
    """Batched feature map of shape (batch, rows, cols, channels), float64.

    The public constructor always copies its input; engine code wraps
    freshly allocated buffers through :meth:`_wrap` to avoid the copy.
    """

    __slots__ = ("data",)

    def __init__(self, data) -> None:
        arr = np.array(data, dtype=np.float64, order="C")
        if arr.ndim != 4:
            raise ValueError(f"Tensor4 needs 4 axes, got {arr.ndim}")
        if min(arr.shape) < 1:
            raise ValueError(f"Tensor4 dimensions must all be >= 1, got {arr.shape}")
        object.__setattr__(self, "data", _freeze(arr))

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor4":
        # Internal: take ownership of a fresh C-contiguous f64 array, no copy.
        t = object.__new__(cls)
        object.__setattr__(t, "data", _freeze(arr))
        return t

    @classmethod
    def from_flat(cls, shape: tuple[int, int, int, int], flat) -> "Tensor4":
        flat = np.asarray(flat, dtype=np.float64)
        b, h, w, c = shape
        if flat.size != b * h * w * c:
            raise ValueError(
                f"flat data has {flat.size} elements, shape {shape} needs {b * h * w * c}"
            )
        return cls(flat.reshape(shape))

    def __setattr__(self, name, value):
        raise AttributeError("Tensor4 is immutable")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def b(self) -> int:
        return self.data.shape[0]

    @property
    def h(self) -> int:
        return self.data.shape[1]

    @property
    def w(self) -> int:
        return self.data.shape[2]

    @property
    def c(self) -> int:
        return self.data.shape[3]

    @property
    def flat(self) -> np.ndarray:
        """Row-major flat view of the backing storage."""
        return self.data.reshape(-1)

    def __repr__(self) -> str:
        return f"Tensor4(shape={self.shape})"


class Matrix2:
    """Row-major float64 matrix."""

    __slots__ = ("data",)

    def __init__(self, data) -> None:
        arr = np.array(data, dtype=np.float64, order="C")
        if arr.ndim != 2:
            raise ValueError(f"Matrix2 needs 2 axes, got {arr.ndim}")
        if min(arr.shape) < 1:
            raise ValueError(f"Matrix2 dimensions must be >= 1, got {arr.shape}")
        object.__setattr__(self, "data", _freeze(arr))

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Matrix2":
        m = object.__new__(cls)
        object.__setattr__(m, "data", _freeze(arr))
        return m

    @classmethod
    def from_flat(cls, shape: tuple[int, int], flat) -> "Matrix2":
        flat = np.asarray(flat, dtype=np.float64)
        rows, cols = shape
        if flat.size != rows * cols:
            raise ValueError(
                f"flat data has {flat.size} elements, shape {shape} needs {rows * cols}"
            )
        return cls(flat.reshape(shape))

    def __setattr__(self, name, value):
        raise AttributeError("Matrix2 is immutable")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def __repr__(self) -> str:
        return f"Matrix2({self.rows}x{self.cols})"


@dataclass(frozen=True)
class Tensor3View:
    """Zero-copy partition of a Matrix2 into `outer` contiguous row blocks.

    Block ``l``, row ``r`` aliases backing row ``l*rows + r``; nothing is
    copied, so the view is only as mutable as its backing (not at all).
    """

    backing: Matrix2
    outer: int

    def __post_init__(self) -> None:
        if self.outer < 1:
            raise ValueError(f"outer must be >= 1, got {self.outer}")
        if self.backing.rows % self.outer != 0:
            raise ValueError(
                f"cannot split {self.backing.rows} rows into {self.outer} equal blocks"
            )

    @property
    def rows(self) -> int:
        return self.backing.rows // self.outer

    @property
    def cols(self) -> int:
        return self.backing.cols

    def block(self, l: int) -> np.ndarray:
        """Read-only (rows, cols) view of block l."""
        if not 0 <= l < self.outer:
            raise IndexError(f"block index {l} out of range [0, {self.outer})")
        return self.backing.data[l * self.rows : (l + 1) * self.rows]

    def as_array(self) -> np.ndarray:
        """Read-only (outer, rows, cols) view over the backing matrix."""
        return self.backing.data.reshape(self.outer, self.rows, self.cols)


def tensor4_at(t: Tensor4, l: int, i: int, j: int, d: int) -> float:
    """Element at (batch l, row i, col j, channel d), with named bounds errors."""
    for value, size, axis in (
        (l, t.b, "batch"),
        (i, t.h, "row"),
        (j, t.w, "col"),
        (d, t.c, "channel"),
    ):
        if not 0 <= value < size:
            raise IndexError(f"{axis} index {value} out of range [0, {size})")
    return float(t.data[l, i, j, d])


def reshape_matrix_to_tensor4(
    m: Matrix2, shape: tuple[int, int, int, int]
) -> Tensor4:
    """Relabel a (b*h*w, c) matrix as a (b, h, w, c) tensor, zero-copy.

    Pure relabeling: the flat data is identical byte for byte. The matrix
    rows must enumerate the b*h*w positions and the columns the channels.
    """
    b, h, w, c = shape
    if m.rows * m.cols != b * h * w * c:
        raise ValueError(
            f"cannot reshape {m.rows}x{m.cols} ({m.rows * m.cols} elements) "
            f"to {shape} ({b * h * w * c} elements)"
        )
    if m.rows != b * h * w or m.cols != c:
        raise ValueError(
            f"matrix {m.rows}x{m.cols} is not laid out as ({b}*{h}*{w}) rows x {c} channels"
        )
    return Tensor4._wrap(m.data.reshape(shape))


def frobenius_norm(m) -> float:
    """sqrt of the sum of squared entries. Accepts Matrix2 or any array."""
    arr = m.data if isinstance(m, (Matrix2, Tensor4)) else np.asarray(m, dtype=np.float64)
    return float(np.sqrt(np.sum(arr * arr)))


# ---------------------------------------------------------------------------
# Dump format: one JSON header line, then raw little-endian float64 in layout
# order. Shared by the CLI for both tensors and lowered matrices.
# ---------------------------------------------------------------------------

def write_dump(path, obj: Tensor4 | Matrix2) -> None:
    if isinstance(obj, Tensor4):
        header = {"shape": list(obj.shape), "dtype": "f64", "order": "bhwc"}
    elif isinstance(obj, Matrix2):
        header = {"shape": [obj.rows, obj.cols], "dtype": "f64", "order": "rowmajor"}
    else:
        raise TypeError(f"cannot dump object of type {type(obj).__name__}")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("ascii") + b"\n")
        fh.write(obj.data.astype("<f8", copy=False).tobytes())


def read_dump(path) -> Tensor4 | Matrix2:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
        except ValueError as exc:
            raise DumpFormatError(f"{path}: malformed dump header") from exc
        if header.get("dtype") != "f64":
            raise DumpFormatError(f"{path}: unsupported dtype {header.get('dtype')!r}")
        shape = tuple(header["shape"])
        payload = fh.read()
    expected = int(np.prod(shape)) * 8
    if len(payload) != expected:
        raise DumpFormatError(
            f"{path}: payload has {len(payload)} bytes, shape {shape} needs {expected}"
        )
    arr = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
    if len(shape) == 4:
        return Tensor4(arr)
    if len(shape) == 2:
        return Matrix2(arr)
    raise DumpFormatError(f"{path}: unsupported rank {len(shape)}")
