import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_array_equal

from convlower import (
    DumpFormatError,
    Matrix2,
    Tensor3View,
    Tensor4,
    frobenius_norm,
    read_dump,
    reshape_matrix_to_tensor4,
    tensor4_at,
    write_dump,
)

from helpers import flat_offset

dims = st.integers(min_value=1, max_value=4)


def test_at_single_element():
    t = Tensor4.from_flat((1, 1, 1, 1), [7.0])
    assert tensor4_at(t, 0, 0, 0, 0) == 7.0


def test_at_row_major_layout():
    # expected positions computed with the hand-written offset oracle
    flat = [1.0, 2.0, 3.0, 4.0]
    t = Tensor4.from_flat((1, 2, 2, 1), flat)
    assert flat[flat_offset((1, 2, 2, 1), 0, 1, 0, 0)] == 3.0
    assert tensor4_at(t, 0, 1, 0, 0) == 3.0

    t2 = Tensor4.from_flat((2, 1, 1, 2), flat)
    assert flat[flat_offset((2, 1, 1, 2), 1, 0, 0, 1)] == 4.0
    assert tensor4_at(t2, 1, 0, 0, 1) == 4.0


@pytest.mark.parametrize(
    "index,axis",
    [((3, 0, 0, 0), "batch"), ((0, 5, 0, 0), "row"), ((0, 0, -1, 0), "col"), ((0, 0, 0, 9), "channel")],
)
def test_at_out_of_bounds_names_axis(index, axis):
    t = Tensor4(np.zeros((3, 5, 4, 2)))
    with pytest.raises(IndexError, match=axis):
        tensor4_at(t, *index)


def test_at_agrees_with_nested_enumeration():
    rng = np.random.default_rng(0)
    for shape in [(1, 1, 1, 1), (2, 3, 4, 2), (3, 5, 5, 4)]:
        flat = rng.standard_normal(int(np.prod(shape)))
        t = Tensor4.from_flat(shape, flat)
        b, h, w, c = shape
        for l in range(b):
            for i in range(h):
                for j in range(w):
                    for d in range(c):
                        assert tensor4_at(t, l, i, j, d) == flat[flat_offset(shape, l, i, j, d)]


def test_tensor4_validation():
    with pytest.raises(ValueError, match="4 axes"):
        Tensor4(np.zeros((2, 2)))
    with pytest.raises(ValueError, match=">= 1"):
        Tensor4(np.zeros((1, 0, 1, 1)))
    with pytest.raises(ValueError, match="elements"):
        Tensor4.from_flat((1, 2, 2, 1), [1.0, 2.0])


def test_tensor4_immutable():
    t = Tensor4(np.zeros((1, 1, 1, 1)))
    with pytest.raises(ValueError):
        t.data[0, 0, 0, 0] = 1.0
    with pytest.raises(AttributeError):
        t.data = np.zeros((1, 1, 1, 1))


def test_reshape_trivial():
    m = Matrix2([[5.0]])
    t = reshape_matrix_to_tensor4(m, (1, 1, 1, 1))
    assert t.flat.tolist() == [5.0]


def test_reshape_preserves_flat_order():
    m = Matrix2([[1.0], [2.0], [3.0], [4.0]])
    t = reshape_matrix_to_tensor4(m, (1, 2, 2, 1))
    assert t.flat.tolist() == [1.0, 2.0, 3.0, 4.0]


def test_reshape_element_count_mismatch():
    m = Matrix2(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        reshape_matrix_to_tensor4(m, (1, 1, 1, 7))


def test_reshape_layout_mismatch():
    # right element count but rows are not b*h*w positions
    m = Matrix2(np.zeros((2, 2)))
    with pytest.raises(ValueError, match="laid out"):
        reshape_matrix_to_tensor4(m, (1, 2, 2, 1))


@settings(max_examples=40)
@given(dims, dims, dims, dims)
def test_reshape_round_trip_is_identity(b, h, w, c):
    flat = np.arange(b * h * w * c, dtype=np.float64)
    t = Tensor4.from_flat((b, h, w, c), flat)
    m = Matrix2(t.data.reshape(b * h * w, c))
    back = reshape_matrix_to_tensor4(m, (b, h, w, c))
    assert_array_equal(back.flat, flat)


def test_frobenius_norm_examples():
    assert frobenius_norm(Matrix2([[0.0, 0.0], [0.0, 0.0]])) == 0.0
    assert frobenius_norm(Matrix2([[3.0, 4.0]])) == 5.0  # sqrt(9 + 16)
    assert frobenius_norm(Matrix2([[1.0, 1.0], [1.0, 1.0]])) == 2.0  # sqrt(4)


def test_view3_single_block_is_whole_matrix():
    m = Matrix2(np.arange(12, dtype=np.float64).reshape(4, 3))
    v = Tensor3View(m, 1)
    assert_array_equal(v.block(0), m.data)


def test_view3_partition_reproduces_backing():
    m = Matrix2(np.arange(24, dtype=np.float64).reshape(6, 4))
    v = Tensor3View(m, 3)
    assert v.rows == 2 and v.cols == 4
    stacked = np.concatenate([v.block(l) for l in range(3)], axis=0)
    assert stacked.tobytes() == m.data.tobytes()
    # the 3-d view aliases the same memory
    assert v.as_array().base is m.data or v.as_array().base is m.data.base


def test_view3_validation():
    m = Matrix2(np.zeros((5, 2)))
    with pytest.raises(ValueError, match="equal blocks"):
        Tensor3View(m, 2)
    v = Tensor3View(m, 5)
    with pytest.raises(IndexError):
        v.block(5)


def test_dump_round_trip_tensor(tmp_path):
    rng = np.random.default_rng(1)
    t = Tensor4(rng.standard_normal((2, 3, 4, 2)))
    path = tmp_path / "t.dump"
    write_dump(path, t)
    back = read_dump(path)
    assert isinstance(back, Tensor4)
    assert_array_equal(back.data, t.data)

    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
    assert header == {"shape": [2, 3, 4, 2], "dtype": "f64", "order": "bhwc"}


def test_dump_round_trip_matrix(tmp_path):
    m = Matrix2(np.arange(6, dtype=np.float64).reshape(2, 3))
    path = tmp_path / "m.dump"
    write_dump(path, m)
    back = read_dump(path)
    assert isinstance(back, Matrix2)
    assert_array_equal(back.data, m.data)


def test_dump_is_little_endian(tmp_path):
    m = Matrix2([[1.0]])
    path = tmp_path / "one.dump"
    write_dump(path, m)
    payload = path.read_bytes().split(b"\n", 1)[1]
    assert payload == np.float64(1.0).astype("<f8").tobytes()


def test_dump_errors(tmp_path):
    bad = tmp_path / "bad.dump"
    bad.write_bytes(b"not json\n\x00\x00")
    with pytest.raises(DumpFormatError, match="header"):
        read_dump(bad)

    short = tmp_path / "short.dump"
    short.write_bytes(b'{"shape": [2, 2], "dtype": "f64", "order": "rowmajor"}\n' + b"\x00" * 8)
    with pytest.raises(DumpFormatError, match="payload"):
        read_dump(short)
