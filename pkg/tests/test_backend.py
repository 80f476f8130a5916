"""Cross-backend contract: the compiled core and the numpy fallback are
bit-for-bit interchangeable."""

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from convlower import backend
from convlower.engines import gemm
from convlower.tensors import Matrix2

from helpers import random_conv_case

needs_compiled = pytest.mark.skipif(
    not backend.COMPILED_AVAILABLE, reason="compiled extension not built"
)


def test_active_backend_is_valid():
    assert backend.ACTIVE_NAME in ("compiled", "fallback")
    assert backend.get_backend(None) is backend.ACTIVE


def test_unknown_backend_rejected():
    with pytest.raises(ValueError, match="unknown backend"):
        backend.get_backend("cuda")


@needs_compiled
def test_gemm_backends_bitwise_equal():
    rng = np.random.default_rng(0)
    ck = backend.get_backend("compiled")
    pk = backend.get_backend("fallback")
    for _ in range(30):
        m, k, n = (int(x) for x in rng.integers(1, 30, 3))
        a = rng.standard_normal((m, k))
        b = rng.standard_normal((k, n))
        o1 = np.empty((m, n))
        o2 = np.empty((m, n))
        ck.gemm_fill(a, b, o1, int(rng.integers(1, 40)))
        pk.gemm_fill(a, b, o2)
        assert_array_equal(o1, o2)


@needs_compiled
def test_conv_kernels_backends_bitwise_equal():
    rng = np.random.default_rng(1)
    ck = backend.get_backend("compiled")
    pk = backend.get_backend("fallback")
    for _ in range(30):
        src, bank, s, _ = random_conv_case(rng)
        f, kh, kw, c = bank.shape
        bsz, hin, win, _ = src.shape
        hout = (hin - kh) // s + 1
        wout = (win - kw) // s + 1

        o1 = np.empty((bsz, hout, wout, f))
        o2 = np.empty_like(o1)
        ck.conv_direct_fill(src, bank, s, o1)
        pk.conv_direct_fill(src, bank, s, o2)
        assert_array_equal(o1, o2)

        m1 = np.empty((bsz * hout * wout, kh * kw * c))
        m2 = np.empty_like(m1)
        ck.im2col_fill(src, kh, kw, s, m1)
        pk.im2col_fill(src, kh, kw, s, m2)
        assert_array_equal(m1, m2)

        lmat = np.ascontiguousarray(bank.reshape(f, -1).T)
        l1 = np.empty((bsz * hout * wout, f))
        l2 = np.empty_like(l1)
        ck.lazy_gemm_fill(src, lmat, kh, kw, s, l1)
        pk.lazy_gemm_fill(src, lmat, kh, kw, s, l2)
        assert_array_equal(l1, l2)


@needs_compiled
def test_gemm_threaded_rows_bitwise_equal():
    rng = np.random.default_rng(2)
    a = Matrix2(rng.standard_normal((97, 31)))
    b = Matrix2(rng.standard_normal((31, 13)))
    ref = gemm(a, b, threads=1, backend="compiled").data
    for threads in (2, 3, 8):
        assert_array_equal(gemm(a, b, threads=threads, backend="compiled").data, ref)


def test_engine_backend_override():
    rng = np.random.default_rng(3)
    a = Matrix2(rng.standard_normal((5, 7)))
    b = Matrix2(rng.standard_normal((7, 3)))
    out_active = gemm(a, b).data
    out_fallback = gemm(a, b, backend="fallback").data
    assert_array_equal(out_active, out_fallback)
