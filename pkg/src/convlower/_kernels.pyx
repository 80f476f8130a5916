# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: GEMM, direct convolution, patch stretching.

Accumulation order is part of the contract, not an implementation detail:
every output element is a single float64 accumulator fed in ascending
reduction-index order (k for GEMM, (i', j', d) for convolution). The build
disables FP contraction, so results are bit-identical to the numpy
fallback in ``_pykernels`` and invariant under tiling and threading.
"""


cdef void _gemm_rows(const double[:, ::1] a, const double[:, ::1] b,
                     double[:, ::1] out, Py_ssize_t r0, Py_ssize_t r1,
                     Py_ssize_t kc) noexcept nogil:
    # Row range [r0, r1) of out = a @ b, k-blocked for cache reuse of b.
    # Blocking reorders traversal only: each out[i, j] still accumulates
    # a[i, k] * b[k, j] for strictly ascending k.
    cdef Py_ssize_t kdim = a.shape[1]
    cdef Py_ssize_t n = b.shape[1]
    cdef Py_ssize_t i, j, k, kb, kend
    cdef double aik
    for i in range(r0, r1):
        for j in range(n):
            out[i, j] = 0.0
    kb = 0
    while kb < kdim:
        kend = kb + kc
        if kend > kdim:
            kend = kdim
        for i in range(r0, r1):
            for k in range(kb, kend):
                aik = a[i, k]
                for j in range(n):
                    out[i, j] += aik * b[k, j]
        kb = kend


def gemm_fill(const double[:, ::1] a, const double[:, ::1] b,
              double[:, ::1] out, Py_ssize_t kc=256,
              Py_ssize_t r0=0, Py_ssize_t r1=-1):
    """Fill out[r0:r1] with (a @ b)[r0:r1]; deterministic k-ascending sums.

    Releases the GIL, so disjoint row ranges may be computed from several
    threads concurrently with a bit-identical result.
    """
    if r1 < 0:
        r1 = a.shape[0]
    if kc < 1:
        kc = a.shape[1] if a.shape[1] > 0 else 1
    with nogil:
        _gemm_rows(a, b, out, r0, r1, kc)


cdef void _conv_direct(const double[:, :, :, ::1] src,
                       const double[:, :, :, ::1] bank,
                       Py_ssize_t s,
                       double[:, :, :, ::1] out) noexcept nogil:
    # The literal sliding-window formulation; src is pre-padded.
    cdef Py_ssize_t bsz = src.shape[0]
    cdef Py_ssize_t hout = out.shape[1]
    cdef Py_ssize_t wout = out.shape[2]
    cdef Py_ssize_t f = bank.shape[0]
    cdef Py_ssize_t kh = bank.shape[1]
    cdef Py_ssize_t kw = bank.shape[2]
    cdef Py_ssize_t c = bank.shape[3]
    cdef Py_ssize_t l, io, jo, fi, ik, jk, d
    cdef double acc
    for l in range(bsz):
        for io in range(hout):
            for jo in range(wout):
                for fi in range(f):
                    acc = 0.0
                    for ik in range(kh):
                        for jk in range(kw):
                            for d in range(c):
                                acc += src[l, io * s + ik, jo * s + jk, d] \
                                       * bank[fi, ik, jk, d]
                    out[l, io, jo, fi] = acc


def conv_direct_fill(const double[:, :, :, ::1] src,
                     const double[:, :, :, ::1] bank,
                     Py_ssize_t s,
                     double[:, :, :, ::1] out):
    """out[l, i'', j'', fi] = sum over (i', j', d) of patch * filter."""
    with nogil:
        _conv_direct(src, bank, s, out)


cdef void _im2col(const double[:, :, :, ::1] src,
                  Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t s,
                  double[:, ::1] out) noexcept nogil:
    # Row p = (l*hout + i'')*wout + j''; column q = (i'*kw + j')*c + d.
    cdef Py_ssize_t bsz = src.shape[0]
    cdef Py_ssize_t c = src.shape[3]
    cdef Py_ssize_t hout = (src.shape[1] - kh) // s + 1
    cdef Py_ssize_t wout = (src.shape[2] - kw) // s + 1
    cdef Py_ssize_t l, io, jo, ik, jk, d, row, col
    for l in range(bsz):
        for io in range(hout):
            for jo in range(wout):
                row = (l * hout + io) * wout + jo
                col = 0
                for ik in range(kh):
                    for jk in range(kw):
                        for d in range(c):
                            out[row, col] = src[l, io * s + ik, jo * s + jk, d]
                            col += 1


def im2col_fill(const double[:, :, :, ::1] src,
                Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t s,
                double[:, ::1] out):
    """Copy every kernel-aligned patch of src into one row of out."""
    with nogil:
        _im2col(src, kh, kw, s, out)


cdef void _lazy_gemm(const double[:, :, :, ::1] src,
                     const double[:, ::1] lmat,
                     Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t s,
                     double[:, ::1] out) noexcept nogil:
    # Patch-matrix-times-filter-matrix without materializing the patch
    # matrix: each element M[p, q] is fetched straight from src through the
    # index mapping. q ascends, so sums match the materialized product
    # bit for bit.
    cdef Py_ssize_t c = src.shape[3]
    cdef Py_ssize_t hout = (src.shape[1] - kh) // s + 1
    cdef Py_ssize_t wout = (src.shape[2] - kw) // s + 1
    cdef Py_ssize_t rows = out.shape[0]
    cdef Py_ssize_t f = out.shape[1]
    cdef Py_ssize_t kdim = lmat.shape[0]
    cdef Py_ssize_t p, q, qq, l, r, io, jo, ik, jk, d, j
    cdef double v
    for p in range(rows):
        for j in range(f):
            out[p, j] = 0.0
        l = p // (hout * wout)
        r = p % (hout * wout)
        io = r // wout
        jo = r % wout
        for q in range(kdim):
            qq = q
            d = qq % c
            qq = qq // c
            jk = qq % kw
            ik = qq // kw
            v = src[l, io * s + ik, jo * s + jk, d]
            for j in range(f):
                out[p, j] += v * lmat[q, j]


def lazy_gemm_fill(const double[:, :, :, ::1] src,
                   const double[:, ::1] lmat,
                   Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t s,
                   double[:, ::1] out):
    """GEMM against the index-mapped (virtual) patch matrix."""
    with nogil:
        _lazy_gemm(src, lmat, kh, kw, s, out)


NAME = "compiled"
