"""Numpy fallback for the compiled kernels, selected when the extension is
missing.

Each function reproduces the compiled kernel's accumulation order exactly:
per output element, terms are added in ascending reduction-index order into
a single float64 accumulator. IEEE mul and add are the same operations
whether issued from C loops or numpy ufuncs, so the two backends agree bit
for bit (the extension is built with FP contraction off).
"""

from __future__ import annotations

import numpy as np

NAME = "fallback"


def gemm_fill(a, b, out, kc=256, r0=0, r1=-1):
    """Fill out[r0:r1] with (a @ b)[r0:r1], accumulating k-ascending.

    One rank-1 update per k: element (i, j) sees exactly the ordered sum
    a[i,0]*b[0,j] + a[i,1]*b[1,j] + ... , never a reassociated dot product.
    kc is accepted for interface parity; blocking cannot change results.
    """
    if r1 < 0:
        r1 = a.shape[0]
    sub = out[r0:r1]
    sub[:] = 0.0
    asub = a[r0:r1]
    for k in range(a.shape[1]):
        sub += asub[:, k, np.newaxis] * b[k, :]


def conv_direct_fill(src, bank, s, out):
    """Sliding-window convolution; src pre-padded, out pre-allocated."""
    f, kh, kw, c = bank.shape
    hout, wout = out.shape[1], out.shape[2]
    out[:] = 0.0
    for ik in range(kh):
        for jk in range(kw):
            for d in range(c):
                window = src[
                    :,
                    ik : ik + (hout - 1) * s + 1 : s,
                    jk : jk + (wout - 1) * s + 1 : s,
                    d,
                ]
                out += window[..., np.newaxis] * bank[:, ik, jk, d]


def im2col_fill(src, kh, kw, s, out):
    """Copy every kernel-aligned patch into one row of out."""
    b, hin, win, c = src.shape
    hout = (hin - kh) // s + 1
    wout = (win - kw) // s + 1
    shaped = out.reshape(b, hout, wout, kh, kw, c)
    for ik in range(kh):
        for jk in range(kw):
            shaped[:, :, :, ik, jk, :] = src[
                :,
                ik : ik + (hout - 1) * s + 1 : s,
                jk : jk + (wout - 1) * s + 1 : s,
                :,
            ]


def lazy_gemm_fill(src, lmat, kh, kw, s, out):
    """GEMM against the virtual patch matrix, fetching through the index map.

    The gather for column q is the strided window starting at (i', j', d);
    q ascends, so every output element accumulates in the same order as the
    materialized product.
    """
    b, hin, win, c = src.shape
    hout = (hin - kh) // s + 1
    wout = (win - kw) // s + 1
    f = lmat.shape[1]
    out3 = out.reshape(b, hout, wout, f)
    out3[:] = 0.0
    q = 0
    for ik in range(kh):
        for jk in range(kw):
            for d in range(c):
                window = src[
                    :,
                    ik : ik + (hout - 1) * s + 1 : s,
                    jk : jk + (wout - 1) * s + 1 : s,
                    d,
                ]
                out3 += window[..., np.newaxis] * lmat[q, :]
                q += 1
