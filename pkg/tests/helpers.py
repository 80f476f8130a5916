"""Independent reference implementations used as test oracles.

Everything here is deliberately written from the definitions using plain
loops and numpy indexing only -- no imports from the package under test --
so a bug in the library cannot hide in its own oracle.
"""

import numpy as np


def flat_offset(shape, l, i, j, d):
    """Row-major offset of (l, i, j, d) in a (b, h, w, c) layout."""
    b, h, w, c = shape
    return ((l * h + i) * w + j) * c + d


def naive_gemm(a, b):
    """Triple-loop matrix product, scalar accumulator, ascending k."""
    m, kdim = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for k in range(kdim):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def conv_direct_oracle(src, bank, s):
    """Literal sliding-window cross-correlation over a pre-padded NHWC array."""
    bs, hin, win, c = src.shape
    f, kh, kw, _ = bank.shape
    hout = (hin - kh) // s + 1
    wout = (win - kw) // s + 1
    out = np.zeros((bs, hout, wout, f))
    for l in range(bs):
        for io in range(hout):
            for jo in range(wout):
                for fi in range(f):
                    acc = 0.0
                    for ik in range(kh):
                        for jk in range(kw):
                            for d in range(c):
                                acc += src[l, io * s + ik, jo * s + jk, d] * bank[fi, ik, jk, d]
                    out[l, io, jo, fi] = acc
    return out


def conv_true2d_oracle(src, bank, s):
    """Double-sum convolution: the filter is indexed reversed in both
    spatial directions, channels summed without reversal."""
    bs, hin, win, c = src.shape
    f, kh, kw, _ = bank.shape
    hout = (hin - kh) // s + 1
    wout = (win - kw) // s + 1
    out = np.zeros((bs, hout, wout, f))
    for l in range(bs):
        for io in range(hout):
            for jo in range(wout):
                for fi in range(f):
                    acc = 0.0
                    for ik in range(kh):
                        for jk in range(kw):
                            for d in range(c):
                                acc += (
                                    src[l, io * s + ik, jo * s + jk, d]
                                    * bank[fi, kh - 1 - ik, kw - 1 - jk, d]
                                )
                    out[l, io, jo, fi] = acc
    return out


def conv1d_scatter(g, h):
    """Full 1-D convolution by scattering every product g[t]*h[u] to t+u."""
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    out = np.zeros(g.size + h.size - 1)
    for t in range(g.size):
        for u in range(h.size):
            out[t + u] += g[t] * h[u]
    return out


def patch_list(src, kh, kw, s):
    """Enumerate patches of a single-image NHWC array, scan order
    left-to-right then top-to-bottom; returns list of (i'', j'', patch)."""
    bs, hin, win, c = src.shape
    assert bs == 1
    hout = (hin - kh) // s + 1
    wout = (win - kw) // s + 1
    patches = []
    for io in range(hout):
        for jo in range(wout):
            patches.append((io, jo, src[0, io * s : io * s + kh, jo * s : jo * s + kw, :]))
    return patches


def random_conv_case(rng, max_b=3, max_hw=8, max_c=3, max_f=4, pad=(0, 1)):
    """Sample a small valid convolution case as plain arrays and ints.

    Returns (padded src, bank, stride, pad) with the padding already
    applied to src; stride always divides both spans exactly.
    """
    b = int(rng.integers(1, max_b + 1))
    h = int(rng.integers(1, max_hw + 1))
    w = int(rng.integers(1, max_hw + 1))
    c = int(rng.integers(1, max_c + 1))
    f = int(rng.integers(1, max_f + 1))
    kh = int(rng.integers(1, h + 1))
    kw = int(rng.integers(1, w + 1))
    p = int(rng.choice(pad))
    hp, wp = h + 2 * p, w + 2 * p
    strides = [s for s in range(1, max(hp - kh, wp - kw, 1) + 1)
               if (hp - kh) % s == 0 and (wp - kw) % s == 0]
    s = int(rng.choice(strides))
    inner = rng.standard_normal((b, h, w, c))
    src = np.zeros((b, hp, wp, c))
    src[:, p : p + h, p : p + w, :] = inner
    bank = rng.standard_normal((f, kh, kw, c))
    return src, bank, s, p
