"""Randomized cross-engine verification.

Every sampled geometry is evaluated by the direct sliding-window reference
and by the two GEMM routes; the check passes when

    max|direct - other| <= tol * (1 + max|direct|)

for every case. With the shared accumulation order the observed error is
exactly zero, so the default tolerance of 1e-10 is slack, not load-bearing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engines import Engine, run_engine
from .geometry import ConvGeometry, pad_zeros
from .lowering import FilterBank
from .tensors import Tensor4

__all__ = ["VerifyResult", "random_case", "run_verify"]

_CHECKED = (Engine.IM2COL_GEMM, Engine.LAZY_GEMM)


@dataclass
class VerifyResult:
    cases: int
    tol: float
    max_rel_err: float = 0.0
    worst_geometry: dict = field(default_factory=dict)
    ok: bool = True

    def summary(self) -> dict:
        return {
            "cases": self.cases,
            "tol": self.tol,
            "max_rel_err": self.max_rel_err,
            "worst_geometry": self.worst_geometry,
            "ok": self.ok,
        }


def random_case(
    rng: np.random.Generator,
    max_b: int = 3,
    max_hw: int = 12,
    max_c: int = 4,
    max_f: int = 5,
) -> tuple[Tensor4, FilterBank, ConvGeometry, dict]:
    """Sample a valid geometry plus matching random data.

    Kernel extents stay within the unpadded image, padding is 0 or 1, and
    the stride is drawn from the values that divide both spatial spans
    exactly (stride 1 always qualifies).
    """
    b = int(rng.integers(1, max_b + 1))
    h = int(rng.integers(1, max_hw + 1))
    w = int(rng.integers(1, max_hw + 1))
    c = int(rng.integers(1, max_c + 1))
    f = int(rng.integers(1, max_f + 1))
    k_h = int(rng.integers(1, h + 1))
    k_w = int(rng.integers(1, w + 1))
    p = int(rng.integers(0, 2))
    h_pad, w_pad = h + 2 * p, w + 2 * p
    strides = [
        s
        for s in range(1, max(h_pad - k_h, w_pad - k_w, 1) + 1)
        if (h_pad - k_h) % s == 0 and (w_pad - k_w) % s == 0
    ]
    s = int(rng.choice(strides))
    geom = ConvGeometry(k_h=k_h, k_w=k_w, c_in=c, f=f, s=s, p=p)
    src = Tensor4._wrap(rng.standard_normal((b, h, w, c)))
    bank = FilterBank(rng.standard_normal((f, k_h, k_w, c)))
    desc = {"b": b, "h": h, "w": w, "c_in": c, "f": f, "k_h": k_h, "k_w": k_w, "s": s, "p": p}
    return src, bank, geom, desc


def run_verify(
    cases: int,
    seed: int,
    tol: float = 1e-10,
    corrupt: bool = False,
) -> VerifyResult:
    """Compare the GEMM engines against the direct reference on random cases.

    ``corrupt`` perturbs the materialized-GEMM result and exists purely as
    a negative control: it must make verification fail.
    """
    if cases < 1:
        raise ValueError(f"cases must be >= 1, got {cases}")
    rng = np.random.default_rng(seed)
    result = VerifyResult(cases=cases, tol=tol)
    for _ in range(cases):
        src, bank, geom, desc = random_case(rng)
        padded = pad_zeros(src, geom.p)
        ref = run_engine(Engine.DIRECT, padded, bank, geom).data
        scale = 1.0 + float(np.max(np.abs(ref)))
        for engine in _CHECKED:
            out = run_engine(engine, padded, bank, geom).data
            if corrupt and engine is Engine.IM2COL_GEMM:
                out = out.copy()
                out.flat[0] += 1e-3
            rel = float(np.max(np.abs(ref - out))) / scale
            if rel > result.max_rel_err:
                result.max_rel_err = rel
                result.worst_geometry = dict(desc, engine=engine.value, rel_err=rel)
            if rel > tol:
                result.ok = False
    return result
