"""FLOP counts of the DPD main path and of the two learning schemes.

All arithmetic is exact integer except where a term carries a fractional
factor, which is rounded up with ``math.ceil`` inside that term only.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Tuple

from .errors import ConfigurationError


@dataclass(frozen=True)
class ComplexityParams:
    L: int = 2
    T: int = 1
    N_IBF: int = 6
    N_BF: int = 18
    D_lin: int = 3
    N_CL: int = 20000
    I_CL: int = 15
    N_ILA: int = 100000
    I_ILA: int = 3

    def __post_init__(self):
        for name in ("L", "T", "N_IBF", "N_BF", "D_lin", "N_CL", "I_CL", "N_ILA", "I_ILA"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.T not in (1, self.L):
            raise ConfigurationError("T is 1 without crosstalk and L with crosstalk")

    @classmethod
    def from_dpd(cls, L, max_order, memory, crosstalk=False, **kw) -> "ComplexityParams":
        """Derive N_IBF (odd orders 1..Q, six for Q = 11) and N_BF = N_IBF * D_dpd."""
        n_ibf = (max_order + 1) // 2
        return cls(L=L, T=L if crosstalk else 1, N_IBF=n_ibf, N_BF=n_ibf * memory, **kw)


def _check(method: str) -> str:
    m = method.upper()
    if m not in ("CL", "ILA"):
        raise ConfigurationError(f"unknown learning method {method!r}")
    return m


def main_path_flops(p: ComplexityParams, method: str) -> Tuple[int, int, int]:
    """Per-sample (basis generation, filtering, total)."""
    m = _check(method)
    bf = p.L * (2 * p.N_IBF - 1)
    filt = p.L * (8 * p.N_BF - 8) if m == "CL" else p.L * (8 * p.N_BF - 2)
    return bf, filt, bf + filt


def learning_flops(p: ComplexityParams, method: str) -> Tuple[int, int, int]:
    """Per-learning-run (basis generation, DPD estimation, total).

    The closed-loop learner reuses the main-path basis functions computed from the
    clean stream, so its learning-time basis generation cost is zero.
    """
    m = _check(method)
    if m == "CL":
        bf = 0
        est = (
            p.L * p.I_CL * (8 * p.N_BF * p.N_CL + 8 * p.N_BF**2)
            + math.ceil(4 * p.L * p.T * (p.N_CL + Fraction(p.D_lin, 3)) * p.D_lin**2)
            + p.L * p.T * (8 * p.D_lin - 2) * p.N_CL * p.I_CL
            + 2 * p.L * p.N_CL * p.I_CL
        )
    else:
        bf = p.L * p.I_ILA * (2 * p.N_IBF - 1) * p.N_ILA
        est = math.ceil(4 * p.L * p.I_ILA * (p.N_ILA + Fraction(p.N_BF, 3)) * p.N_BF**2)
    return bf, est, bf + est


def mflops(n: int) -> float:
    """MFLOP figure truncated (not rounded) to two decimals, as tabulated."""
    return math.floor(n / 10_000) / 100


def table_rows(L=2, N_IBF=6, N_BF=18, D_lin=3, N_CL=20000, I_CL=15, N_ILA=100000, I_ILA=3) -> list:
    """Rows shaped like the published complexity table (CL learning for T=1 and T=L)."""
    base = dict(L=L, N_IBF=N_IBF, N_BF=N_BF, D_lin=D_lin, N_CL=N_CL, I_CL=I_CL, N_ILA=N_ILA, I_ILA=I_ILA)
    p1 = ComplexityParams(T=1, **base)
    pL = ComplexityParams(T=L, **base)
    rows = []
    for method in ("CL", "ILA"):
        bf, filt, tot = main_path_flops(p1, method)
        rows.append(dict(method=method, stage="main_path", quantity="bf_gen", value=bf, unit="FLOP/sample"))
        rows.append(dict(method=method, stage="main_path", quantity="filtering", value=filt, unit="FLOP/sample"))
        rows.append(dict(method=method, stage="main_path", quantity="total", value=tot, unit="FLOP/sample"))
    cl1, clL = learning_flops(p1, "CL"), learning_flops(pL, "CL")
    for q, i in (("bf_gen", 0), ("dpd_est", 1), ("total", 2)):
        val = f"{mflops(cl1[i]):.2f}" if cl1[i] == clL[i] else f"{mflops(cl1[i]):.2f} ; {mflops(clL[i]):.2f}"
        rows.append(dict(method="CL", stage="learning", quantity=q, value=val, unit="MFLOP"))
    ila = learning_flops(p1, "ILA")
    for q, i in (("bf_gen", 0), ("dpd_est", 1), ("total", 2)):
        rows.append(dict(method="ILA", stage="learning", quantity=q, value=f"{mflops(ila[i]):.2f}", unit="MFLOP"))
    return rows


def table_csv(rows=None) -> str:
    rows = table_rows() if rows is None else rows
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["method", "stage", "quantity", "value", "unit"], lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def summary(p: ComplexityParams) -> Dict[str, Tuple[int, int, int]]:
    return {
        "CL_main": main_path_flops(p, "CL"),
        "ILA_main": main_path_flops(p, "ILA"),
        "CL_learning": learning_flops(p, "CL"),
        "ILA_learning": learning_flops(p, "ILA"),
    }
