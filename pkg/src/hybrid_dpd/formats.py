"""Plain-text interchange formats: PA models, DPD coefficients, channels, CSV outputs."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError
from .pa_array import PaModel

_G = ".17g"


def _num(v: float) -> str:
    return format(float(v), _G)


def _read_lines(path) -> list:
    with open(path) as fh:
        return [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]


def save_pa_model(path, pa: PaModel) -> None:
    with open(path, "w") as fh:
        fh.write(f"{pa.order} {pa.memory}\n")
        for i, p in enumerate(pa.orders):
            for d in range(pa.memory):
                c = pa.coeffs[i, d]
                fh.write(f"{p} {d} {_num(c.real)} {_num(c.imag)}\n")


def load_pa_model(path) -> PaModel:
    """Read `P D_pa` then `p d re im` rows; every odd p <= P and every d must appear once."""
    rows = _read_lines(path)
    if not rows or len(rows[0]) != 2:
        raise ConfigurationError(f"{path}: header must be 'P D_pa'")
    P, D = int(rows[0][0]), int(rows[0][1])
    if P % 2 == 0 or P < 1 or D < 1:
        raise ConfigurationError(f"{path}: P must be odd and positive, D_pa positive")
    orders = tuple(range(1, P + 1, 2))
    coeffs = np.full((len(orders), D), np.nan + 0j)
    for row in rows[1:]:
        if len(row) != 4:
            raise ConfigurationError(f"{path}: malformed row {' '.join(row)!r}")
        p, d = int(row[0]), int(row[1])
        if p % 2 == 0:
            raise ConfigurationError(f"{path}: even order {p}")
        if p > P or d >= D or d < 0 or p < 1:
            raise ConfigurationError(f"{path}: entry (p={p}, d={d}) outside header range")
        i = orders.index(p)
        if not np.isnan(coeffs[i, d].real):
            raise ConfigurationError(f"{path}: duplicate entry (p={p}, d={d})")
        coeffs[i, d] = float(row[2]) + 1j * float(row[3])
    if np.any(np.isnan(coeffs.real)):
        raise ConfigurationError(f"{path}: incomplete model, {int(np.isnan(coeffs.real).sum())} entries missing")
    return PaModel(coeffs, orders)


def save_dpd_coefficients(path, coeffs: np.ndarray, orders: Sequence[int]) -> None:
    """Header `Q D_dpd L`, then `l q d re im` (order-major, tap-minor within a subarray)."""
    L, n_q, D = coeffs.shape
    with open(path, "w") as fh:
        fh.write(f"{orders[-1]} {D} {L}\n")
        for l in range(L):
            for i, q in enumerate(orders):
                for d in range(D):
                    c = coeffs[l, i, d]
                    fh.write(f"{l} {q} {d} {_num(c.real)} {_num(c.imag)}\n")


def load_dpd_coefficients(path):
    """Returns (coeffs (L, n_q, D), orders 3..Q)."""
    rows = _read_lines(path)
    if not rows or len(rows[0]) != 3:
        raise ConfigurationError(f"{path}: header must be 'Q D_dpd L'")
    Q, D, L = (int(v) for v in rows[0])
    orders = tuple(range(3, Q + 1, 2))
    coeffs = np.zeros((L, len(orders), D), dtype=complex)
    seen = set()
    for row in rows[1:]:
        if len(row) != 5:
            raise ConfigurationError(f"{path}: malformed row {' '.join(row)!r}")
        l, q, d = int(row[0]), int(row[1]), int(row[2])
        if q not in orders or not 0 <= d < D or not 0 <= l < L:
            raise ConfigurationError(f"{path}: entry (l={l}, q={q}, d={d}) outside header range")
        coeffs[l, orders.index(q), d] = float(row[3]) + 1j * float(row[4])
        seen.add((l, q, d))
    if len(seen) != L * len(orders) * D:
        raise ConfigurationError(f"{path}: incomplete coefficient set")
    return coeffs, orders


def save_channel(path, taps: np.ndarray) -> None:
    """Header `U LM D`, then one `re im` pair per tap in row-major (u, a, d) order."""
    taps = np.asarray(taps)
    with open(path, "w") as fh:
        fh.write(" ".join(str(s) for s in taps.shape) + "\n")
        for c in taps.reshape(-1):
            fh.write(f"{_num(c.real)} {_num(c.imag)}\n")


def load_channel(path) -> np.ndarray:
    rows = _read_lines(path)
    shape = tuple(int(v) for v in rows[0])
    if len(shape) != 3:
        raise ConfigurationError(f"{path}: header must be 'U LM D'")
    vals = np.array([float(r[0]) + 1j * float(r[1]) for r in rows[1:]])
    if vals.size != np.prod(shape):
        raise ConfigurationError(f"{path}: expected {np.prod(shape)} taps, found {vals.size}")
    return vals.reshape(shape)


def _fmt_cell(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6f}" if np.isfinite(v) else str(float(v))
    return v


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt_cell(v) for v in r])


METRICS_HEADER = ("scenario", "user_or_victim", "evm_pct", "aclr_left_db", "aclr_right_db")
TRAJECTORY_HEADER = ("block", "subarray", "residual_dbc", "coeff_norm")
PSD_HEADER = ("freq_hz", "psd_db", "label")


def write_psd(path, freqs: np.ndarray, psd_db: np.ndarray, label: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PSD_HEADER)
        for f, p in zip(freqs, psd_db):
            w.writerow([f"{f:.1f}", f"{p:.6f}", label])


def read_csv(path) -> list:
    with open(Path(path), newline="") as fh:
        return list(csv.DictReader(fh))
