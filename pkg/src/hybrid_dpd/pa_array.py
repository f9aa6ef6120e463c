"""Memory-polynomial PA bank with PA-input and antenna-output crosstalk.

Branch signals are indexed by antenna a = l * M + m (subarray l, element m).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.fft import next_fast_len

from .errors import ConfigurationError


def odd_orders(max_order: int, start: int = 1) -> tuple:
    if max_order % 2 == 0 or start % 2 == 0:
        raise ConfigurationError("nonlinearity orders must be odd")
    return tuple(range(start, max_order + 1, 2))


@dataclass
class PaModel:
    """Coefficients alpha_p(d) stored as (n_orders, D) for orders (1, 3, ..., P)."""

    coeffs: np.ndarray
    orders: tuple = None

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.orders is None:
            self.orders = odd_orders(2 * self.coeffs.shape[-2] - 1)
        self.orders = tuple(int(p) for p in self.orders)
        if any(p % 2 == 0 for p in self.orders):
            raise ConfigurationError("PA model orders must be odd")
        if self.orders[0] != 1 or self.coeffs[..., 0, 0].size and np.any(self.coeffs[..., 0, 0] == 0):
            raise ConfigurationError("PA model needs a nonzero linear gain alpha_1(0)")

    @property
    def order(self) -> int:
        return self.orders[-1]

    @property
    def memory(self) -> int:
        return self.coeffs.shape[-1]


def snl_basis(x: np.ndarray, orders: Sequence[int]) -> np.ndarray:
    """Static nonlinear basis x|x|^(p-1) for each order: (..., n_orders, N)."""
    orders = tuple(orders)
    if any(p % 2 == 0 or p < 1 for p in orders):
        raise ConfigurationError(f"basis orders must be odd and positive, got {orders}")
    x = np.asarray(x, dtype=complex)
    mag = np.abs(x)
    return np.stack([x * mag ** (p - 1) for p in orders], axis=-2)


def delay(x: np.ndarray, d: int) -> np.ndarray:
    """x(n - d) with zero initial state, same length."""
    if d == 0:
        return x
    out = np.zeros_like(x)
    out[..., d:] = x[..., :-d]
    return out


def _poly_gain(mag2: np.ndarray, row: np.ndarray) -> np.ndarray:
    """sum_i row[i] * mag2**i by Horner's rule."""
    acc = np.full(mag2.shape, row[-1], dtype=complex)
    for c in row[-2::-1]:
        acc = acc * mag2 + c
    return acc


def memory_polynomial(v: np.ndarray, coeffs: np.ndarray, orders: Sequence[int]) -> np.ndarray:
    """y(n) = sum_p sum_d coeffs[p, d] v(n-d)|v(n-d)|^(p-1) for a 1-D input."""
    orders = tuple(orders)
    v = np.asarray(v, dtype=complex)
    dense = np.zeros((orders[-1] // 2 + 1, coeffs.shape[-1]), dtype=complex)
    for i, p in enumerate(orders):
        dense[(p - 1) // 2] = coeffs[i]
    mag2 = np.abs(v) ** 2
    y = np.zeros_like(v)
    for d in range(coeffs.shape[-1]):
        if not np.any(dense[:, d]):
            continue
        y += delay(v * _poly_gain(mag2, dense[:, d]), d)
    return y


def pa_forward(v: np.ndarray, pa: PaModel) -> np.ndarray:
    return memory_polynomial(v, pa.coeffs, pa.orders)


def synthesize_pa_bank(
    base: PaModel,
    n_subarrays: int,
    m: int,
    mag_spread_db: float,
    phase_spread_deg: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Mutually different branch models: (L, M, n_orders, D) coefficients.

    Each branch scales every order by its own random magnitude factor (uniform in
    +-mag_spread_db) and rotates all orders by one common random phase.
    """
    if mag_spread_db < 0 or phase_spread_deg < 0:
        raise ConfigurationError("spreads must be non-negative")
    n_ord = len(base.orders)
    mag_db = rng.uniform(-mag_spread_db, mag_spread_db, (n_subarrays, m, n_ord))
    phase = np.deg2rad(rng.uniform(-phase_spread_deg, phase_spread_deg, (n_subarrays, m)))
    factor = 10 ** (mag_db / 20) * np.exp(1j * phase)[..., None]
    return factor[..., None] * base.coeffs[None, None]


def coupling_matrix(positions: np.ndarray, neighbor_distance: float, level_db: float) -> np.ndarray:
    """Distance-based coupling among elements (zero diagonal).

    Power decays with the squared distance relative to the neighbor distance
    (amplitude ~ 1/distance) and the phase is 2*pi*distance in wavelengths.
    """
    n = positions.size
    if np.isneginf(level_db):
        return np.zeros((n, n), dtype=complex)
    if level_db > 0:
        raise ConfigurationError("coupling levels must be <= 0 dB")
    dist = np.abs(positions[:, None] - positions[None, :])
    with np.errstate(divide="ignore"):
        mag = np.where(dist > 0, 10 ** (level_db / 20) * neighbor_distance / dist, 0.0)
    return mag * np.exp(2j * np.pi * np.mod(dist, 1.0))


def build_crosstalk(
    n_subarrays: int,
    m: int,
    spacing: float,
    input_level_db: float,
    antenna_level_db: float,
    positions: Optional[np.ndarray] = None,
) -> tuple:
    """Return (B, C): per-subarray input coupling (L, M, M) and array coupling (LM, LM).

    Matrices are 'to x from': the coupled input of element m is v_m + sum_i B[l, m, i] v_i.
    """
    if positions is None:
        positions = spacing * np.arange(n_subarrays * m)
    positions = np.asarray(positions, dtype=float)
    B = np.stack(
        [coupling_matrix(positions[l * m:(l + 1) * m], spacing, input_level_db) for l in range(n_subarrays)]
    )
    C = coupling_matrix(positions, spacing, antenna_level_db)
    return B, C


@dataclass
class PaArrayModel:
    coeffs: np.ndarray
    orders: tuple
    input_coupling: Optional[np.ndarray] = None
    antenna_coupling: Optional[np.ndarray] = None
    positions: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.ndim != 4:
            raise ConfigurationError("PA bank coefficients must be (L, M, n_orders, D)")
        self.orders = tuple(self.orders)

    @property
    def n_subarrays(self) -> int:
        return self.coeffs.shape[0]

    @property
    def subarray_size(self) -> int:
        return self.coeffs.shape[1]

    @property
    def has_input_coupling(self) -> bool:
        return self.input_coupling is not None and bool(np.any(self.input_coupling))

    @property
    def has_antenna_coupling(self) -> bool:
        return self.antenna_coupling is not None and bool(np.any(self.antenna_coupling))

    def effective_weights(self, weights: np.ndarray) -> np.ndarray:
        """Beamformer weights seen at the PA inputs after input crosstalk: (L, M)."""
        if not self.has_input_coupling:
            return np.asarray(weights, dtype=complex)
        return weights + np.einsum("lmi,li->lm", self.input_coupling, weights)

    def subarray_total(self) -> np.ndarray:
        """alpha_tot,l,p(d) = sum_m alpha_l,m,p(d): (L, n_orders, D)."""
        return self.coeffs.sum(axis=1)

    def without_coupling(self) -> "PaArrayModel":
        return PaArrayModel(self.coeffs, self.orders, positions=self.positions)


def pa_outputs(x: np.ndarray, weights: np.ndarray, array: PaArrayModel) -> np.ndarray:
    """Per-branch PA outputs y_{l,m}(n) before antenna coupling: (L*M, N)."""
    x = np.atleast_2d(np.asarray(x, dtype=complex))
    wbar = array.effective_weights(weights)
    n_sub, m = wbar.shape
    if x.shape[0] != n_sub:
        raise ConfigurationError(f"{x.shape[0]} streams for {n_sub} subarrays")
    y = np.empty((n_sub * m, x.shape[1]), dtype=complex)
    for l in range(n_sub):
        for i in range(m):
            y[l * m + i] = memory_polynomial(wbar[l, i] * x[l], array.coeffs[l, i], array.orders)
    return y


def transmit(x: np.ndarray, weights: np.ndarray, array: PaArrayModel) -> np.ndarray:
    """Antenna signals of the full chain: beamforming, input coupling, PAs, antenna coupling."""
    y = pa_outputs(x, weights, array)
    if array.has_antenna_coupling:
        y = y + array.antenna_coupling @ y
    return y


def receive(y: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """z(n) = sum_a (h_a * y_a)(n), linear convolution truncated to len(y).

    taps: (LM, D) for one receiver or (U, LM, D) for several; returns (N,) or (U, N).
    """
    y = np.asarray(y)
    taps = np.asarray(taps)
    single = taps.ndim == 2
    if single:
        taps = taps[None]
    n = y.shape[-1]
    nfft = next_fast_len(n + taps.shape[-1] - 1)
    yf = np.fft.fft(y, nfft, axis=-1)
    out = np.empty((taps.shape[0], n), dtype=complex)
    for u in range(taps.shape[0]):
        hf = np.fft.fft(taps[u], nfft, axis=-1)
        out[u] = np.fft.ifft(np.sum(hf * yf, axis=0))[:n]
    return out[0] if single else out


def observe_feedback(y: np.ndarray, weights: np.ndarray, subarray: Optional[int] = None) -> np.ndarray:
    """Hardware combiner output sum_m conj(w_{l,m}) ybar_{l,m}(n); all subarrays if None."""
    n_sub, m = weights.shape
    yb = np.asarray(y).reshape(n_sub, m, -1)
    fb = np.einsum("lm,lmn->ln", np.conj(weights), yb)
    return fb if subarray is None else fb[subarray]

