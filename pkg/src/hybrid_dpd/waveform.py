"""Multicarrier transmit streams: OFDM modulation, PAPR limiting and demodulation.

Streams are produced as circular (periodic) sample blocks: the windowing tail of
the last symbol is wrapped onto the start of the block. This keeps the
whole-block frequency-domain filtering used by the PAPR limiter exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, FramingError

CONSTELLATIONS = {"QPSK": 4, "16QAM": 16, "64QAM": 64}


@dataclass(frozen=True)
class OfdmConfig:
    fft_size: int = 4096
    active_subcarriers: int = 3168
    subcarrier_spacing: float = 60e3
    cp_length: int = 288
    window_taper_length: int = 64
    oversampling_factor: int = 5
    constellation: str = "64QAM"

    def __post_init__(self):
        if self.active_subcarriers >= self.fft_size:
            raise ConfigurationError("active_subcarriers must be smaller than fft_size")
        if self.active_subcarriers % 2:
            raise ConfigurationError("active_subcarriers must be even (DC is left unused)")
        if self.oversampling_factor < 1:
            raise ConfigurationError("oversampling_factor must be >= 1")
        if self.window_taper_length > self.cp_length:
            raise ConfigurationError("window taper must fit inside the cyclic prefix")
        if self.constellation not in CONSTELLATIONS:
            raise ConfigurationError(f"unknown constellation {self.constellation!r}")

    @property
    def n_fft(self) -> int:
        """Oversampled IFFT size."""
        return self.fft_size * self.oversampling_factor

    @property
    def n_cp(self) -> int:
        return self.cp_length * self.oversampling_factor

    @property
    def n_taper(self) -> int:
        return self.window_taper_length * self.oversampling_factor

    @property
    def symbol_length(self) -> int:
        return self.n_fft + self.n_cp

    @property
    def sample_rate(self) -> float:
        return self.n_fft * self.subcarrier_spacing

    @property
    def bandwidth(self) -> float:
        """Occupied bandwidth of the active subcarriers."""
        return self.active_subcarriers * self.subcarrier_spacing

    @property
    def subcarrier_index(self) -> np.ndarray:
        """Signed subcarrier numbers of the active band, DC excluded."""
        half = self.active_subcarriers // 2
        return np.concatenate([np.arange(-half, 0), np.arange(1, half + 1)])

    @property
    def active_bins(self) -> np.ndarray:
        """Positions of the active subcarriers in the oversampled FFT."""
        return np.mod(self.subcarrier_index, self.n_fft)


def constellation_points(name: str) -> np.ndarray:
    order = CONSTELLATIONS[name]
    m = int(round(np.sqrt(order)))
    levels = np.arange(-(m - 1), m, 2, dtype=float)
    pts = (levels[:, None] + 1j * levels[None, :]).ravel()
    return pts / np.sqrt(np.mean(np.abs(pts) ** 2))


def random_symbol_grid(cfg: OfdmConfig, n_symbols: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a (K_ACT, n_symbols) grid of data symbols with unit realized mean power."""
    pts = constellation_points(cfg.constellation)
    grid = pts[rng.integers(0, len(pts), size=(cfg.active_subcarriers, n_symbols))]
    return grid / np.sqrt(np.mean(np.abs(grid) ** 2))


def raised_cosine_ramp(n: int) -> np.ndarray:
    """Rising half raised-cosine of n samples; ramp + ramp[::-1] == 1."""
    if n == 0:
        return np.zeros(0)
    return 0.5 * (1.0 - np.cos(np.pi * (np.arange(n) + 0.5) / n))


def _ofdm_bodies(freq: np.ndarray, cfg: OfdmConfig) -> np.ndarray:
    """freq: (..., K_ACT, n_sym) -> time bodies (..., n_sym, n_fft)."""
    shape = freq.shape[:-2] + (cfg.n_fft, freq.shape[-1])
    full = np.zeros(shape, dtype=complex)
    full[..., cfg.active_bins, :] = freq
    body = np.fft.ifft(full, axis=-2) * (cfg.n_fft / np.sqrt(cfg.active_subcarriers))
    return np.swapaxes(body, -1, -2)


def _wola(bodies: np.ndarray, cfg: OfdmConfig) -> np.ndarray:
    """CP insertion and circular windowed overlap-add. bodies: (..., n_sym, n_fft)."""
    n_sym = bodies.shape[-2]
    ncp, w, sl = cfg.n_cp, cfg.n_taper, cfg.symbol_length
    ext = np.concatenate([bodies[..., -ncp:], bodies, bodies[..., :w]], axis=-1)
    if w:
        ramp = raised_cosine_ramp(w)
        ext[..., :w] *= ramp
        ext[..., -w:] *= ramp[::-1]
    out = np.zeros(bodies.shape[:-2] + (n_sym * sl,), dtype=complex)
    out[..., :] = ext[..., :sl].reshape(bodies.shape[:-2] + (n_sym * sl,))
    if w:
        tails = ext[..., sl:]
        for s in range(n_sym):
            start = ((s + 1) * sl) % (n_sym * sl)
            out[..., start:start + w] += tails[..., s, :]
    return out


def generate_tx_streams(grids: np.ndarray, precoder: np.ndarray, cfg: OfdmConfig) -> np.ndarray:
    """Precode per subcarrier and OFDM-modulate.

    grids: (U, K_ACT, n_sym) user symbols; precoder: (K_ACT, L, U).
    Returns (L, n_sym * symbol_length) time-domain streams.
    """
    grids = np.asarray(grids)
    precoder = np.asarray(precoder)
    if grids.ndim != 3 or grids.shape[1] != cfg.active_subcarriers:
        raise ConfigurationError(f"symbol grid shape {grids.shape} does not match K_ACT={cfg.active_subcarriers}")
    if precoder.ndim != 3 or precoder.shape[0] != cfg.active_subcarriers or precoder.shape[2] != grids.shape[0]:
        raise ConfigurationError(f"precoder shape {precoder.shape} incompatible with grids {grids.shape}")
    if precoder.shape[2] > precoder.shape[1]:
        raise ConfigurationError("more users than TX chains")
    freq = np.einsum("klu,uks->lks", precoder, grids)
    return _wola(_ofdm_bodies(freq, cfg), cfg)


def demodulate(z: np.ndarray, cfg: OfdmConfig) -> np.ndarray:
    """Strip CP, FFT each symbol, return the (K_ACT, n_sym) active-subcarrier grid."""
    z = np.asarray(z)
    if z.shape[-1] % cfg.symbol_length:
        raise FramingError(f"length {z.shape[-1]} is not a multiple of the symbol length {cfg.symbol_length}")
    n_sym = z.shape[-1] // cfg.symbol_length
    blocks = z.reshape(z.shape[:-1] + (n_sym, cfg.symbol_length))[..., cfg.n_cp:]
    spec = np.fft.fft(blocks, axis=-1) * (np.sqrt(cfg.active_subcarriers) / cfg.n_fft)
    return np.swapaxes(spec[..., cfg.active_bins], -1, -2)


def in_band_mask(n: int, cfg: OfdmConfig) -> np.ndarray:
    """Boolean mask of length-n FFT bins lying inside the active band."""
    freqs = np.fft.fftfreq(n, d=1.0 / cfg.sample_rate)
    edge = (cfg.active_subcarriers / 2 + 0.5) * cfg.subcarrier_spacing
    return np.abs(freqs) <= edge


def clip_envelope(x: np.ndarray, level: float) -> np.ndarray:
    """Limit |x| to level while keeping the phase."""
    mag = np.abs(x)
    scale = np.ones_like(mag)
    over = mag > level
    scale[over] = level / mag[over]
    return x * scale


def _clip_level(mag: np.ndarray, target_ratio: float) -> Optional[float]:
    """Clip amplitude A with A**2 / mean(min(|x|, A)**2) == target_ratio.

    Returns None when the signal is already within the target.
    """
    peak = mag.max()
    if peak**2 / np.mean(mag**2) <= target_ratio:
        return None
    nz = mag[mag > 0]
    floor_ratio = mag.size / nz.size
    if target_ratio <= floor_ratio:
        return float(nz.min())
    lo, hi = 0.0, float(peak)
    mag2 = mag**2
    for _ in range(60):
        a = 0.5 * (lo + hi)
        ratio = a * a / np.mean(np.minimum(mag2, a * a))
        if ratio > target_ratio:
            hi = a
        else:
            lo = a
    return 0.5 * (lo + hi)


def limit_papr_icf(
    x: np.ndarray,
    target_papr_db: float,
    n_iterations: int,
    cfg: OfdmConfig,
    history: Optional[list] = None,
) -> np.ndarray:
    """Iterative clipping and filtering of one circular stream.

    Each iteration clips the envelope at the level giving the target PAPR relative
    to the post-clip mean power, then zeroes every FFT bin outside the active band.
    If `history` is a list, the PAPR (dB) after every iteration is appended to it.
    """
    if target_papr_db <= 0:
        raise ConfigurationError("target PAPR must be positive")
    x = np.asarray(x, dtype=complex)
    if not np.any(x):
        return x.copy()
    ratio = 10 ** (target_papr_db / 10)
    keep = in_band_mask(x.size, cfg)
    out = x
    for _ in range(n_iterations):
        level = _clip_level(np.abs(out), ratio)
        if level is None:
            break
        spec = np.fft.fft(clip_envelope(out, level))
        spec[~keep] = 0.0
        out = np.fft.ifft(spec)
        if history is not None:
            p = np.abs(out) ** 2
            history.append(10 * np.log10(p.max() / p.mean()))
    return out
