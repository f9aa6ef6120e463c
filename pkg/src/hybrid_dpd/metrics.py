"""EVM, ACLR, PAPR and Welch PSD estimation for combined received signals."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import signal as sps

from .errors import ConfigurationError, UndefinedMetricError
from .waveform import OfdmConfig, demodulate


@dataclass
class MetricsReport:
    evm_percent: Dict[str, float] = field(default_factory=dict)
    aclr_db: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    papr_db: Dict[str, float] = field(default_factory=dict)
    psd: Dict[str, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)


def papr(x: np.ndarray) -> float:
    p = np.abs(np.asarray(x)) ** 2
    mean = p.mean()
    if mean == 0:
        raise UndefinedMetricError("PAPR of an all-zero signal is undefined")
    return float(10 * np.log10(p.max() / mean))


def welch_psd(x: np.ndarray, sample_rate: float = 1.0, segment: int = 4096, overlap: float = 0.5):
    """Two-sided averaged periodogram with a Hann window: (freqs, power density), DC-centered."""
    x = np.asarray(x)
    if x.shape[-1] < segment:
        raise ConfigurationError(f"signal of {x.shape[-1]} samples is shorter than one segment ({segment})")
    f, p = sps.welch(
        x,
        fs=sample_rate,
        window="hann",
        nperseg=segment,
        noverlap=int(round(overlap * segment)),
        return_onesided=False,
        detrend=False,
        scaling="density",
        axis=-1,
    )
    return np.fft.fftshift(f), np.fft.fftshift(p, axes=-1)


def psd(x: np.ndarray, segment: int = 4096, overlap: float = 0.5, sample_rate: float = 1.0):
    """PSD in dB relative to its peak: (freqs, dB)."""
    f, p = welch_psd(x, sample_rate, segment, overlap)
    peak = p.max()
    if peak <= 0:
        return f, np.full_like(p, -np.inf)
    return f, 10 * np.log10(np.maximum(p, peak * 1e-30) / peak)


def adjacent_bands(bandwidth, spacing, sample_rate):
    if sample_rate < 3 * bandwidth:
        raise ConfigurationError("sample rate must be at least three times the channel bandwidth")
    if spacing + bandwidth / 2 > sample_rate / 2:
        raise ConfigurationError("adjacent channel extends beyond the Nyquist frequency")
    half = bandwidth / 2
    return (-half, half), (-spacing - half, -spacing + half), (spacing - half, spacing + half)


def band_power(f: np.ndarray, p: np.ndarray, band) -> float:
    sel = (f >= band[0]) & (f <= band[1])
    return float(np.sum(p[..., sel], axis=-1) * (f[1] - f[0]))


def aclr(
    z_intended: np.ndarray,
    z_observation: Optional[np.ndarray] = None,
    bandwidth: float = 1.0,
    sample_rate: float = 1.0,
    spacing: Optional[float] = None,
    segment: int = 4096,
    overlap: float = 0.5,
) -> Tuple[float, float]:
    """(left, right) ACLR in dB.

    The in-channel power is taken from `z_intended`; adjacent-channel powers (same
    measurement bandwidth, centred at +-spacing) come from `z_observation`, which
    defaults to the intended signal itself. For a victim receiver, pass the
    victim-direction signal as the observation.
    """
    spacing = bandwidth if spacing is None else spacing
    inb, left, right = adjacent_bands(bandwidth, spacing, sample_rate)
    f, p = welch_psd(z_intended, sample_rate, segment, overlap)
    p_in = band_power(f, p, inb)
    if z_observation is not None:
        f, p = welch_psd(z_observation, sample_rate, segment, overlap)
    p_l, p_r = band_power(f, p, left), band_power(f, p, right)
    floor = p_in * 1e-30
    return (
        float(10 * np.log10(p_in / max(p_l, floor))),
        float(10 * np.log10(p_in / max(p_r, floor))),
    )


def worst(aclr_pair: Tuple[float, float]) -> float:
    return float(min(aclr_pair))


def evm(z: np.ndarray, reference: np.ndarray, cfg: OfdmConfig) -> float:
    """EVM (%) after per-subcarrier one-tap amplitude/phase equalization.

    `reference` is the (K_ACT, n_sym) grid of ideal symbols. The received samples are
    first scaled to the reference power, then each subcarrier is divided by its LS
    channel estimate regressing the received symbols on the ideal ones.
    """
    ref = np.asarray(reference)
    p_ref = np.mean(np.abs(ref) ** 2)
    if p_ref == 0:
        raise UndefinedMetricError("reference symbols have zero power")
    rx = demodulate(z, cfg)
    if rx.shape != ref.shape:
        raise ConfigurationError(f"demodulated grid {rx.shape} does not match reference {ref.shape}")
    p_rx = np.mean(np.abs(rx) ** 2)
    if p_rx == 0:
        return 100.0
    rx = rx * np.sqrt(p_ref / p_rx)
    h = np.sum(rx * np.conj(ref), axis=1) / np.sum(np.abs(ref) ** 2, axis=1)
    h = np.where(np.abs(h) > 0, h, 1.0)
    err = rx / h[:, None] - ref
    return float(100 * np.sqrt(np.mean(np.abs(err) ** 2) / p_ref))


class CrossSpectrum:
    """Welch cross-spectral matrix of antenna signals, restricted to selected bands.

    Lets the PSD of any linear combination sum_a h_a * y_a be evaluated as the
    quadratic form H(f)^T S(f) conj(H(f)), which is how many victim directions are
    assessed without re-running the array convolution for each of them.
    """

    def __init__(self, y: np.ndarray, sample_rate: float, bands, segment: int = 4096, overlap: float = 0.5):
        y = np.asarray(y)
        step = segment - int(round(overlap * segment))
        n_seg = 1 + (y.shape[-1] - segment) // step
        if n_seg < 1:
            raise ConfigurationError("signal shorter than one PSD segment")
        win = sps.get_window("hann", segment)
        freqs = np.fft.fftfreq(segment, d=1.0 / sample_rate)
        sel = np.zeros(segment, dtype=bool)
        for b in bands:
            sel |= (freqs >= b[0]) & (freqs <= b[1])
        self.bins = np.flatnonzero(sel)
        self.freqs = freqs[self.bins]
        self.segment = segment
        self.df = sample_rate / segment
        scale = 1.0 / (sample_rate * np.sum(win**2))
        acc = np.zeros((self.bins.size, y.shape[0], y.shape[0]), dtype=complex)
        for s in range(n_seg):
            frame = y[:, s * step:s * step + segment] * win
            Y = np.fft.fft(frame, axis=-1)[:, self.bins]
            acc += np.einsum("af,bf->fab", Y, np.conj(Y))
        self.S = acc * (scale / n_seg)

    def band_power(self, taps: np.ndarray, band) -> np.ndarray:
        """Band power of the combination for taps (LM, D) or (V, LM, D)."""
        taps = np.asarray(taps)
        if taps.ndim == 2:
            taps = taps[None]
        in_band = (self.freqs >= band[0]) & (self.freqs <= band[1])
        bins = self.bins[in_band]
        kernel = np.exp(-2j * np.pi * np.outer(np.arange(taps.shape[-1]), bins) / self.segment)
        H = taps @ kernel  # (V, LM, F)
        S = self.S[in_band]
        quad = np.einsum("vaf,fab,vbf->v", H, S, np.conj(H))
        return np.real(quad) * self.df


def victim_aclr(
    p_intended: float,
    spectrum: CrossSpectrum,
    victim_taps: np.ndarray,
    bandwidth: float,
    sample_rate: float,
    spacing: Optional[float] = None,
) -> np.ndarray:
    """Worst-side ACLR (dB) per victim: intended in-band power over victim adjacent power."""
    spacing = bandwidth if spacing is None else spacing
    _, left, right = adjacent_bands(bandwidth, spacing, sample_rate)
    p_l = spectrum.band_power(victim_taps, left)
    p_r = spectrum.band_power(victim_taps, right)
    return 10 * np.log10(p_intended / np.maximum(p_l, p_r))


def in_band_power(z: np.ndarray, bandwidth: float, sample_rate: float, segment: int = 4096, overlap: float = 0.5):
    f, p = welch_psd(z, sample_rate, segment, overlap)
    return band_power(f, p, (-bandwidth / 2, bandwidth / 2))
