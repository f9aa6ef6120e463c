"""Clustered multipath mmWave channel with a Rician LOS component."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class ChannelConfig:
    n_clusters: int = 6
    rays_per_cluster: int = 5
    max_excess_delay: float = 60e-9
    rician_k_db: float = 10.0
    n_taps: int = 96
    antenna_spacing: float = 0.5
    array_size: int = 64
    sample_rate: float = 1228.8e6
    pulse_rolloff: float = 0.22
    pulse_span: int = 8
    ray_delay_spread: float = 5e-9
    cluster_angle_range_deg: float = 60.0
    ray_angle_std_deg: float = 2.0

    def __post_init__(self):
        if self.n_clusters < 1 or self.rays_per_cluster < 1 or self.n_taps < 1:
            raise ConfigurationError("cluster, ray and tap counts must be >= 1")
        if self.antenna_spacing <= 0:
            raise ConfigurationError("antenna spacing must be positive")
        if (self.max_excess_delay + self.ray_delay_spread) * self.sample_rate > self.n_taps:
            raise ConfigurationError(
                f"max excess delay {self.max_excess_delay:g} s exceeds the {self.n_taps}-tap "
                f"channel span at {self.sample_rate:g} Hz"
            )


@dataclass
class ChannelRealization:
    """Delay-domain taps of shape (U, LM, D) plus the ray parameters they came from."""

    taps: np.ndarray
    los_angles: np.ndarray
    ray_delays: np.ndarray = field(default=None, repr=False)
    ray_angles: np.ndarray = field(default=None, repr=False)
    ray_gains: np.ndarray = field(default=None, repr=False)
    cluster_delays: np.ndarray = field(default=None, repr=False)
    cluster_angles: np.ndarray = field(default=None, repr=False)
    los_power: np.ndarray = field(default=None, repr=False)
    nlos_power: np.ndarray = field(default=None, repr=False)

    @property
    def n_users(self) -> int:
        return self.taps.shape[0]


def steering_vector(angle: float, n: int, spacing: float = 0.5) -> np.ndarray:
    """ULA response [1, e^{j2pi*spacing*sin(angle)}, ...] of n elements."""
    return np.exp(2j * np.pi * spacing * np.sin(angle) * np.arange(n))


def raised_cosine_pulse(t: np.ndarray, rolloff: float, span: float) -> np.ndarray:
    """Raised-cosine pulse in units of the sample period, zero outside |t| <= span."""
    t = np.asarray(t, dtype=float)
    out = np.sinc(t)
    if rolloff > 0:
        den = 1.0 - (2.0 * rolloff * t) ** 2
        sing = np.abs(den) < 1e-10
        safe = np.where(sing, 1.0, den)
        out = np.where(sing, np.pi / 4 * np.sinc(1.0 / (2.0 * rolloff)), out * np.cos(np.pi * rolloff * t) / safe)
    return np.where(np.abs(t) <= span, out, 0.0)


def _ray_taps(delays_s: np.ndarray, cfg: ChannelConfig, pulse=None) -> np.ndarray:
    """Unit-energy band-limited delay profile of each ray: (n_rays, D)."""
    d = np.arange(cfg.n_taps)
    t = d[None, :] - delays_s[:, None] * cfg.sample_rate
    if pulse is None:
        prof = raised_cosine_pulse(t, cfg.pulse_rolloff, cfg.pulse_span)
    else:
        prof = pulse(t)
    energy = np.sqrt(np.sum(np.abs(prof) ** 2, axis=1, keepdims=True))
    return prof / np.where(energy > 0, energy, 1.0)


def synthesize_taps(
    gains: np.ndarray,
    delays: np.ndarray,
    angles: np.ndarray,
    cfg: ChannelConfig,
    pulse=None,
) -> np.ndarray:
    """Sum of rays gain * f(dTs - delay) * a_Tx(angle) for one user: (LM, D)."""
    prof = _ray_taps(np.atleast_1d(delays), cfg, pulse)
    m = np.arange(cfg.array_size)
    steer = np.exp(2j * np.pi * cfg.antenna_spacing * np.sin(np.atleast_1d(angles))[:, None] * m[None, :])
    return np.einsum("r,rm,rd->md", np.atleast_1d(gains), steer, prof)


def draw_channel(
    cfg: ChannelConfig,
    user_angles: Sequence[float],
    rng: np.random.Generator,
    nlos: bool = True,
) -> ChannelRealization:
    """Draw one clustered channel realization per user direction (radians)."""
    user_angles = np.asarray(user_angles, dtype=float)
    n_users = user_angles.size
    n_rays = cfg.n_clusters * cfg.rays_per_cluster
    amax = np.deg2rad(cfg.cluster_angle_range_deg)
    lap_scale = np.deg2rad(cfg.ray_angle_std_deg) / np.sqrt(2.0)

    k_lin = np.inf if np.isinf(cfg.rician_k_db) else 10 ** (cfg.rician_k_db / 10)
    w_los = 1.0 if np.isinf(k_lin) else np.sqrt(k_lin / (k_lin + 1))
    w_nlos = 0.0 if np.isinf(k_lin) or not nlos else np.sqrt(1 / (k_lin + 1))

    taps = np.zeros((n_users, cfg.array_size, cfg.n_taps), dtype=complex)
    c_del = np.zeros((n_users, cfg.n_clusters))
    c_ang = np.zeros((n_users, cfg.n_clusters))
    r_del = np.zeros((n_users, n_rays))
    r_ang = np.zeros((n_users, n_rays))
    r_gain = np.zeros((n_users, n_rays), dtype=complex)
    p_los = np.zeros(n_users)
    p_nlos = np.zeros(n_users)
    for u in range(n_users):
        c_del[u] = rng.uniform(0.0, cfg.max_excess_delay, cfg.n_clusters)
        c_ang[u] = rng.uniform(-amax, amax, cfg.n_clusters)
        off_del = rng.uniform(0.0, cfg.ray_delay_spread, (cfg.n_clusters, cfg.rays_per_cluster))
        off_ang = rng.laplace(0.0, lap_scale, (cfg.n_clusters, cfg.rays_per_cluster))
        rho = (rng.standard_normal(n_rays) + 1j * rng.standard_normal(n_rays)) / np.sqrt(2 * n_rays)
        arx = np.exp(2j * np.pi * rng.uniform(size=n_rays))
        los_phase = np.exp(2j * np.pi * rng.uniform())
        r_del[u] = (c_del[u][:, None] + off_del).ravel()
        r_ang[u] = (c_ang[u][:, None] - off_ang).ravel()
        r_gain[u] = rho * arx
        nlos_taps = synthesize_taps(r_gain[u], r_del[u], r_ang[u], cfg)
        los_taps = np.zeros_like(nlos_taps)
        los_taps[:, 0] = los_phase * steering_vector(user_angles[u], cfg.array_size, cfg.antenna_spacing)
        h = w_los * los_taps + w_nlos * nlos_taps
        scale = np.sqrt(cfg.array_size / np.sum(np.abs(h) ** 2))
        taps[u] = scale * h
        p_los[u] = np.sum(np.abs(scale * w_los * los_taps) ** 2)
        p_nlos[u] = np.sum(np.abs(scale * w_nlos * nlos_taps) ** 2)
    return ChannelRealization(
        taps=taps,
        los_angles=user_angles,
        ray_delays=r_del,
        ray_angles=r_ang,
        ray_gains=r_gain,
        cluster_delays=c_del,
        cluster_angles=c_ang,
        los_power=p_los,
        nlos_power=p_nlos,
    )


def frequency_response(
    taps: np.ndarray,
    fft_size: int,
    subcarriers: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Gamma[k] = sum_d H[d] exp(-j 2 pi k d / fft_size); taps (..., D) -> (..., K)."""
    if isinstance(taps, ChannelRealization):
        taps = taps.taps
    taps = np.asarray(taps)
    n_taps = taps.shape[-1]
    if n_taps > fft_size:
        raise ConfigurationError("channel longer than the FFT size")
    k = np.arange(fft_size) if subcarriers is None else np.asarray(subcarriers)
    kernel = np.exp(-2j * np.pi * np.outer(np.arange(n_taps), k) / fft_size)
    return taps @ kernel


def adjacent_magnitude_correlation(taps: np.ndarray, array_slice: slice = slice(None)) -> float:
    """Mean correlation of |h_m[d]| and |h_{m+1}[d]| over adjacent antenna pairs and users."""
    mags = np.abs(np.asarray(taps)[:, array_slice, :])
    vals = []
    for u in range(mags.shape[0]):
        for m in range(mags.shape[1] - 1):
            a, b = mags[u, m], mags[u, m + 1]
            vals.append(np.corrcoef(a, b)[0, 1])
    return float(np.mean(vals))
