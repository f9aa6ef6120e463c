"""Assembly of one transmitter drop: channel, beams, precoder, PA array and DPD.

A `Link` holds everything that is fixed within a drop and exposes the closures the
learners need (`feedback`) as well as the evaluation paths (`at_users`,
`antenna_signals`). Streams are treated as circular: every pass through the PA
array and the channel is preceded by a cyclic prefix long enough to flush the
memory of both, so block boundaries never create transients.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import channel as ch
from . import dpd
from . import metrics as mt
from . import pa_array as pa
from . import precoding as pc
from . import waveform as wf
from .config import ScenarioConfig
from .errors import ConfigurationError, SimulationError
from .formats import load_pa_model


def seed_plan(master_seed: int, drop_index: int, stream_label: str) -> int:
    """Deterministic 63-bit seed for a (master, drop, label) triple."""
    key = f"{int(master_seed)}/{int(drop_index)}/{stream_label}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big") >> 1


def rng_for(cfg: ScenarioConfig, drop: int, label: str) -> np.random.Generator:
    return np.random.default_rng(seed_plan(cfg.seed, drop, label))


# Synthetic base PA: odd-order memory polynomial with unit small-signal gain whose
# nonlinearity is mostly AM/PM (about 25 degrees at the signal peaks) with mild gain
# expansion. Column d is the memory tap; orders 9 and 11 are kept tiny so the model
# stays well behaved past the peak drive of an 8.3 dB PAPR signal.
_BASE_PA = np.array(
    [
        [1.0, 0.10 - 0.05j, 0.02j],
        [0.11j, -0.01 + 0.01j, 0.003],
        [-0.002 - 0.004j, 0.001, 0.0],
        [8e-5 + 1e-4j, 0.0, 0.0],
        [-4e-6 - 4e-6j, 0.0, 0.0],
        [5e-8, 0.0, 0.0],
    ]
)


def synthetic_base_pa(order: int = 7, memory: int = 3) -> pa.PaModel:
    n_ord = (order + 1) // 2
    if order % 2 == 0 or n_ord > _BASE_PA.shape[0]:
        raise ConfigurationError(f"synthetic PA supports odd orders up to {2 * _BASE_PA.shape[0] - 1}")
    c = np.zeros((n_ord, memory), dtype=complex)
    d = min(memory, _BASE_PA.shape[1])
    c[:, :d] = _BASE_PA[:n_ord, :d]
    return pa.PaModel(c)


def base_pa(cfg: ScenarioConfig) -> pa.PaModel:
    if cfg.pa.base_model_path:
        return load_pa_model(cfg.pa.base_model_path)
    return synthetic_base_pa(cfg.pa.order, cfg.pa.memory)


def build_array(cfg: ScenarioConfig, crosstalk: Optional[bool] = None, antenna_db: Optional[float] = None) -> pa.PaArrayModel:
    """PA bank (drawn once per run from the 'pa' stream) plus optional coupling."""
    s = cfg.system
    base = base_pa(cfg)
    bank = pa.synthesize_pa_bank(base, s.n_subarrays, s.subarray_size, cfg.pa.mag_spread_db,
                                 cfg.pa.phase_spread_deg, rng_for(cfg, 0, "pa"))
    on = cfg.crosstalk.enabled if crosstalk is None else crosstalk
    if not on:
        return pa.PaArrayModel(bank, base.orders)
    level = cfg.crosstalk.antenna_db if antenna_db is None else antenna_db
    B, C = pa.build_crosstalk(s.n_subarrays, s.subarray_size, s.antenna_spacing, cfg.crosstalk.input_db, level)
    return pa.PaArrayModel(bank, base.orders, B, C)


def beam_weights(cfg: ScenarioConfig, angles: np.ndarray, beam_mode: Optional[str] = None) -> np.ndarray:
    s = cfg.system
    mode = beam_mode or s.beam_mode
    bits = cfg.phase_bits or None
    if mode == "single_beam":
        return pc.analog_single_beam(angles, s.subarray_size, s.antenna_spacing, phase_bits=bits)
    return pc.analog_multi_beam(angles, s.subarray_size, s.n_subarrays, s.antenna_spacing, bits,
                                s.beam_search_step_deg)


def los_pair_condition(cfg: ScenarioConfig, angles: np.ndarray) -> float:
    """Condition number of the pure-LOS equivalent channel of the analog beams toward `angles` (rad).

    With identical multi-beam weights on every subarray the digital precoder separates
    the users only through the phase offsets between subarray centres, which vanish
    whenever M * (sin a - sin b) / 2 is close to an integer.
    """
    s = cfg.system
    W = pc.analog_matrix(beam_weights(cfg, angles))
    A = np.stack([ch.steering_vector(a, W.shape[0], s.antenna_spacing) for a in angles])
    return float(np.linalg.cond(A @ W))


def effective_analog(weights: np.ndarray, array: pa.PaArrayModel) -> np.ndarray:
    """LM x L linear map from chain streams to antenna signals, coupling included."""
    W = pc.analog_matrix(array.effective_weights(weights))
    if array.has_antenna_coupling:
        W = W + array.antenna_coupling @ W
    return W


@dataclass
class Link:
    cfg: ScenarioConfig
    angles: np.ndarray
    channel: ch.ChannelRealization
    weights: np.ndarray
    array: pa.PaArrayModel
    precoder: pc.DigitalPrecoder
    gamma_eq: np.ndarray
    grids: np.ndarray
    x: np.ndarray
    csi_error_db: float = float("nan")
    pad: int = field(default=0)

    def __post_init__(self):
        if not self.pad:
            self.pad = self.channel.taps.shape[-1] + 2 * self.array.coeffs.shape[-1] + 2 * self.cfg.dpd.memory

    @property
    def n_subarrays(self) -> int:
        return self.weights.shape[0]

    def _padded(self, xt: np.ndarray) -> np.ndarray:
        return np.concatenate([xt[:, -self.pad:], xt], axis=1)

    def antenna_signals(self, xt: np.ndarray, array: Optional[pa.PaArrayModel] = None, trim: bool = True) -> np.ndarray:
        y = pa.transmit(self._padded(xt), self.weights, array or self.array)
        return y[:, self.pad:] if trim else y

    def feedback(self, xt: np.ndarray) -> np.ndarray:
        """Combined observation signals z_fb^l of all subarrays for the PA inputs xt."""
        return pa.observe_feedback(self.antenna_signals(xt), self.weights)

    def at_users(self, xt: np.ndarray, subarrays: Optional[Sequence[int]] = None,
                 taps: Optional[np.ndarray] = None, array: Optional[pa.PaArrayModel] = None) -> np.ndarray:
        """Received signals (U, N); optionally only from the listed subarrays."""
        y = self.antenna_signals(xt, array, trim=False)
        if subarrays is not None:
            m = self.weights.shape[1]
            keep = np.zeros(y.shape[0], dtype=bool)
            for l in subarrays:
                keep[l * m:(l + 1) * m] = True
            y = np.where(keep[:, None], y, 0)
        z = pa.receive(y, self.channel.taps if taps is None else taps)
        return z[..., self.pad:]


def draw_link(
    cfg: ScenarioConfig,
    drop: int,
    angles_deg: Optional[Sequence[float]] = None,
    array: Optional[pa.PaArrayModel] = None,
    beam_mode: Optional[str] = None,
) -> Link:
    s, ofdm = cfg.system, cfg.ofdm
    angles = np.deg2rad(np.asarray(s.user_angles_deg if angles_deg is None else angles_deg, dtype=float))
    array = build_array(cfg) if array is None else array
    chan = ch.draw_channel(cfg.channel, angles, rng_for(cfg, drop, "channel"))
    weights = beam_weights(cfg, angles, beam_mode)
    gamma = ch.frequency_response(chan.taps, ofdm.n_fft, ofdm.subcarrier_index % ofdm.n_fft)
    geq = pc.equivalent_channel(gamma, effective_analog(weights, array))
    est = geq
    err_db = float("nan")
    if cfg.chi < 1.0:
        est = pc.corrupt_csi(geq, cfg.chi, rng_for(cfg, drop, "csi"))
        err_db = float(10 * np.log10(np.mean(np.abs(est - cfg.chi * geq) ** 2) / np.mean(np.abs(cfg.chi * geq) ** 2)))
    prec = pc.digital_precoder(est, s.precoder, s.rzf_delta, power_target=1.0)
    rng = rng_for(cfg, drop, "symbols")
    grids = np.stack([wf.random_symbol_grid(ofdm, cfg.waveform.n_symbols, rng) for _ in range(s.n_users)])
    x = wf.generate_tx_streams(grids, prec.scaled, ofdm)
    x = np.stack([wf.limit_papr_icf(x[l], cfg.waveform.papr_db, cfg.waveform.icf_iterations, ofdm)
                  for l in range(s.n_subarrays)])
    total = np.sum(np.mean(np.abs(x) ** 2, axis=1))
    if total == 0:
        raise SimulationError("transmit streams carry no power")
    x = x * np.sqrt(s.n_subarrays * 10 ** (cfg.pa.drive_db / 10) / total)
    return Link(cfg, angles, chan, weights, array, prec, geq, grids, x, err_db)


# ----------------------------------------------------------------------------
# linearization


def estimate_responses(link: Link, crosstalk: Optional[bool] = None) -> np.ndarray:
    """Linear loop responses from a backed-off probe of the streams (DPD off)."""
    on = link.array.has_antenna_coupling if crosstalk is None else crosstalk
    scale = 10 ** (-link.cfg.dpd.probe_backoff_db / 20)
    probe = scale * link.x
    return dpd.estimate_linear_responses(probe, link.feedback(probe), link.cfg.dpd.linear_taps, crosstalk=on)


def learn_cl(link: Link, g_hat: Optional[np.ndarray] = None):
    d = link.cfg.dpd
    g_hat = estimate_responses(link) if g_hat is None else g_hat
    state = dpd.DpdState.zeros(link.n_subarrays, d.order, d.memory, g_hat=g_hat, mu=d.mu)
    return dpd.cl_learn(link.x, link.feedback, state, d.cl_blocks, d.cl_block_size)


def learn_ila(link: Link, g_hat: Optional[np.ndarray] = None) -> dpd.DpdState:
    d = link.cfg.dpd
    g_hat = estimate_responses(link) if g_hat is None else g_hat
    own = np.zeros_like(g_hat)
    for l in range(g_hat.shape[0]):
        own[l, l] = g_hat[l, l]
    return dpd.ila_learn(link.x, link.feedback, own, d.order, d.memory, d.ila_iterations, d.ila_block_size)


def learn(link: Link, method: str, g_hat: Optional[np.ndarray] = None):
    """(state, trajectory or None) for 'CL' or 'ILA'; 'none' gives (None, None)."""
    if method == "none":
        return None, None
    if method == "CL":
        return learn_cl(link, g_hat)
    if method == "ILA":
        return learn_ila(link, g_hat), None
    raise ConfigurationError(f"unknown DPD method {method!r}")


# ----------------------------------------------------------------------------
# evaluation


@dataclass
class UserReport:
    evm: np.ndarray  # (U,) percent
    aclr: np.ndarray  # (U, 2) left/right dB
    in_band: np.ndarray  # (U,) in-band power
    z: np.ndarray = field(repr=False, default=None)

    @property
    def worst(self) -> np.ndarray:
        return self.aclr.min(axis=1)


def evaluate_users(link: Link, state: Optional[dpd.DpdState], keep_signals: bool = False) -> UserReport:
    cfg = link.cfg
    z = link.at_users(dpd.predistort_all(link.x, state))
    bw, fs = cfg.ofdm.bandwidth, cfg.ofdm.sample_rate
    evm = np.array([mt.evm(z[u], link.grids[u], cfg.ofdm) for u in range(z.shape[0])])
    aclr = np.array([mt.aclr(z[u], bandwidth=bw, sample_rate=fs, spacing=cfg.channel_spacing) for u in range(z.shape[0])])
    p_in = np.array([mt.in_band_power(z[u], bw, fs) for u in range(z.shape[0])])
    return UserReport(evm, aclr, p_in, z if keep_signals else None)


def victim_angles(cfg: ScenarioConfig, drop: int, n: Optional[int] = None) -> np.ndarray:
    n = cfg.sweep.n_victims if n is None else n
    lim = np.deg2rad(cfg.sweep.victim_range_deg)
    return rng_for(cfg, drop, "victim_angles").uniform(-lim, lim, n)


def evaluate_victims(link: Link, state: Optional[dpd.DpdState], p_intended: float, angles: np.ndarray,
                     drop: int, batch: int = 200) -> np.ndarray:
    """(V, 2) left/right victim ACLR in dB: intended in-band power over victim adjacent power."""
    cfg = link.cfg
    if angles.size == 0:
        return np.zeros((0, 2))
    bw, fs, sp = cfg.ofdm.bandwidth, cfg.ofdm.sample_rate, cfg.channel_spacing
    _, left, right = mt.adjacent_bands(bw, sp, fs)
    y = link.antenna_signals(dpd.predistort_all(link.x, state))
    spec = mt.CrossSpectrum(y, fs, [left, right])
    out = np.empty((angles.size, 2))
    for start in range(0, angles.size, batch):
        sl = slice(start, start + batch)
        rng = rng_for(cfg, drop, f"victim_channel_{start}")
        taps = ch.draw_channel(cfg.channel, angles[sl], rng).taps
        out[sl, 0] = spec.band_power(taps, left)
        out[sl, 1] = spec.band_power(taps, right)
    return 10 * np.log10(p_intended / np.maximum(out, p_intended * 1e-30))


def oob_power(z: np.ndarray, cfg: ScenarioConfig) -> float:
    """Sum of both adjacent-channel powers of a received signal."""
    bw, fs, sp = cfg.ofdm.bandwidth, cfg.ofdm.sample_rate, cfg.channel_spacing
    _, left, right = mt.adjacent_bands(bw, sp, fs)
    f, p = mt.welch_psd(z, fs)
    return mt.band_power(f, p, left) + mt.band_power(f, p, right)


def clean_floor_evm(link: Link) -> np.ndarray:
    """EVM at the users with the PAs replaced by identical unit-gain linear amplifiers."""
    lin = np.zeros_like(link.array.coeffs)
    lin[:, :, 0, 0] = 1.0
    linear = pa.PaArrayModel(lin, link.array.orders, link.array.input_coupling, link.array.antenna_coupling)
    z = link.at_users(link.x, array=linear)
    return np.array([mt.evm(z[u], link.grids[u], link.cfg.ofdm) for u in range(z.shape[0])])
