import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybrid_dpd import waveform as wf
from hybrid_dpd.errors import ConfigurationError, FramingError
from hybrid_dpd.metrics import papr

from conftest import cn


def naive_stream(grid, cfg):
    """Direct-sum OFDM with CP and circular raised-cosine overlap-add, one stream."""
    K, S = grid.shape
    N, ncp, w, sl = cfg.n_fft, cfg.n_cp, cfg.n_taper, cfg.symbol_length
    k = cfg.subcarrier_index
    total = S * sl
    out = np.zeros(total, dtype=complex)
    for s in range(S):
        body = np.array([np.sum(grid[:, s] * np.exp(2j * np.pi * k * n / N)) for n in range(N)])
        body /= np.sqrt(K)
        for t in range(sl + w):
            v = body[(t - ncp) % N]
            if t < w:
                v *= 0.5 * (1 - np.cos(np.pi * (t + 0.5) / w))
            elif t >= sl:
                v *= 0.5 * (1 - np.cos(np.pi * (sl + w - 1 - t + 0.5) / w))
            out[(s * sl + t) % total] += v
    return out


def test_numerology_of_defaults():
    cfg = wf.OfdmConfig()
    assert cfg.subcarrier_spacing == 60e3
    assert cfg.active_subcarriers == 3168 and cfg.fft_size == 4096
    assert cfg.sample_rate == pytest.approx(1228.8e6)
    assert cfg.active_bins.size == 3168 and 0 not in cfg.active_bins


@pytest.mark.parametrize("kw", [
    dict(active_subcarriers=4096), dict(active_subcarriers=3167), dict(cp_length=32),
    dict(oversampling_factor=0), dict(constellation="8PSK"),
])
def test_config_rejects(kw):
    with pytest.raises(ConfigurationError):
        wf.OfdmConfig(**kw)


def test_matches_direct_sum_oracle(small_ofdm, rng):
    grid = cn(rng, small_ofdm.active_subcarriers, 3)
    x = wf.generate_tx_streams(grid[None], np.ones((small_ofdm.active_subcarriers, 1, 1)), small_ofdm)
    np.testing.assert_allclose(x[0], naive_stream(grid, small_ofdm), atol=1e-12)


def test_zero_grid_gives_zero_stream(small_ofdm):
    g = np.zeros((1, small_ofdm.active_subcarriers, 2))
    x = wf.generate_tx_streams(g, np.ones((small_ofdm.active_subcarriers, 1, 1)), small_ofdm)
    assert not np.any(x)


def test_identity_precoder_separates_users(small_ofdm, rng):
    grids = np.stack([wf.random_symbol_grid(small_ofdm, 4, rng) for _ in range(2)])
    eye = np.broadcast_to(np.eye(2), (small_ofdm.active_subcarriers, 2, 2))
    x = wf.generate_tx_streams(grids, eye, small_ofdm)
    for l in range(2):
        np.testing.assert_allclose(wf.demodulate(x[l], small_ofdm), grids[l], atol=1e-10)
    cross = wf.demodulate(x[0], small_ofdm) - grids[1]
    assert np.sqrt(np.mean(np.abs(cross) ** 2)) >= 1.0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), n_sym=st.integers(1, 5))
def test_demodulation_inverts_modulation(seed, n_sym):
    cfg = wf.OfdmConfig(fft_size=64, active_subcarriers=36, subcarrier_spacing=1e3,
                        cp_length=8, window_taper_length=4, oversampling_factor=2)
    rng = np.random.default_rng(seed)
    grid = wf.random_symbol_grid(cfg, n_sym, rng)
    x = wf.generate_tx_streams(grid[None], np.ones((36, 1, 1)), cfg)
    np.testing.assert_allclose(wf.demodulate(x[0], cfg), grid, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_body_power_follows_precoder(seed):
    cfg = wf.OfdmConfig(fft_size=64, active_subcarriers=36, subcarrier_spacing=1e3,
                        cp_length=8, window_taper_length=4, oversampling_factor=2)
    rng = np.random.default_rng(seed)
    grids = np.stack([wf.random_symbol_grid(cfg, 3, rng) for _ in range(2)])
    F = cn(rng, 36, 3, 2)
    x = wf.generate_tx_streams(grids, F, cfg)
    bodies = x.reshape(3, 3, cfg.symbol_length)[..., cfg.n_cp:]
    measured = np.mean(np.sum(np.abs(bodies) ** 2, axis=0))
    expected = np.mean(np.sum(np.abs(np.einsum("klu,uks->lks", F, grids)) ** 2, axis=0))
    assert measured == pytest.approx(expected, rel=1e-9)


def test_unit_symbol_power(rng):
    cfg = wf.OfdmConfig()
    g = wf.random_symbol_grid(cfg, 3, rng)
    assert np.mean(np.abs(g) ** 2) == pytest.approx(1.0, abs=1e-12)


def test_demodulate_framing(small_ofdm):
    with pytest.raises(FramingError):
        wf.demodulate(np.zeros(small_ofdm.symbol_length + 1), small_ofdm)
    assert not np.any(wf.demodulate(np.zeros(2 * small_ofdm.symbol_length), small_ofdm))


def test_ramp_is_complementary():
    r = wf.raised_cosine_ramp(17)
    np.testing.assert_allclose(r + r[::-1], 1.0, atol=1e-15)


def test_clip_envelope_keeps_phase():
    x = np.array([3 + 4j, 0.1j, 0])
    y = wf.clip_envelope(x, 1.0)
    np.testing.assert_allclose(np.abs(y), [1.0, 0.1, 0.0])
    assert np.angle(y[0]) == pytest.approx(np.angle(x[0]))


def test_icf_leaves_constant_envelope_alone(small_ofdm):
    n = 4 * small_ofdm.symbol_length
    tone = np.exp(2j * np.pi * 3 * np.arange(n) / n)
    out = wf.limit_papr_icf(tone, 8.3, 10, small_ofdm)
    np.testing.assert_allclose(out, tone, atol=1e-12)


def test_icf_zero_signal(small_ofdm):
    out = wf.limit_papr_icf(np.zeros(100, complex), 8.3, 5, small_ofdm)
    assert not np.any(out)


def test_icf_rejects_nonpositive_target(small_ofdm):
    with pytest.raises(ConfigurationError):
        wf.limit_papr_icf(np.ones(10, complex), 0.0, 3, small_ofdm)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_icf_converges_and_stays_in_band(seed):
    cfg = wf.OfdmConfig(fft_size=256, active_subcarriers=180, subcarrier_spacing=15e3,
                        cp_length=18, window_taper_length=4, oversampling_factor=4)
    rng = np.random.default_rng(seed)
    grid = wf.random_symbol_grid(cfg, 8, rng)
    x = wf.generate_tx_streams(grid[None], np.ones((180, 1, 1)), cfg)[0]
    hist: list = []
    y = wf.limit_papr_icf(x, 8.3, 10, cfg, hist)
    assert papr(y) <= 8.3 + 0.3
    assert all(b <= a + 0.05 for a, b in zip(hist, hist[1:]))
    leak = np.fft.fft(y)[~wf.in_band_mask(y.size, cfg)]
    assert np.max(np.abs(leak)) < 1e-9 * np.max(np.abs(np.fft.fft(y)))
