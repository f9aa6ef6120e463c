"""Shared test benches."""

from dataclasses import dataclass

import numpy as np

from hybrid_dpd import dpd, pa_array as pa, waveform as wf


def cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@dataclass
class Bench:
    x: np.ndarray
    weights: np.ndarray
    array: pa.PaArrayModel

    def chain(self, xt):
        return pa.observe_feedback(pa.transmit(xt, self.weights, self.array), self.weights)


def random_bank(rng, L=2, M=4, order=7, memory=3, ratio=0.08, linear_tail=1.0):
    """Per-order scales fall geometrically from ratio (order 3 relative to order 1)."""
    orders = pa.odd_orders(order)
    order_scale = np.array([1.0, ratio, ratio**2 * 1.5, ratio**3 * 2.0, ratio**4 * 2.5, ratio**5 * 3.0])[:len(orders)]
    tap_scale = np.array([1.0, 0.2, 0.05, 0.01])[:memory]
    coeffs = cn(rng, L, M, len(orders), memory) * order_scale[:, None] * tap_scale[None, :]
    coeffs[..., 0, 0] = 1.0 + 0.1 * cn(rng, L, M)
    coeffs[..., 0, 1:] *= linear_tail
    return coeffs, orders


def band_limited_streams(rng, L, n, rms):
    ofdm = wf.OfdmConfig(fft_size=512, active_subcarriers=384, subcarrier_spacing=120e3,
                         cp_length=36, window_taper_length=16, oversampling_factor=4)
    x = np.fft.ifft(np.fft.fft(cn(rng, L, n)) * wf.in_band_mask(n, ofdm))
    return x / np.sqrt(np.mean(np.abs(x) ** 2)) * rms


def cancellation_bench(seed=7, L=2, M=4, order=7, memory=3, drive=0.5, n=2**16, weights=None, ratio=0.08,
                      linear_tail=1.0):
    rng = np.random.default_rng(seed)
    coeffs, orders = random_bank(rng, L, M, order, memory, ratio, linear_tail)
    w = np.exp(2j * np.pi * rng.uniform(size=(L, M))) if weights is None else weights
    return Bench(band_limited_streams(rng, L, n, drive), w, pa.PaArrayModel(coeffs, orders))


def nonlinear_residual_db(bench, state, n_lin=6, skip=10):
    """Per-subarray feedback power left after removing the best linear fit of x (dBc)."""
    z = bench.chain(dpd.predistort_all(bench.x, state))
    out = []
    for l in range(bench.x.shape[0]):
        A = np.stack([pa.delay(bench.x[l], d) for d in range(n_lin)], 1)
        e = z[l] - A @ np.linalg.lstsq(A, z[l], rcond=None)[0]
        out.append(10 * np.log10(np.mean(np.abs(e[skip:]) ** 2) / np.mean(np.abs(z[l]) ** 2)))
    return np.array(out)


def learn_on_bench(bench, max_order=7, memory=3, blocks=20, block=16384, mu=0.5):
    probe = bench.x * 1e-3
    g = dpd.estimate_linear_responses(probe, bench.chain(probe), 3)
    state = dpd.DpdState.zeros(bench.x.shape[0], max_order, memory, g_hat=g, mu=mu)
    return dpd.cl_learn(bench.x, bench.chain, state, blocks, block)
