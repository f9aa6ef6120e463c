"""Single-input memory-polynomial DPD per TX chain and its learning algorithms.

Coefficient vectors are stacked order-major, tap-minor: (q=3, d=0), (q=3, d=1), ...
The predistorter applies the conjugated coefficients:

    x~(n) = x(n) + sum_q sum_d conj(lambda_q(d)) * psi_q(n - d)

The closed-loop learner leaves the linear branch untouched. The ILA reference may
carry an additional linear filter (`linear`), which is zero for closed-loop states.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DivergenceError, EstimationError, SingularityError
from .pa_array import delay, memory_polynomial, odd_orders, snl_basis

log = logging.getLogger(__name__)

Chain = Callable[[np.ndarray], np.ndarray]


@dataclass
class DpdState:
    coeffs: np.ndarray  # (L, n_orders, D_dpd), orders 3..Q
    orders: tuple
    linear: Optional[np.ndarray] = None  # (L, D_dpd) extra linear taps, ILA only
    g_hat: Optional[np.ndarray] = None  # (L_obs, L_src, D_lin)
    mu: float = 0.5
    R: Optional[np.ndarray] = None  # (L, N_BF, N_BF)

    @classmethod
    def zeros(cls, n_subarrays: int, max_order: int, memory: int, **kw) -> "DpdState":
        orders = odd_orders(max_order, start=3)
        return cls(np.zeros((n_subarrays, len(orders), memory), dtype=complex), orders, **kw)

    @property
    def n_subarrays(self) -> int:
        return self.coeffs.shape[0]

    @property
    def memory(self) -> int:
        return self.coeffs.shape[-1]

    @property
    def n_bf(self) -> int:
        return self.coeffs.shape[1] * self.coeffs.shape[2]

    def vector(self, l: int) -> np.ndarray:
        return self.coeffs[l].reshape(-1)

    def copy(self) -> "DpdState":
        return replace(
            self,
            coeffs=self.coeffs.copy(),
            linear=None if self.linear is None else self.linear.copy(),
            R=None if self.R is None else self.R.copy(),
        )


def predistort(x: np.ndarray, state: DpdState, l: int) -> np.ndarray:
    """Apply subarray l's predistorter to its stream x."""
    x = np.asarray(x, dtype=complex)
    orders = (1,) + tuple(state.orders)
    c = np.zeros((len(orders), state.memory), dtype=complex)
    c[0, 0] = 1.0
    if state.linear is not None:
        c[0] += np.conj(state.linear[l])
    c[1:] = np.conj(state.coeffs[l])
    return memory_polynomial(x, c, orders)


def predistort_all(x: np.ndarray, state: Optional[DpdState]) -> np.ndarray:
    if state is None:
        return np.array(x, dtype=complex, copy=True)
    return np.stack([predistort(x[l], state, l) for l in range(x.shape[0])])


def basis_matrix(x: np.ndarray, orders: Sequence[int], memory: int) -> np.ndarray:
    """Psi with rows psi(n)^T = [psi_q(n - d)] (order-major, tap-minor): (N, N_BF)."""
    psi = snl_basis(x, orders)
    cols = [delay(psi[i], d) for i in range(len(orders)) for d in range(memory)]
    return np.stack(cols, axis=1)


def _lagged(x: np.ndarray, n_taps: int) -> np.ndarray:
    return np.stack([delay(x, d) for d in range(n_taps)], axis=-1)


def estimate_linear_responses(
    x: np.ndarray,
    z_fb: np.ndarray,
    n_taps: int = 3,
    crosstalk: bool = False,
    max_condition: float = 1e8,
) -> np.ndarray:
    """Block LS fit z_fb^l(n) ~ sum_k sum_d g[l, k, d] x_k(n - d).

    Without crosstalk only the own chain k = l is fitted. Returns (L, L, n_taps).
    """
    x = np.atleast_2d(x)
    z_fb = np.atleast_2d(z_fb)
    n_sub, n = x.shape
    if n < 10 * n_sub * n_taps:
        raise ConfigurationError(f"{n} samples are too few for {n_sub}x{n_taps} linear taps")
    lagged = [_lagged(x[k], n_taps) for k in range(n_sub)]
    g = np.zeros((n_sub, n_sub, n_taps), dtype=complex)
    for l in range(n_sub):
        srcs = list(range(n_sub)) if crosstalk else [l]
        A = np.concatenate([lagged[k] for k in srcs], axis=1)
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > max_condition:
            raise EstimationError(
                f"linear response regression for observer {l} is rank deficient (cond={cond:.3g})",
                condition_number=float(cond),
            )
        sol = np.linalg.lstsq(A, z_fb[l], rcond=None)[0]
        for j, k in enumerate(srcs):
            g[l, k] = sol[j * n_taps:(j + 1) * n_taps]
    return g


def linear_reference(x: np.ndarray, g_hat: np.ndarray, l: int) -> np.ndarray:
    """sum_k g_hat[l, k] * x_k, with zero initial state."""
    out = np.zeros(x.shape[-1], dtype=complex)
    for k in range(g_hat.shape[1]):
        if np.any(g_hat[l, k]):
            for d, g in enumerate(g_hat[l, k]):
                out += g * delay(x[k], d)
    return out


def dominant_tap(g: np.ndarray) -> complex:
    return complex(g[np.argmax(np.abs(g))])


def covariance(psi: np.ndarray, loading: float = 1e-8) -> np.ndarray:
    """R = Psi^T conj(Psi) / N plus diagonal loading relative to the mean diagonal."""
    R = psi.T @ np.conj(psi) / psi.shape[0]
    R += loading * np.real(np.trace(R)) / R.shape[0] * np.eye(R.shape[0])
    return R


def cyclic_segment(x: np.ndarray, start: int, length: int, pad: int) -> np.ndarray:
    idx = np.arange(start - pad, start + length) % x.shape[-1]
    return np.take(x, idx, axis=-1)


@dataclass
class LearningTrajectory:
    rows: List[tuple] = field(default_factory=list)  # (block, subarray, residual_dbc, coeff_norm)

    def residual_db(self, l: int) -> np.ndarray:
        return np.array([r[2] for r in self.rows if r[1] == l])

    def coeff_norm(self, l: int) -> np.ndarray:
        return np.array([r[3] for r in self.rows if r[1] == l])


def _db(p: float) -> float:
    return 10 * np.log10(max(p, 1e-300))


def cl_learn(
    x: np.ndarray,
    chain: Chain,
    state: DpdState,
    n_blocks: int = 15,
    block_size: int = 20000,
    crosstalk: bool = False,
    pad: int = 16,
    start: int = 0,
    max_halvings: int = 5,
):
    """Closed-loop decorrelation learning with the self-orthogonalized block-LMS rule.

    For each block the full chain is run with the current predistorters; the error
    e_l = z_fb^l - sum_k g_hat[l, k] * x_k is decorrelated from the basis functions of
    the clean stream x_l:

        lambda_l <- lambda_l - mu * R^-1 Psi_l^T conj(e_l / g_ll) / N

    where g_ll is the dominant tap of the own-loop linear response, which makes mu a
    dimensionless fraction of a Newton step, and R is the basis covariance of the
    current block.  Returns (state, trajectory).
    """
    if state.g_hat is None:
        raise ConfigurationError("linear loop responses must be estimated before learning")
    state = state.copy()
    n_sub = state.n_subarrays
    traj = LearningTrajectory()
    loop_gain = [dominant_tap(state.g_hat[l, l]) for l in range(n_sub)]
    mu = state.mu
    history = []  # total residual power per block
    best = (np.inf, state.coeffs.copy())
    halvings = 0
    for i in range(n_blocks):
        seg = cyclic_segment(x, start + i * block_size, block_size, pad)
        z = chain(predistort_all(seg, state))
        residual_total = 0.0
        steps = []
        for l in range(n_sub):
            e = (z[l] - linear_reference(seg, state.g_hat, l))[pad:]
            psi = basis_matrix(seg[l], state.orders, state.memory)[pad:]
            if state.R is None:
                state.R = np.zeros((n_sub, state.n_bf, state.n_bf), dtype=complex)
            # recomputed per block: precoded streams are far from stationary over one block
            state.R[l] = covariance(psi)
            grad = psi.T @ np.conj(e / loop_gain[l]) / psi.shape[0]
            steps.append(np.linalg.solve(state.R[l], grad))
            p_res = np.mean(np.abs(e) ** 2)
            p_fb = np.mean(np.abs(z[l][pad:]) ** 2)
            residual_total += p_res
            traj.rows.append((i, l, _db(p_res / p_fb), float(np.linalg.norm(state.coeffs[l]))))
        history.append(_db(residual_total))
        if residual_total < best[0]:
            best = (residual_total, state.coeffs.copy())
        if len(history) >= 3 and history[-1] > history[-2] > history[-3] and history[-1] - history[-3] > 3.0:
            halvings += 1
            if halvings > max_halvings:
                raise DivergenceError(f"closed-loop learning diverged after {max_halvings} step-size halvings")
            mu /= 2
            log.warning("residual grew %.1f dB over two blocks; halving mu to %g", history[-1] - history[-3], mu)
            state.coeffs = best[1].copy()
            continue
        for l in range(n_sub):
            state.coeffs[l] -= mu * steps[l].reshape(state.coeffs[l].shape)
    state.mu = mu
    return state, traj


def convolution_matrix(h: np.ndarray, n_cols: int) -> np.ndarray:
    """Toeplitz matrix A with (A @ u) == np.convolve(h, u) for len(u) == n_cols."""
    A = np.zeros((h.size + n_cols - 1, n_cols), dtype=complex)
    for j in range(n_cols):
        A[j:j + h.size, j] = h
    return A


def solve_cancellation(
    alpha_tot: np.ndarray,
    pa_orders: Sequence[int],
    max_order: int,
    memory: int,
    max_condition: float = 1e8,
) -> np.ndarray:
    """LS solution of conj(lambda_q) * alpha_1 = -alpha_q over all lags: (n_q, memory).

    alpha_tot: (n_pa_orders, D_pa) equivalent subarray responses, order 1 first.
    Orders beyond the PA order get zero coefficients.
    """
    alpha_tot = np.asarray(alpha_tot, dtype=complex)
    pa_orders = tuple(pa_orders)
    if pa_orders[0] != 1:
        raise ConfigurationError("alpha_tot must start with the linear response")
    A = convolution_matrix(alpha_tot[0], memory)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > max_condition:
        raise SingularityError(f"deconvolution matrix is ill-conditioned (cond={cond:.3g})", condition_number=cond)
    q_orders = odd_orders(max_order, start=3)
    lam = np.zeros((len(q_orders), memory), dtype=complex)
    for i, q in enumerate(q_orders):
        if q not in pa_orders:
            continue
        rhs = np.zeros(A.shape[0], dtype=complex)
        a_q = alpha_tot[pa_orders.index(q)]
        rhs[:a_q.size] = -a_q
        lam[i] = np.conj(np.linalg.lstsq(A, rhs, rcond=None)[0])
    return lam


def cancellation_residual(lam: np.ndarray, alpha_tot: np.ndarray, pa_orders: Sequence[int]) -> np.ndarray:
    """||conj(lambda_q) * alpha_1 + alpha_q|| / ||alpha_q|| for every DPD order q <= P."""
    pa_orders = tuple(pa_orders)
    out = []
    for i, q in enumerate(range(3, 2 * lam.shape[0] + 3, 2)):
        if q not in pa_orders:
            continue
        a_q = alpha_tot[pa_orders.index(q)]
        full = np.convolve(np.conj(lam[i]), alpha_tot[0])
        full[:a_q.size] += a_q
        out.append(np.linalg.norm(full) / np.linalg.norm(a_q))
    return np.array(out)


def ila_learn(
    x: np.ndarray,
    chain: Chain,
    g_hat: np.ndarray,
    max_order: int,
    memory: int,
    n_iterations: int = 3,
    block_size: int = 100000,
    pad: int = 16,
    start: int = 0,
    max_condition: float = 1e12,
) -> DpdState:
    """Indirect learning: fit a post-distorter on the gain-normalized feedback, copy it.

    The post-distorter maps z_n = z_fb^l / g_ll to the current PA-chain input x~_l
    with a full memory polynomial (orders 1..Q); its basis is computed from the
    feedback samples, so any crosstalk in the feedback enters the regression.
    """
    n_sub = x.shape[0]
    orders = (1,) + odd_orders(max_order, start=3)
    state = DpdState.zeros(n_sub, max_order, memory, g_hat=g_hat)
    state.linear = np.zeros((n_sub, memory), dtype=complex)
    for i in range(n_iterations):
        seg = cyclic_segment(x, start + i * block_size, block_size, pad)
        xt = predistort_all(seg, state)
        z = chain(xt)
        new_c = np.zeros((n_sub, len(orders), memory), dtype=complex)
        for l in range(n_sub):
            zn = z[l] / dominant_tap(g_hat[l, l])
            phi = basis_matrix(zn, orders, memory)[pad:]
            target = (xt[l] - zn)[pad:]
            cond = np.linalg.cond(phi)
            if not np.isfinite(cond) or cond > max_condition:
                raise SingularityError(f"ILA regression is singular (cond={cond:.3g})", condition_number=cond)
            new_c[l] = np.linalg.lstsq(phi, target, rcond=None)[0].reshape(len(orders), memory)
        state.linear = np.conj(new_c[:, 0])
        state.coeffs = np.conj(new_c[:, 1:])
    return state
