"""Analog (phase-only, per subarray) and digital (per subcarrier) precoders."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .channel import steering_vector
from .errors import ConfigurationError, SingularityError


@dataclass
class DigitalPrecoder:
    """Per-subcarrier precoders F[k] of shape (K, L, U) and the sum-power scale."""

    matrices: np.ndarray
    power_scale: float

    @property
    def scaled(self) -> np.ndarray:
        return self.power_scale * self.matrices


@dataclass
class BeamformerSet:
    """Per-subarray analog weights (L, M) and, optionally, the digital precoder."""

    weights: np.ndarray
    digital: Optional[DigitalPrecoder] = None

    @property
    def n_subarrays(self) -> int:
        return self.weights.shape[0]

    @property
    def subarray_size(self) -> int:
        return self.weights.shape[1]

    @property
    def analog(self) -> np.ndarray:
        return analog_matrix(self.weights)


def analog_matrix(weights: np.ndarray) -> np.ndarray:
    """Block-structured LM x L matrix with w_l on rows lM..lM+M-1 of column l."""
    n_sub, m = weights.shape
    W = np.zeros((n_sub * m, n_sub), dtype=complex)
    for l in range(n_sub):
        W[l * m:(l + 1) * m, l] = weights[l]
    return W


def array_gain(weights: np.ndarray, angle: float, spacing: float = 0.5) -> float:
    """|a(angle)^T w| for a single subarray weight vector."""
    return float(np.abs(steering_vector(angle, weights.size, spacing) @ weights))


def quantize_phases(weights: np.ndarray, bits: Optional[int]) -> np.ndarray:
    if not bits:
        return np.exp(1j * np.angle(weights))
    step = 2 * np.pi / 2**bits
    return np.exp(1j * step * np.round(np.angle(weights) / step))


def analog_single_beam(
    user_angles: Sequence[float],
    m: int,
    spacing: float = 0.5,
    assignment: Optional[Sequence[int]] = None,
    phase_bits: Optional[int] = None,
) -> np.ndarray:
    """One beam per subarray; subarray l points at user assignment[l] (default: user l)."""
    user_angles = np.asarray(user_angles, dtype=float)
    if assignment is None:
        assignment = range(user_angles.size)
    w = np.array([np.conj(steering_vector(user_angles[u], m, spacing)) for u in assignment])
    return quantize_phases(w, phase_bits)


def _superposed(user_angles, offsets, m, spacing):
    acc = sum(np.exp(1j * phi) * np.conj(steering_vector(a, m, spacing)) for a, phi in zip(user_angles, offsets))
    return np.exp(1j * np.angle(acc))


def multi_beam_weights(
    user_angles: Sequence[float],
    m: int,
    spacing: float = 0.5,
    step_deg: float = 5.0,
) -> np.ndarray:
    """Phase-only weights with one main lobe per user.

    The weights are the phases of a superposition of conjugate steering vectors; the
    relative phase offsets of the users are grid-searched to maximize the weakest
    user's array gain.
    """
    user_angles = np.asarray(user_angles, dtype=float)
    if user_angles.size == 1:
        return np.conj(steering_vector(user_angles[0], m, spacing))
    grid = np.deg2rad(np.arange(0.0, 360.0, step_deg))
    best, best_gain = None, -np.inf
    for rest in itertools.product(grid, repeat=user_angles.size - 1):
        w = _superposed(user_angles, (0.0,) + rest, m, spacing)
        g = min(array_gain(w, a, spacing) for a in user_angles)
        if g > best_gain + 1e-12:
            best, best_gain = w, g
    return best


def analog_multi_beam(
    user_angles: Sequence[float],
    m: int,
    n_subarrays: int,
    spacing: float = 0.5,
    phase_bits: Optional[int] = None,
    step_deg: float = 5.0,
) -> np.ndarray:
    """Every subarray carries the same multi-beam weights: (L, M)."""
    w = quantize_phases(multi_beam_weights(user_angles, m, spacing, step_deg), phase_bits)
    return np.tile(w, (n_subarrays, 1))


def equivalent_channel(gamma: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Gamma: (U, LM, K), W: (LM, L) -> Gamma_eq (K, U, L)."""
    return np.einsum("uak,al->kul", gamma, W)


def digital_precoder(
    gamma_eq: np.ndarray,
    kind: str = "ZF",
    delta: float = 0.0,
    power_target: float = 1.0,
    max_condition: float = 1e10,
) -> DigitalPrecoder:
    """ZF or RZF precoders from the equivalent channel Gamma_eq (K, U, L).

    The single wideband power scale makes (1/K) sum_k ||scale * F[k]||_F^2 equal to
    power_target, i.e. the mean total transmit power over the L chains for
    unit-power symbols.
    """
    gamma_eq = np.asarray(gamma_eq)
    if gamma_eq.ndim != 3:
        raise ConfigurationError("equivalent channel must have shape (K, U, L)")
    n_sc, n_users, n_chains = gamma_eq.shape
    if n_users > n_chains:
        raise ConfigurationError("more users than TX chains")
    gh = np.conj(np.swapaxes(gamma_eq, 1, 2))
    gram = gamma_eq @ gh
    kind = kind.upper()
    if kind == "ZF":
        cond = np.linalg.cond(gram)
        bad = np.flatnonzero(~np.isfinite(cond) | (cond > max_condition))
        if bad.size:
            k = int(bad[0])
            raise SingularityError(
                f"equivalent channel is rank deficient at subcarrier {k} (cond={cond[k]:.3g})",
                condition_number=float(cond[k]),
                subcarrier=k,
            )
        F = gh @ np.linalg.inv(gram)
    elif kind == "RZF":
        F = gh @ np.linalg.inv(gram + delta * np.eye(n_users))
    else:
        raise ConfigurationError(f"unknown precoder kind {kind!r}")
    total = np.sum(np.abs(F) ** 2) / n_sc
    return DigitalPrecoder(matrices=F, power_scale=float(np.sqrt(power_target / total)))


def corrupt_csi(gamma_eq: np.ndarray, chi: float, rng: np.random.Generator) -> np.ndarray:
    """chi * Gamma_eq + sqrt(1 - chi^2) * E with E i.i.d. CN(0, 1)."""
    if not 0.0 <= chi <= 1.0:
        raise ConfigurationError("chi must lie in [0, 1]")
    if chi == 1.0:
        return np.array(gamma_eq, copy=True)
    err = (rng.standard_normal(gamma_eq.shape) + 1j * rng.standard_normal(gamma_eq.shape)) / np.sqrt(2)
    return chi * gamma_eq + np.sqrt(1.0 - chi**2) * err
