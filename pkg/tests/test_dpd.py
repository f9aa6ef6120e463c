import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybrid_dpd import dpd, pa_array as pa
from hybrid_dpd.errors import ConfigurationError, DivergenceError, EstimationError, SingularityError

from helpers import cancellation_bench, cn, learn_on_bench, nonlinear_residual_db, random_bank


def naive_predistort(x, coeffs):
    """x~(n) = x(n) + sum_q sum_d conj(lambda_q(d)) x(n-d)|x(n-d)|^(q-1)."""
    out = x.astype(complex).copy()
    for n in range(x.size):
        for i in range(coeffs.shape[0]):
            q = 3 + 2 * i
            for d in range(coeffs.shape[1]):
                if n - d >= 0:
                    out[n] += np.conj(coeffs[i, d]) * x[n - d] * abs(x[n - d]) ** (q - 1)
    return out


@pytest.fixture(scope="module")
def learned():
    bench = cancellation_bench()
    state, traj = learn_on_bench(bench)
    return bench, state, traj


def test_zero_state_is_pass_through(rng):
    x = cn(rng, 2, 100)
    np.testing.assert_array_equal(dpd.predistort_all(x, dpd.DpdState.zeros(2, 7, 3)), x)
    np.testing.assert_array_equal(dpd.predistort_all(x, None), x)


def test_single_third_order_coefficient(rng):
    x = cn(rng, 1, 50)
    st_ = dpd.DpdState.zeros(1, 5, 2)
    c = 0.2 - 0.05j
    st_.coeffs[0, 0, 0] = np.conj(c)
    np.testing.assert_allclose(dpd.predistort(x[0], st_, 0), x[0] + c * x[0] * np.abs(x[0]) ** 2, atol=1e-15)


def test_predistort_matches_naive_loop(rng):
    st_ = dpd.DpdState.zeros(2, 7, 3)
    st_.coeffs[:] = cn(rng, *st_.coeffs.shape) * 0.1
    x = cn(rng, 2, 1000) * 0.5
    for l in range(2):
        np.testing.assert_allclose(dpd.predistort(x[l], st_, l), naive_predistort(x[l], st_.coeffs[l]), atol=1e-12)


def test_small_signal_safety(rng):
    st_ = dpd.DpdState.zeros(1, 7, 3)
    st_.coeffs[:] = cn(rng, *st_.coeffs.shape) * 0.3
    x = cn(rng, 1, 2000) * 0.5 * 0.01
    diff = dpd.predistort_all(x, st_) - x
    assert np.sqrt(np.mean(np.abs(diff) ** 2) / np.mean(np.abs(x) ** 2)) < 1e-3


def test_basis_matrix_ordering(rng):
    x = cn(rng, 20)
    Psi = dpd.basis_matrix(x, (3, 5), 2)
    np.testing.assert_allclose(Psi[:, 1], pa.delay(x * np.abs(x) ** 2, 1))
    np.testing.assert_allclose(Psi[:, 2], x * np.abs(x) ** 4)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_covariance_hermitian_positive_definite(seed):
    rng = np.random.default_rng(seed)
    psi = dpd.basis_matrix(cn(rng, 300), (3, 5, 7), 3)
    R = dpd.covariance(psi)
    np.testing.assert_allclose(R, R.conj().T, atol=1e-12 * np.abs(R).max())
    assert np.linalg.eigvalsh(R).min() > 0


def _linear_bank(rng, L, M, memory=3):
    coeffs = np.zeros((L, M, 1, memory), complex)
    coeffs[..., 0, :] = cn(rng, L, M, memory) * np.array([1.0, 0.2, 0.05])[:memory]
    coeffs[..., 0, 0] += 1.0
    return coeffs


def test_linear_responses_of_linear_pas(rng):
    coeffs = _linear_bank(rng, 2, 4)
    arr = pa.PaArrayModel(coeffs, (1,))
    w = np.exp(2j * np.pi * rng.uniform(size=(2, 4)))
    x = cn(rng, 2, 4000)
    g = dpd.estimate_linear_responses(x, pa.observe_feedback(pa.transmit(x, w, arr), w), 3)
    for l in range(2):
        np.testing.assert_allclose(g[l, l], coeffs[l, :, 0].sum(axis=0), atol=1e-9)
        assert not np.any(g[l, 1 - l])


def test_linear_responses_with_output_crosstalk(rng):
    L, M = 2, 4
    coeffs = _linear_bank(rng, L, M)
    _, C = pa.build_crosstalk(L, M, 0.5, -np.inf, -10.0)
    arr = pa.PaArrayModel(coeffs, (1,), None, C)
    w = np.exp(2j * np.pi * rng.uniform(size=(L, M)))
    x = cn(rng, L, 5000)
    g = dpd.estimate_linear_responses(x, pa.observe_feedback(pa.transmit(x, w, arr), w), 3, crosstalk=True)
    mix = np.eye(L * M) + C
    wf_ = w.ravel()
    branch = coeffs[:, :, 0, :].reshape(L * M, 3)
    for l in range(L):
        for k in range(L):
            src = slice(k * M, (k + 1) * M)
            expected = sum(np.conj(wf_[l * M + m]) * (mix[l * M + m, src] * wf_[src]) @ branch[src] for m in range(M))
            np.testing.assert_allclose(g[l, k], expected, atol=1e-9)


def test_linear_fit_residual_uncorrelated_with_input(rng):
    coeffs, orders = random_bank(rng)
    arr = pa.PaArrayModel(coeffs, orders)
    w = np.exp(2j * np.pi * rng.uniform(size=(2, 4)))
    x = cn(rng, 2, 20000) * 0.5
    z = pa.observe_feedback(pa.transmit(x, w, arr), w)
    g = dpd.estimate_linear_responses(x, z, 3)
    for l in range(2):
        e = z[l] - dpd.linear_reference(x, g, l)
        for d in range(3):
            xd = pa.delay(x[l], d)
            assert abs(np.vdot(xd, e)) / (np.linalg.norm(xd) * np.linalg.norm(e)) < 1e-2


def test_identical_streams_make_estimation_fail(rng):
    s = cn(rng, 500)
    with pytest.raises(EstimationError):
        dpd.estimate_linear_responses(np.stack([s, s]), np.stack([s, s]), 3, crosstalk=True)


def test_too_short_estimation_block(rng):
    with pytest.raises(ConfigurationError):
        dpd.estimate_linear_responses(cn(rng, 2, 40), cn(rng, 2, 40), 3)


def test_cl_needs_linear_responses(rng):
    with pytest.raises(ConfigurationError):
        dpd.cl_learn(cn(rng, 1, 500), lambda v: v, dpd.DpdState.zeros(1, 5, 2), 2, 100)


def test_cl_keeps_zero_on_linear_pas(rng):
    coeffs = _linear_bank(rng, 2, 4)
    bench_arr = pa.PaArrayModel(coeffs, (1,))
    w = np.exp(2j * np.pi * rng.uniform(size=(2, 4)))

    def chain(v):
        return pa.observe_feedback(pa.transmit(v, w, bench_arr), w)

    x = cn(rng, 2, 40000) * 0.5
    g = dpd.estimate_linear_responses(x, chain(x), 3)
    state, _ = dpd.cl_learn(x, chain, dpd.DpdState.zeros(2, 7, 3, g_hat=g), 15, 2000)
    assert np.abs(state.coeffs).max() < 1e-6


def test_cl_trajectory_and_covariance(learned):
    _, state, traj = learned
    for l in range(2):
        r = traj.residual_db(l)
        assert r[0] - r.min() >= 20.0
        assert np.all(np.diff(r[:8]) < 1.0)
    assert len(traj.coeff_norm(0)) == 20
    for l in range(2):
        R = state.R[l]
        np.testing.assert_allclose(R, R.conj().T, atol=1e-12 * np.abs(R).max())
        assert np.linalg.eigvalsh(R).min() > 0


def test_decorrelation_fixed_point():
    # learning repeatedly on one block turns the update into a plain fixed-point iteration
    bench = cancellation_bench(n=2**15)
    state, _ = learn_on_bench(bench, blocks=25, block=2**15)
    x = dpd.cyclic_segment(bench.x, 0, 2**15, 16)
    z = bench.chain(dpd.predistort_all(x, state))
    for l in range(2):
        e = (z[l] - dpd.linear_reference(x, state.g_hat, l))[16:]
        psi = dpd.basis_matrix(x[l], state.orders, state.memory)[16:]
        corr = np.abs(psi.conj().T @ e) / (np.linalg.norm(psi, axis=0) * np.linalg.norm(e))
        assert corr.max() < 1e-2


def test_cl_solution_does_not_depend_on_beams(learned):
    bench, state, _ = learned
    other_w = np.exp(2j * np.pi * np.random.default_rng(99).uniform(size=bench.weights.shape))
    other = cancellation_bench(weights=other_w)
    state2, _ = learn_on_bench(other)
    for l in range(2):
        assert np.linalg.norm(state2.coeffs[l] - state.coeffs[l]) / np.linalg.norm(state.coeffs[l]) < 0.1


def test_divergence_guard(rng):
    # a loop whose distortion keeps doubling cannot be tracked at any step size
    count = {"n": 0}

    def chain(v):
        count["n"] += 1
        return v + 0.05 * 2.0 ** count["n"] * v * np.abs(v) ** 2

    x = cn(rng, 1, 20000) * 0.3
    g = np.ones((1, 1, 1), complex)
    with pytest.raises(DivergenceError):
        dpd.cl_learn(x, chain, dpd.DpdState.zeros(1, 3, 1, g_hat=g), 12, 1000)


def test_solve_cancellation_examples(rng):
    orders = (1, 3, 5)
    memless = cn(rng, 3, 1)
    lam = dpd.solve_cancellation(memless, orders, 5, 1)
    np.testing.assert_allclose(np.conj(lam[:, 0]), -memless[1:, 0] / memless[0, 0], atol=1e-14)
    imp = np.zeros((3, 3), complex)
    imp[0, 0] = 1.0
    imp[1:] = cn(rng, 2, 3)
    lam = dpd.solve_cancellation(imp, orders, 5, 3)
    np.testing.assert_allclose(np.conj(lam), -imp[1:], atol=1e-14)


def test_solve_cancellation_with_memory(rng):
    alpha = cn(rng, 4, 3) * np.array([1.0, 0.2, 0.05])
    alpha[0, 0] = 2.0
    lam = dpd.solve_cancellation(alpha, (1, 3, 5, 7), 9, 6)
    assert lam.shape == (4, 6)
    assert not np.any(lam[3])  # order 9 is beyond the PA model
    assert np.all(dpd.cancellation_residual(lam, alpha, (1, 3, 5, 7)) < 1e-3)


def test_solve_cancellation_rejects_bad_input():
    with pytest.raises(SingularityError):
        dpd.solve_cancellation(np.zeros((2, 3)), (1, 3), 3, 3)
    with pytest.raises(ConfigurationError):
        dpd.solve_cancellation(np.ones((1, 3)), (3,), 3, 3)


def test_ila_on_linear_pas(rng):
    # memoryless branches: a finite linear post-distorter can invert them exactly
    coeffs = _linear_bank(rng, 2, 4, memory=1)
    arr = pa.PaArrayModel(coeffs, (1,))
    w = np.exp(2j * np.pi * rng.uniform(size=(2, 4)))

    def chain(v):
        return pa.observe_feedback(pa.transmit(v, w, arr), w)

    x = cn(rng, 2, 30000) * 0.5
    g = dpd.estimate_linear_responses(x, chain(x), 3)
    state = dpd.ila_learn(x, chain, g, 7, 3, 2, 10000)
    assert np.abs(state.coeffs).max() < 1e-6
    np.testing.assert_allclose(np.conj(state.linear[:, 0]),
                               g[[0, 1], [0, 1], 0] / coeffs[:, :, 0, 0].sum(axis=1) - 1, atol=1e-6)


def test_ila_linearizes_bench():
    bench = cancellation_bench()
    probe = bench.x * 1e-3
    g = dpd.estimate_linear_responses(probe, bench.chain(probe), 3)
    state = dpd.ila_learn(bench.x, bench.chain, g, 7, 3, 3, 30000)
    assert np.all(nonlinear_residual_db(bench, state) < nonlinear_residual_db(bench, None) - 15)
