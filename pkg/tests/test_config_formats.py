import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybrid_dpd import config as cf, formats as fm
from hybrid_dpd.errors import ConfigurationError
from hybrid_dpd.pa_array import PaModel, odd_orders

from helpers import cn


def test_full_scale_defaults():
    c = cf.profile("paper")
    s = c.system
    assert (s.n_users, s.n_subarrays, s.subarray_size, s.antenna_spacing) == (2, 2, 32, 0.5)
    assert s.carrier_bandwidth == 200e6
    assert (c.ofdm.subcarrier_spacing, c.ofdm.active_subcarriers, c.ofdm.fft_size) == (60e3, 3168, 4096)
    assert c.waveform.papr_db == 8.3
    ch = c.channel
    assert (ch.n_clusters, ch.rays_per_cluster, ch.rician_k_db, ch.max_excess_delay) == (6, 5, 10.0, 60e-9)
    assert (c.pa.order, c.pa.memory, c.dpd.order, c.dpd.memory) == (11, 3, 11, 3)
    d = c.dpd
    assert (d.cl_block_size, d.cl_blocks, d.ila_iterations, d.ila_block_size, d.linear_taps) == (20000, 15, 3, 100000, 3)
    assert (c.crosstalk.input_db, c.crosstalk.antenna_db) == (-20.0, -10.0)
    assert (c.csi.chi, c.csi.phase_bits) == (0.9, 5)
    assert c.channel.array_size == 64


def test_csi_impairments_only_when_active():
    c = cf.profile("desk")
    assert (c.chi, c.phase_bits) == (1.0, 0)
    assert (cf.override(c, {"scenario": "imperfect_csi"}).chi, cf.override(c, {"csi.enabled": True}).phase_bits) == (0.9, 5)


def test_desk_profile():
    c = cf.profile("desk")
    assert c.system.subarray_size == 8 and c.channel.array_size == 16
    assert c.pa.order == c.dpd.order == 7
    assert c.channel.sample_rate == c.ofdm.sample_rate


def test_round_trip(tmp_path):
    for name in ("desk", "paper"):
        c = cf.override(cf.profile(name), {"scenario": "spatial_sweep", "seed": 9, "crosstalk.enabled": True,
                                           "sweep.separations_deg": (1.5, 7.0), "dpd.methods": ("CL",)})
        path = tmp_path / f"{name}.ini"
        path.write_text(cf.dumps(c))
        assert cf.load(path, "desk" if name == "paper" else "paper") == c


def test_shipped_configs_load():
    import glob
    files = sorted(glob.glob("configs/*.ini"))
    assert files
    for f in files:
        cf.load(f)


@pytest.mark.parametrize("text", [
    "[bogus]\nx = 1\n",
    "[system]\nwidth = 3\n",
    "[run]\nmode = fast\n",
    "[system]\nsubarray_size = many\n",
    "[run]\nscenario = everything\n",
    "[system]\nuser_angles_deg = 1, 2, 3\n",
    "[sweep]\ndpd_mode = sometimes\n",
    "[csi]\nchi = 1.5\n",
    "[channel]\narray_size = 3\n",
    "[dpd]\nmethods = CL, NN\n",
])
def test_invalid_files(tmp_path, text):
    p = tmp_path / "bad.ini"
    p.write_text(text)
    with pytest.raises(ConfigurationError):
        cf.load(p)


def test_channel_follows_array_size():
    c = cf.override(cf.profile("desk"), {"system.subarray_size": 32})
    assert c.channel.array_size == 64


def test_override_rejects_unknown():
    with pytest.raises(ConfigurationError):
        cf.override(cf.profile(), {"system.nothing": 1})
    with pytest.raises(ConfigurationError):
        cf.override(cf.profile(), {"nowhere.key": 1})
    with pytest.raises(ConfigurationError):
        cf.profile("huge")


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), order=st.sampled_from([1, 3, 7, 11]), memory=st.integers(1, 4))
def test_pa_model_round_trip(tmp_path_factory, seed, order, memory):
    rng = np.random.default_rng(seed)
    orders = odd_orders(order)
    c = cn(rng, len(orders), memory)
    c[0, 0] += 2.0
    model = PaModel(c, orders)
    path = tmp_path_factory.mktemp("pa") / "pa.txt"
    fm.save_pa_model(path, model)
    back = fm.load_pa_model(path)
    assert back.orders == model.orders
    np.testing.assert_array_equal(back.coeffs, model.coeffs)


@pytest.mark.parametrize("text", [
    "3\n",
    "4 1\n1 0 1 0\n3 0 0 0\n",
    "3 1\n1 0 1 0\n",
    "3 1\n1 0 1 0\n3 0 1 0\n3 0 1 0\n",
    "3 1\n1 0 1 0\n2 0 1 0\n",
    "3 1\n1 0 1 0\n5 0 1 0\n",
    "3 1\n1 0 1\n3 0 1 0\n",
])
def test_pa_model_validation(tmp_path, text):
    p = tmp_path / "pa.txt"
    p.write_text(text)
    with pytest.raises(ConfigurationError):
        fm.load_pa_model(p)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), L=st.integers(1, 3), Q=st.sampled_from([3, 7, 11]), D=st.integers(1, 4))
def test_dpd_coefficients_round_trip(tmp_path_factory, seed, L, Q, D):
    rng = np.random.default_rng(seed)
    orders = odd_orders(Q, 3)
    coeffs = cn(rng, L, len(orders), D)
    path = tmp_path_factory.mktemp("dpd") / "dpd.txt"
    fm.save_dpd_coefficients(path, coeffs, orders)
    back, o = fm.load_dpd_coefficients(path)
    assert o == orders
    np.testing.assert_array_equal(back, coeffs)


def test_dpd_coefficients_incomplete(tmp_path):
    p = tmp_path / "d.txt"
    p.write_text("5 1 1\n0 3 0 1 0\n")
    with pytest.raises(ConfigurationError):
        fm.load_dpd_coefficients(p)


def test_channel_round_trip(tmp_path, rng):
    taps = cn(rng, 2, 3, 4)
    fm.save_channel(tmp_path / "h.txt", taps)
    np.testing.assert_array_equal(fm.load_channel(tmp_path / "h.txt"), taps)
    (tmp_path / "short.txt").write_text("1 1 2\n1 0\n")
    with pytest.raises(ConfigurationError):
        fm.load_channel(tmp_path / "short.txt")


def test_csv_helpers(tmp_path):
    fm.write_csv(tmp_path / "m.csv", fm.METRICS_HEADER, [("s", "ue1", 1.23456789, float("nan"), 30)])
    rows = fm.read_csv(tmp_path / "m.csv")
    assert rows == [{"scenario": "s", "user_or_victim": "ue1", "evm_pct": "1.234568",
                     "aclr_left_db": "nan", "aclr_right_db": "30"}]
    fm.write_psd(tmp_path / "p.csv", np.array([0.0, 1e6]), np.array([0.0, -3.0]), "x")
    assert fm.read_csv(tmp_path / "p.csv")[1] == {"freq_hz": "1000000.0", "psd_db": "-3.000000", "label": "x"}
