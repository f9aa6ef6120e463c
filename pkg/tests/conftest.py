import numpy as np
import pytest

from hybrid_dpd import config as cf
from hybrid_dpd.waveform import OfdmConfig

from helpers import cn  # noqa: F401  (re-exported for the test modules)

# Acceptance verdicts collected during the session and echoed in the terminal summary.
VERDICTS: list = []


def record(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    VERDICTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_ofdm():
    return OfdmConfig(fft_size=64, active_subcarriers=36, subcarrier_spacing=1e3,
                      cp_length=8, window_taper_length=4, oversampling_factor=2)



def tiny_config(**items):
    """Desk profile cut down so a drop takes about a second."""
    base = {
        "system.subarray_size": 4,
        "icf.n_symbols": 2,
        "dpd.cl_blocks": 3,
        "dpd.cl_block_size": 8000,
        "dpd.ila_iterations": 1,
        "dpd.ila_block_size": 8000,
        "sweep.n_victims": 20,
        "sweep.n_drops": 2,
        "sweep.isolation_drops": 1,
        "sweep.separations_deg": (10.0, 40.0),
    }
    base.update(items)
    return cf.override(cf.profile("desk"), base)
