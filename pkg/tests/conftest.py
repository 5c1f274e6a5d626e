import numpy as np
import pytest

from mtsfm.core import TaperSpec, WaveformParams
from mtsfm.synthesis import random_waveform


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def seeded_waveform(seed, num_harmonics, tbp, duration=1.0, taper=None):
    return random_waveform(np.random.default_rng(seed), num_harmonics, duration, tbp,
                           taper=taper)


@pytest.fixture
def fig1_params():
    return seeded_waveform(1, 16, 100.0, taper=TaperSpec.tukey(0.05))


@pytest.fixture
def cw_params():
    return WaveformParams(1.0, [0.0])


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if not REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(REPORT):
        terminalreporter.write_line(REPORT[n])
