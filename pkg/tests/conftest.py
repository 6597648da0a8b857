import numpy as np
import pytest

from irsuav.channel import IrsSpec, OfdmNumerology, UserSpec
from irsuav.scenario import UavLimits, Scenario, desk_scenario, random_scenario


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def desk_small():
    """Desk layout shrunk so a full alternation runs in a couple of seconds."""
    return desk_scenario(n_f=16, n_slots=8, m=16, r_min=0.3)


@pytest.fixture
def random_scenarios():
    return [random_scenario(np.random.default_rng(100 + s), n_f=16, n_slots=6)
            for s in range(10)]


def toy_scenario(users=((205.0, 490.0, 0.0), (420.0, 160.0, 0.0)), m=4, n_f=8, n_slots=3,
                 amplitude=0.9, kappa=10.0, r_min=0.0, p_max=3.0, v_max=20.0, dt=20.0):
    f_c = 3e9
    ofdm = OfdmNumerology(n_f=n_f, delta_f=100e3, f_c=f_c, beta0=1e-5,
                          noise_psd=10 ** (-169 / 10) * 1e-3, p_max=p_max)
    irs = IrsSpec.with_default_spacing((200.0, 500.0, 30.0), m, m, f_c, amplitude)
    us = tuple(UserSpec(np.array(u, float), 2.5, 2.5, kappa, kappa, r_min) for u in users)
    uav = UavLimits(np.array([0.0, 0.0, 100.0]), np.array([500.0, 500.0, 100.0]),
                    n_slots, dt, v_max, 100.0, 150.0)
    return Scenario(us, irs, ofdm, uav)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
