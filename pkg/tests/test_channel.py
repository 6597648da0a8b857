import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irsuav import geometry as geo
from irsuav.channel import (SPEED_OF_LIGHT, IrsSpec, UserSpec, beam_pattern, beam_products,
                            fading_period, gain_levels, irs_phase_control, link_amplitudes,
                            los_complex_table, los_composite_gain, los_gain_table, psi_offsets)
from irsuav.scenario import desk_scenario, random_scenario

from conftest import toy_scenario


# --------------------------------------------------------------------------- #
# Brute-force oracle: per-element double sum of the composite LoS channel
# --------------------------------------------------------------------------- #

def brute_reflection_sum(q, irs, assisted, user, f_c, phases=None):
    """``sum_{m_r, m_c} exp(-j k0 (RG offsets)) exp(j phi) exp(-j k0 (UR offsets))``."""
    rg = geo.angles_irs_user(irs.location, user.location)
    ur = geo.angles_uav_irs(q, irs.location)
    if phases is None:
        phases = irs_phase_control(q, irs, assisted, f_c)
    k0 = 2 * math.pi * f_c / SPEED_OF_LIGHT
    total = 0j
    for mr in range(irs.m_r):
        for mc in range(irs.m_c):
            a = irs.d_r * mr * rg.sin_theta * rg.cos_xi + irs.d_c * mc * rg.sin_theta * rg.sin_xi
            b = irs.d_r * mr * ur.sin_theta * ur.cos_xi + irs.d_c * mc * ur.sin_theta * ur.sin_xi
            total += (math.e ** complex(0, -k0 * a) * math.e ** complex(0, phases[mr, mc])
                      * math.e ** complex(0, -k0 * b))
    return total


def brute_los_channel(q, sc, k, kp, i):
    """Composite LoS channel of user ``k`` on subcarrier ``i`` by direct complex arithmetic."""
    o, irs, u = sc.ofdm, sc.irs, sc.users[k]
    d_ug = geo.dist(q, u.location)
    d_ur = geo.dist(q, irs.location)
    d_rg = geo.dist(irs.location, u.location)
    fi = i * o.delta_f
    direct = (math.sqrt(o.beta0 / d_ug ** u.alpha_ug) * math.sqrt(u.kappa_ug / (u.kappa_ug + 1))
              * np.exp(-2j * math.pi * fi * d_ug / SPEED_OF_LIGHT))
    refl = (irs.amplitude_a * o.beta0 / (d_ur * d_rg ** (u.alpha_rg / 2))
            * math.sqrt(u.kappa_rg / (u.kappa_rg + 1))
            * np.exp(-2j * math.pi * fi * (d_ur + d_rg) / SPEED_OF_LIGHT)
            * brute_reflection_sum(q, irs, sc.users[kp], u, o.f_c))
    return direct + refl


# --------------------------------------------------------------------------- #
# Beam pattern and phase control
# --------------------------------------------------------------------------- #

@pytest.mark.parametrize("m", [1, 2, 7, 64])
def test_beam_pattern_at_zero_is_m(m):
    assert beam_pattern(m, 0.0) == pytest.approx(m)


def test_beam_pattern_examples():
    assert beam_pattern(1, 0.7) == pytest.approx(1.0)
    assert beam_pattern(4, math.pi / 4) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 80), st.floats(-3.0, 3.0, allow_nan=False))
def test_beam_pattern_matches_geometric_sum(m, x):
    direct = abs(sum(np.exp(2j * x * j) for j in range(m)))
    assert abs(beam_pattern(m, x)) == pytest.approx(direct, rel=1e-7, abs=1e-7)
    assert abs(beam_pattern(m, x)) <= m + 1e-9


def test_phase_control_single_element_is_zero():
    irs = IrsSpec.with_default_spacing((200, 500, 30), 1, 1, 3e9)
    user = UserSpec(np.array([260.0, 430.0, 0.0]))
    np.testing.assert_array_equal(irs_phase_control([0, 0, 100], irs, user, 3e9), [[0.0]])


def test_phase_control_null_offsets_give_zero_phases():
    # The UAV at (100, 0, 60) and the user at (100, 0, 0) see the IRS at (0, 0, 30)
    # under mirrored elevations, so both bracketed sums vanish.
    irs = IrsSpec.with_default_spacing((0, 0, 30), 6, 5, 3e9)
    user = UserSpec(np.array([100.0, 0.0, 0.0]))
    np.testing.assert_allclose(irs_phase_control([100, 0, 60], irs, user, 3e9), 0.0, atol=1e-12)


def test_phase_control_coherent_for_assisted_user(rng):
    for _ in range(10):
        m_r, m_c = rng.integers(1, 9, size=2)
        irs = IrsSpec.with_default_spacing((200, 500, 30), int(m_r), int(m_c), 3e9)
        user = UserSpec(np.array([*rng.uniform(0, 500, 2), 0.0]))
        q = np.array([*rng.uniform(0, 500, 2), rng.uniform(100, 150)])
        s = brute_reflection_sum(q, irs, user, user, 3e9)
        assert abs(s) == pytest.approx(m_r * m_c, rel=1e-12)


def test_psi_offsets_same_user_is_zero():
    irs = IrsSpec.with_default_spacing((200, 500, 30), 8, 8, 3e9)
    u = UserSpec(np.array([300.0, 420.0, 0.0]))
    assert psi_offsets(irs, 3e9, u, u) == (0.0, 0.0)


def test_psi_offsets_mirror_users_negate_column_offset():
    irs = IrsSpec.with_default_spacing((200, 500, 30), 8, 8, 3e9)
    assisted = UserSpec(np.array([200.0, 350.0, 0.0]))
    left = UserSpec(np.array([140.0, 400.0, 0.0]))
    right = UserSpec(np.array([260.0, 400.0, 0.0]))
    _, c_left = psi_offsets(irs, 3e9, assisted, left)
    _, c_right = psi_offsets(irs, 3e9, assisted, right)
    assert c_left == pytest.approx(-c_right)
    assert c_left != 0.0


def test_beam_product_magnitude_matches_double_sum(rng):
    sc = random_scenario(rng, n_f=8, n_slots=3, m=8)
    prod, _ = beam_products(sc.irs, list(sc.users), sc.ofdm.f_c)
    q = np.array([150.0, 220.0, 110.0])
    for kp, a in enumerate(sc.users):
        for k, o in enumerate(sc.users):
            s = brute_reflection_sum(q, sc.irs, a, o, sc.ofdm.f_c)
            assert abs(prod[kp, k]) == pytest.approx(abs(s), rel=1e-9, abs=1e-9)


# --------------------------------------------------------------------------- #
# Composite LoS gain
# --------------------------------------------------------------------------- #

def test_composite_gain_without_irs_is_direct_path():
    sc = desk_scenario(n_f=8, n_slots=4).without_irs()
    q = np.array([120.0, 80.0, 110.0])
    u = sc.users[1]
    d = geo.dist(q, u.location)
    expected = sc.ofdm.beta0 * u.kappa_ug / (d ** u.alpha_ug * (u.kappa_ug + 1))
    for i in (1, 5, 8):
        assert los_composite_gain(1, 0, i, q, sc.irs, list(sc.users), sc.ofdm) == pytest.approx(expected, rel=1e-14)


def test_composite_gain_matches_brute_force_small_irs():
    sc = toy_scenario(users=((205.0, 490.0, 0.0),), m=2, n_f=2)
    q = np.array([90.0, 260.0, 120.0])
    for i in (1, 2):
        g = brute_los_channel(q, sc, 0, 0, i)
        got = los_composite_gain(0, 0, i, q, sc.irs, list(sc.users), sc.ofdm)
        assert got == pytest.approx(abs(g) ** 2, rel=1e-10)


def test_gain_tables_match_brute_force_for_every_pair():
    sc = toy_scenario(users=((205.0, 490.0, 0.0), (420.0, 160.0, 0.0), (80.0, 330.0, 0.0)),
                      m=3, n_f=5)
    q = np.array([[40.0, 90.0, 100.0], [260.0, 310.0, 140.0]])
    table = los_complex_table(q, sc.irs, list(sc.users), sc.ofdm)
    gains = los_gain_table(q, sc.irs, list(sc.users), sc.ofdm)
    for n in range(2):
        for kp in range(3):
            for k in range(3):
                for i in range(1, 6):
                    g = brute_los_channel(q[n], sc, k, kp, i)
                    assert table[kp, k, i - 1, n] == pytest.approx(g, rel=1e-9)
                    assert gains[kp, k, i - 1, n] == pytest.approx(abs(g) ** 2, rel=1e-9)


def test_frequency_flat_when_reflected_and_direct_paths_align():
    # UAV directly above the user with the IRS next to the user: as d_rg -> 0
    # the path difference collapses, so the cosine argument barely moves.
    sc = toy_scenario(users=((200.0, 499.0, 0.0),), m=4, n_f=64)
    q = np.array([200.0, 499.0, 130.0])
    amp = link_amplitudes(q, sc.irs, list(sc.users), sc.ofdm)
    spread = 2 * math.pi * sc.ofdm.delta_f * amp.delta_d[0, 0] * (sc.ofdm.n_f - 1) / SPEED_OF_LIGHT
    assert spread < 0.1
    assert fading_period(0, q, sc.irs, list(sc.users), sc.ofdm.delta_f) > 10 * sc.ofdm.n_f


def test_gain_levels_no_irs():
    sc = desk_scenario(n_f=8, n_slots=4).without_irs()
    lv = gain_levels(0, 0, [10.0, 20.0, 100.0], sc.irs, list(sc.users), sc.ofdm)
    assert lv.peak == lv.trough == lv.dc


def test_gain_levels_equal_amplitudes():
    sc = desk_scenario(n_f=8, n_slots=4, m=128)
    users = list(sc.users)
    q = np.array([200.0, 400.0, 100.0])
    amp = link_amplitudes(q, sc.irs, users, sc.ofdm)
    # Scale the reflection so that x == y for user 0 served by the IRS.
    ratio = amp.x[0, 0] / amp.y[0, 0, 0]
    assert 0 < ratio * sc.irs.amplitude_a <= 1.0
    irs = type(sc.irs)(sc.irs.location, sc.irs.m_r, sc.irs.m_c, sc.irs.d_r, sc.irs.d_c,
                       sc.irs.amplitude_a * ratio)
    lv = gain_levels(0, 0, q, irs, users, sc.ofdm)
    assert lv.trough == pytest.approx(0.0, abs=1e-12 * lv.peak)
    assert lv.peak == pytest.approx(2 * lv.dc, rel=1e-12)


def test_gain_levels_envelope_dense_sweep():
    sc = desk_scenario(n_f=4000, n_slots=4, m=16)
    users = list(sc.users)
    q = np.array([250.0, 180.0, 120.0])
    gains = los_gain_table(q, sc.irs, users, sc.ofdm)[:, :, :, 0]
    for kp in range(3):
        for k in range(3):
            lv = gain_levels(k, kp, q, sc.irs, users, sc.ofdm)
            g = gains[kp, k]
            assert g.max() <= lv.peak * (1 + 1e-12)
            assert g.min() >= lv.trough * (1 - 1e-12) - 1e-30
            span = lv.peak - lv.trough
            assert g.max() == pytest.approx(lv.peak, abs=1e-3 * span)
            assert g.min() == pytest.approx(lv.trough, abs=1e-3 * span)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_gain_level_ordering(seed):
    r = np.random.default_rng(seed)
    sc = random_scenario(r, n_f=8, n_slots=3)
    q = np.array([*r.uniform(0, 500, 2), r.uniform(100, 150)])
    for kp in range(sc.n_users):
        for k in range(sc.n_users):
            lv = gain_levels(k, kp, q, sc.irs, list(sc.users), sc.ofdm)
            assert lv.trough <= lv.dc <= lv.peak


def test_fading_period_examples():
    # UAV 100 m above the user and the IRS at 50 m height halfway in elevation,
    # so d_ur = d_rg = 200 m and the path difference is 200 + 200 - 100 = 300 m.
    h = math.sqrt(200.0 ** 2 - 50.0 ** 2)
    irs = IrsSpec.with_default_spacing((h, 0.0, 50.0), 2, 2, 3e9)
    u = UserSpec(np.array([0.0, 0.0, 0.0]))
    q = np.array([0.0, 0.0, 100.0])
    assert fading_period(0, q, irs, [u], 100e3) == pytest.approx(10.0, rel=1e-12)
    # Collinear UAV, IRS and user with the IRS in between: zero path difference.
    irs2 = IrsSpec.with_default_spacing((100.0, 0.0, 30.0), 2, 2, 3e9)
    u2 = UserSpec(np.array([200.0, 0.0, 0.0]))
    assert fading_period(0, [0.0, 0.0, 60.0], irs2, [u2], 100e3) == math.inf


def test_fading_period_is_quotient():
    sc = desk_scenario(n_f=8, n_slots=4)
    q = np.array([100.0, 50.0, 100.0])
    amp = link_amplitudes(q, sc.irs, list(sc.users), sc.ofdm)
    for k in range(3):
        p = fading_period(k, q, sc.irs, list(sc.users), sc.ofdm.delta_f)
        assert p == pytest.approx(SPEED_OF_LIGHT / (sc.ofdm.delta_f * amp.delta_d[k, 0]))


def test_config_objects_validate():
    with pytest.raises(ValueError):
        UserSpec(np.array([0.0, 0.0, 1.0]))
    with pytest.raises(ValueError):
        UserSpec(np.array([0.0, 0.0, 0.0]), alpha_ug=1.5)
    with pytest.raises(ValueError):
        IrsSpec(np.zeros(3), 0, 4, 0.01, 0.01)
    with pytest.raises(ValueError):
        IrsSpec(np.zeros(3), 4, 4, 0.01, 0.01, amplitude_a=1.5)
