import math
from pathlib import Path

import numpy as np
import pytest
import tomli_w
from hypothesis import given, settings, strategies as st

from irsuav.config import (RunConfig, SolverConfig, config_to_dict, dumps_config, load_config,
                           loads_config, save_config, scenario_fingerprint)
from irsuav.errors import ConfigError
from irsuav.scenario import db_to_linear, dbm_to_watt, desk_scenario, random_scenario

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def _desk_doc():
    return config_to_dict(RunConfig(desk_scenario(n_f=16, n_slots=6, m=8)))


def test_desk_file_matches_builder():
    cfg = load_config(SCENARIOS / "desk.toml")
    sc, ref = cfg.scenario, desk_scenario(dt=1.0)
    assert sc.ofdm.n_f == 128 and sc.irs.n_elements == 64 * 64 and sc.uav.n_slots == 60
    assert sc.ofdm.p_max == pytest.approx(ref.ofdm.p_max, rel=1e-15)
    assert sc.ofdm.noise_psd == pytest.approx(ref.ofdm.noise_psd, rel=1e-15)
    assert sc.users[0].kappa_ug == pytest.approx(10.0)
    np.testing.assert_array_equal(sc.users[2].location, [80.0, 330.0, 0.0])


@pytest.mark.parametrize("name", ["desk.toml", "small.toml"])
def test_shipped_files_round_trip(name, tmp_path):
    cfg = load_config(SCENARIOS / name)
    save_config(cfg, tmp_path / name)
    again = load_config(tmp_path / name)
    assert scenario_fingerprint(again) == scenario_fingerprint(cfg)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_random_scenarios_round_trip_bit_exact(seed):
    sc = random_scenario(np.random.default_rng(seed), n_f=8, n_slots=4)
    cfg = RunConfig(sc, SolverConfig(alpha=0.11, seed=seed))
    again = loads_config(dumps_config(cfg))
    assert scenario_fingerprint(again) == scenario_fingerprint(cfg)
    assert dumps_config(again) == dumps_config(cfg)


def test_linear_fallback_for_unrepresentable_values():
    cfg = RunConfig(desk_scenario(n_f=8, n_slots=4, m=4).with_users(kappa_ug=0.0))
    doc = config_to_dict(cfg)
    assert doc["users"][0]["kappa_ug"] == 0.0
    assert "kappa_ug_db" not in doc["users"][0]
    assert scenario_fingerprint(loads_config(dumps_config(cfg))) == scenario_fingerprint(cfg)


def test_db_fields_convert_to_linear():
    doc = _desk_doc()
    doc["ofdm"]["p_max_dbm"] = 30.0
    doc["users"][1]["kappa_rg_db"] = 3.0
    sc = loads_config(tomli_w.dumps(doc)).scenario
    assert sc.ofdm.p_max == pytest.approx(1.0)
    assert sc.users[1].kappa_rg == pytest.approx(db_to_linear(3.0))
    assert sc.ofdm.noise_psd == pytest.approx(dbm_to_watt(-169.0))


def test_linear_keys_accepted():
    doc = _desk_doc()
    del doc["ofdm"]["p_max_dbm"]
    doc["ofdm"]["p_max_w"] = 2.0
    assert loads_config(tomli_w.dumps(doc)).scenario.ofdm.p_max == 2.0


def test_infinite_kappa_round_trips():
    doc = _desk_doc()
    doc["users"][0]["kappa_ug_db"] = math.inf
    cfg = loads_config(tomli_w.dumps(doc))
    assert math.isinf(cfg.scenario.users[0].kappa_ug)
    assert math.isinf(loads_config(dumps_config(cfg)).scenario.users[0].kappa_ug)


@pytest.mark.parametrize("table,key,field", [
    ("ofdm", "n_f", "ofdm.n_f"),
    ("irs", "location", "irs.location"),
    ("irs", "m_r", "irs.m_r"),
    ("uav", "v_max", "uav.v_max"),
    ("uav", "z_min", "uav.z_min"),
])
def test_missing_field_is_named(table, key, field):
    doc = _desk_doc()
    del doc[table][key]
    with pytest.raises(ConfigError) as info:
        loads_config(tomli_w.dumps(doc))
    assert info.value.field == field
    assert field in str(info.value)


def test_missing_user_location_is_named():
    doc = _desk_doc()
    del doc["users"][1]["location"]
    with pytest.raises(ConfigError, match=r"users\[1\]\.location"):
        loads_config(tomli_w.dumps(doc))


def test_missing_table_and_users():
    doc = _desk_doc()
    del doc["uav"]
    with pytest.raises(ConfigError, match="uav"):
        loads_config(tomli_w.dumps(doc))
    doc = _desk_doc()
    del doc["users"]
    with pytest.raises(ConfigError, match="users"):
        loads_config(tomli_w.dumps(doc))


def test_syntax_error_reports_position():
    text = dumps_config(RunConfig(desk_scenario(n_f=8, n_slots=4, m=4)))
    broken = text.replace("n_f = 8", "n_f = = 8")
    with pytest.raises(ConfigError) as info:
        loads_config(broken)
    assert "line" in str(info.value) and "column" in str(info.value)


@pytest.mark.parametrize("mutate,field", [
    (lambda d: d["solver"].update(bogus=1), "solver.bogus"),
    (lambda d: d["solver"].update(eta=1.0), "solver.eta"),
    (lambda d: d["solver"].update(alpha=0.25), "solver.alpha"),
    (lambda d: d["solver"].update(alpha=0.0), "solver.alpha"),
    (lambda d: d["ofdm"].update(n_f=2.5), "ofdm.n_f"),
    (lambda d: d["irs"].update(location=[1.0, 2.0]), "irs.location"),
    (lambda d: d["solver"].update(freeze_altitude=1), "solver.freeze_altitude"),
])
def test_invalid_values_rejected(mutate, field):
    doc = _desk_doc()
    mutate(doc)
    with pytest.raises(ConfigError) as info:
        loads_config(tomli_w.dumps(doc))
    assert info.value.field == field


def test_model_validation_surfaces_as_config_error():
    doc = _desk_doc()
    doc["users"][0]["location"] = [1.0, 2.0, 3.0]
    with pytest.raises(ConfigError, match=r"users\[0\]"):
        loads_config(tomli_w.dumps(doc))


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")
