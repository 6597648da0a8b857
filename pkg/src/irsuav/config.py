"""TOML scenario files.

Human-facing quantities (Rician factors, powers, reference gain, noise
density) are written in dB units and converted to linear values here and
nowhere else.  Saving picks the decimal dB value that converts back to the
exact in-memory float, so load, save and load again reproduces the same
configuration bit for bit.
"""

from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .channel import IrsSpec, OfdmNumerology, SPEED_OF_LIGHT, UserSpec
from .errors import ConfigError
from .scenario import Scenario, UavLimits, db_to_linear, dbm_to_watt, linear_to_db, watt_to_dbm


@dataclass(frozen=True)
class SolverConfig:
    alpha: float = 0.14
    eps: float = 1e-3
    iter_max: int = 20
    freeze_altitude: bool = False
    seed: int = 0
    mc_runs: int = 200
    eta: float = 0.8


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    solver: SolverConfig = field(default_factory=SolverConfig)


# --------------------------------------------------------------------------- #
# Field access helpers
# --------------------------------------------------------------------------- #

_MISSING = object()


def _get(table: dict, key: str, path: str, kind: Callable | None = None, default=_MISSING):
    if key not in table:
        if default is _MISSING:
            raise ConfigError(f"{path}.{key}" if path else key, "required field is missing")
        return default
    value = table[key]
    if kind is None:
        return value
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is int and (isinstance(value, bool) or not float(value).is_integer()):
            raise TypeError
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}.{key}" if path else key,
                          f"expected {kind.__name__}, got {value!r}") from None


def _vec3(table: dict, key: str, path: str, default=_MISSING) -> np.ndarray:
    value = _get(table, key, path, None, default)
    try:
        arr = np.array(value, float)
    except (TypeError, ValueError):
        arr = np.empty(0)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{path}.{key}", f"expected three finite numbers, got {value!r}")
    return arr


def _table(doc: dict, key: str, required: bool = True) -> dict:
    if key not in doc:
        if required:
            raise ConfigError(key, "required table is missing")
        return {}
    if not isinstance(doc[key], dict):
        raise ConfigError(key, "expected a table")
    return doc[key]


def _either(table: dict, path: str, db_key: str, lin_key: str, to_lin: Callable,
            default_db=_MISSING) -> float:
    """Read a quantity given in dB (preferred) or directly in linear units."""
    if db_key in table:
        return to_lin(_get(table, db_key, path, float))
    if lin_key in table:
        return _get(table, lin_key, path, float)
    if default_db is _MISSING:
        raise ConfigError(f"{path}.{db_key}", "required field is missing")
    return to_lin(default_db)


def _checked(path: str, build: Callable, *args, **kwargs):
    try:
        return build(*args, **kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


# --------------------------------------------------------------------------- #
# Loading
# --------------------------------------------------------------------------- #

def parse_config(doc: dict) -> RunConfig:
    """Validate a parsed TOML document and build the run configuration."""
    ofdm_t = _table(doc, "ofdm")
    ofdm = _checked("ofdm", OfdmNumerology,
                    n_f=_get(ofdm_t, "n_f", "ofdm", int),
                    delta_f=_get(ofdm_t, "delta_f_hz", "ofdm", float, 100e3),
                    f_c=_get(ofdm_t, "f_c_hz", "ofdm", float, 3e9),
                    beta0=_either(ofdm_t, "ofdm", "beta0_db", "beta0", db_to_linear, -50.0),
                    noise_psd=_either(ofdm_t, "ofdm", "noise_psd_dbm_hz", "noise_psd_w_hz",
                                      dbm_to_watt, -169.0),
                    p_max=_either(ofdm_t, "ofdm", "p_max_dbm", "p_max_w", dbm_to_watt, 35.0))

    irs_t = _table(doc, "irs")
    d_default = SPEED_OF_LIGHT / (10.0 * ofdm.f_c)
    irs = _checked("irs", IrsSpec,
                   location=_vec3(irs_t, "location", "irs"),
                   m_r=_get(irs_t, "m_r", "irs", int),
                   m_c=_get(irs_t, "m_c", "irs", int),
                   d_r=_get(irs_t, "d_r", "irs", float, d_default),
                   d_c=_get(irs_t, "d_c", "irs", float, d_default),
                   amplitude_a=_get(irs_t, "amplitude", "irs", float, 0.9))

    uav_t = _table(doc, "uav")
    uav = _checked("uav", UavLimits,
                   q_initial=_vec3(uav_t, "q_initial", "uav"),
                   q_final=_vec3(uav_t, "q_final", "uav"),
                   n_slots=_get(uav_t, "n_slots", "uav", int),
                   dt=_get(uav_t, "dt", "uav", float),
                   v_max=_get(uav_t, "v_max", "uav", float),
                   z_min=_get(uav_t, "z_min", "uav", float),
                   z_max=_get(uav_t, "z_max", "uav", float))

    users_t = doc.get("users")
    if not isinstance(users_t, list) or not users_t:
        raise ConfigError("users", "at least one [[users]] entry is required")
    users = []
    for j, u in enumerate(users_t):
        path = f"users[{j}]"
        if not isinstance(u, dict):
            raise ConfigError(path, "expected a table")
        users.append(_checked(path, UserSpec,
                              location=_vec3(u, "location", path),
                              alpha_ug=_get(u, "alpha_ug", path, float, 2.5),
                              alpha_rg=_get(u, "alpha_rg", path, float, 2.5),
                              kappa_ug=_either(u, path, "kappa_ug_db", "kappa_ug", db_to_linear,
                                               10.0),
                              kappa_rg=_either(u, path, "kappa_rg_db", "kappa_rg", db_to_linear,
                                               10.0),
                              r_min=_get(u, "r_min", path, float, 0.0)))

    sol_t = _table(doc, "solver", required=False)
    defaults = SolverConfig()
    solver = SolverConfig(**{
        name: _get(sol_t, name, "solver", type(value), value)
        for name, value in asdict(defaults).items()
    })
    unknown = set(sol_t) - set(asdict(defaults))
    if unknown:
        raise ConfigError(f"solver.{sorted(unknown)[0]}", "unknown field")
    if not 0.0 < solver.eta < 1.0:
        raise ConfigError("solver.eta", "must lie in (0, 1)")
    if not 0.0 < solver.alpha < 0.25:
        raise ConfigError("solver.alpha", "must lie in (0, 0.25)")

    name = _get(doc, "name", "", str, "scenario")
    return RunConfig(Scenario(tuple(users), irs, ofdm, uav, name=name), solver)


def loads_config(text: str) -> RunConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<syntax>", str(exc)) from None
    return parse_config(doc)


def load_config(path: str | Path) -> RunConfig:
    """Read and validate a scenario file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", str(exc)) from None
    return loads_config(text)


# --------------------------------------------------------------------------- #
# Saving
# --------------------------------------------------------------------------- #

def _exact_db(x: float, to_db: Callable, to_lin: Callable) -> float | None:
    """A dB value whose conversion returns exactly ``x``, or ``None``."""
    if x == 0.0 or math.isinf(x):
        return None if x == 0.0 else math.inf
    d = to_db(x)
    if to_lin(d) == x:
        return d
    for direction in (math.inf, -math.inf):
        cand = d
        for _ in range(64):
            cand = math.nextafter(cand, direction)
            if to_lin(cand) == x:
                return cand
    return None


def _put(out: dict, db_key: str, lin_key: str, x: float, to_db: Callable, to_lin: Callable):
    d = _exact_db(float(x), to_db, to_lin)
    if d is None:
        out[lin_key] = float(x)
    else:
        out[db_key] = d


def config_to_dict(cfg: RunConfig) -> dict[str, Any]:
    """Plain TOML-ready form of a run configuration."""
    sc = cfg.scenario
    ofdm: dict[str, Any] = {"n_f": sc.ofdm.n_f, "delta_f_hz": sc.ofdm.delta_f,
                            "f_c_hz": sc.ofdm.f_c}
    _put(ofdm, "beta0_db", "beta0", sc.ofdm.beta0, linear_to_db, db_to_linear)
    _put(ofdm, "noise_psd_dbm_hz", "noise_psd_w_hz", sc.ofdm.noise_psd, watt_to_dbm,
         dbm_to_watt)
    _put(ofdm, "p_max_dbm", "p_max_w", sc.ofdm.p_max, watt_to_dbm, dbm_to_watt)
    irs = {"location": sc.irs.location.tolist(), "m_r": sc.irs.m_r, "m_c": sc.irs.m_c,
           "d_r": sc.irs.d_r, "d_c": sc.irs.d_c, "amplitude": sc.irs.amplitude_a}
    uav = {"q_initial": sc.uav.q_initial.tolist(), "q_final": sc.uav.q_final.tolist(),
           "n_slots": sc.uav.n_slots, "dt": sc.uav.dt, "v_max": sc.uav.v_max,
           "z_min": sc.uav.z_min, "z_max": sc.uav.z_max}
    users = []
    for u in sc.users:
        entry: dict[str, Any] = {"location": u.location.tolist(), "alpha_ug": u.alpha_ug,
                                 "alpha_rg": u.alpha_rg, "r_min": u.r_min}
        _put(entry, "kappa_ug_db", "kappa_ug", u.kappa_ug, linear_to_db, db_to_linear)
        _put(entry, "kappa_rg_db", "kappa_rg", u.kappa_rg, linear_to_db, db_to_linear)
        users.append(entry)
    return {"name": sc.name, "ofdm": ofdm, "irs": irs, "uav": uav, "users": users,
            "solver": asdict(cfg.solver)}


def dumps_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(dumps_config(cfg))


def scenario_fingerprint(cfg: RunConfig) -> dict[str, Any]:
    """Linear-unit snapshot for equality checks (arrays become tuples)."""
    sc = cfg.scenario

    def flat(obj):
        d = asdict(obj)
        return {k: tuple(v.tolist()) if isinstance(v, np.ndarray) else v for k, v in d.items()}

    return {"name": sc.name, "ofdm": flat(sc.ofdm), "irs": flat(sc.irs), "uav": flat(sc.uav),
            "users": [flat(u) for u in sc.users], "solver": asdict(cfg.solver)}
