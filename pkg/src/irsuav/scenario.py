"""Scenario container plus the desk-scale defaults and random generators."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import ArrayLike

from . import geometry as geo
from .channel import IrsSpec, OfdmNumerology, UserSpec

__all__ = [
    "UavLimits",
    "Scenario",
    "db_to_linear",
    "dbm_to_watt",
    "linear_to_db",
    "watt_to_dbm",
    "desk_scenario",
    "random_scenario",
    "straight_line",
]


def db_to_linear(db: float) -> float:
    return float(10.0 ** (db / 10.0))


def linear_to_db(x: float) -> float:
    return float(10.0 * np.log10(x))


def dbm_to_watt(dbm: float) -> float:
    return float(10.0 ** ((dbm - 30.0) / 10.0))


def watt_to_dbm(w: float) -> float:
    return float(10.0 * np.log10(w) + 30.0)


@dataclass(frozen=True)
class UavLimits:
    """Flight envelope; ``n_slots`` positions with both endpoints fixed."""

    q_initial: np.ndarray
    q_final: np.ndarray
    n_slots: int
    dt: float
    v_max: float
    z_min: float
    z_max: float

    def __post_init__(self):
        object.__setattr__(self, "q_initial", geo.as_vec3(self.q_initial))
        object.__setattr__(self, "q_final", geo.as_vec3(self.q_final))
        if self.n_slots < 2:
            raise ValueError("n_slots must be at least 2")
        if self.z_min > self.z_max:
            raise ValueError("z_min exceeds z_max")

    @property
    def step(self) -> float:
        """Largest displacement between consecutive slots."""
        return self.dt * self.v_max


@dataclass(frozen=True)
class Scenario:
    users: tuple[UserSpec, ...]
    irs: IrsSpec
    ofdm: OfdmNumerology
    uav: UavLimits
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def r_min(self) -> np.ndarray:
        """Per-user minimum rates in bit/s/Hz per subcarrier."""
        return np.array([u.r_min for u in self.users])

    def with_users(self, **changes) -> "Scenario":
        """Apply the same field changes to every user."""
        return replace(self, users=tuple(replace(u, **changes) for u in self.users))

    def with_irs(self, **changes) -> "Scenario":
        return replace(self, irs=replace(self.irs, **changes))

    def with_ofdm(self, **changes) -> "Scenario":
        return replace(self, ofdm=replace(self.ofdm, **changes))

    def with_uav(self, **changes) -> "Scenario":
        return replace(self, uav=replace(self.uav, **changes))

    def without_irs(self) -> "Scenario":
        return self.with_irs(amplitude_a=0.0)


def straight_line(uav: UavLimits) -> np.ndarray:
    """Evenly spaced positions between the endpoints, shape ``(N, 3)``."""
    t = np.linspace(0.0, 1.0, uav.n_slots)[:, None]
    return (1.0 - t) * uav.q_initial + t * uav.q_final


DESK_USERS = ((205.0, 490.0, 0.0), (420.0, 160.0, 0.0), (80.0, 330.0, 0.0))


def desk_scenario(n_f: int = 128, n_slots: int = 60, m: int = 64,
                  p_max_dbm: float = 35.0, r_min: float = 1.0,
                  kappa_db: float = 10.0, irs_location: ArrayLike = (200.0, 500.0, 30.0),
                  user_locations=DESK_USERS, dt: float | None = None) -> Scenario:
    """Scaled-down version of the simulation table.

    The time step is stretched so the flight budget ``N * dt * v_max`` keeps
    the same ratio to the endpoint separation as in the full-scale setup.
    """
    f_c = 3e9
    n0 = dbm_to_watt(-169.0)
    ofdm = OfdmNumerology(n_f=n_f, delta_f=100e3, f_c=f_c, beta0=db_to_linear(-50.0),
                          noise_psd=n0, p_max=dbm_to_watt(p_max_dbm))
    kappa = db_to_linear(kappa_db)
    users = tuple(UserSpec(np.array(loc, float), 2.5, 2.5, kappa, kappa, r_min)
                  for loc in user_locations)
    irs = IrsSpec.with_default_spacing(irs_location, m, m, f_c, 0.9)
    if dt is None:
        dt = 60.0 / n_slots
    uav = UavLimits(np.array([0.0, 0.0, 100.0]), np.array([500.0, 500.0, 100.0]),
                    n_slots, dt, 20.0, 100.0, 150.0)
    return Scenario(users, irs, ofdm, uav, name="desk")


def random_scenario(rng: np.random.Generator, n_f: int = 32, n_slots: int = 12,
                    n_users: int = 3, m: int | None = None, r_min: float | None = None,
                    p_max_dbm: float | None = None) -> Scenario:
    """Randomized small scenario around the desk layout.

    User 0 is placed near the IRS, the others anywhere in the service area.
    """
    irs_xy = rng.uniform([120.0, 380.0], [300.0, 560.0])
    locs = [(irs_xy[0] + rng.uniform(-60, 60), irs_xy[1] + rng.uniform(-60, 60), 0.0)]
    for _ in range(n_users - 1):
        locs.append((rng.uniform(0, 500), rng.uniform(0, 500), 0.0))
    sc = desk_scenario(
        n_f=n_f,
        n_slots=n_slots,
        m=int(m if m is not None else rng.choice([16, 32, 64])),
        p_max_dbm=float(p_max_dbm if p_max_dbm is not None else rng.uniform(30, 40)),
        r_min=float(r_min if r_min is not None else rng.uniform(0.1, 0.5)),
        kappa_db=float(rng.uniform(2, 14)),
        irs_location=(irs_xy[0], irs_xy[1], 30.0),
        user_locations=locs,
    )
    return sc
