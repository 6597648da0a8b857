"""Deterministic LoS composite channel under location-based IRS phase control.

The composite LoS gain of user ``k`` on subcarrier ``i`` while the IRS serves
user ``k'`` is ``x**2 + y**2 + 2*x*y*cos(2*pi*i*df*dd/c - phi)`` where ``x`` is
the direct amplitude, ``y`` the reflected amplitude including the signed beam
pattern product and ``phi = (M_r - 1)*psi_r + (M_c - 1)*psi_c``.  The sign of
``phi`` follows from summing the steering vectors element by element (see
``steering_vector``), which the unit tests check against brute force.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike

from . import geometry as geo

__all__ = [
    "SPEED_OF_LIGHT",
    "IrsSpec",
    "UserSpec",
    "OfdmNumerology",
    "GainLevels",
    "beam_pattern",
    "steering_vector",
    "irs_phase_control",
    "psi_offsets",
    "beam_products",
    "LinkAmplitudes",
    "link_amplitudes",
    "los_gain_table",
    "los_complex_table",
    "los_composite_gain",
    "gain_levels",
    "fading_period",
]

SPEED_OF_LIGHT = 3.0e8
_SINGULAR_TOL = 1e-9


@dataclass(frozen=True)
class IrsSpec:
    """Uniform planar IRS with ``m_r x m_c`` reflecting elements."""

    location: np.ndarray
    m_r: int
    m_c: int
    d_r: float
    d_c: float
    amplitude_a: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "location", geo.as_vec3(self.location))
        if self.m_r < 1 or self.m_c < 1:
            raise ValueError("m_r and m_c must be positive")
        if not 0.0 <= self.amplitude_a <= 1.0:
            raise ValueError("amplitude_a must lie in [0, 1]")
        if self.d_r <= 0 or self.d_c <= 0:
            raise ValueError("element spacing must be positive")

    @classmethod
    def with_default_spacing(cls, location: ArrayLike, m_r: int, m_c: int,
                             f_c: float, amplitude_a: float = 0.9) -> "IrsSpec":
        """Element spacing of one tenth of the carrier wavelength."""
        d = SPEED_OF_LIGHT / (10.0 * f_c)
        return cls(np.asarray(location, float), m_r, m_c, d, d, amplitude_a)

    @property
    def n_elements(self) -> int:
        return self.m_r * self.m_c


@dataclass(frozen=True)
class UserSpec:
    """Ground user with per-link path-loss exponents and Rician factors."""

    location: np.ndarray
    alpha_ug: float = 2.5
    alpha_rg: float = 2.5
    kappa_ug: float = 10.0
    kappa_rg: float = 10.0
    r_min: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "location", geo.as_vec3(self.location))
        if self.location[2] != 0.0:
            raise ValueError("ground users must sit at z = 0")
        if self.alpha_ug < 2 or self.alpha_rg < 2:
            raise ValueError("path-loss exponents must be at least 2")
        if self.kappa_ug < 0 or self.kappa_rg < 0:
            raise ValueError("Rician factors must be nonnegative")
        if self.r_min < 0:
            raise ValueError("r_min must be nonnegative")

    @property
    def los_fraction_ug(self) -> float:
        return _los_fraction(self.kappa_ug)

    @property
    def los_fraction_rg(self) -> float:
        return _los_fraction(self.kappa_rg)


def _los_fraction(kappa: float) -> float:
    return 1.0 if np.isinf(kappa) else kappa / (kappa + 1.0)


@dataclass(frozen=True)
class OfdmNumerology:
    """Multicarrier numerology and link budget constants (linear units)."""

    n_f: int
    delta_f: float
    f_c: float
    beta0: float
    noise_psd: float
    p_max: float

    def __post_init__(self):
        if self.n_f < 1:
            raise ValueError("n_f must be positive")
        if self.delta_f <= 0 or self.noise_psd <= 0:
            raise ValueError("delta_f and noise_psd must be positive")

    @property
    def sigma2(self) -> float:
        """Noise power per subcarrier in watts."""
        return self.noise_psd * self.delta_f

    @property
    def subcarriers(self) -> np.ndarray:
        """One-based subcarrier indices ``1..n_f`` as floats."""
        return np.arange(1, self.n_f + 1, dtype=float)


class GainLevels(NamedTuple):
    peak: np.ndarray
    trough: np.ndarray
    dc: np.ndarray


def beam_pattern(m: int, x: ArrayLike) -> np.ndarray | float:
    """``sin(m x)/sin(x)`` with the removable singularities filled by the limit."""
    x = np.asarray(x, dtype=float)
    s = np.sin(x)
    singular = np.abs(s) < _SINGULAR_TOL
    safe = np.where(singular, 1.0, s)
    out = np.where(singular, m * np.cos(m * x) / np.cos(x), np.sin(m * x) / safe)
    return float(out) if out.ndim == 0 else out


def steering_vector(m_r: int, m_c: int, d_r: float, d_c: float, f_c: float,
                    cosines: geo.DirectionCosines) -> np.ndarray:
    """Planar-array response ``a_r kron a_c`` for one direction (length m_r*m_c)."""
    k0 = 2.0 * np.pi * f_c / SPEED_OF_LIGHT
    u = float(cosines.sin_theta * cosines.cos_xi)
    v = float(cosines.sin_theta * cosines.sin_xi)
    a_r = np.exp(-1j * k0 * d_r * np.arange(m_r) * u)
    a_c = np.exp(-1j * k0 * d_c * np.arange(m_c) * v)
    return np.kron(a_r, a_c)


def _wrap(phase: np.ndarray) -> np.ndarray:
    return (phase + np.pi) % (2.0 * np.pi) - np.pi


def irs_phase_control(q: ArrayLike, irs: IrsSpec, assisted_user: UserSpec,
                      f_c: float) -> np.ndarray:
    """Per-element phases in ``[-pi, pi)`` that co-phase the assisted user.

    Returns an ``(m_r, m_c)`` array.
    """
    ur = geo.angles_uav_irs(q, irs.location)
    rg = geo.angles_irs_user(irs.location, assisted_user.location)
    k0 = 2.0 * np.pi * f_c / SPEED_OF_LIGHT
    row = irs.d_r * np.arange(irs.m_r) * (rg.sin_theta * rg.cos_xi + ur.sin_theta * ur.cos_xi)
    col = irs.d_c * np.arange(irs.m_c) * (rg.sin_theta * rg.sin_xi + ur.sin_theta * ur.sin_xi)
    return _wrap(k0 * (row[:, None] + col[None, :]))


def _user_cosines(irs: IrsSpec, user: UserSpec) -> tuple[float, float]:
    rg = geo.angles_irs_user(irs.location, user.location)
    return float(rg.sin_theta * rg.cos_xi), float(rg.sin_theta * rg.sin_xi)


def psi_offsets(irs: IrsSpec, f_c: float, assisted: UserSpec,
                other: UserSpec) -> tuple[float, float]:
    """Beam offsets ``(psi_r, psi_c)`` of ``other`` when the IRS serves ``assisted``."""
    u_a, v_a = _user_cosines(irs, assisted)
    u_o, v_o = _user_cosines(irs, other)
    scale = np.pi * f_c / SPEED_OF_LIGHT
    return scale * irs.d_r * (u_a - u_o), scale * irs.d_c * (v_a - v_o)


def beam_products(irs: IrsSpec, users: list[UserSpec], f_c: float
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Signed beam-pattern products and beam phase offsets.

    Both arrays are indexed ``[k_prime, k]`` (IRS user first).  The product is
    ``B_{M_r}(psi_r) B_{M_c}(psi_c)`` and the offset is
    ``(M_r - 1) psi_r + (M_c - 1) psi_c``.
    """
    n = len(users)
    prod = np.empty((n, n))
    offset = np.empty((n, n))
    for kp, a in enumerate(users):
        for k, o in enumerate(users):
            pr, pc = psi_offsets(irs, f_c, a, o)
            prod[kp, k] = beam_pattern(irs.m_r, pr) * beam_pattern(irs.m_c, pc)
            offset[kp, k] = (irs.m_r - 1) * pr + (irs.m_c - 1) * pc
    # The assisted user sees the coherent sum exactly.
    np.fill_diagonal(prod, irs.m_r * irs.m_c)
    np.fill_diagonal(offset, 0.0)
    return prod, offset


class LinkAmplitudes(NamedTuple):
    """LoS amplitudes for a stack of UAV positions.

    ``x[k, n]`` is the direct amplitude, ``y[kp, k, n]`` the signed reflected
    amplitude, ``delta_d[k, n]`` the path-length difference and
    ``offset[kp, k]`` the beam phase offset.
    """

    x: np.ndarray
    y: np.ndarray
    delta_d: np.ndarray
    offset: np.ndarray
    d_ug: np.ndarray
    d_ur: np.ndarray
    d_rg: np.ndarray


def link_amplitudes(positions: ArrayLike, irs: IrsSpec, users: list[UserSpec],
                    ofdm: OfdmNumerology) -> LinkAmplitudes:
    """Amplitudes for UAV positions of shape ``(N, 3)`` (or a single ``(3,)``)."""
    q = np.atleast_2d(geo.as_vec3(positions))
    w = np.stack([u.location for u in users])
    d_ug = np.linalg.norm(q[None, :, :] - w[:, None, :], axis=-1)
    d_ur = np.linalg.norm(q - irs.location, axis=-1)
    d_rg = np.linalg.norm(w - irs.location, axis=-1)
    a_ug = np.array([u.alpha_ug for u in users])[:, None]
    a_rg = np.array([u.alpha_rg for u in users])
    f_ug = np.array([u.los_fraction_ug for u in users])[:, None]
    f_rg = np.array([u.los_fraction_rg for u in users])
    x = np.sqrt(ofdm.beta0 * f_ug) / d_ug ** (a_ug / 2.0)
    prod, offset = beam_products(irs, users, ofdm.f_c)
    refl = irs.amplitude_a * ofdm.beta0 * np.sqrt(f_rg) / d_rg ** (a_rg / 2.0)
    y = prod[:, :, None] * refl[None, :, None] / d_ur[None, None, :]
    delta_d = d_ur[None, :] + d_rg[:, None] - d_ug
    return LinkAmplitudes(x, y, delta_d, offset, d_ug, d_ur, d_rg)


def _cos_argument(amp: LinkAmplitudes, ofdm: OfdmNumerology) -> np.ndarray:
    """Phase of the fluctuation cosine, shape ``[kp, k, N_F, N]``."""
    w = 2.0 * np.pi * ofdm.delta_f / SPEED_OF_LIGHT
    i = ofdm.subcarriers[None, None, :, None]
    return (w * i * amp.delta_d[None, :, None, :]
            - amp.offset[:, :, None, None])


def los_gain_table(positions: ArrayLike, irs: IrsSpec, users: list[UserSpec],
                   ofdm: OfdmNumerology) -> np.ndarray:
    """Composite LoS power gain for every ``[kp, k, i, n]``."""
    amp = link_amplitudes(positions, irs, users, ofdm)
    x = amp.x[None, :, None, :]
    y = amp.y[:, :, None, :]
    return x ** 2 + y ** 2 + 2.0 * x * y * np.cos(_cos_argument(amp, ofdm))


def los_complex_table(positions: ArrayLike, irs: IrsSpec, users: list[UserSpec],
                      ofdm: OfdmNumerology) -> np.ndarray:
    """Complex composite LoS channel for every ``[kp, k, i, n]``."""
    amp = link_amplitudes(positions, irs, users, ofdm)
    w = 2.0 * np.pi * ofdm.delta_f / SPEED_OF_LIGHT
    i = ofdm.subcarriers[None, None, :, None]
    direct = np.exp(-1j * w * i * amp.d_ug[None, :, None, :])
    rel = np.exp(-1j * _cos_argument(amp, ofdm))
    return direct * (amp.x[None, :, None, :] + amp.y[:, :, None, :] * rel)


def los_composite_gain(k: int, irs_user: int, i: int, q: ArrayLike, irs: IrsSpec,
                       users: list[UserSpec], ofdm: OfdmNumerology) -> float:
    """Composite LoS power gain of user ``k`` on one-based subcarrier ``i``."""
    amp = link_amplitudes(q, irs, users, ofdm)
    x = amp.x[k, 0]
    y = amp.y[irs_user, k, 0]
    w = 2.0 * np.pi * ofdm.delta_f / SPEED_OF_LIGHT
    arg = w * i * amp.delta_d[k, 0] - amp.offset[irs_user, k]
    return float(x * x + y * y + 2.0 * x * y * np.cos(arg))


def gain_levels(k: int, irs_user: int, q: ArrayLike, irs: IrsSpec,
                users: list[UserSpec], ofdm: OfdmNumerology) -> GainLevels:
    """Peak, trough and DC level of the fluctuation over subcarriers."""
    amp = link_amplitudes(q, irs, users, ofdm)
    x = amp.x[k]
    y = np.abs(amp.y[irs_user, k])
    lv = GainLevels((x + y) ** 2, (x - y) ** 2, x ** 2 + y ** 2)
    if np.ndim(q) == 1:
        return GainLevels(*(float(v[0]) for v in lv))
    return lv


def fading_period(k: int, q: ArrayLike, irs: IrsSpec, users: list[UserSpec],
                  delta_f: float) -> float:
    """Cosine period in subcarriers, ``c/(delta_f * delta_d)``."""
    q = geo.as_vec3(q)
    w = users[k].location
    dd = geo.dist(q, irs.location) + geo.dist(irs.location, w) - geo.dist(q, w)
    if dd <= 0.0:
        return float("inf")
    return SPEED_OF_LIGHT / (delta_f * dd)
