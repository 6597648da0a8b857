"""Four-mode staircase bounds on the composite LoS gain.

The cosine fluctuation of the IRS-assisted user is replaced by a staircase
over four fixed, contiguous subcarrier blocks ``F1..F4``.  In slack form the
bounded gain of user ``k`` while the IRS serves ``k'`` reads

    A_k / v_ug + B_{k,k'} / v_ur + C_{k,k',i} / sqrt(v_ug * v_ur)

with ``v_ug = d_ug**alpha_ug`` and ``v_ur = d_ur**2``.  All coefficients are
time invariant; only the slacks depend on the UAV position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike

from .channel import beam_products
from .errors import InconsistentAllocation, InvalidAlpha
from .scenario import Scenario

__all__ = [
    "ModePartition",
    "mode_partition",
    "LinkCoeffs",
    "link_coeffs",
    "CoeffTables",
    "coeff_tables",
    "slacks_from_positions",
    "gain_from_slacks",
    "bound_gain_table",
    "lb_gain",
    "ub_gain",
    "lb_rate",
]


@dataclass(frozen=True)
class ModePartition:
    """Contiguous subcarrier blocks; ``sizes[j]`` is the size of block ``j+1``."""

    alpha: float
    n_f: int
    sizes: tuple[int, int, int, int]

    @property
    def modes(self) -> np.ndarray:
        """Mode number (1..4) of every subcarrier, zero-based position."""
        return np.repeat(np.arange(1, 5), self.sizes)

    @property
    def sets(self) -> list[np.ndarray]:
        """One-based subcarrier indices of each block."""
        edges = np.concatenate([[0], np.cumsum(self.sizes)])
        return [np.arange(edges[j], edges[j + 1]) + 1 for j in range(4)]


def mode_partition(alpha: float, n_f: int) -> ModePartition:
    """Blocks with ``|F1| = |F4| = round(2 alpha N_F)`` and the rest split evenly."""
    if not 0.0 < alpha < 0.25:
        raise InvalidAlpha(f"alpha={alpha} is outside (0, 0.25)")
    if n_f < 4:
        raise ValueError("need at least four subcarriers")
    n1 = int(math.floor(2.0 * alpha * n_f + 0.5))
    rest = n_f - 2 * n1
    n2 = rest - rest // 2
    return ModePartition(float(alpha), int(n_f), (n1, n2, rest // 2, n1))


class LinkCoeffs(NamedTuple):
    a_k: float
    b_kk: float
    d_kkj: np.ndarray


class CoeffTables(NamedTuple):
    """``a[k]``, ``b[kp, k]`` and the cross amplitude ``e[kp, k] = 2 sqrt(a b)``."""

    a: np.ndarray
    b: np.ndarray
    e: np.ndarray
    cos2pa: float

    def mode_factors(self, bound: str) -> np.ndarray:
        """Cross-term multipliers, shape ``[2, 4]``: row 0 assisted, row 1 other."""
        c = self.cos2pa
        if bound == "lb":
            return np.array([[c, 0.0, -c, -1.0], [-1.0, -1.0, -1.0, -1.0]])
        if bound == "ub":
            return np.array([[1.0, c, 0.0, -c], [1.0, 1.0, 1.0, 1.0]])
        raise ValueError(f"unknown bound {bound!r}")

    def d(self, bound: str = "lb") -> np.ndarray:
        """Cross coefficients per mode, shape ``[kp, k, 4]``."""
        f = self.mode_factors(bound)
        n = len(self.a)
        diag = np.eye(n, dtype=bool)[:, :, None]
        return self.e[:, :, None] * np.where(diag, f[0], f[1])

    def c(self, partition: ModePartition, bound: str = "lb") -> np.ndarray:
        """Cross coefficients per subcarrier, shape ``[kp, k, N_F]``."""
        return self.d(bound)[:, :, partition.modes - 1]


def coeff_tables(scenario: Scenario, alpha: float) -> CoeffTables:
    irs, ofdm = scenario.irs, scenario.ofdm
    users = list(scenario.users)
    prod, _ = beam_products(irs, users, ofdm.f_c)
    d_rg = np.array([np.linalg.norm(u.location - irs.location) for u in users])
    a_rg = np.array([u.alpha_rg for u in users])
    f_ug = np.array([u.los_fraction_ug for u in users])
    f_rg = np.array([u.los_fraction_rg for u in users])
    a = ofdm.beta0 * f_ug
    b = (irs.amplitude_a * ofdm.beta0) ** 2 * prod ** 2 * (f_rg / d_rg ** a_rg)[None, :]
    e = 2.0 * np.sqrt(a[None, :] * b)
    return CoeffTables(a, b, e, float(np.cos(2.0 * np.pi * alpha)))


def link_coeffs(k: int, k_prime: int, scenario: Scenario, alpha: float) -> LinkCoeffs:
    """Coefficients ``A_k``, ``B_{k,k'}`` and the four lower-bound ``D_{k,k',j}``."""
    t = coeff_tables(scenario, alpha)
    return LinkCoeffs(float(t.a[k]), float(t.b[k_prime, k]), t.d("lb")[k_prime, k].copy())


def slacks_from_positions(positions: ArrayLike, scenario: Scenario
                          ) -> tuple[np.ndarray, np.ndarray]:
    """Slacks at equality: ``v_ug[k, n] = d_ug**alpha_ug`` and ``v_ur[n] = d_ur**2``."""
    q = np.atleast_2d(np.asarray(positions, float))
    w = np.stack([u.location for u in scenario.users])
    alpha = np.array([u.alpha_ug for u in scenario.users])[:, None]
    d2 = np.sum((q[None, :, :] - w[:, None, :]) ** 2, axis=-1)
    v_ug = d2 ** (alpha / 2.0)
    v_ur = np.sum((q - scenario.irs.location) ** 2, axis=-1)
    return v_ug, v_ur


def gain_from_slacks(tables: CoeffTables, c: np.ndarray, v_ug: np.ndarray,
                     v_ur: np.ndarray) -> np.ndarray:
    """Bounded gains, shape ``[kp, k, N_F, N]``, from slacks ``[k, N]`` and ``[N]``."""
    vu = v_ug[None, :, None, :]
    vr = v_ur[None, None, None, :]
    return (tables.a[None, :, None, None] / vu
            + tables.b[:, :, None, None] / vr
            + c[:, :, :, None] / np.sqrt(vu * vr))


def bound_gain_table(positions: ArrayLike, partition: ModePartition,
                     scenario: Scenario, bound: str = "lb") -> np.ndarray:
    """Lower (``"lb"``) or upper (``"ub"``) bound gains, shape ``[kp, k, N_F, N]``."""
    tables = coeff_tables(scenario, partition.alpha)
    v_ug, v_ur = slacks_from_positions(positions, scenario)
    g = gain_from_slacks(tables, tables.c(partition, bound), v_ug, v_ur)
    # (x - y)**2 can round to a tiny negative number when x is close to y.
    return np.maximum(g, 0.0)


def _single(k, k_prime, i, q, partition, scenario, bound):
    g = bound_gain_table(np.asarray(q, float)[None, :], partition, scenario, bound)
    return float(g[k_prime, k, i - 1, 0])


def lb_gain(k: int, k_prime: int, i: int, q: ArrayLike, partition: ModePartition,
            scenario: Scenario) -> float:
    """Lower-bound gain of user ``k`` on one-based subcarrier ``i``."""
    return _single(k, k_prime, i, q, partition, scenario, "lb")


def ub_gain(k: int, k_prime: int, i: int, q: ArrayLike, partition: ModePartition,
            scenario: Scenario) -> float:
    """Upper-bound gain of user ``k`` on one-based subcarrier ``i``."""
    return _single(k, k_prime, i, q, partition, scenario, "ub")


def lb_rate(t: ArrayLike, p_tilde: ArrayLike, gain: ArrayLike, sigma2: float
            ) -> np.ndarray | float:
    """Time-shared rate ``t log2(1 + p g/(t sigma2))`` with value 0 at ``t = 0``."""
    t = np.asarray(t, float)
    p = np.asarray(p_tilde, float)
    zero = t == 0.0
    if np.any(zero & (p > 0.0)):
        raise InconsistentAllocation("positive power where the time share is zero")
    safe_t = np.where(zero, 1.0, t)
    r = np.where(zero, 0.0, t * np.log2(1.0 + p * np.asarray(gain) / (safe_t * sigma2)))
    return float(r) if r.ndim == 0 else r
