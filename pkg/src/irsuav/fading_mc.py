"""Monte Carlo evaluation of a LoS-designed plan under Rician fading.

A plan fixes the trajectory, the IRS user per slot, the subcarrier owners
and the powers.  Each Monte Carlo run draws the scattering parts of every
link, forms the instantaneous composite channel and counts a subcarrier's
allocated rate only when the channel supports it.

Random draws are keyed by ``(seed, run, slot)``: every slot owns an
independent stream and the entries inside a slot sit at fixed array
positions, so the value drawn for ``(k, i, n)`` never depends on which other
slots or runs are evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from . import geometry as geo
from .channel import SPEED_OF_LIGHT, irs_phase_control, link_amplitudes, los_complex_table, \
    steering_vector
from .planner import DEFAULT_ALPHA, PlannerOptions, Solution, alternate
from .ra_solver import Allocation
from .scenario import Scenario

ETA = 0.8
PRU_THRESHOLD = 10_000


@dataclass(frozen=True)
class FadingDraw:
    """Scattering draws of one Monte Carlo run.

    ``scatter_ug[k, i, s]`` are the direct-link draws for ``slots[s]``.
    ``scatter_rg`` is either ``[k, i, s, m]`` (one draw per PRU) or
    ``[k, i, s]`` holding the aggregated reflected scatter, distributed as
    ``CN(0, M_r M_c)``.
    """

    scatter_ug: np.ndarray
    scatter_rg: np.ndarray
    rng_seed: int
    run: int
    slots: tuple[int, ...]

    @property
    def per_pru(self) -> bool:
        return self.scatter_rg.ndim == 4

    def slot_index(self, n: int) -> int:
        return self.slots.index(n)


def _complex_normal(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    z = rng.standard_normal(shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


def draw_fading(scenario: Scenario, seed: int, run: int = 0,
                slots: Iterable[int] | None = None, per_pru: bool | None = None) -> FadingDraw:
    """Draw the scattering parts for the given slots (all slots by default).

    ``per_pru`` defaults to drawing every PRU when the IRS has at most
    ``PRU_THRESHOLD`` elements and to the aggregated law otherwise.
    """
    n_users, n_f = scenario.n_users, scenario.ofdm.n_f
    m = scenario.irs.n_elements
    slots = tuple(range(scenario.uav.n_slots)) if slots is None else tuple(int(n) for n in slots)
    if per_pru is None:
        per_pru = m <= PRU_THRESHOLD
    ug = np.empty((n_users, n_f, len(slots)), complex)
    rg = np.empty((n_users, n_f, len(slots)) + ((m,) if per_pru else ()), complex)
    for s, n in enumerate(slots):
        rng = np.random.default_rng(np.random.SeedSequence([seed, run, n]))
        ug[:, :, s] = _complex_normal(rng, (n_users, n_f))
        if per_pru:
            rg[:, :, s] = _complex_normal(rng, (n_users, n_f, m))
        else:
            rg[:, :, s] = np.sqrt(m) * _complex_normal(rng, (n_users, n_f))
    return FadingDraw(ug, rg, int(seed), int(run), slots)


def _reflection_weights(q: np.ndarray, scenario: Scenario, irs_user: int) -> np.ndarray:
    """Unit-modulus per-PRU factors seen by the reflected scatter in one slot."""
    irs, f_c = scenario.irs, scenario.ofdm.f_c
    phi = irs_phase_control(q, irs, scenario.users[irs_user], f_c).ravel()
    a_ur = steering_vector(irs.m_r, irs.m_c, irs.d_r, irs.d_c, f_c,
                           geo.angles_uav_irs(q, irs.location))
    return np.exp(1j * phi) * a_ur


def scattering_std(positions: np.ndarray, scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Amplitude scales ``[k, n]`` of the direct and the per-PRU reflected scatter."""
    ofdm, irs = scenario.ofdm, scenario.irs
    amp = link_amplitudes(positions, irs, list(scenario.users), ofdm)
    a_ug = np.array([u.alpha_ug for u in scenario.users])[:, None]
    a_rg = np.array([u.alpha_rg for u in scenario.users])[:, None]
    k_ug = np.array([u.kappa_ug for u in scenario.users])[:, None]
    k_rg = np.array([u.kappa_rg for u in scenario.users])[:, None]
    with np.errstate(divide="ignore"):
        s_ug = np.sqrt(ofdm.beta0 / amp.d_ug ** a_ug / (k_ug + 1.0))
        s_rg = (irs.amplitude_a * ofdm.beta0 / (amp.d_ur[None, :] * amp.d_rg[:, None] ** (a_rg / 2.0))
                / np.sqrt(k_rg + 1.0))
    s_ug = np.where(np.isinf(k_ug), 0.0, s_ug)
    s_rg = np.where(np.isinf(k_rg), 0.0, s_rg)
    return s_ug, s_rg


def scattering_variance(positions: np.ndarray, scenario: Scenario) -> np.ndarray:
    """Variance ``[k, n]`` of the total scattering part of the composite channel."""
    s_ug, s_rg = scattering_std(positions, scenario)
    return s_ug ** 2 + s_rg ** 2 * scenario.irs.n_elements


class _SlotChannels:
    """Deterministic pieces of the composite channel for a fixed plan."""

    def __init__(self, positions: np.ndarray, irs_user: Sequence[int], scenario: Scenario,
                 slots: Sequence[int]):
        q = np.atleast_2d(np.asarray(positions, float))[list(slots)]
        kp = np.asarray(irs_user)[list(slots)]
        ofdm = scenario.ofdm
        los = los_complex_table(q, scenario.irs, list(scenario.users), ofdm)
        self.los = np.stack([los[kp[s], :, :, s] for s in range(len(slots))], axis=-1)
        self.s_ug, self.s_rg = scattering_std(q, scenario)
        w = 2.0 * np.pi * ofdm.delta_f / SPEED_OF_LIGHT
        d_ur = np.linalg.norm(q - scenario.irs.location, axis=1)
        self.carrier = np.exp(-1j * w * ofdm.subcarriers[:, None] * d_ur[None, :])
        self._q, self._kp, self._scenario = q, kp, scenario
        self._weights: dict[int, np.ndarray] = {}

    def weights(self, s: int) -> np.ndarray:
        if s not in self._weights:
            self._weights[s] = _reflection_weights(self._q[s], self._scenario, int(self._kp[s]))
        return self._weights[s]

    def combine(self, ug: np.ndarray, rg: np.ndarray, s: int, per_pru: bool) -> np.ndarray:
        """Channels ``[k, i]`` of draw slot ``s`` from its scattering draws."""
        urg = rg @ self.weights(s) if per_pru else rg
        return (self.los[:, :, s] + self.s_ug[:, s, None] * ug
                + self.s_rg[:, s, None] * urg * self.carrier[None, :, s])


def composite_channels(draw: FadingDraw, positions: np.ndarray, irs_user: Sequence[int],
                       scenario: Scenario) -> np.ndarray:
    """Instantaneous composite channels ``[k, i, s]`` for the drawn slots."""
    ch = _SlotChannels(positions, irs_user, scenario, draw.slots)
    out = np.empty(draw.scatter_ug.shape, complex)
    for s in range(len(draw.slots)):
        out[:, :, s] = ch.combine(draw.scatter_ug[:, :, s], draw.scatter_rg[:, :, s], s,
                                  draw.per_pru)
    return out


def slot_samples(scenario: Scenario, positions: np.ndarray, irs_user: Sequence[int], n: int,
                 seed: int, runs: int, per_pru: bool | None = None) -> np.ndarray:
    """Composite channels ``[run, k, i]`` of slot ``n`` for runs ``0..runs-1``."""
    ch = _SlotChannels(positions, irs_user, scenario, [n])
    out = np.empty((runs, scenario.n_users, scenario.ofdm.n_f), complex)
    for run in range(runs):
        d = draw_fading(scenario, seed, run, slots=[n], per_pru=per_pru)
        out[run] = ch.combine(d.scatter_ug[:, :, 0], d.scatter_rg[:, :, 0], 0, d.per_pru)
    return out


def sample_composite_channel(draw: FadingDraw, k: int, irs_user: int, i: int, n: int,
                             q: np.ndarray, scenario: Scenario) -> complex:
    """Instantaneous channel of user ``k`` on one-based subcarrier ``i`` in slot ``n``."""
    s = draw.slot_index(n)
    single = FadingDraw(draw.scatter_ug[:, :, s:s + 1], draw.scatter_rg[:, :, s:s + 1],
                        draw.rng_seed, draw.run, (0,))
    g = composite_channels(single, np.asarray(q, float)[None, :], [irs_user], scenario)
    return complex(g[k, i - 1, 0])


# --------------------------------------------------------------------------- #
# Outage accounting
# --------------------------------------------------------------------------- #

def individual_outage_rate(eta: float, los_rates: np.ndarray, rician_rates: np.ndarray
                           ) -> float:
    """``(1/N) sum_n sum_i eta R_los 1{R_rician >= eta R_los}`` for one user."""
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta={eta} must lie in (0, 1)")
    los = np.asarray(los_rates, float)
    ric = np.asarray(rician_rates, float)
    if los.shape != ric.shape:
        raise ValueError("rate arrays are not aligned")
    hit = ric >= eta * los
    return float(np.sum(eta * los * hit) / los.shape[-1])


def avg_system_outage_rate(per_run_user_rates: np.ndarray, r_min: Sequence[float]) -> float:
    """Mean over runs of the summed user outage rates that reach ``r_min``."""
    rates = np.atleast_2d(np.asarray(per_run_user_rates, float))
    ok = rates >= np.asarray(r_min, float)[None, :]
    return float(np.sum(rates * ok) / rates.shape[0])


@dataclass
class OutageReport:
    """Per-run user outage rates (normalized per subcarrier) and their summary."""

    eta: float
    per_run_user_rates: np.ndarray
    avg_system_outage_rate: float
    los_sum_rate: float
    los_user_rates: np.ndarray
    seed: int

    @property
    def ratio(self) -> float:
        """Outage rate relative to ``eta`` times the LoS sum rate."""
        return self.avg_system_outage_rate / (self.eta * self.los_sum_rate)

    @staticmethod
    def merge(reports: Sequence["OutageReport"], r_min: Sequence[float]) -> "OutageReport":
        """Pool the runs of several reports on the same plan."""
        rates = np.concatenate([r.per_run_user_rates for r in reports])
        first = reports[0]
        return OutageReport(first.eta, rates, avg_system_outage_rate(rates, r_min),
                            first.los_sum_rate, first.los_user_rates, first.seed)


def _los_rates(positions: np.ndarray, allocation: Allocation, scenario: Scenario) -> np.ndarray:
    """Allocated rates ``[k, i, n]`` on the exact LoS channel."""
    los = los_complex_table(positions, scenario.irs, list(scenario.users), scenario.ofdm)
    gains = np.abs(los) ** 2
    sel = allocation.selected_gains(gains)
    return allocation.u * np.log2(1.0 + allocation.p * sel / scenario.ofdm.sigma2)


def evaluate_outage(positions: np.ndarray, allocation: Allocation, scenario: Scenario,
                    r_min: Sequence[float] | None = None, eta: float = ETA, runs: int = 200,
                    seed: int = 0, per_pru: bool | None = None) -> OutageReport:
    """Monte Carlo outage of a fixed plan.

    ``r_min`` defaults to the scenario's minimum rates.  All rates in the
    report are normalized per subcarrier.
    """
    positions = np.asarray(positions, float)
    n_f, n_slots = scenario.ofdm.n_f, scenario.uav.n_slots
    r_min = scenario.r_min if r_min is None else np.asarray(r_min, float)
    los_r = _los_rates(positions, allocation, scenario)
    los_user = los_r.sum(axis=1).mean(axis=1) / n_f
    slots = list(range(n_slots))
    ch = _SlotChannels(positions, allocation.irs_user, scenario, slots)
    per_run = np.empty((runs, scenario.n_users))
    sigma2 = scenario.ofdm.sigma2
    snr = allocation.p / sigma2
    for run in range(runs):
        hits = np.zeros(scenario.n_users)
        for n in slots:
            draw = draw_fading(scenario, seed, run, slots=[n], per_pru=per_pru)
            g = ch.combine(draw.scatter_ug[:, :, 0], draw.scatter_rg[:, :, 0], n, draw.per_pru)
            ric = allocation.u[:, :, n] * np.log2(1.0 + snr[:, :, n] * np.abs(g) ** 2)
            los_n = los_r[:, :, n]
            hits += np.sum(eta * los_n * (ric >= eta * los_n), axis=1)
        per_run[run] = hits / n_slots / n_f
    return OutageReport(eta, per_run, avg_system_outage_rate(per_run, r_min),
                        float(los_user.sum()), los_user, int(seed))


def inflate_r_min(scenario: Scenario, eta: float = ETA) -> Scenario:
    """Scenario whose minimum rates are divided by ``eta`` for the conservative design."""
    users = tuple(replace(u, r_min=u.r_min / eta) for u in scenario.users)
    return replace(scenario, users=users)


def outage_study(scenario: Scenario, alpha: float = DEFAULT_ALPHA, eta: float = ETA,
                 runs: int = 200, seed: int = 0, opts: PlannerOptions = PlannerOptions(),
                 solution: Solution | None = None, per_pru: bool | None = None
                 ) -> tuple[Solution, OutageReport]:
    """Plan with inflated minimum rates, then evaluate outage against the originals."""
    if solution is None:
        solution = alternate(inflate_r_min(scenario, eta), alpha, opts)
    report = evaluate_outage(solution.trajectory.positions, solution.allocation, scenario,
                             scenario.r_min, eta, runs, seed, per_pru)
    return solution, report
