"""Power, subcarrier and IRS scheduling for a fixed trajectory.

Only the minimum-rate constraints are dualized with multipliers ``nu``; for
fixed ``nu`` every slot decouples into a weighted multi-user water-filling
problem per candidate IRS user, and the IRS user with the largest weighted
rate is kept.  The per-slot power budget is met with equality by an exact
sort-based water-fill on the selected schedule, so the returned powers are
KKT points of the per-slot convex problem to machine precision.

The dual iterates alone can miss feasible schedules (the relaxation is only
tight as the number of subcarriers grows), so the most promising schedules
they visit are re-powered under the rate constraints, and small instances
additionally get a local search over single owner or IRS-user changes.

Rates are per slot sums over subcarriers.  The minimum-rate requirement of
user ``k`` is ``mean_n R_k[n] >= N_F * r_min[k]`` so that ``r_min`` reads in
bit/s/Hz per subcarrier.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import brentq

from .bounds import ModePartition, bound_gain_table
from .errors import Infeasible, ZeroDual
from .scenario import Scenario

__all__ = [
    "Allocation",
    "DualState",
    "RaOptions",
    "RaResult",
    "waterfill_power",
    "waterfill_exact",
    "marginals",
    "binary_update",
    "dual_update",
    "user_rates",
    "allocate",
    "solve_subproblem1",
]

log = logging.getLogger(__name__)
LN2 = np.log(2.0)
VARRHO_FLOOR = 1e-12


@dataclass(frozen=True)
class Allocation:
    """Binary schedule plus powers.

    ``u[k, i, n]`` marks the user on each subcarrier, ``s[k, n]`` the IRS user
    of each slot and ``p[k, i, n]`` the power.  The four-index time-sharing
    tensor ``t`` and the power tensor ``p_tilde`` of the relaxed problem are
    derived views.  ``weights[k]`` is the rate weight each user had in the
    water-filling that produced ``p`` (``None`` for hand-built allocations).
    """

    u: np.ndarray
    s: np.ndarray
    p: np.ndarray
    weights: np.ndarray | None = None

    @property
    def n_users(self) -> int:
        return self.u.shape[0]

    @property
    def t(self) -> np.ndarray:
        return self.u[:, None, :, :] & self.s[None, :, None, :]

    @property
    def p_tilde(self) -> np.ndarray:
        return np.where(self.t, self.p[:, None, :, :], 0.0)

    @property
    def irs_user(self) -> np.ndarray:
        """IRS user index per slot (``-1`` when none)."""
        return np.where(self.s.any(axis=0), np.argmax(self.s, axis=0), -1)

    @property
    def scheduled(self) -> np.ndarray:
        """User index per ``[i, n]`` (``-1`` when the subcarrier is idle)."""
        return np.where(self.u.any(axis=0), np.argmax(self.u, axis=0), -1)

    def selected_gains(self, gains: np.ndarray) -> np.ndarray:
        """Pick ``gains[kp, k, i, n]`` at the scheduled IRS user, shape ``[k, i, n]``."""
        kp = np.maximum(self.irs_user, 0)
        n = np.arange(gains.shape[-1])
        return np.moveaxis(gains[kp, :, :, n], 0, -1)

    def check(self, p_max: float, rtol: float = 1e-9) -> None:
        """Raise ``AssertionError`` if a structural constraint is violated."""
        assert self.u.dtype == bool and self.s.dtype == bool
        assert np.all(self.u.sum(axis=0) <= 1), "two users on one subcarrier"
        assert np.all(self.s.sum(axis=0) <= 1), "two IRS users in one slot"
        assert np.all(self.p >= 0.0), "negative power"
        assert np.all(self.p[~self.u] == 0.0), "power on an unscheduled subcarrier"
        assert np.all(self.p.sum(axis=(0, 1)) <= p_max * (1 + rtol) + 1e-300), "power budget"


@dataclass
class DualState:
    """Multipliers of the relaxed problem (all nonnegative)."""

    zeta: np.ndarray
    varrho: np.ndarray
    gamma: np.ndarray
    nu: np.ndarray
    varsigma: np.ndarray
    varpi: np.ndarray
    xi: np.ndarray

    @classmethod
    def initial(cls, n_users: int, n_f: int, n_slots: int, p_max: float) -> "DualState":
        shape4 = (n_users, n_users, n_f, n_slots)
        varrho0 = n_users * n_f / (max(p_max, 1e-300) * LN2)
        return cls(zeta=np.zeros((n_f, n_slots)), varrho=np.full(n_slots, varrho0),
                   gamma=np.zeros(n_slots), nu=np.zeros(n_users),
                   varsigma=np.zeros(shape4), varpi=np.zeros(shape4), xi=np.zeros(shape4))


@dataclass(frozen=True)
class RaOptions:
    bound: str = "lb"
    max_iter: int = 300
    tol: float = 1e-3
    tau0: float = 1.0
    nu_cap: float = 1e4
    tdma: bool = False
    r_min_scale: float = 1.0
    inner_iter: int = 25
    polish: int = 4
    local_moves: int = 64


@dataclass
class RaResult:
    allocation: Allocation
    sum_rate: float
    user_rates: np.ndarray
    nu: np.ndarray
    dual_value: float
    iterations: int
    history: list = field(default_factory=list)

    @property
    def normalized_sum_rate(self) -> float:
        return self.sum_rate / self.allocation.u.shape[1]

    @property
    def gap(self) -> float:
        return (self.dual_value - self.sum_rate) / max(abs(self.sum_rate), 1e-300)


def waterfill_power(nu_k: ArrayLike, varrho_n: ArrayLike, gain: ArrayLike, sigma2: float,
                    n_slots: int) -> np.ndarray | float:
    """``[(nu + 1)/(varrho ln2 N) - sigma2/g]^+``."""
    varrho = np.asarray(varrho_n, float)
    if np.any(varrho == 0.0):
        raise ZeroDual("varrho is zero, the water level is undefined")
    g = np.asarray(gain, float)
    with np.errstate(divide="ignore"):
        floor = np.where(g > 0, sigma2 / np.where(g > 0, g, 1.0), np.inf)
    p = np.maximum((np.asarray(nu_k) + 1.0) / (varrho * LN2 * n_slots) - floor, 0.0)
    return float(p) if p.ndim == 0 else p


def waterfill_exact(weight: np.ndarray, floor: np.ndarray, budget: ArrayLike
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``sum_j [w_j mu - f_j]^+ = budget`` for ``mu`` along the last axis.

    ``weight`` must be positive; ``floor`` may be ``inf`` for unusable entries.
    Returns the powers and the level ``mu`` (shape of the leading axes).
    """
    w = np.asarray(weight, float)
    f = np.asarray(floor, float)
    budget = np.broadcast_to(np.asarray(budget, float), w.shape[:-1])
    bp = f / w
    order = np.argsort(bp, axis=-1, kind="stable")
    bp_s = np.take_along_axis(bp, order, -1)
    w_s = np.take_along_axis(w, order, -1)
    f_s = np.take_along_axis(f, order, -1)
    with np.errstate(invalid="ignore"):
        cand = (budget[..., None] + np.cumsum(f_s, -1)) / np.cumsum(w_s, -1)
        active = np.sum(bp_s < cand, axis=-1)
    idx = np.maximum(active - 1, 0)[..., None]
    mu = np.where(active > 0, np.take_along_axis(cand, idx, -1)[..., 0], bp_s[..., 0])
    mu = np.where(np.isfinite(mu), mu, 0.0)
    p = np.maximum(w * mu[..., None] - f, 0.0)
    p = np.where(np.isfinite(f), p, 0.0)
    return p, mu


def marginals(dual: DualState, gains: np.ndarray, sigma2: float, n_slots: int
              ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Marginal benefits ``M_u [k,i,n]``, ``M_t [k,kp,i,n]`` and ``M_s [kp,n]``.

    ``gains`` is indexed ``[kp, k, i, n]``.
    """
    g = np.moveaxis(gains, 0, 1)
    p = waterfill_power(dual.nu[:, None, None, None], np.maximum(dual.varrho, VARRHO_FLOOR),
                        g, sigma2, n_slots)
    x = p * g / sigma2
    m_t = ((dual.nu[:, None, None, None] + 1.0) / n_slots
           * (np.log2(1.0 + x) - x / ((1.0 + x) * LN2))
           - dual.varsigma - dual.varpi + dual.xi)
    m_u = -dual.zeta[None] + np.sum(dual.varpi - dual.xi, axis=1)
    m_s = -dual.gamma[None] + np.sum(dual.varsigma - dual.xi, axis=(0, 2))
    return m_u, m_t, m_s


def binary_update(m_t: np.ndarray, m_s: np.ndarray
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Binary schedule from the marginals.

    Each slot keeps the IRS user with the largest ``M_s`` plus the best
    per-subcarrier ``M_t``; within that slot every subcarrier goes to the user
    with the largest ``M_t``.  Ties go to the lowest index.
    """
    n_users, _, n_f, n_slots = m_t.shape
    best_k = np.max(m_t, axis=0)
    score = m_s + np.sum(best_k, axis=1)
    kp = np.argmax(score, axis=0)
    s = np.zeros((n_users, n_slots), bool)
    s[kp, np.arange(n_slots)] = True
    sel = m_t[:, kp, :, np.arange(n_slots)]
    k = np.argmax(sel, axis=1).T
    u = np.zeros((n_users, n_f, n_slots), bool)
    np.put_along_axis(u, k[None], True, axis=0)
    t = u[:, None, :, :] & s[None, :, None, :]
    return u, s, t


def dual_update(state: DualState, deficits: dict, step_sizes: dict) -> DualState:
    """Projected subgradient step on the multipliers.

    ``deficits`` maps family names to constraint residuals written as
    ``lhs - rhs`` of a ``<=`` constraint (positive means violated); each
    family moves by ``+step * residual`` and is clipped at zero.  ``zeta`` and
    ``gamma`` are left unchanged since the binary update satisfies their
    constraints with equality.
    """
    new = replace(state)
    for name in ("varrho", "nu", "varsigma", "varpi", "xi"):
        if name in deficits:
            val = getattr(state, name) + step_sizes.get(name, 0.0) * deficits[name]
            setattr(new, name, np.maximum(val, 0.0))
    new.varrho = np.maximum(new.varrho, VARRHO_FLOOR)
    return new


def user_rates(allocation: Allocation, gains: np.ndarray, sigma2: float) -> np.ndarray:
    """Per-slot rates ``R_k[n]`` summed over subcarriers, shape ``[k, n]``."""
    g = allocation.selected_gains(gains)
    r = np.where(allocation.u, np.log2(1.0 + allocation.p * g / sigma2), 0.0)
    return r.sum(axis=1)


def _floor(g: np.ndarray, sigma2: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(g > 0, sigma2 / np.where(g > 0, g, 1.0), np.inf)


def _inner(gains: np.ndarray, weights: np.ndarray, sigma2: float, p_max: float,
           tdma: bool, inner_iter: int, warm: np.ndarray | None = None):
    """Best schedule and powers per slot for fixed user weights.

    Returns the per-slot IRS user, per-subcarrier user ``[n, i]``, powers
    ``[n, i]``, the weighted per-slot value and the full selection table
    ``[kp, n, i]`` (usable as a warm start).
    """
    n_kp, n_k, n_f, n_slots = gains.shape
    g = np.transpose(gains, (0, 3, 1, 2)).reshape(n_kp * n_slots, n_k, n_f)
    fl = _floor(g, sigma2)
    w = weights[None, :, None]
    if tdma:
        p_all, _ = waterfill_exact(np.broadcast_to(w, g.shape), fl, p_max)
        val_k = np.sum(w * np.log2(1.0 + p_all * g / sigma2), axis=-1)
        kbest = np.argmax(val_k, axis=-1)
        rows = np.arange(g.shape[0])
        sel = np.repeat(kbest[:, None], n_f, axis=1)
        p = p_all[rows, kbest]
        value = val_k[rows, kbest]
    else:
        sel = np.argmax(g * w, axis=1) if warm is None else warm.reshape(-1, n_f).copy()
        value = np.full(g.shape[0], -np.inf)
        p = np.zeros((g.shape[0], n_f))
        best_sel = sel.copy()
        active = np.arange(g.shape[0])
        for _ in range(inner_iter):
            ga, fa, sa = g[active], fl[active], sel[active]
            gs = np.take_along_axis(ga, sa[:, None, :], 1)[:, 0, :]
            ws = weights[sa]
            pa, mu = waterfill_exact(ws, np.take_along_axis(fa, sa[:, None, :], 1)[:, 0, :],
                                     p_max)
            val = np.sum(ws * np.log2(1.0 + pa * gs / sigma2), axis=-1)
            better = val > value[active]
            upd = active[better]
            value[upd] = val[better]
            best_sel[upd] = sa[better]
            p[upd] = pa[better]
            # Re-select users at the current water level.
            mu_b = np.maximum(mu, 1e-300)[:, None, None]
            pk = np.where(np.isfinite(fa), np.maximum(w * mu_b - fa, 0.0), 0.0)
            phi = w * np.log2(1.0 + pk * ga / sigma2) - pk / mu_b
            new_sel = np.argmax(np.where(pk > 0, phi, -1.0), axis=1)
            moved = np.any(new_sel != sa, axis=1)
            sel[active] = new_sel
            active = active[moved]
            if active.size == 0:
                break
        sel = best_sel
    value = value.reshape(n_kp, n_slots)
    sel = sel.reshape(n_kp, n_slots, n_f)
    p = p.reshape(n_kp, n_slots, n_f)
    kp = np.argmax(value, axis=0)
    n_idx = np.arange(n_slots)
    return kp, sel[kp, n_idx], p[kp, n_idx], value[kp, n_idx], sel


def _build(kp: np.ndarray, sel: np.ndarray, p: np.ndarray, n_users: int,
           weights: np.ndarray | None = None) -> Allocation:
    n_slots, n_f = sel.shape
    u = np.zeros((n_users, n_f, n_slots), bool)
    np.put_along_axis(u, sel.T[None], True, axis=0)
    pw = np.where(u, p.T[None], 0.0)
    u &= pw > 0.0
    s = np.zeros((n_users, n_slots), bool)
    s[kp, np.arange(n_slots)] = True
    return Allocation(u, s, pw, None if weights is None else np.array(weights, float))


def _polish(gains: np.ndarray, kp: np.ndarray, sel: np.ndarray, sigma2: float, p_max: float,
            target: np.ndarray, max_sweeps: int = 60) -> Allocation | None:
    """Best powers for a fixed schedule subject to the rate targets.

    With the owners fixed the problem is convex and its KKT point is a
    weighted water-fill with user weights ``(1 + nu_k)/N``.  Each ``nu_k`` is
    set in turn so that its user meets the target exactly (or to zero when
    the user has slack), which converges to the KKT multipliers.  Returns
    ``None`` when some target cannot be reached on this schedule.
    """
    n_slots, n_f = sel.shape
    n_users = gains.shape[1]
    g = gains[kp[:, None], sel, np.arange(n_f)[None, :], np.arange(n_slots)[:, None]]
    fl = _floor(g, sigma2)
    owned = [sel == k for k in range(n_users)]
    aim = target * (1.0 + 1e-10) + 1e-12

    def solve(nu):
        p, _ = waterfill_exact(((1.0 + nu) / n_slots)[sel], fl, p_max)
        r = np.log2(1.0 + p * g / sigma2)
        return p, np.array([r[o].sum() for o in owned]) / n_slots

    def excess(k, nu, x):
        trial = nu.copy()
        trial[k] = x
        return solve(trial)[1][k] - aim[k]

    nu = np.zeros(n_users)
    for _ in range(max_sweeps):
        _, rates = solve(nu)
        if np.all(rates >= aim) and np.allclose(rates[nu > 0], aim[nu > 0], rtol=1e-9):
            break
        for k in range(n_users):
            if excess(k, nu, 0.0) >= 0.0:
                nu[k] = 0.0
                continue
            hi = max(2.0 * nu[k], 1.0)
            while excess(k, nu, hi) < 0.0:
                hi *= 8.0
                if hi > 1e15:
                    return None
            x = brentq(lambda x: excess(k, nu, x), 0.0, hi, xtol=1e-300, rtol=1e-14)
            step = max(x * 1e-13, 1e-300)
            while excess(k, nu, x) < 0.0 and x < hi:
                x, step = min(x + step, hi), 2.0 * step
            nu[k] = x
    p, _ = solve(nu)
    return _build(kp, sel, p, n_users, (1.0 + nu) / n_slots)


def _local_search(gains: np.ndarray, kp: np.ndarray, sel: np.ndarray, sigma2: float,
                  p_max: float, target: np.ndarray, max_rounds: int = 50) -> Allocation | None:
    """Best-improvement search over single owner or IRS-user changes.

    Every neighbour is scored by its rate-constrained powers; infeasible
    schedules rank below feasible ones by their shortfall at equal weights.
    """
    n_slots, n_f = sel.shape
    n_users = gains.shape[1]

    def score(kp, sel):
        alloc = _polish(gains, kp, sel, sigma2, p_max, target)
        if alloc is not None:
            return (1, float(user_rates(alloc, gains, sigma2).mean(axis=1).sum())), alloc
        g = gains[kp[:, None], sel, np.arange(n_f)[None, :], np.arange(n_slots)[:, None]]
        p, _ = waterfill_exact(np.ones_like(g), _floor(g, sigma2), p_max)
        r = np.log2(1.0 + p * g / sigma2)
        rates = np.array([r[sel == k].sum() for k in range(n_users)]) / n_slots
        return (0, -float(np.sum(np.maximum(target - rates, 0.0)))), None

    kp, sel = kp.copy(), sel.copy()
    best, alloc = score(kp, sel)
    for _ in range(max_rounds):
        move = None
        for n in range(n_slots):
            for k in range(gains.shape[0]):
                if k != kp[n]:
                    trial = kp.copy()
                    trial[n] = k
                    val, a = score(trial, sel)
                    if val > best:
                        best, alloc, move = val, a, (trial, sel)
            for k in range(n_users):
                for i in range(n_f):
                    if k == sel[n, i]:
                        continue
                    trial = sel.copy()
                    trial[n, i] = k
                    val, a = score(kp, trial)
                    if val > best:
                        best, alloc, move = val, a, (kp, trial)
        if move is None:
            break
        kp, sel = move[0].copy(), move[1].copy()
    return alloc


def allocate(gains: np.ndarray, sigma2: float, p_max: float, r_min: ArrayLike,
             opts: RaOptions = RaOptions(), incumbent: Allocation | None = None) -> RaResult:
    """Dual subgradient solution of the scheduling problem on a gain table.

    ``gains[kp, k, i, n]`` are the (bounded) gains when the IRS serves ``kp``.
    The returned objective is the aggregate ``mean_n sum_k R_k[n]``.
    """
    n_kp, n_users, n_f, n_slots = gains.shape
    target = np.asarray(r_min, float) * opts.r_min_scale * n_f
    nu = np.zeros(n_users)
    best: tuple[float, Allocation, np.ndarray] | None = None
    dual_best = np.inf
    history = []
    warm = None
    visited: dict[bytes, tuple[float, np.ndarray, np.ndarray]] = {}
    best_key = None

    def consider(alloc: Allocation):
        nonlocal best
        rates = user_rates(alloc, gains, sigma2).mean(axis=1)
        if np.all(rates >= target - 1e-9 * np.maximum(target, 1.0)):
            obj = float(rates.sum())
            if best is None or obj > best[0]:
                best = (obj, alloc, rates)
        return rates

    if incumbent is not None:
        consider(incumbent)

    it = 0
    for it in range(1, opts.max_iter + 1):
        weights = (1.0 + nu) / n_slots
        kp, sel, p, value, warm = _inner(gains, weights, sigma2, p_max, opts.tdma,
                                         opts.inner_iter, warm)
        alloc = _build(kp, sel, p, n_users, weights)
        before = best
        rates = consider(alloc)
        key = kp.tobytes() + sel.tobytes()
        deficit = float(np.max((target - rates) / np.maximum(target, 1.0), initial=0.0))
        visited.setdefault(key, (deficit, kp, sel))
        if best is not before:
            best_key = key
        dual = float(np.sum(value) - np.dot(nu, target))
        dual_best = min(dual_best, dual)
        history.append((it, float(rates.sum()), dual))
        if best is not None and not np.any(nu):
            break
        if best is not None and (dual_best - best[0]) <= opts.tol * abs(best[0]):
            break
        step = opts.tau0 / np.sqrt(it)
        nu = np.maximum(nu - step * (rates - target) / n_f, 0.0)
        if np.max(nu) > opts.nu_cap:
            break

    # Primal recovery: re-solve the powers of the most promising schedules
    # under the rate constraints.
    ranked = sorted(visited.items(), key=lambda kv: kv[1][0])
    keys = ([best_key] if best_key is not None else []) + \
        [k for k, v in ranked[:opts.polish] if v[0] > 0.0 and k != best_key]
    for key in keys[:opts.polish + 1]:
        _, kp, sel = visited[key]
        fixed = _polish(gains, kp, sel, sigma2, p_max, target)
        if fixed is not None:
            consider(fixed)
    moves = n_slots * (n_f + 1) * (n_users - 1)
    if visited and 0 < moves <= opts.local_moves and not opts.tdma:
        starts = [visited[k] for k in keys[:1]] + [next(iter(visited.values()))]
        for _, kp, sel in starts:
            found = _local_search(gains, kp, sel, sigma2, p_max, target)
            if found is not None:
                consider(found)
    if best is None:
        raise Infeasible("no allocation meeting the minimum rates was found")
    obj, alloc, rates = best
    return RaResult(alloc, obj, rates, nu, dual_best, it, history)


def solve_subproblem1(trajectory: ArrayLike, partition: ModePartition, scenario: Scenario,
                      opts: RaOptions = RaOptions(), incumbent: Allocation | None = None
                      ) -> RaResult:
    """Schedule users, IRS and powers along a fixed trajectory of shape ``(N, 3)``."""
    gains = bound_gain_table(trajectory, partition, scenario, opts.bound)
    return allocate(gains, scenario.ofdm.sigma2, scenario.ofdm.p_max, scenario.r_min,
                    opts, incumbent)
