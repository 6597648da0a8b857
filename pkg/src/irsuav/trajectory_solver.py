"""UAV trajectory update for a fixed schedule by successive convex approximation.

The bounded gain of each scheduled term is ``A/v + B/w + C/sqrt(v w)`` in the
slacks ``v = d_ug**alpha`` and ``w = d_ur**2``.  The rate surrogate used
around an anchor ``(v0, w0)`` is

* the first-order Taylor expansion in ``(v, w)`` when ``C >= 0``.  The gain is
  then log-convex in the slacks, hence the rate is convex and the tangent
  plane is a global minorant;
* ``log2(1 + p * l / sigma2)`` with ``l`` the tangent plane of the gain in
  ``(v**-0.5, w**-0.5)`` when ``C < 0``.  In those coordinates the gain is a
  positive semidefinite quadratic form, so ``l`` never exceeds it.  The plain
  Taylor plane in ``(v, w)`` is not a minorant there (``taylor_rate`` keeps it
  for comparison).

Both pieces touch the true rate at the anchor with the same gradient, so every
accepted step increases the true lower-bound objective.  Slacks are kept at
their equality values.  Each convex step is solved over the waypoints by a
log-barrier Newton method whose Hessian is block tridiagonal along the
trajectory, with the minimum-rate surrogates as barrier terms.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike

from .bounds import ModePartition, bound_gain_table, coeff_tables, slacks_from_positions
from .errors import SubproblemInfeasible
from .ra_solver import Allocation, user_rates
from .scenario import Scenario, UavLimits, straight_line

__all__ = [
    "Trajectory",
    "SlackPoint",
    "ScaOptions",
    "ScaTerms",
    "project_chain_box",
    "make_feasible",
    "true_rate",
    "taylor_rate",
    "surrogate_rate",
    "solve_sca_step",
    "solve_subproblem2",
    "TrajectoryResult",
]

log = logging.getLogger(__name__)
LN2 = np.log(2.0)


@dataclass(frozen=True)
class Trajectory:
    """``N`` served positions; the first and last equal the fixed endpoints."""

    positions: np.ndarray
    limits: UavLimits

    @classmethod
    def straight(cls, limits: UavLimits) -> "Trajectory":
        return cls(straight_line(limits), limits)

    def violations(self) -> dict:
        q, lim = self.positions, self.limits
        steps = np.linalg.norm(np.diff(q, axis=0), axis=1)
        return {
            "speed": float(np.max(steps - lim.step, initial=0.0)),
            "start": float(np.max(np.abs(q[0] - lim.q_initial))),
            "end": float(np.max(np.abs(q[-1] - lim.q_final))),
            "z_low": float(np.max(lim.z_min - q[1:-1, 2], initial=0.0)),
            "z_high": float(np.max(q[1:-1, 2] - lim.z_max, initial=0.0)),
        }

    def is_feasible(self) -> bool:
        return all(v <= 0.0 for v in self.violations().values())


class SlackPoint(NamedTuple):
    v_ug: np.ndarray
    v_ur: np.ndarray


@dataclass(frozen=True)
class ScaOptions:
    tol: float = 1e-4
    max_iter: int = 30
    inner_tol: float = 1e-7
    freeze_altitude: bool = False
    projection_passes: int = 50
    projection_tol: float = 1e-8
    bound: str = "lb"
    r_min_scale: float = 1.0


# --------------------------------------------------------------------------- #
# Feasible set
# --------------------------------------------------------------------------- #

def _box(limits: UavLimits, freeze: bool) -> tuple[float, float]:
    return (limits.z_min, limits.z_min) if freeze else (limits.z_min, limits.z_max)


def _pair_project(a: np.ndarray, b: np.ndarray, r: float, fix_a: np.ndarray,
                  fix_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Project pairs ``(a, b)`` onto ``|a - b| <= r`` (vectorized over rows)."""
    diff = b - a
    nrm = np.linalg.norm(diff, axis=1)
    over = nrm > r
    if not np.any(over):
        return a, b
    excess = np.where(over, nrm - r, 0.0)[:, None] * diff / np.where(over, nrm, 1.0)[:, None]
    wa = np.where(fix_a, 0.0, np.where(fix_b, 1.0, 0.5))[:, None]
    wb = np.where(fix_b, 0.0, np.where(fix_a, 1.0, 0.5))[:, None]
    return a + wa * excess, b - wb * excess


def project_chain_box(q: np.ndarray, limits: UavLimits, freeze_altitude: bool = False,
                      passes: int = 50, tol: float = 1e-8) -> np.ndarray:
    """Approximate Euclidean projection onto the speed chain and altitude box.

    Dykstra's alternating projection over three sets: even pairs, odd pairs
    and the altitude box, with the two endpoints pinned.  If the passes end
    slightly outside the set, the result is pulled back towards the straight
    line so the returned trajectory is always feasible when the line is.
    """
    q = np.array(q, float)
    n = q.shape[0]
    q[0], q[-1] = limits.q_initial, limits.q_final
    # A small inward margin keeps the approximate projection strictly feasible.
    r = limits.step * (1.0 - 1e-7)
    zlo, zhi = _box(limits, freeze_altitude)
    fixed = np.zeros(n, bool)
    fixed[[0, -1]] = True
    incs = [np.zeros_like(q) for _ in range(3)]

    def proj_pairs(x, start):
        x = x.copy()
        i = np.arange(start, n - 1, 2)
        if i.size:
            a, b = _pair_project(x[i], x[i + 1], r, fixed[i], fixed[i + 1])
            x[i], x[i + 1] = a, b
        return x

    def proj_box(x):
        x = x.copy()
        x[1:-1, 2] = np.clip(x[1:-1, 2], zlo, zhi)
        return x

    ops = (lambda x: proj_pairs(x, 0), lambda x: proj_pairs(x, 1), proj_box)
    for _ in range(passes):
        prev = q
        for j, op in enumerate(ops):
            y = op(q + incs[j])
            incs[j] = q + incs[j] - y
            q = y
        if np.max(np.abs(q - prev)) < tol:
            break
    if not _feasible(q, limits, freeze_altitude):
        # Dykstra stops short of exact feasibility; pull back towards the line.
        line = straight_line(limits)
        line[1:-1, 2] = np.clip(line[1:-1, 2], zlo, zhi)
        if _feasible(line, limits, freeze_altitude):
            q = make_feasible(q, line, limits, freeze_altitude)
    return q


def _feasible(q: np.ndarray, limits: UavLimits, freeze: bool) -> bool:
    zlo, zhi = _box(limits, freeze)
    steps = np.linalg.norm(np.diff(q, axis=0), axis=1)
    inner = q[1:-1, 2]
    return bool(np.all(steps <= limits.step) and np.all(inner >= zlo) and np.all(inner <= zhi)
                and np.array_equal(q[0], limits.q_initial)
                and np.array_equal(q[-1], limits.q_final))


def make_feasible(q: np.ndarray, anchor: np.ndarray, limits: UavLimits,
                  freeze_altitude: bool = False) -> np.ndarray:
    """Largest step from a feasible ``anchor`` towards ``q`` that stays feasible."""
    if _feasible(q, limits, freeze_altitude):
        return q
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _feasible(anchor + mid * (q - anchor), limits, freeze_altitude):
            lo = mid
        else:
            hi = mid
    return anchor + lo * (q - anchor)


def _nudge(q: np.ndarray, scenario: Scenario) -> np.ndarray:
    """Shift waypoints sitting exactly above the IRS by 1e-6 m (the arrival
    angles at the IRS are undefined there)."""
    q = q.copy()
    above = np.all(q[1:-1, :2] == scenario.irs.location[:2], axis=1)
    q[1:-1][above, 0] += 1e-6
    return q


# --------------------------------------------------------------------------- #
# Surrogate terms
# --------------------------------------------------------------------------- #

@dataclass
class ScaTerms:
    """Flattened list of scheduled terms with their gain coefficients."""

    k: np.ndarray
    n: np.ndarray
    p: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    sigma2: float
    n_users: int
    n_slots: int

    @classmethod
    def build(cls, allocation: Allocation, partition: ModePartition, scenario: Scenario,
              bound: str = "lb") -> "ScaTerms":
        tables = coeff_tables(scenario, partition.alpha)
        c_full = tables.c(partition, bound)
        k, i, n = np.nonzero(allocation.u & (allocation.p > 0))
        kp = allocation.irs_user[n]
        return cls(k=k, n=n, p=allocation.p[k, i, n], a=tables.a[k], b=tables.b[kp, k],
                   c=c_full[kp, k, i], sigma2=scenario.ofdm.sigma2,
                   n_users=allocation.u.shape[0], n_slots=allocation.u.shape[2])

    def slacks(self, sp: SlackPoint) -> tuple[np.ndarray, np.ndarray]:
        return sp.v_ug[self.k, self.n], sp.v_ur[self.n]

    def gain(self, v, w):
        return self.a / v + self.b / w + self.c / np.sqrt(v * w)

    def per_user(self, values: np.ndarray) -> np.ndarray:
        """Sum term values into ``[k, n]`` per-slot rates."""
        out = np.zeros(self.n_users * self.n_slots)
        np.add.at(out, self.k * self.n_slots + self.n, values)
        return out.reshape(self.n_users, self.n_slots)


def _term_rates(terms: ScaTerms, v, w) -> np.ndarray:
    g = np.maximum(terms.gain(v, w), 0.0)
    return np.log2(1.0 + terms.p * g / terms.sigma2)


def true_rate(terms: ScaTerms, sp: SlackPoint) -> np.ndarray:
    """Lower-bound rates ``[k, n]`` evaluated at arbitrary slacks."""
    return terms.per_user(_term_rates(terms, *terms.slacks(sp)))


class _Expansion(NamedTuple):
    f0: np.ndarray
    fv: np.ndarray
    fw: np.ndarray
    v0: np.ndarray
    w0: np.ndarray
    g0: np.ndarray
    ga: np.ndarray
    gb: np.ndarray
    convex: np.ndarray


def _expand(terms: ScaTerms, anchor: SlackPoint) -> _Expansion:
    v0, w0 = terms.slacks(anchor)
    g0 = terms.gain(v0, w0)
    snr = terms.p / terms.sigma2
    scale = snr / (LN2 * (1.0 + snr * g0))
    dgv = -terms.a / v0 ** 2 - 0.5 * terms.c / (v0 ** 1.5 * np.sqrt(w0))
    dgw = -terms.b / w0 ** 2 - 0.5 * terms.c / (np.sqrt(v0) * w0 ** 1.5)
    a0, b0 = v0 ** -0.5, w0 ** -0.5
    ga = 2.0 * terms.a * a0 + terms.c * b0
    gb = 2.0 * terms.b * b0 + terms.c * a0
    return _Expansion(np.log2(1.0 + snr * g0), scale * dgv, scale * dgw, v0, w0, g0, ga, gb,
                      terms.c >= 0.0)


def taylor_rate(terms: ScaTerms, sp: SlackPoint, anchor: SlackPoint) -> np.ndarray:
    """First-order Taylor expansion of every term in ``(v, w)``, summed to ``[k, n]``."""
    e = _expand(terms, anchor)
    v, w = terms.slacks(sp)
    return terms.per_user(e.f0 + e.fv * (v - e.v0) + e.fw * (w - e.w0))


def _surrogate_terms(terms: ScaTerms, e: _Expansion, v, w, grad: bool = False):
    lin = e.f0 + e.fv * (v - e.v0) + e.fw * (w - e.w0)
    a, b = v ** -0.5, w ** -0.5
    l = e.g0 + e.ga * (a - e.v0 ** -0.5) + e.gb * (b - e.w0 ** -0.5)
    lpos = np.maximum(l, 0.0)
    snr = terms.p / terms.sigma2
    quad = np.log2(1.0 + snr * lpos)
    val = np.where(e.convex, lin, quad)
    if not grad:
        return val
    s = np.where(l > 0.0, snr / (LN2 * (1.0 + snr * lpos)), 0.0)
    dv = np.where(e.convex, e.fv, s * e.ga * (-0.5) * v ** -1.5)
    dw = np.where(e.convex, e.fw, s * e.gb * (-0.5) * w ** -1.5)
    return val, dv, dw


def surrogate_rate(terms: ScaTerms, sp: SlackPoint, anchor: SlackPoint) -> np.ndarray:
    """Surrogate rates ``[k, n]`` around ``anchor``; never above ``true_rate``."""
    e = _expand(terms, anchor)
    return terms.per_user(_surrogate_terms(terms, e, *terms.slacks(sp)))


# --------------------------------------------------------------------------- #
# Solvers
# --------------------------------------------------------------------------- #

def _slack_point(q: np.ndarray, scenario: Scenario) -> SlackPoint:
    return SlackPoint(*slacks_from_positions(q, scenario))


def _dist_derivs(q: np.ndarray, centre: np.ndarray, power: float):
    """Value, gradient and Hessian of ``|q - centre|**power`` row by row."""
    diff = q - centre
    rho2 = np.sum(diff * diff, axis=1)
    val = rho2 ** (power / 2.0)
    c1 = power * rho2 ** (power / 2.0 - 1.0)
    grad = c1[:, None] * diff
    c2 = power * (power - 2.0) * rho2 ** (power / 2.0 - 2.0)
    hess = (c1[:, None, None] * np.eye(3)[None]
            + c2[:, None, None] * diff[:, :, None] * diff[:, None, :])
    return val, grad, hess


class _SurrogateModel:
    """Surrogate rate terms as functions of the waypoints, with derivatives."""

    def __init__(self, terms: ScaTerms, anchor: SlackPoint, scenario: Scenario):
        self.t = terms
        self.e = _expand(terms, anchor)
        self.users = np.stack([u.location for u in scenario.users])
        self.alpha = np.array([u.alpha_ug for u in scenario.users])[terms.k]
        self.irs = scenario.irs.location
        self.snr = terms.p / terms.sigma2

    def rates(self, q: np.ndarray) -> np.ndarray:
        """Per-user surrogate rates ``mean_n R_k[n]``."""
        t = self.t
        qn = q[t.n]
        v = np.sum((qn - self.users[t.k]) ** 2, axis=1) ** (self.alpha / 2.0)
        w = np.sum((qn - self.irs) ** 2, axis=1)
        return t.per_user(_surrogate_terms(t, self.e, v, w)).mean(axis=1)

    def derivatives(self, q: np.ndarray, weights: np.ndarray):
        """Per-user rates, per-user gradients ``[k, N, 3]`` and the weighted
        per-slot Hessian ``[N, 3, 3]`` of ``sum_k weights[k] * rate_k``."""
        t, e = self.t, self.e
        qn = q[t.n]
        v, dv, hv = _dist_derivs(qn, self.users[t.k], self.alpha)
        w, dw, hw = _dist_derivs(qn, self.irs, 2.0)
        val = _surrogate_terms(t, e, v, w)
        conv = e.convex
        # Taylor pieces: linear in (v, w).
        grad = np.where(conv[:, None], e.fv[:, None] * dv + e.fw[:, None] * dw, 0.0)
        hess = np.where(conv[:, None, None],
                        e.fv[:, None, None] * hv + e.fw[:, None, None] * hw, 0.0)
        # Quadratic-tangent pieces: log2(1 + snr * l(a, b)).
        nq = ~conv
        if np.any(nq):
            a, da, ha = _dist_derivs(qn[nq], self.users[t.k[nq]], -self.alpha[nq] / 2.0)
            b, db, hb = _dist_derivs(qn[nq], self.irs, -1.0)
            ga, gb = e.ga[nq], e.gb[nq]
            l = e.g0[nq] + ga * (a - e.v0[nq] ** -0.5) + gb * (b - e.w0[nq] ** -0.5)
            live = l > 0.0
            snr = self.snr[nq]
            big_l = 1.0 + snr * np.maximum(l, 0.0)
            dl = ga[:, None] * da + gb[:, None] * db
            hl = ga[:, None, None] * ha + gb[:, None, None] * hb
            c = np.where(live, snr / (LN2 * big_l), 0.0)
            c2 = np.where(live, snr ** 2 / (LN2 * big_l ** 2), 0.0)
            grad[nq] = c[:, None] * dl
            hess[nq] = c[:, None, None] * hl - c2[:, None, None] * dl[:, :, None] * dl[:, None, :]
        n_slots = t.n_slots
        rates = t.per_user(val).mean(axis=1)
        g_user = np.zeros((t.n_users, n_slots, 3))
        np.add.at(g_user, (t.k, t.n), grad / n_slots)
        h_slot = np.zeros((n_slots, 3, 3))
        np.add.at(h_slot, t.n, (weights[t.k] / n_slots)[:, None, None] * hess)
        return rates, g_user, h_slot


def _psd_part(blocks: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Clip the eigenvalues of symmetric 3x3 blocks from below."""
    sym = 0.5 * (blocks + np.swapaxes(blocks, 1, 2))
    lam, vec = np.linalg.eigh(sym)
    lam = np.maximum(lam, floor)
    return np.einsum("nij,nj,nkj->nik", vec, lam, vec)


class _BarrierProblem:
    """Log-barrier formulation of the surrogate maximization.

    Minimizes ``-t * J(q) - sum log(r^2 - |dq|^2) - sum log(z box)
    - sum_k log(R_k(q) - target_k)`` over the interior waypoints.
    """

    def __init__(self, model: _SurrogateModel, limits: UavLimits, target: np.ndarray,
                 freeze: bool):
        self.m = model
        self.lim = limits
        self.r2 = limits.step ** 2
        self.zlo, self.zhi = limits.z_min, limits.z_max
        self.freeze = freeze or self.zlo == self.zhi
        self.target = target
        self.active = target > 0.0
        self.dims = 2 if self.freeze else 3
        self.n_constraints = (limits.n_slots - 1 + (0 if self.freeze else 2 * (limits.n_slots - 2))
                              + int(self.active.sum()))

    def slacks(self, q):
        e = np.diff(q, axis=0)
        chain = self.r2 - np.sum(e * e, axis=1)
        z = q[1:-1, 2]
        rates = self.m.rates(q)
        return chain, z - self.zlo, self.zhi - z, rates - self.target, rates

    def strictly_feasible(self, q) -> bool:
        chain, zl, zh, rs, _ = self.slacks(q)
        ok = np.all(chain > 0.0) and np.all(rs[self.active] > 0.0)
        if not self.freeze:
            ok = ok and np.all(zl > 0.0) and np.all(zh > 0.0)
        return bool(ok)

    def value(self, q, t):
        chain, zl, zh, rs, rates = self.slacks(q)
        f = -t * rates.sum() - np.sum(np.log(chain)) - np.sum(np.log(rs[self.active]))
        if not self.freeze:
            f -= np.sum(np.log(zl)) + np.sum(np.log(zh))
        return float(f)

    def newton_step(self, q, t):
        """Newton direction on the interior waypoints (shape ``[N, 3]``)."""
        n = q.shape[0]
        chain, zl, zh, rs, _ = self.slacks(q)
        inv_s = np.where(self.active, 1.0 / np.where(self.active, rs, 1.0), 0.0)
        weights = t + inv_s
        _, g_user, h_obj = self.m.derivatives(q, weights)
        grad = -np.einsum("k,knd->nd", weights, g_user)
        hdiag = _psd_part(-h_obj)
        # Chain barrier.
        e = np.diff(q, axis=0)
        ge = 2.0 * e / chain[:, None]
        grad[1:] += ge
        grad[:-1] -= ge
        he = (4.0 * e[:, :, None] * e[:, None, :] / chain[:, None, None] ** 2
              + 2.0 * np.eye(3)[None] / chain[:, None, None])
        hdiag[1:] += he
        hdiag[:-1] += he
        hoff = -he                                   # block (j, j+1)
        if not self.freeze:
            grad[1:-1, 2] += -1.0 / zl + 1.0 / zh
            hdiag[1:-1, 2, 2] += 1.0 / zl ** 2 + 1.0 / zh ** 2
        d = self.dims
        inner = slice(1, n - 1)
        hd = hdiag[inner][:, :d, :d]
        ho = hoff[1:n - 2][:, :d, :d]
        gv = grad[inner][:, :d].ravel()
        # Low-rank part from the minimum-rate barrier.
        u = (g_user[self.active][:, inner, :d] * inv_s[self.active][:, None, None]).reshape(
            int(self.active.sum()), (n - 2) * d).T
        step = _solve_block_tridiag(hd, ho, -gv, u)
        out = np.zeros_like(q)
        out[inner, :d] = step.reshape(-1, d)
        return out, float(-np.dot(gv, step))


def _solve_block_tridiag(diag: np.ndarray, off: np.ndarray, rhs: np.ndarray,
                         u: np.ndarray) -> np.ndarray:
    """Solve ``(T + U U^T) x = rhs`` with ``T`` symmetric block tridiagonal."""
    from scipy.linalg import solveh_banded

    m, d, _ = diag.shape
    size = m * d
    bw = 2 * d - 1
    ab = np.zeros((bw + 1, size))
    # Lower banded storage: ab[i - j, j] = T[i, j] for i >= j.
    for b in range(m):
        for i in range(d):
            for j in range(i + 1):
                ab[i - j, b * d + j] = diag[b, i, j]
    for b in range(m - 1):
        for i in range(d):
            for j in range(d):
                row, col = (b + 1) * d + i, b * d + j
                ab[row - col, col] = off[b, j, i]
    rhs_all = np.column_stack([rhs, u]) if u.size else rhs[:, None]
    try:
        sol = solveh_banded(ab, rhs_all, lower=True)
    except np.linalg.LinAlgError:
        ab[0] += 1e-12 * np.max(np.abs(ab[0])) + 1e-300
        sol = solveh_banded(ab, rhs_all, lower=True)
    x = sol[:, 0]
    if u.size:
        z = sol[:, 1:]
        small = np.eye(u.shape[1]) + u.T @ z
        x = x - z @ np.linalg.solve(small, u.T @ x)
    return x


def _strict_start(q: np.ndarray, limits: UavLimits, freeze: bool) -> np.ndarray | None:
    """Move the anchor slightly inside the chain and altitude constraints."""
    line = straight_line(limits)
    if not np.all(np.linalg.norm(np.diff(line, axis=0), axis=1) < limits.step):
        return None
    q = q.copy()
    if freeze or limits.z_min == limits.z_max:
        q[1:-1, 2] = limits.z_min
        line[:, 2] = limits.z_min
    for eps in (1e-6, 1e-4, 1e-2, 0.1, 0.5, 1.0):
        cand = (1.0 - eps) * q + eps * line
        if not (freeze or limits.z_min == limits.z_max):
            span = limits.z_max - limits.z_min
            cand[1:-1, 2] = np.clip(cand[1:-1, 2], limits.z_min + 1e-6 * span,
                                    limits.z_max - 1e-6 * span)
        if np.all(np.linalg.norm(np.diff(cand, axis=0), axis=1) < limits.step):
            return cand
    return None


def _max_step(q: np.ndarray, step: np.ndarray, prob: "_BarrierProblem") -> float:
    """Largest ``s <= 1`` keeping the chain and altitude slacks positive."""
    e, de = np.diff(q, axis=0), np.diff(step, axis=0)
    a = np.sum(de * de, axis=1)
    b = 2.0 * np.sum(e * de, axis=1)
    c = np.sum(e * e, axis=1) - prob.r2
    with np.errstate(divide="ignore", invalid="ignore"):
        root = (-b + np.sqrt(np.maximum(b * b - 4.0 * a * c, 0.0))) / (2.0 * a)
    s = float(np.min(root[a > 0], initial=np.inf))
    if not prob.freeze:
        z, dz = q[1:-1, 2], step[1:-1, 2]
        with np.errstate(divide="ignore"):
            s = min(s, float(np.min(np.where(dz < 0, (prob.zlo - z) / dz, np.inf), initial=np.inf)),
                    float(np.min(np.where(dz > 0, (prob.zhi - z) / dz, np.inf), initial=np.inf)))
    return min(1.0, 0.99 * s)


def _barrier_solve(prob: _BarrierProblem, q: np.ndarray, scale: float,
                   rel_gap: float = 1e-7, mu: float = 20.0, stats: list | None = None
                   ) -> np.ndarray:
    t = max(prob.n_constraints, 1) / max(1e-2 * scale, 1e-300)
    while True:
        steps = backtracks = 0
        for _ in range(100):
            step, dec = prob.newton_step(q, t)
            if dec / 2.0 <= 1e-8:
                break
            f0 = prob.value(q, t)
            s = _max_step(q, step, prob)
            while s > 1e-14:
                trial = q + s * step
                if prob.strictly_feasible(trial) and prob.value(trial, t) <= f0 - 0.25 * s * dec:
                    break
                s *= 0.5
                backtracks += 1
            else:
                break
            q = trial
            steps += 1
        if stats is not None:
            stats.append((t, steps, backtracks))
        if prob.n_constraints / t < rel_gap * scale:
            return q
        t *= mu


def solve_sca_step(anchor_q: np.ndarray, limits: UavLimits, allocation: Allocation,
                   partition: ModePartition, scenario: Scenario,
                   opts: ScaOptions = ScaOptions(), terms: ScaTerms | None = None
                   ) -> tuple[Trajectory, SlackPoint, float]:
    """Maximize the surrogate around the anchor trajectory.

    Returns the new trajectory, its equality slacks and the surrogate value
    of the aggregate rate.  Raises ``SubproblemInfeasible`` if the anchor
    misses the minimum rates (the surrogate equals the true rate there).
    """
    terms = terms or ScaTerms.build(allocation, partition, scenario, opts.bound)
    q0 = np.array(anchor_q, float)
    anchor = _slack_point(q0, scenario)
    model = _SurrogateModel(terms, anchor, scenario)
    target = scenario.r_min * opts.r_min_scale * scenario.ofdm.n_f
    r0 = model.rates(q0)
    tol_r = 1e-9 * np.maximum(target, 1.0)
    if np.any(r0 < target - tol_r):
        raise SubproblemInfeasible("anchor violates the minimum-rate constraints")
    f0 = float(r0.sum())
    if terms.k.size == 0:
        return Trajectory(q0, limits), anchor, f0
    # Tight rate constraints at the anchor get a hair of room for the barrier.
    eff_target = np.where(target > 0, np.minimum(target, r0 - tol_r), 0.0)
    prob = _BarrierProblem(model, limits, eff_target, opts.freeze_altitude)
    start = _strict_start(q0, limits, opts.freeze_altitude)
    if start is None or not prob.strictly_feasible(start):
        return Trajectory(q0, limits), anchor, f0
    q = _barrier_solve(prob, start, scale=max(abs(f0), 1e-12), rel_gap=opts.inner_tol)
    q = _nudge(q, scenario)
    f = float(model.rates(q).sum())
    if f < f0 or not _feasible(q, limits, opts.freeze_altitude):
        return Trajectory(q0, limits), anchor, f0
    return Trajectory(q, limits), _slack_point(q, scenario), f


@dataclass
class TrajectoryResult:
    trajectory: Trajectory
    objective: float
    trace: list = field(default_factory=list)


def objective(q: np.ndarray, allocation: Allocation, partition: ModePartition,
              scenario: Scenario, bound: str = "lb") -> float:
    """True bounded aggregate rate ``mean_n sum_k R_k[n]`` along a trajectory."""
    gains = bound_gain_table(q, partition, scenario, bound)
    return float(user_rates(allocation, gains, scenario.ofdm.sigma2).mean(axis=1).sum())


def solve_subproblem2(allocation: Allocation, q_init: Trajectory, partition: ModePartition,
                      scenario: Scenario, opts: ScaOptions = ScaOptions()) -> TrajectoryResult:
    """Successive surrogate maximization until the relative gain drops below ``tol``."""
    terms = ScaTerms.build(allocation, partition, scenario, opts.bound)
    q = q_init.positions
    limits = q_init.limits
    f = objective(q, allocation, partition, scenario, opts.bound)
    trace = [f]
    if terms.k.size == 0:
        return TrajectoryResult(q_init, f, trace)
    for _ in range(opts.max_iter):
        traj, _, _ = solve_sca_step(q, limits, allocation, partition, scenario, opts, terms)
        f_new = objective(traj.positions, allocation, partition, scenario, opts.bound)
        if f_new < f:
            log.warning("surrogate step lowered the objective by %.3g; kept anchor", f - f_new)
            break
        rel = (f_new - f) / max(abs(f), 1e-300)
        q, f = traj.positions, f_new
        trace.append(f)
        if rel < opts.tol:
            break
    return TrajectoryResult(Trajectory(q, limits), f, trace)
