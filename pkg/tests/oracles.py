"""Independent reference solvers used by the tests."""

import itertools
import math

import numpy as np
from scipy.optimize import brentq, minimize


def waterfill_bisect(gains, sigma2, budget, weights=None):
    """Weighted water-filling ``max sum w_j log2(1 + p_j g_j / sigma2)`` by root finding."""
    g = np.asarray(gains, float)
    w = np.ones_like(g) if weights is None else np.asarray(weights, float)
    if budget <= 0 or not np.any(g > 0):
        return np.zeros_like(g)
    floor = np.where(g > 0, sigma2 / np.where(g > 0, g, 1), np.inf)

    def excess(mu):
        return np.sum(np.maximum(w * mu - floor, 0.0)) - budget

    hi = (budget + np.min(floor)) / np.min(w[g > 0])
    while excess(hi) < 0:
        hi *= 2
    mu = brentq(excess, 0.0, hi, xtol=1e-300, rtol=1e-15, maxiter=500)
    return np.maximum(w * mu - floor, 0.0)


def rate(p, g, sigma2):
    return float(np.sum(np.log2(1.0 + np.asarray(p) * np.asarray(g) / sigma2)))


def constrained_powers(g, owners, n_users, sigma2, p_max, target):
    """Sum-rate optimal powers for fixed owners with per-user rate targets (SLSQP).

    Returns the best sum rate, or ``-inf`` when no feasible point was found.
    """
    g = np.asarray(g, float)
    owners = np.asarray(owners)
    snr = g / sigma2

    def user_rate(p, k):
        return np.sum(np.log2(1.0 + p[owners == k] * snr[owners == k]))

    cons = [{"type": "ineq", "fun": lambda p: p_max - np.sum(p)}]
    cons += [{"type": "ineq", "fun": (lambda p, k=k: user_rate(p, k) - target)}
             for k in range(n_users)]
    best = -math.inf
    starts = [np.full(g.size, p_max / g.size)]
    for k in range(n_users):
        if np.any(owners == k):
            x = np.where(owners == k, p_max / np.sum(owners == k), 0.0)
            starts.append(0.999 * x + 0.001 * p_max / g.size)
    for x0 in starts:
        res = minimize(lambda p: -np.sum(np.log2(1.0 + p * snr)), x0, method="SLSQP",
                       bounds=[(0.0, p_max)] * g.size, constraints=cons,
                       options={"ftol": 1e-12, "maxiter": 500})
        p = np.clip(res.x, 0.0, None)
        p *= min(1.0, p_max / max(p.sum(), 1e-300))
        if all(user_rate(p, k) >= target - 1e-7 for k in range(n_users)):
            best = max(best, float(np.sum(np.log2(1.0 + p * snr))))
    return best


def enumerate_schedules(gains, sigma2, p_max, target=None):
    """Exhaustive search over IRS user and subcarrier owners for a single slot.

    ``gains[kp, k, i]``.  Without ``target`` every schedule is water-filled
    over its own subcarriers; with a target the powers of every schedule are
    optimized under the per-user rate constraints.
    """
    n_kp, n_k, n_f = gains.shape
    best = -math.inf
    for kp in range(n_kp):
        for owners in itertools.product(range(n_k), repeat=n_f):
            g = np.array([gains[kp, owners[i], i] for i in range(n_f)])
            if target is None:
                p = waterfill_bisect(g, sigma2, p_max)
                best = max(best, rate(p, g, sigma2))
            else:
                best = max(best, constrained_powers(g, owners, n_k, sigma2, p_max, target))
    return best


def power_grid_search(gains, sigma2, p_max, step=1e-3):
    """Two subcarriers, any owners and IRS user: grid over the power split."""
    n_kp, n_k, n_f = gains.shape
    assert n_f == 2
    fr = np.arange(0.0, 1.0 + step / 2, step)
    best = -math.inf
    for kp in range(n_kp):
        for owners in itertools.product(range(n_k), repeat=2):
            g0, g1 = gains[kp, owners[0], 0], gains[kp, owners[1], 1]
            val = (np.log2(1 + fr * p_max * g0 / sigma2)
                   + np.log2(1 + (1 - fr) * p_max * g1 / sigma2))
            best = max(best, float(val.max()))
    return best
