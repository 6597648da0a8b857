"""Alternating optimization of scheduling, power and trajectory.

The driver alternates the resource-allocation solve (fixed trajectory) with
the surrogate trajectory solve (fixed allocation), starting from the straight
line.  Companion entry points run the upper-bound variant, the baselines, the
approximation-parameter sweep and the IRS placement search.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .bounds import ModePartition, bound_gain_table, mode_partition
from .channel import los_gain_table
from .errors import Infeasible
from .ra_solver import Allocation, RaOptions, RaResult, solve_subproblem1, user_rates
from .scenario import Scenario, UavLimits, straight_line
from .trajectory_solver import ScaOptions, Trajectory, solve_subproblem2

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.14
ALPHA_GRID = tuple(np.round(np.arange(0.02, 0.2401, 0.02), 2))


@dataclass(frozen=True)
class PlannerOptions:
    """Knobs of the alternating driver.

    ``eps`` is the relative improvement over one round below which the driver
    stops; ``math.inf`` stops right after the first scheduling pass.
    """

    eps: float = 1e-3
    iter_max: int = 20
    bound: str = "lb"
    optimize_trajectory: bool = True
    freeze_altitude: bool = False
    tdma: bool = False
    bootstrap_rounds: int = 5
    bootstrap_bisections: int = 8
    ra: RaOptions = RaOptions()
    sca: ScaOptions = ScaOptions()
    workers: int = 1

    def ra_options(self, scale: float = 1.0) -> RaOptions:
        return replace(self.ra, bound=self.bound, tdma=self.tdma, r_min_scale=scale)

    def sca_options(self, scale: float = 1.0) -> ScaOptions:
        return replace(self.sca, bound=self.bound, freeze_altitude=self.freeze_altitude,
                       r_min_scale=scale)


@dataclass
class Solution:
    """Result of a planning run.

    ``lb_sum_rate`` is the aggregate objective (sum over subcarriers, mean over
    slots) under the bound the run optimized; ``per_user_rates`` are the
    per-subcarrier-normalized user rates, directly comparable to ``r_min``.
    """

    trajectory: Trajectory
    allocation: Allocation
    lb_sum_rate: float
    per_user_rates: np.ndarray
    iteration_trace: list[float]
    alpha: float
    bound: str = "lb"
    n_f: int = 1
    r_min_scale: float = 1.0
    bootstrap_trace: list[float] = field(default_factory=list)
    scenario: Scenario | None = None

    @property
    def los_sum_rate(self) -> float:
        """Sum rate of the plan on the exact composite LoS channel, per subcarrier."""
        return float(self.los_user_rates.sum())

    @property
    def los_user_rates(self) -> np.ndarray:
        sc = self.scenario
        if sc is None:
            raise ValueError("solution carries no scenario")
        gains = los_gain_table(self.trajectory.positions, sc.irs, list(sc.users), sc.ofdm)
        return user_rates(self.allocation, gains, sc.ofdm.sigma2).mean(axis=1) / sc.ofdm.n_f

    @property
    def normalized_sum_rate(self) -> float:
        return self.lb_sum_rate / self.n_f

    @property
    def per_user_aggregate(self) -> np.ndarray:
        return self.per_user_rates * self.n_f

    @property
    def feasible(self) -> bool:
        return self.r_min_scale >= 1.0


def evaluate(positions: np.ndarray, allocation: Allocation, partition: ModePartition,
             scenario: Scenario, bound: str = "lb") -> tuple[float, np.ndarray]:
    """Aggregate objective and per-user aggregate rates of a fixed plan."""
    gains = bound_gain_table(positions, partition, scenario, bound)
    rates = user_rates(allocation, gains, scenario.ofdm.sigma2).mean(axis=1)
    return float(rates.sum()), rates


def _feasible_scale(q: np.ndarray, partition: ModePartition, scenario: Scenario,
                    opts: PlannerOptions) -> tuple[float, RaResult]:
    """Largest minimum-rate scale in ``[0, 1]`` for which scheduling succeeds."""
    try:
        return 1.0, solve_subproblem1(q, partition, scenario, opts.ra_options(1.0))
    except Infeasible:
        pass
    if not np.any(scenario.r_min > 0):
        raise Infeasible("scheduling failed without minimum-rate constraints")
    lo, hi = 0.0, 1.0
    best = solve_subproblem1(q, partition, scenario, opts.ra_options(0.0))
    for _ in range(opts.bootstrap_bisections):
        mid = 0.5 * (lo + hi)
        try:
            best = solve_subproblem1(q, partition, scenario, opts.ra_options(mid))
            lo = mid
        except Infeasible:
            hi = mid
    return lo, best


def alternate(scenario: Scenario, alpha: float = DEFAULT_ALPHA,
              opts: PlannerOptions = PlannerOptions(),
              q_init: np.ndarray | None = None) -> Solution:
    """Alternate scheduling and trajectory solves until the gain stalls.

    The trace interleaves the objective after each scheduling pass (odd
    entries, 1-based) and after each trajectory pass (even entries).  A round
    is one trajectory pass followed by one scheduling pass.  Raises
    ``Infeasible`` when the minimum rates cannot be restored; the partial
    solution is attached to the exception as ``solution``.
    """
    partition = mode_partition(alpha, scenario.ofdm.n_f)
    limits = scenario.uav
    q = straight_line(limits) if q_init is None else np.array(q_init, float)

    scale, ra = _feasible_scale(q, partition, scenario, opts)
    alloc = ra.allocation
    bootstrap: list[float] = []
    if scale < 1.0:
        log.info("minimum rates scaled by %.4g to start", scale)
        start = max(scale, 1e-6)
        for j in range(1, opts.bootstrap_rounds + 1):
            bootstrap.append(ra.sum_rate)
            if opts.optimize_trajectory:
                tr = solve_subproblem2(alloc, Trajectory(q, limits), partition, scenario,
                                       opts.sca_options(scale))
                q = tr.trajectory.positions
                bootstrap.append(tr.objective)
            target = start ** (1.0 - j / opts.bootstrap_rounds)
            try:
                ra = solve_subproblem1(q, partition, scenario, opts.ra_options(target), alloc)
                scale, alloc = target, ra.allocation
            except Infeasible:
                ra = solve_subproblem1(q, partition, scenario, opts.ra_options(scale), alloc)
                alloc = ra.allocation
        if scale < 1.0:
            f, rates = evaluate(q, alloc, partition, scenario, opts.bound)
            sol = Solution(Trajectory(q, limits), alloc, f, rates / scenario.ofdm.n_f,
                           [f], alpha, opts.bound, scenario.ofdm.n_f, scale, bootstrap, scenario)
            err = Infeasible(f"minimum rates reachable only up to a factor {scale:.4g}")
            err.solution = sol
            raise err

    trace = [ra.sum_rate]
    if opts.optimize_trajectory and not math.isinf(opts.eps):
        for _ in range(opts.iter_max):
            start = trace[-1]
            tr = solve_subproblem2(alloc, Trajectory(q, limits), partition, scenario,
                                   opts.sca_options())
            q = tr.trajectory.positions
            trace.append(tr.objective)
            ra = solve_subproblem1(q, partition, scenario, opts.ra_options(), alloc)
            alloc = ra.allocation
            trace.append(ra.sum_rate)
            if trace[-1] - start <= opts.eps * abs(start):
                break
    f, rates = evaluate(q, alloc, partition, scenario, opts.bound)
    return Solution(Trajectory(q, limits), alloc, f, rates / scenario.ofdm.n_f, trace, alpha,
                    opts.bound, scenario.ofdm.n_f, 1.0, bootstrap, scenario)


def solve_proposed(scenario: Scenario, alpha: float = DEFAULT_ALPHA,
                   opts: PlannerOptions = PlannerOptions(),
                   starts: Sequence[str] = ("straight", "no_irs")) -> Solution:
    """Best of several alternation runs that differ only in the initial trajectory.

    ``"straight"`` is the straight line; ``"no_irs"`` is the trajectory the
    planner finds with the reflected path switched off.  The problem is not
    convex, so a second start guards against a poor local optimum.
    """
    best: Solution | None = None
    failure: Infeasible | None = None
    for start in starts:
        if start == "straight":
            q0 = None
        elif start == "no_irs":
            try:
                q0 = alternate(scenario.without_irs(), alpha, opts).trajectory.positions
            except Infeasible as exc:
                failure = exc
                continue
        else:
            raise ValueError(f"unknown start {start!r}")
        try:
            sol = alternate(scenario, alpha, opts, q_init=q0)
        except Infeasible as exc:
            failure = exc
            continue
        if best is None or sol.lb_sum_rate > best.lb_sum_rate:
            best = sol
    if best is None:
        raise failure or Infeasible("no start produced a feasible plan")
    return best


def solve_upper_bound(scenario: Scenario, alpha: float = DEFAULT_ALPHA,
                      opts: PlannerOptions = PlannerOptions()) -> Solution:
    """The same pipeline on the optimistic staircase gains (gap diagnostics only)."""
    return alternate(scenario, alpha, replace(opts, bound="ub"))


def baseline_straight_line(scenario: Scenario, alpha: float = DEFAULT_ALPHA,
                           opts: PlannerOptions = PlannerOptions()) -> Solution:
    """Scheduling and power only, on the fixed straight-line trajectory."""
    return alternate(scenario, alpha, replace(opts, optimize_trajectory=False, iter_max=1))


def baseline_no_irs(scenario: Scenario, alpha: float = DEFAULT_ALPHA,
                    opts: PlannerOptions = PlannerOptions()) -> Solution:
    """Full alternation with the reflected path switched off."""
    return alternate(scenario.without_irs(), alpha, opts)


def baseline_tdma(scenario: Scenario, alpha: float = DEFAULT_ALPHA,
                  opts: PlannerOptions = PlannerOptions()) -> Solution:
    """Full alternation with one user per slot on all subcarriers."""
    return alternate(scenario, alpha, replace(opts, tdma=True))


BASELINES: dict[str, Callable[..., Solution]] = {
    "1": baseline_straight_line,
    "2": baseline_no_irs,
    "tdma": baseline_tdma,
}


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class _AlphaJob:
    scenario: Scenario
    opts: PlannerOptions
    solver: Callable[[Scenario, float, str, PlannerOptions], float]

    def __call__(self, alpha: float) -> tuple[float, float, float]:
        lb = self.solver(self.scenario, alpha, "lb", self.opts)
        ub = self.solver(self.scenario, alpha, "ub", self.opts)
        return float(alpha), lb, ub


def _alternate_rate(scenario: Scenario, alpha: float, bound: str,
                    opts: PlannerOptions) -> float:
    try:
        return alternate(scenario, alpha, replace(opts, bound=bound)).lb_sum_rate
    except Infeasible:
        return math.nan


def sweep_alpha(scenario: Scenario, grid: Iterable[float] = ALPHA_GRID,
                opts: PlannerOptions = PlannerOptions(),
                solver: Callable[[Scenario, float, str, PlannerOptions], float] = _alternate_rate
                ) -> tuple[float, list[tuple[float, float, float]]]:
    """Best approximation parameter by the lower-bound rate, with both curves.

    ``solver(scenario, alpha, bound, opts)`` returns an aggregate rate (``nan``
    when infeasible); the default runs the full alternation.
    """
    grid = [float(a) for a in grid]
    for a in grid:
        mode_partition(a, scenario.ofdm.n_f)          # validates the range
    curve = _map(_AlphaJob(scenario, opts, solver), grid, opts.workers)
    lbs = np.array([c[1] for c in curve])
    if np.all(np.isnan(lbs)):
        raise Infeasible("no approximation parameter on the grid is feasible")
    return curve[int(np.nanargmax(lbs))][0], curve


# --------------------------------------------------------------------------- #
# Single intermediate waypoint, solved by enumeration
# --------------------------------------------------------------------------- #

def waypoint_grid(limits: UavLimits, spacing: float = 10.0) -> np.ndarray:
    """Grid points at minimum altitude reachable from both endpoints in one slot."""
    if limits.n_slots != 3:
        raise ValueError("the enumeration needs exactly one intermediate waypoint")
    a, b = limits.q_initial, limits.q_final
    r = limits.step
    lo = np.minimum(a[:2], b[:2]) - r
    hi = np.maximum(a[:2], b[:2]) + r
    xs = np.arange(np.ceil(lo[0] / spacing), np.floor(hi[0] / spacing) + 1) * spacing
    ys = np.arange(np.ceil(lo[1] / spacing), np.floor(hi[1] / spacing) + 1) * spacing
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, limits.z_min)])
    ok = ((np.linalg.norm(pts - a, axis=1) <= r) & (np.linalg.norm(pts - b, axis=1) <= r))
    return pts[ok]


def exhaustive_midpoint(scenario: Scenario, alpha: float, bound: str = "lb",
                        spacing: float = 10.0, ra: RaOptions = RaOptions()) -> Solution:
    """Best single waypoint on a grid, scheduling solved at every candidate."""
    limits = scenario.uav
    partition = mode_partition(alpha, scenario.ofdm.n_f)
    opts = replace(ra, bound=bound)
    best: tuple[float, np.ndarray, RaResult] | None = None
    for w in waypoint_grid(limits, spacing):
        q = np.stack([limits.q_initial, w, limits.q_final])
        try:
            res = solve_subproblem1(q, partition, scenario, opts)
        except Infeasible:
            continue
        if best is None or res.sum_rate > best[0]:
            best = (res.sum_rate, q, res)
    if best is None:
        raise Infeasible("no grid waypoint meets the minimum rates")
    f, q, res = best
    return Solution(Trajectory(q, limits), res.allocation, f, res.user_rates / scenario.ofdm.n_f,
                    [f], alpha, bound, scenario.ofdm.n_f, scenario=scenario)


def exhaustive_rate(scenario: Scenario, alpha: float, bound: str,
                    opts: PlannerOptions = PlannerOptions()) -> float:
    """Solver hook for ``sweep_alpha`` on three-slot scenarios."""
    try:
        return exhaustive_midpoint(scenario, alpha, bound, ra=opts.ra).lb_sum_rate
    except Infeasible:
        return math.nan


# --------------------------------------------------------------------------- #
# IRS placement
# --------------------------------------------------------------------------- #

def boundary_grid(x_range: tuple[float, float], y_range: tuple[float, float],
                  spacing: float) -> np.ndarray:
    """Horizontal candidate points along the edge of a rectangular area."""
    x0, x1 = x_range
    y0, y1 = y_range
    xs = np.arange(x0, x1 + 1e-9, spacing)
    ys = np.arange(y0, y1 + 1e-9, spacing)
    pts = [(x, y0) for x in xs] + [(x1, y) for y in ys] + [(x, y1) for x in xs[::-1]] \
        + [(x0, y) for y in ys[::-1]]
    return np.unique(np.round(np.array(pts, float), 9), axis=0)


@dataclass(frozen=True)
class _PlacementJob:
    scenario: Scenario
    alpha: float
    opts: PlannerOptions

    def __call__(self, xy) -> float:
        loc = (float(xy[0]), float(xy[1]), float(self.scenario.irs.location[2]))
        try:
            sc = self.scenario.with_irs(location=np.array(loc))
            return alternate(sc, self.alpha, self.opts).lb_sum_rate
        except Infeasible:
            return math.nan


def irs_placement_search(scenario: Scenario, boundary: Iterable[Sequence[float]],
                         alpha: float = DEFAULT_ALPHA,
                         opts: PlannerOptions = PlannerOptions()
                         ) -> tuple[np.ndarray, list[tuple[float, float, float]]]:
    """Run the planner for every horizontal IRS candidate at the current height.

    Returns the best ``(x, y, H)`` location and the map ``[(x, y, rate)]``.
    """
    cands = [tuple(map(float, xy[:2])) for xy in boundary]
    if not cands:
        raise ValueError("empty candidate list")
    rates = _map(_PlacementJob(scenario, alpha, opts), cands, opts.workers)
    rate_map = [(x, y, r) for (x, y), r in zip(cands, rates)]
    arr = np.array(rates, float)
    if np.all(np.isnan(arr)):
        raise Infeasible("no candidate IRS location is feasible")
    x, y = cands[int(np.nanargmax(arr))]
    return np.array([x, y, scenario.irs.location[2]]), rate_map
