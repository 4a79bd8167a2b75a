"""Path-space action functionals, conditional rate functions (primal dynamic
programming and dual test-function forms), finite-dimensional projections, and
the dual-functional machinery used to recover rate functions from suprema.

The primal conditional rate restricts interior knots to grid nodes with
equally spaced knot times; convex running costs make piecewise-linear
interpolants near-optimal, and the knot count is an explicit convergence knob.
Coercive initial costs encode their infinite region with a large finite
sentinel; arithmetic with sentinel values saturates to +inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .grid import GridFunction, StateGrid
from .legendre import LagrangianModel

SENTINEL = 1e12
_SENTINEL_THRESHOLD = 1e11
_INF_COST = 1e30


@dataclass(frozen=True, eq=False)
class Path:
    """Piecewise-linear trajectory: strictly increasing knot times starting at
    0 and one state per knot."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.states, dtype=float)
        if t.ndim != 1 or t.size < 2 or s.shape != t.shape:
            raise ConfigurationError("a path needs >= 2 knots with matching states")
        if t[0] != 0.0:
            raise ConfigurationError("paths start at time 0")
        if np.any(np.diff(t) <= 0):
            raise ConfigurationError("knot times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(s))):
            raise ConfigurationError("knots must be finite")
        t, s = t.copy(), s.copy()
        t.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", s)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def velocities(self) -> np.ndarray:
        return np.diff(self.states) / np.diff(self.times)

    def at(self, t):
        """State at time t (linear between knots, clamped to the time range)."""
        return np.interp(t, self.times, self.states)

    def check_bounds(self, grid: StateGrid):
        if np.any(self.states < grid.lower) or np.any(self.states > grid.upper):
            raise ConfigurationError("path states leave the state grid")


@dataclass(eq=False)
class PathFunctional:
    """Initial cost plus integrated running cost along a trajectory.

    ``quadrature`` selects the per-segment rule (midpoint or trapezoid);
    ``subdivisions`` applies the rule compositely on each segment, which
    matters when the running cost oscillates on scales shorter than a segment.
    """

    initial_cost: GridFunction
    L: LagrangianModel
    horizon: float
    quadrature: str = "midpoint"
    subdivisions: int = 1

    def __post_init__(self):
        if self.quadrature not in ("midpoint", "trapezoid"):
            raise ConfigurationError("quadrature must be 'midpoint' or 'trapezoid'")
        if self.horizon <= 0:
            raise ConfigurationError("horizon must be positive")
        if self.subdivisions < 1:
            raise ConfigurationError("subdivisions must be >= 1")
        if float(np.min(self.initial_cost.values)) < 0:
            raise ConfigurationError("initial cost must be nonnegative")

    @property
    def grid(self) -> StateGrid:
        return self.initial_cost.grid

    def initial_at(self, x: float) -> float:
        """Initial cost at x, saturating to +inf at the coercive sentinel."""
        idx, frac, _ = self.grid.locate(x)
        v0 = self.initial_cost.values[int(idx)]
        v1 = self.initial_cost.values[int(idx) + 1]
        if max(v0, v1) >= _SENTINEL_THRESHOLD:
            return math.inf
        return float(v0 * (1.0 - frac) + v1 * frac)

    def segment_cost(self, x0, x1, dt_seg):
        """Composite quadrature of L along the straight segment x0 -> x1.

        Vectorized over (x0, x1) pairs; velocities outside the window cost
        +inf (the window is part of the model)."""
        x0 = np.asarray(x0, dtype=float)
        x1 = np.asarray(x1, dtype=float)
        v = (x1 - x0) / dt_seg
        s = self.subdivisions
        if self.quadrature == "midpoint":
            rel = (np.arange(s) + 0.5) / s
            weights = np.full(s, 1.0 / s)
        else:
            rel = np.arange(s + 1) / s
            weights = np.full(s + 1, 1.0 / s)
            weights[0] = weights[-1] = 0.5 / s
        pts = x0[..., None] + (x1 - x0)[..., None] * rel
        vals = self.L.evaluate(pts, v[..., None])
        cost = dt_seg * np.sum(vals * weights, axis=-1)
        return np.where(np.abs(v) > self.L.vmax, _INF_COST, cost)


def path_action(F: PathFunctional, path: Path) -> float:
    """Initial cost at the starting point plus the running-cost quadrature."""
    if path.horizon > F.horizon + 1e-12:
        raise ConfigurationError("path extends beyond the functional's horizon")
    path.check_bounds(F.grid)
    init = F.initial_at(float(path.states[0]))
    if math.isinf(init):
        return math.inf
    dts = np.diff(path.times)
    costs = np.array([
        float(F.segment_cost(path.states[i], path.states[i + 1], dts[i]))
        for i in range(len(dts))
    ])
    if np.any(costs >= _INF_COST / 2):
        return math.inf
    return float(init + costs.sum())


def _running_dp(F: PathFunctional, t: float, x: float, interior_knots: int):
    """Layered min-plus DP for the running cost from x, over paths whose
    interior knots live on grid nodes. Returns the cost-to-node vector at the
    final time layer."""
    if t <= 0:
        raise ConfigurationError("t must be positive")
    grid = F.grid
    if not (grid.lower <= x <= grid.upper):
        raise ConfigurationError(f"start point {x} outside the grid")
    k = int(interior_knots)
    dt_seg = t / (k + 1)
    xs = grid.xs
    dp = np.asarray(F.segment_cost(np.full(grid.nodes, x), xs, dt_seg))
    if k:
        cost = np.asarray(F.segment_cost(xs[:, None], xs[None, :], dt_seg))
        for _ in range(k):
            dp = np.min(dp[:, None] + cost, axis=0)
    return dp


def conditional_rate_profile(F: PathFunctional, t: float, x: float,
                             interior_knots: int = 3) -> np.ndarray:
    """Minimal running cost from x to every grid node in time t."""
    return _running_dp(F, t, x, interior_knots)


def conditional_rate_primal(F: PathFunctional, t: float, x: float, y: float,
                            interior_knots: int = 3) -> float:
    """Minimal running cost from x to y in time t over piecewise-linear paths
    with ``interior_knots`` grid-node knots at equally spaced times."""
    grid = F.grid
    if not (grid.lower <= y <= grid.upper):
        raise ConfigurationError(f"end point {y} outside the grid")
    k = int(interior_knots)
    dt_seg = t / (k + 1)
    if k == 0:
        val = float(F.segment_cost(np.asarray(x), np.asarray(y), t))
    else:
        dp = _running_dp(F, t * k / (k + 1), x, k - 1)
        val = float(np.min(dp + np.asarray(
            F.segment_cost(grid.xs, np.full(grid.nodes, y), dt_seg))))
    return math.inf if val >= _INF_COST / 2 else val


@dataclass(frozen=True)
class TestFamily:
    """Cone test functions f_m(z) = -m^2 min(|z - y|, cap) around a base point.

    They vanish at the base point, are nonpositive everywhere, and fall below
    -m outside the 1/m neighbourhood whenever m >= 1 and cap >= 1/m, which is
    exactly what the dual rate-function recovery needs from a family that
    isolates points.
    """

    base_point: float
    scales: tuple = (1.0, 2.0, 4.0, 8.0, 16.0)
    cap: float = 1.0

    def __post_init__(self):
        if self.cap <= 0 or not self.scales:
            raise ConfigurationError("TestFamily needs a positive cap and some scales")
        object.__setattr__(self, "scales", tuple(float(m) for m in self.scales))

    def member_values(self, xs, m: float) -> np.ndarray:
        return -m * m * np.minimum(np.abs(np.asarray(xs, dtype=float) - self.base_point), self.cap)

    def member(self, grid: StateGrid, m: float) -> GridFunction:
        return GridFunction(grid, self.member_values(grid.xs, m))

    def members(self, grid: StateGrid):
        return [(m, self.member(grid, m)) for m in self.scales]


def conditional_rate_dual(F: PathFunctional, V, t: float, x: float, y: float,
                          family: TestFamily | None = None, extra=()) -> float:
    """Dual conditional rate: max over test functions of f(y) - V(t)f(x).

    The supremum over all bounded continuous functions is unreachable; this
    evaluates it over the finite cone family (plus an optional user
    dictionary), so it lower-bounds the primal rate up to scheme error.
    """
    if family is None:
        family = TestFamily(base_point=y)
    grid = V.grid
    best = -math.inf
    for _, f in family.members(grid):
        val = float(f.eval(y)) - float(V.apply(f, t).eval(x))
        best = max(best, val)
    for f in extra:
        val = float(f.eval(y)) - float(V.apply(f, t).eval(x))
        best = max(best, val)
    return best


def finite_dim_value(F: PathFunctional, V, times, points, mode: str = "primal",
                     interior_knots: int = 3, family_scales=(1.0, 2.0, 4.0, 8.0, 16.0),
                     family_cap: float = 1.0) -> float:
    """Initial cost at the first point plus conditional-rate increments along
    consecutive (time, point) pairs; the rate is primal or dual by flag."""
    times = np.asarray(times, dtype=float)
    points = np.asarray(points, dtype=float)
    if times.size != points.size or times.size < 1:
        raise ConfigurationError("times and points must align and be nonempty")
    if times[0] != 0.0:
        raise ConfigurationError("times must start at 0")
    if np.any(np.diff(times) <= 0):
        raise ConfigurationError("times must be strictly increasing")
    total = F.initial_at(float(points[0]))
    if math.isinf(total):
        return math.inf
    for i in range(1, times.size):
        dt_inc = float(times[i] - times[i - 1])
        if mode == "primal":
            inc = conditional_rate_primal(F, dt_inc, float(points[i - 1]), float(points[i]),
                                          interior_knots=interior_knots)
        elif mode == "dual":
            fam = TestFamily(base_point=float(points[i]), scales=family_scales, cap=family_cap)
            inc = conditional_rate_dual(F, V, dt_inc, float(points[i - 1]), float(points[i]),
                                        family=fam)
        else:
            raise ConfigurationError("mode must be 'primal' or 'dual'")
        if math.isinf(inc):
            return math.inf
        total += inc
    return float(total)


def projective_supremum(F: PathFunctional, V, path: Path, partitions,
                        mode: str = "primal", interior_knots: int = 3) -> float:
    """Max over the supplied time partitions of the finite-dimensional value
    along the path's marginals. Non-decreasing under partition refinement and
    a lower bound for the path action, both up to scheme tolerance."""
    partitions = [np.asarray(p, dtype=float) for p in partitions]
    if not partitions:
        raise ConfigurationError("at least one partition is required")
    best = -math.inf
    for part in partitions:
        if part[-1] > F.horizon + 1e-12:
            raise ConfigurationError("partition extends beyond the horizon")
        pts = path.at(part)
        val = finite_dim_value(F, V, part, pts, mode=mode, interior_knots=interior_knots)
        best = max(best, val)
    return best


def dual_functional_lambda(J: GridFunction, f: GridFunction) -> float:
    """Dual functional of a coercive J: max over nodes of f - J."""
    if J.grid != f.grid:
        raise ConfigurationError("J and f must share a grid")
    return float(np.max(f.values - J.values))


@dataclass
class RecoveryReport:
    """Rate-function recovery through the cone family.

    ``values`` holds -Lambda(f_m) per scale; for finite targets ``estimate``
    extrapolates the 1/m tail, and for sentinel targets ``diverges`` records
    whether the values blow up at the guaranteed linear rate.
    """

    scales: list
    values: list
    target: float
    estimate: float | None = None
    diverges: bool | None = None
    lower_bounds: list = field(default_factory=list)


def isolating_family_recover(J: GridFunction, y: float, scales,
                             cap: float = 1.0) -> RecoveryReport:
    """Recover J(y) from the dual functional through steepening cones.

    -Lambda(f_m) = min_z { J(z) + m^2 min(|z - y|, cap) } increases to J(y) as
    the cones steepen. When J(y) sits at the coercive sentinel the sequence
    must instead diverge at least linearly in m (the family is bounded above
    by 0), and that divergence is what gets checked.
    """
    grid = J.grid
    idx, frac, _ = grid.locate(y)
    node_vals = (J.values[int(idx)], J.values[int(idx) + 1])
    at_sentinel = max(node_vals) >= _SENTINEL_THRESHOLD
    target = math.inf if at_sentinel else float(
        node_vals[0] * (1 - frac) + node_vals[1] * frac)

    fam = TestFamily(base_point=y, scales=tuple(scales), cap=cap)
    values = []
    for m in fam.scales:
        f = fam.member(grid, m)
        values.append(-float(np.max(f.values - J.values)))

    if at_sentinel:
        lower = [m for m in fam.scales]  # family sup bound is 0, so -Lambda >= m
        diverges = all(v >= m - 1e-9 for v, m in zip(values, lower))
        return RecoveryReport(scales=list(fam.scales), values=values,
                              target=target, diverges=diverges, lower_bounds=lower)

    if len(values) >= 2:
        m1, m2 = fam.scales[-2], fam.scales[-1]
        v1, v2 = values[-2], values[-1]
        estimate = (m2 * v2 - m1 * v1) / (m2 - m1)
    else:
        estimate = values[-1]
    return RecoveryReport(scales=list(fam.scales), values=values,
                          target=target, estimate=float(estimate))
