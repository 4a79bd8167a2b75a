"""1-D state grids, grid functions, nested compact families, and the
bounded-uniform-on-compacts (buc) convergence checker.

All types are immutable after construction and all operations are pure, so
everything here is safe for concurrent reads and deterministic regardless of
evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, GridMismatchError


@dataclass(frozen=True)
class StateGrid:
    """Uniform grid on [lower, upper] standing in for the state space.

    node(i) = lower + i * spacing, with spacing = (upper - lower) / (nodes - 1).
    The metric is d(x, y) = |x - y|.
    """

    lower: float
    upper: float
    nodes: int

    def __post_init__(self):
        if not (self.lower < self.upper):
            raise ConfigurationError(f"StateGrid requires lower < upper, got [{self.lower}, {self.upper}]")
        if self.nodes < 3:
            raise ConfigurationError(f"StateGrid requires nodes >= 3, got {self.nodes}")
        xs = np.linspace(self.lower, self.upper, self.nodes)
        xs.setflags(write=False)
        object.__setattr__(self, "_xs", xs)

    @property
    def spacing(self) -> float:
        return (self.upper - self.lower) / (self.nodes - 1)

    @property
    def xs(self) -> np.ndarray:
        """All node coordinates, read-only."""
        return self._xs

    def node(self, i: int) -> float:
        return self.lower + i * self.spacing

    def locate(self, x):
        """Bracket coordinates for linear interpolation, clamped to the grid.

        Returns (idx, frac, clamped) where idx is in [0, nodes-2],
        frac in [0, 1], and clamped flags points outside [lower, upper].
        Accepts scalars or arrays.
        """
        x = np.asarray(x, dtype=float)
        if np.any(np.isnan(x)):
            raise ValueError("cannot locate NaN on a grid")
        clamped = (x < self.lower) | (x > self.upper)
        xc = np.clip(x, self.lower, self.upper)
        pos = (xc - self.lower) / self.spacing
        idx = np.minimum(pos.astype(np.int64), self.nodes - 2)
        frac = pos - idx
        return idx, frac, clamped


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real-valued function on a StateGrid, a stand-in for a bounded
    continuous function with the sup norm.

    Off-grid evaluation is linear interpolation between bracketing nodes
    (exact at nodes); points outside the grid are clamped.
    """

    grid: StateGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.nodes,):
            raise ConfigurationError(
                f"values shape {vals.shape} does not match grid with {self.grid.nodes} nodes"
            )
        if not np.all(np.isfinite(vals)):
            raise ConfigurationError("GridFunction values must be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, grid: StateGrid, fn) -> "GridFunction":
        return cls(grid, np.asarray([fn(x) for x in grid.xs], dtype=float))

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def eval(self, x):
        idx, frac, _ = self.grid.locate(x)
        return self.values[idx] * (1.0 - frac) + self.values[idx + 1] * frac

    def __call__(self, x):
        return self.eval(x)


def sup_norm(f: GridFunction) -> float:
    """Sup norm of a grid function: max |values|."""
    return f.sup_norm


def interpolate(f: GridFunction, x: float) -> float:
    """Linear interpolation of f at x, clamping outside the grid."""
    return float(f.eval(x))


def interpolate_flagged(f: GridFunction, x: float):
    """Like interpolate, but also reports whether x was clamped."""
    idx, frac, clamped = f.grid.locate(x)
    return float(f.values[idx] * (1.0 - frac) + f.values[idx + 1] * frac), bool(clamped)


@dataclass(frozen=True)
class CompactFamily:
    """Nested closed intervals K^0 ⊆ K^1 ⊆ ... inside a reference grid.

    The index set is {0, ..., index_count-1} with its natural order; nestedness
    is checked on construction.
    """

    intervals: tuple

    def __post_init__(self):
        ivs = tuple((float(lo), float(hi)) for lo, hi in self.intervals)
        if not ivs:
            raise ConfigurationError("CompactFamily requires at least one interval")
        for lo, hi in ivs:
            if not lo <= hi:
                raise ConfigurationError(f"degenerate interval ({lo}, {hi})")
        for (lo1, hi1), (lo2, hi2) in zip(ivs, ivs[1:]):
            if not (lo2 <= lo1 and hi1 <= hi2):
                raise ConfigurationError(
                    f"intervals not nested: ({lo1}, {hi1}) is not inside ({lo2}, {hi2})"
                )
        object.__setattr__(self, "intervals", ivs)

    @property
    def index_count(self) -> int:
        return len(self.intervals)

    def interval(self, q: int):
        return self.intervals[q]

    def contains(self, q: int, x) -> bool:
        lo, hi = self.intervals[q]
        return bool(np.all((np.asarray(x) >= lo) & (np.asarray(x) <= hi)))

    def node_mask(self, grid: StateGrid, q: int) -> np.ndarray:
        lo, hi = self.intervals[q]
        return (grid.xs >= lo) & (grid.xs <= hi)

    @classmethod
    def nested_around(cls, center: float, radii) -> "CompactFamily":
        """Family of intervals [center - r, center + r] for increasing radii."""
        return cls(tuple((center - r, center + r) for r in sorted(radii)))


@dataclass(frozen=True, eq=False)
class SpaceSequence:
    """A sequence of grids with node embeddings into a reference grid.

    The default embedding is the identity on a common grid; refinement
    embeddings (member nodes are a subset of reference coordinates) are the
    other supported case. Every embedded node must lie inside the reference
    interval, and for each compact index the embedded member intervals must
    stay inside the reference interval of the same index.
    """

    members: tuple
    reference: StateGrid
    embeddings: tuple = None

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ConfigurationError("SpaceSequence requires at least one member grid")
        if self.embeddings is None:
            emb = tuple(g.xs for g in members)
        else:
            emb = tuple(np.asarray(e, dtype=float) for e in self.embeddings)
        for g, e in zip(members, emb):
            if e.shape != (g.nodes,):
                raise ConfigurationError("embedding length must match member node count")
            if np.any(e < self.reference.lower) or np.any(e > self.reference.upper):
                raise ConfigurationError("embedded nodes must lie inside the reference grid")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "embeddings", emb)

    def check_compacts(self, member_compacts, reference_compacts: CompactFamily) -> bool:
        """Union over members of embedded K_n^q must sit inside K^q, per index q."""
        for q in range(reference_compacts.index_count):
            lo, hi = reference_compacts.interval(q)
            for fam, emb in zip(member_compacts, self.embeddings):
                mlo, mhi = fam.interval(q)
                # embedded image of [mlo, mhi]: embedding is monotone node map
                inside = emb[(emb >= mlo) & (emb <= mhi)]
                if inside.size and (inside.min() < lo or inside.max() > hi):
                    return False
        return True


@dataclass
class BucReport:
    """Outcome of a buc (bounded, uniform-on-compacts) convergence check."""

    passed: bool
    bounded: bool
    norm_bound: float
    sup_norms: list
    deviations: dict = field(default_factory=dict)  # q -> per-n max deviation on K^q
    tail_start: int = 0
    tol: float = 0.0

    def worst_tail_deviation(self) -> float:
        worst = 0.0
        for trace in self.deviations.values():
            tail = trace[self.tail_start:]
            if len(tail):
                worst = max(worst, float(np.max(tail)))
        return worst


def buc_lim_check(fs, f: GridFunction, compacts: CompactFamily, tol: float,
                  tail_count: int | None = None, norm_cap: float | None = None) -> BucReport:
    """Check that fs converges to f bounded and uniformly on compacts.

    Passes iff (i) sup_n ||f_n|| stays below a finite cap (default
    10 * (||f|| + 1), a finite-sequence proxy for uniform boundedness) and
    (ii) on every compact index q, max_{K^q} |f_n - f| falls below tol for
    the tail of the sequence. The tail defaults to the last third.
    """
    if tol <= 0:
        raise ConfigurationError("tol must be positive")
    fs = list(fs)
    if not fs:
        raise ConfigurationError("empty sequence")
    for g in fs:
        if g.grid != f.grid:
            raise GridMismatchError("all functions must share the limit's grid (supply embeddings otherwise)")
    if norm_cap is None:
        norm_cap = 10.0 * (f.sup_norm + 1.0)
    sup_norms = [g.sup_norm for g in fs]
    bounded = max(sup_norms) <= norm_cap
    if tail_count is None:
        tail_count = max(1, math.ceil(len(fs) / 3))
    tail_start = len(fs) - tail_count

    deviations = {}
    uniform_ok = True
    for q in range(compacts.index_count):
        mask = compacts.node_mask(f.grid, q)
        if not mask.any():
            deviations[q] = [0.0] * len(fs)
            continue
        trace = [float(np.max(np.abs(g.values[mask] - f.values[mask]))) for g in fs]
        deviations[q] = trace
        if max(trace[tail_start:]) > tol:
            uniform_ok = False

    return BucReport(
        passed=bounded and uniform_ok,
        bounded=bounded,
        norm_bound=norm_cap,
        sup_norms=sup_norms,
        deviations=deviations,
        tail_start=tail_start,
        tol=tol,
    )


def _interval_distance(x: float, intervals) -> float:
    best = math.inf
    for lo, hi in intervals:
        if lo <= x <= hi:
            return 0.0
        best = min(best, abs(x - lo), abs(x - hi))
    return best


def _mask_to_intervals(grid: StateGrid, mask: np.ndarray):
    out = []
    i = 0
    n = grid.nodes
    while i < n:
        if mask[i]:
            j = i
            while j + 1 < n and mask[j + 1]:
                j += 1
            out.append((grid.node(i), grid.node(j)))
            i = j + 1
        else:
            i += 1
    return out


def kuratowski_bounds(sets, grid: StateGrid, radius: float | None = None, window: int = 2):
    """Discretized Kuratowski limit inferior / limit superior of interval unions.

    Each entry of ``sets`` is a finite union of closed intervals. Evaluated on
    grid nodes: a node is in the limit superior if every suffix of the
    sequence (probed in windows of ``window`` consecutive sets, the finite
    stand-in for "infinitely many") contains a set within ``radius``; in the
    limit inferior if some tail hits it at every index ("all but finitely
    many"). The neighbourhood radius defaults to half the grid spacing.
    liminf ⊆ limsup holds on every input.
    """
    sets = list(sets)
    if not sets:
        raise ConfigurationError("kuratowski_bounds requires a nonempty sequence")
    if radius is None:
        radius = grid.spacing / 2.0
    n_sets = len(sets)
    hits = np.zeros((n_sets, grid.nodes), dtype=bool)
    for k, ivs in enumerate(sets):
        for i, x in enumerate(grid.xs):
            hits[k, i] = _interval_distance(float(x), ivs) <= radius

    liminf_mask = np.zeros(grid.nodes, dtype=bool)
    for i in range(grid.nodes):
        col = hits[:, i]
        # hit at every index from some point on
        start = n_sets
        for k in range(n_sets - 1, -1, -1):
            if col[k]:
                start = k
            else:
                break
        liminf_mask[i] = start < n_sets and bool(col[start:].all())

    limsup_mask = np.zeros(grid.nodes, dtype=bool)
    for i in range(grid.nodes):
        col = hits[:, i]
        ok = True
        for start in range(n_sets):
            stop = min(start + window, n_sets)
            if not col[start:stop].any():
                ok = False
                break
        limsup_mask[i] = ok
    limsup_mask |= liminf_mask  # liminf ⊆ limsup by construction

    return _mask_to_intervals(grid, liminf_mask), _mask_to_intervals(grid, limsup_mask)
