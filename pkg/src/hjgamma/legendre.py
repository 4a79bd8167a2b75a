"""Lagrangian and Hamiltonian models and the convex conjugation between them.

Conjugation is brute-force maximization over a fixed velocity sample set.
At desk scale (<= ~10^3 samples) this is fast enough, and the same scan
doubles as the oracle for everything downstream: the dynamic-programming
operators maximize over exactly the same sample set, which keeps the
Lagrangian and Hamiltonian sides consistent.

A maximizer on the sample-window boundary means the conjugate value is wrong,
so scalar transforms treat it as a hard error instead of clamping silently.
Tabulated Hamiltonians carry a per-entry adequacy mask instead, because a
table may legitimately cover momenta near the supported-slope limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, WindowInadequacyError
from .grid import StateGrid

_CONVEXITY_SLACK = 1e-9


def _as_coeff(c):
    """Normalize a coefficient to (callable, constant-or-None)."""
    if callable(c):
        return c, None
    val = float(c)
    return (lambda x, _v=val: np.full_like(np.asarray(x, dtype=float), _v)), val


class LagrangianModel:
    """Running cost L(x, v), convex in v, over a symmetric velocity window.

    Three kinds are supported:

    * ``quadratic``: L = a(x) (v - b(x))^2 / 2 with a(x) >= a_min > 0,
    * ``power``:     L = |v|^p / p with p >= 1,
    * ``tabulated``: an explicit state x velocity table.

    Velocities are sampled uniformly on (-vmax, vmax) with ``velocity_nodes``
    points; conjugation and the control operators scan this same sample set.
    """

    def __init__(self, kind, vmax, velocity_nodes, a=None, b=None, p=None,
                 grid=None, table=None, allow_nonconvex=False):
        if vmax <= 0:
            raise ConfigurationError("vmax must be positive")
        if velocity_nodes < 3:
            raise ConfigurationError("velocity_nodes must be at least 3")
        self.kind = kind
        self.vmax = float(vmax)
        self.velocity_nodes = int(velocity_nodes)
        self.v_samples = np.linspace(-self.vmax, self.vmax, self.velocity_nodes)
        self.v_samples.setflags(write=False)
        self.allow_nonconvex = bool(allow_nonconvex)
        self._a_const = self._b_const = None
        self._grid = None
        self._table = None

        if kind == "quadratic":
            self._a_fn, self._a_const = _as_coeff(a)
            self._b_fn, self._b_const = _as_coeff(0.0 if b is None else b)
            if self._a_const is not None and self._a_const <= 0:
                raise ConfigurationError("quadratic coefficient a must be positive")
        elif kind == "power":
            if p is None or p < 1:
                raise ConfigurationError("power kind requires exponent p >= 1")
            self._p = float(p)
        elif kind == "tabulated":
            if grid is None or table is None:
                raise ConfigurationError("tabulated kind requires a grid and a table")
            tab = np.asarray(table, dtype=float)
            if tab.shape != (grid.nodes, self.velocity_nodes):
                raise ConfigurationError(
                    f"table shape {tab.shape} must be (grid nodes, velocity nodes)"
                )
            if not np.all(np.isfinite(tab)):
                raise ConfigurationError("tabulated values must be finite")
            if np.min(tab) < -_CONVEXITY_SLACK:
                raise ConfigurationError("Lagrangian must be nonnegative")
            if not allow_nonconvex:
                d2 = np.diff(tab, n=2, axis=1)
                if np.min(d2) < -_CONVEXITY_SLACK:
                    raise ConfigurationError(
                        "tabulated Lagrangian is not convex in v "
                        "(pass allow_nonconvex=True for hull diagnostics)"
                    )
            tab = tab.copy()
            tab.setflags(write=False)
            self._grid = grid
            self._table = tab
        else:
            raise ConfigurationError(f"unknown Lagrangian kind {kind!r}")

    # -- constructors ------------------------------------------------------

    @classmethod
    def quadratic(cls, a=1.0, b=0.0, vmax=4.0, velocity_nodes=161):
        return cls("quadratic", vmax, velocity_nodes, a=a, b=b)

    @classmethod
    def power(cls, p, vmax=4.0, velocity_nodes=161):
        return cls("power", vmax, velocity_nodes, p=p)

    @classmethod
    def tabulated(cls, grid, table, vmax=4.0, velocity_nodes=None, allow_nonconvex=False):
        tab = np.asarray(table, dtype=float)
        if velocity_nodes is None:
            velocity_nodes = tab.shape[1]
        return cls("tabulated", vmax, velocity_nodes, grid=grid, table=tab,
                   allow_nonconvex=allow_nonconvex)

    # -- evaluation --------------------------------------------------------

    @property
    def is_const_quadratic(self):
        return self.kind == "quadratic" and self._a_const is not None and self._b_const is not None

    @property
    def const_coefficients(self):
        """(a, b) for constant-coefficient quadratic kinds."""
        if not self.is_const_quadratic:
            raise ConfigurationError("not a constant-coefficient quadratic Lagrangian")
        return self._a_const, self._b_const

    def evaluate(self, x, v):
        """L(x, v) with numpy broadcasting over both arguments."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.kind == "quadratic":
            a = np.asarray(self._a_fn(x), dtype=float)
            b = np.asarray(self._b_fn(x), dtype=float)
            return a * (v - b) ** 2 / 2.0
        if self.kind == "power":
            return np.abs(v) ** self._p / self._p
        # tabulated: bilinear interpolation, clamped in both coordinates
        gi, gf, _ = self._grid.locate(x)
        dv = self.v_samples[1] - self.v_samples[0]
        pos = np.clip((v + self.vmax) / dv, 0.0, self.velocity_nodes - 1.0)
        vi = np.minimum(pos.astype(np.int64), self.velocity_nodes - 2)
        vf = pos - vi
        t = self._table
        return ((t[gi, vi] * (1 - gf) + t[gi + 1, vi] * gf) * (1 - vf)
                + (t[gi, vi + 1] * (1 - gf) + t[gi + 1, vi + 1] * gf) * vf)

    def table(self, grid: StateGrid):
        """L(x_i, v_j) over all grid nodes and velocity samples."""
        if self.kind == "tabulated":
            if grid != self._grid:
                raise ConfigurationError("tabulated Lagrangian is bound to its own grid")
            return self._table
        tab = self.evaluate(grid.xs[:, None], self.v_samples[None, :])
        if np.min(tab) < -_CONVEXITY_SLACK:
            raise ConfigurationError("Lagrangian must be nonnegative on the grid")
        return tab

    def validate_window(self, grid: StateGrid):
        """Check the minimum of L(x, .) is attained strictly inside the window."""
        tab = self.table(grid)
        arg = np.argmin(tab, axis=1)
        if np.any(arg == 0) or np.any(arg == self.velocity_nodes - 1):
            bad = grid.xs[(arg == 0) | (arg == self.velocity_nodes - 1)][0]
            raise WindowInadequacyError(
                f"velocity window ({-self.vmax}, {self.vmax}) does not contain the "
                f"cost minimizer at x={bad}"
            )

    def conjugate_exact(self, x, p):
        """Closed-form conjugate where one exists (quadratic, power p>1)."""
        if self.kind == "quadratic":
            x = np.asarray(x, dtype=float)
            a = np.asarray(self._a_fn(x), dtype=float)
            b = np.asarray(self._b_fn(x), dtype=float)
            return p * b + p * p / (2.0 * a)
        if self.kind == "power" and self._p > 1:
            q = self._p / (self._p - 1.0)
            return np.abs(p) ** q / q
        raise ConfigurationError(f"no closed-form conjugate for kind {self.kind!r}")


def legendre_transform(L: LagrangianModel, x: float, p: float, exact: bool = False) -> float:
    """Convex conjugate sup_v { p v - L(x, v) } over the velocity samples.

    Raises WindowInadequacyError when the maximizer lands on the window
    boundary, since the true supremum then lies outside the sampled window.
    """
    if exact:
        return float(L.conjugate_exact(x, p))
    vals = p * L.v_samples - L.evaluate(x, L.v_samples)
    k = int(np.argmax(vals))
    if k == 0 or k == L.velocity_nodes - 1:
        raise WindowInadequacyError(
            f"conjugate maximizer at window boundary for (x={x}, p={p}); enlarge vmax"
        )
    return float(vals[k])


@dataclass(eq=False)
class HamiltonianModel:
    """Tabulated H(x, p) over grid nodes and momentum samples.

    ``adequate`` masks entries whose maximizer stayed strictly inside the
    velocity window; inadequate entries hold the clipped sample maximum.
    Provenance is either ``conjugate`` (built from a Lagrangian, which is then
    kept for out-of-window and one-sided evaluation) or ``analytic``.
    """

    grid: StateGrid
    momenta: np.ndarray
    table: np.ndarray
    provenance: str = "conjugate"
    lagrangian: LagrangianModel | None = None
    adequate: np.ndarray | None = None
    clip_events: int = field(default=0, compare=False)

    def __post_init__(self):
        self.momenta = np.asarray(self.momenta, dtype=float)
        self.table = np.asarray(self.table, dtype=float)
        if self.table.shape != (self.grid.nodes, self.momenta.size):
            raise ConfigurationError("Hamiltonian table shape mismatch")
        if self.adequate is None:
            self.adequate = np.ones_like(self.table, dtype=bool)
        d2 = np.diff(self.table, n=2, axis=1)
        if d2.size and np.min(d2) < -_CONVEXITY_SLACK:
            raise ConfigurationError("Hamiltonian table is not convex in p")

    def eval_at_node(self, i: int, p: float) -> float:
        """H(x_i, p): table interpolation inside the momentum window, direct
        conjugation through the stored Lagrangian outside it."""
        lo, hi = self.momenta[0], self.momenta[-1]
        if lo <= p <= hi:
            dk = self.momenta[1] - self.momenta[0]
            pos = (p - lo) / dk
            k = min(int(pos), self.momenta.size - 2)
            f = pos - k
            if self.adequate[i, k] and self.adequate[i, k + 1]:
                return float(self.table[i, k] * (1 - f) + self.table[i, k + 1] * f)
        if self.lagrangian is None:
            raise WindowInadequacyError(
                f"momentum {p} outside the tabulated window and no Lagrangian available"
            )
        return legendre_transform(self.lagrangian, self.grid.node(i), p)

    def eval_residual(self, i: int, p: float, side: str = "interior"):
        """(value, clipped) for viscosity residuals.

        ``side`` selects the admissible velocity half-window at the domain
        edges: at the left edge only v >= 0 moves stay inside the state space,
        at the right edge only v <= 0, so the conjugate there runs over the
        corresponding half of the sample set. A maximizer at v = 0 is a
        genuine one-sided optimum; only the outer window edge marks clipping.
        """
        if side == "interior" or self.lagrangian is None:
            try:
                return self.eval_at_node(i, p), False
            except WindowInadequacyError:
                if self.lagrangian is None:
                    raise
                L = self.lagrangian
                vals = p * L.v_samples - L.evaluate(self.grid.node(i), L.v_samples)
                return float(np.max(vals)), True
        L = self.lagrangian
        v = L.v_samples
        mask = v >= 0.0 if side == "left" else v <= 0.0
        vs = v[mask]
        vals = p * vs - L.evaluate(self.grid.node(i), vs)
        k = int(np.argmax(vals))
        outer = (k == len(vs) - 1) if side == "left" else (k == 0)
        return float(vals[k]), bool(outer)


def hamiltonian_of(L: LagrangianModel, grid: StateGrid, momenta=None,
                   chunk: int = 64) -> HamiltonianModel:
    """Tabulate the conjugate of L over grid nodes x momentum samples.

    Momenta default to the velocity sample set itself, which makes the
    transform exact at supported sample points. Entries whose maximizer hits
    the window boundary are kept (clipped) but masked as inadequate.
    """
    L.validate_window(grid)
    if momenta is None:
        momenta = L.v_samples.copy()
    momenta = np.asarray(momenta, dtype=float)
    tab = L.table(grid)
    n, m = tab.shape
    H = np.empty((n, momenta.size))
    ok = np.empty((n, momenta.size), dtype=bool)
    for start in range(0, momenta.size, chunk):
        ps = momenta[start:start + chunk]
        cand = ps[None, None, :] * L.v_samples[None, :, None] - tab[:, :, None]
        arg = np.argmax(cand, axis=1)
        H[:, start:start + len(ps)] = np.take_along_axis(
            cand, arg[:, None, :], axis=1)[:, 0, :]
        ok[:, start:start + len(ps)] = (arg > 0) & (arg < m - 1)
    model = HamiltonianModel(grid=grid, momenta=momenta, table=H,
                             provenance="conjugate", lagrangian=L, adequate=ok,
                             clip_events=int((~ok).sum()))
    return model


@dataclass
class BiconjugateReport:
    passed: bool
    max_gap: float
    expected_failure: bool
    gap_location: tuple


def biconjugate_check(L: LagrangianModel, grid: StateGrid, tol: float,
                      momenta=None, interior_fraction: float = 0.8) -> BiconjugateReport:
    """Check L** == L on sampled (x, v) for convex L.

    For a non-convex tabulated L this is an expected failure and the reported
    gap is the distance from L to its convex hull in v (the biconjugate equals
    the hull on the window). The gap is evaluated on the central
    ``interior_fraction`` of the velocity window, where the double conjugation
    is supported by the sampled momenta.
    """
    H = hamiltonian_of(L, grid, momenta=momenta)
    tab = L.table(grid)
    v = L.v_samples
    keep = np.abs(v) <= interior_fraction * L.vmax
    cand = v[None, keep, None] * H.momenta[None, None, :] - H.table[:, None, :]
    cand = np.where(H.adequate[:, None, :], cand, -np.inf)
    bicon = cand.max(axis=2)
    gap = tab[:, keep] - bicon  # >= 0 up to sampling error; equals hull distance
    i, j = np.unravel_index(np.argmax(np.abs(gap)), gap.shape)
    max_gap = float(np.abs(gap[i, j]))
    expected_failure = L.allow_nonconvex and max_gap > tol
    return BiconjugateReport(
        passed=max_gap <= tol,
        max_gap=max_gap,
        expected_failure=expected_failure,
        gap_location=(float(grid.xs[i]), float(v[keep][j])),
    )
