"""Variational semigroup V(t) and discounted resolvent R(lambda) by dynamic
programming, the iterated-resolvent approximation of the semigroup, and the
operator-axiom probes (contractivity, pseudo-resolvent identity, local strict
equicontinuity).

V(t)f is computed by a backward semi-Lagrangian recursion

    u_0 = f,   u_{k+1}(x) = max_v [ u_k(x + v dt) - dt L(x, v) ],

with linear interpolation at departure points and the velocity maximum scanned
over the same sample set the conjugation module uses. R(lambda)h is the fixed
point of the discounted one-step map

    u(x) = max_v [ (1 - beta) (h(x) - lambda L(x, v)) + beta u(x + v dt) ],

where beta = exp(-dt/lambda); the weights (1 - beta) and beta integrate the
exponential discount exactly over one step, so constants are fixed points
exactly and the map contracts with factor beta in the sup norm.

States pushed outside the grid are clamped; clamp counts and time-snapping
amounts are recorded so reports can expose them. Velocity argmax ties break
toward the smallest sample index, and sweeps are Jacobi-style (a full new
array per iteration), so runs are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import bellman_backup
from .errors import ConfigurationError, ConvergenceError
from .grid import CompactFamily, GridFunction, StateGrid
from .legendre import LagrangianModel


class _StepTables:
    """Destination brackets and cost table shared by one (L, grid, dt)."""

    def __init__(self, L: LagrangianModel, grid: StateGrid, dt: float):
        L.validate_window(grid)
        dest = grid.xs[:, None] + L.v_samples[None, :] * dt
        idx, frac, clamped = grid.locate(dest)
        self.idx = np.ascontiguousarray(idx, dtype=np.int64)
        self.frac = np.ascontiguousarray(frac, dtype=np.float64)
        self.clamped_pairs = int(clamped.sum())
        self.cost = np.ascontiguousarray(L.table(grid), dtype=np.float64)


class SemigroupOperator:
    """Backward semi-Lagrangian realization of the variational semigroup."""

    def __init__(self, L: LagrangianModel, grid: StateGrid, dt: float):
        if dt <= 0:
            raise ConfigurationError("dt must be positive")
        if dt * L.vmax > (grid.upper - grid.lower) + 1e-12:
            raise ConfigurationError(
                "dt * vmax exceeds the domain width; one step may overshoot the grid"
            )
        self.L = L
        self.grid = grid
        self.dt = float(dt)
        self._tables = _StepTables(L, grid, dt)
        self._step_cost = np.ascontiguousarray(dt * self._tables.cost)
        self.clamped_pairs = self._tables.clamped_pairs

    def snap(self, t: float):
        """Round t to the nearest step multiple; returns (steps, snap amount)."""
        steps = int(round(t / self.dt))
        return steps, t - steps * self.dt

    def apply(self, f: GridFunction, t: float) -> GridFunction:
        return self.apply_detailed(f, t)[0]

    def apply_detailed(self, f: GridFunction, t: float):
        """V(t)f together with {steps, snap, clamp_events} bookkeeping."""
        if t < 0:
            raise ConfigurationError("t must be nonnegative")
        if f.grid != self.grid:
            raise ConfigurationError("function grid does not match operator grid")
        steps, snap = self.snap(t)
        stats = {"steps": steps, "snap": snap,
                 "clamp_events": steps * self.clamped_pairs}
        if steps == 0:
            return f, stats
        u = np.ascontiguousarray(f.values, dtype=np.float64)
        tab = self._tables
        for _ in range(steps):
            u = np.asarray(bellman_backup(u, tab.idx, tab.frac, self._step_cost))
        return GridFunction(self.grid, u), stats


def semigroup_apply(V: SemigroupOperator, f: GridFunction, t: float) -> GridFunction:
    """V(t)f; t is snapped to the nearest multiple of the operator step."""
    return V.apply(f, t)


class ResolventOperator:
    """Value-iteration realization of the discounted resolvent R(lambda).

    Iterates the discounted Bellman map until the sup-norm residual drops
    below ``tol`` (or for a fixed ``sweeps`` count when given, which keeps the
    operator an exact contraction for property probes). Non-convergence within
    ``max_iterations`` raises ConvergenceError carrying the last residual.
    """

    def __init__(self, L: LagrangianModel, grid: StateGrid, lam: float, dt: float,
                 tol: float = 1e-8, max_iterations: int = 20000, sweeps: int | None = None):
        if lam <= 0:
            raise ConfigurationError("lambda must be positive")
        if dt <= 0:
            raise ConfigurationError("dt must be positive")
        if dt * L.vmax > (grid.upper - grid.lower) + 1e-12:
            raise ConfigurationError("dt * vmax exceeds the domain width")
        self.L = L
        self.grid = grid
        self.lam = float(lam)
        self.dt = float(dt)
        self.tol = float(tol)
        self.max_iterations = int(max_iterations)
        self.sweeps = sweeps
        self.beta = math.exp(-dt / lam)
        self._tables = _StepTables(L, grid, dt)
        # (1 - beta) * lambda * L(x, v), the discounted running-cost weight
        self._disc_cost = np.ascontiguousarray((1.0 - self.beta) * lam * self._tables.cost)
        self.clamped_pairs = self._tables.clamped_pairs
        self.last_stats = None

    def apply(self, h: GridFunction) -> GridFunction:
        if h.grid != self.grid:
            raise ConfigurationError("function grid does not match operator grid")
        tab = self._tables
        source = self._disc_cost - (1.0 - self.beta) * h.values[:, None]
        u = np.ascontiguousarray(h.values, dtype=np.float64)
        history = []
        iterations = self.max_iterations if self.sweeps is None else self.sweeps
        converged = False
        residual = math.inf
        for k in range(iterations):
            u_new = np.asarray(bellman_backup(self.beta * u, tab.idx, tab.frac, source))
            residual = float(np.max(np.abs(u_new - u)))
            history.append(residual)
            u = u_new
            if self.sweeps is None and residual <= self.tol:
                converged = True
                break
        if self.sweeps is None and not converged:
            raise ConvergenceError(
                f"value iteration did not reach tol={self.tol} in "
                f"{self.max_iterations} sweeps (residual {residual:.3e})",
                residual=residual,
            )
        self.last_stats = {
            "iterations": len(history),
            "residual": residual,
            "residual_history": history,
            "clamp_events": len(history) * self.clamped_pairs,
        }
        return GridFunction(self.grid, u)


def resolvent_apply(R: ResolventOperator, h: GridFunction) -> GridFunction:
    return R.apply(h)


def pseudo_resolvent_residual(resolvent_factory, alpha: float, beta: float,
                              h: GridFunction, allow_equal: bool = False) -> float:
    """Sup-norm defect of the resolvent composition identity

        R(beta)h = R(alpha)[ R(beta)h - (alpha/beta) (R(beta)h - h) ].

    ``resolvent_factory`` maps a discount scale to a ResolventOperator.
    Requires 0 < alpha < beta (alpha == beta allowed with ``allow_equal``).
    """
    if not (0 < alpha and 0 < beta):
        raise ConfigurationError("discount scales must be positive")
    if alpha > beta or (alpha == beta and not allow_equal):
        raise ConfigurationError("requires alpha < beta (or allow_equal for alpha == beta)")
    Rb = resolvent_factory(beta)
    g = Rb.apply(h)
    arg = GridFunction(g.grid, g.values - (alpha / beta) * (g.values - h.values))
    Ra = resolvent_factory(alpha)
    out = Ra.apply(arg)
    return float(np.max(np.abs(out.values - g.values)))


def crandall_liggett_compare(resolvent_factory, V: SemigroupOperator,
                             f: GridFunction, t: float, ns) -> dict:
    """Gap curve n -> || R(t/n)^n f - V(t) f ||_sup for increasing n."""
    ns = list(ns)
    if any(n2 <= n1 for n1, n2 in zip(ns, ns[1:])):
        raise ConfigurationError("ns must be strictly increasing")
    if t == 0:
        return {"ns": ns, "gaps": [0.0] * len(ns)}
    target = V.apply(f, t)
    gaps = []
    for n in ns:
        R = resolvent_factory(t / n)
        g = f
        for _ in range(n):
            g = R.apply(g)
        gaps.append(float(np.max(np.abs(g.values - target.values))))
    return {"ns": ns, "gaps": gaps}


@dataclass
class ContractionResult:
    passed: bool
    upper_excess: float
    lower_excess: float


def contraction_check(T, f1: GridFunction, f2: GridFunction,
                      slack: float = 1e-9) -> ContractionResult:
    """Two-sided contraction probe:

        sup (Tf1 - Tf2) <= sup (f1 - f2) + slack,
        inf (Tf1 - Tf2) >= inf (f1 - f2) - slack.
    """
    g1, g2 = T(f1), T(f2)
    diff_in = f1.values - f2.values
    diff_out = g1.values - g2.values
    upper = float(np.max(diff_out) - np.max(diff_in))
    lower = float(np.min(diff_in) - np.min(diff_out))
    return ContractionResult(passed=(upper <= slack and lower <= slack),
                             upper_excess=upper, lower_excess=lower)


@dataclass
class EquicontinuityReport:
    """Outcome of the local strict equicontinuity probe.

    ``residual`` is the worst violation of
        sup_{K^q} (T h1 - T h2) <= delta sup (h1 - h2) + sup_{K^qhat} (h1 - h2)
    at the reported enlarged index; <= 0 when the bound holds there.
    """

    q: int
    delta: float
    q_hat: int | None
    residual: float
    per_index: dict = field(default_factory=dict)


def strict_equicontinuity_probe(operators, compacts: CompactFamily, q: int,
                                delta: float, pairs,
                                slack: float = 1e-12) -> EquicontinuityReport:
    """Search the smallest enlarged index q_hat making the strict
    equicontinuity bound hold for every operator and every probed pair."""
    if delta <= 0:
        raise ConfigurationError("delta must be positive")
    pairs = list(pairs)
    if not pairs:
        raise ConfigurationError("at least one probe pair is required")
    grid = pairs[0][0].grid
    outputs = [(T(h1), T(h2)) for T in operators for (h1, h2) in pairs]
    inputs = [(h1, h2) for _ in operators for (h1, h2) in pairs]
    mask_q = compacts.node_mask(grid, q)

    per_index = {}
    found = None
    residual_at_found = math.inf
    for q_hat in range(q, compacts.index_count):
        mask_hat = compacts.node_mask(grid, q_hat)
        worst = -math.inf
        for (h1, h2), (g1, g2) in zip(inputs, outputs):
            lhs = float(np.max(g1.values[mask_q] - g2.values[mask_q]))
            rhs = (delta * float(np.max(h1.values - h2.values))
                   + float(np.max(h1.values[mask_hat] - h2.values[mask_hat])))
            worst = max(worst, lhs - rhs)
        per_index[q_hat] = worst
        if worst <= slack and found is None:
            found = q_hat
            residual_at_found = worst
            break
    if found is None:
        last = compacts.index_count - 1
        return EquicontinuityReport(q=q, delta=delta, q_hat=None,
                                    residual=per_index[last], per_index=per_index)
    return EquicontinuityReport(q=q, delta=delta, q_hat=found,
                                residual=residual_at_found, per_index=per_index)
