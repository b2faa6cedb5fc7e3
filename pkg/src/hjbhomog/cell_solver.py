"""Discounted cell problems and vanishing-discount extraction of the ergodic constant."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import bellman
from .bellman import OptionTable, build_options
from .control_model import (
    ControlProblem,
    MixedControl,
    Region,
    Variant,
    classify_point,
    mixed_dynamics_cost,
)
from .grid import PeriodicGrid, ValueField

DEFAULT_SCHEDULE = (0.08, 0.04, 0.02, 0.01)
STOP_TOL = 1e-8
MAX_SWEEPS = 2_000_000


@dataclass(frozen=True)
class CellSolution:
    variant: Variant
    rho_schedule: tuple[float, ...]
    hbar: float
    corrector: ValueField
    diagnostics: dict = field(default_factory=dict)

    @property
    def lambdas(self) -> list[float]:
        return self.diagnostics["lambdas"]


def augmented_cost(problem: ControlProblem, x: float, p: float, y: float, a: float | MixedControl) -> float:
    """Running cost plus velocity times costate, ``l + b p``."""
    region = classify_point(problem.partition, y)
    if region is Region.INTERFACE:
        if not isinstance(a, MixedControl):
            raise TypeError("an interface point needs a MixedControl")
        b, l = mixed_dynamics_cost(problem, x, y, a)
    else:
        if isinstance(a, MixedControl):
            raise TypeError(f"a side control is expected in {region.value}")
        i = region.side
        b, l = float(problem.b(i, x, y, a)), float(problem.l(i, x, y, a))
    return l + b * p


def upper_bound(problem: ControlProblem, p: float, rho: float, dt: float) -> float:
    """Discrete value of paying the largest admissible rate forever."""
    rate = problem.bounds.M_l + problem.bounds.M_b * abs(p)
    return rate * dt / -np.expm1(-rho * dt)


def _solve_table(
    problem: ControlProblem,
    table: OptionTable,
    p: float,
    rho: float,
    stop_tol: float = STOP_TOL,
    max_sweeps: int = MAX_SWEEPS,
) -> tuple[np.ndarray, int, float]:
    if rho <= 0:
        raise ValueError("discount must be positive")
    V0 = np.full(table.grid.n, upper_bound(problem, p, rho, table.dt))
    return bellman.discounted_fixed_point(table, rho, V0, stop_tol / rho, max_sweeps)


def solve_discounted(
    problem: ControlProblem,
    x: float,
    p: float,
    rho: float,
    grid: PeriodicGrid,
    variant: Variant | str,
    stop_tol: float = STOP_TOL,
    max_sweeps: int = MAX_SWEEPS,
) -> ValueField:
    table = build_options(problem, grid, p, variant, x=x)
    V, _, _ = _solve_table(problem, table, p, rho, stop_tol, max_sweeps)
    return ValueField(grid, V)


def extract_ergodic(
    problem: ControlProblem,
    x: float,
    p: float,
    schedule: Sequence[float] = DEFAULT_SCHEDULE,
    grid: PeriodicGrid | None = None,
    variant: Variant | str = Variant.MINUS,
    stop_tol: float = STOP_TOL,
    max_sweeps: int = MAX_SWEEPS,
) -> CellSolution:
    variant = Variant(variant)
    schedule = tuple(float(r) for r in schedule)
    if len(schedule) < 2 or any(b >= a for a, b in zip(schedule, schedule[1:])) or schedule[-1] <= 0:
        raise ValueError("rho schedule must be strictly decreasing, positive, with at least two entries")
    if grid is None:
        grid = PeriodicGrid.aligned(problem.partition, 400)
    table = build_options(problem, grid, p, variant, x=x)
    gamma_last = float(np.exp(-schedule[-1] * table.dt))

    lambdas, sweeps, residuals = [], [], []
    V = None
    for rho in schedule:
        V, n_sweeps, _ = _solve_table(problem, table, p, rho, stop_tol, max_sweeps)
        lambdas.append(float(-rho * V[0]))
        sweeps.append(int(n_sweeps))
        gamma = float(np.exp(-rho * table.dt))
        residuals.append(float(np.max(np.abs(bellman.explicit_sweep(table, V, gamma) - V))))

    (r1, l1), (r2, l2) = (schedule[-2], lambdas[-2]), (schedule[-1], lambdas[-1])
    hbar = l2 - r2 * (l1 - l2) / (r1 - r2)
    corrector = ValueField(grid, V - V[0])
    diagnostics = {
        "lambdas": lambdas,
        "sweeps": sweeps,
        "fixed_point_residuals": residuals,
        "dt": table.dt,
        "discount_factor_last": gamma_last,
        # exact integration of exp(-rho t) over one step would rescale rates by this factor
        "discount_rate_ratio_last": float(-np.expm1(-schedule[-1] * table.dt) / (schedule[-1] * table.dt)),
        "options_per_node": int(table.cost.shape[1]),
        "p": float(p),
        "x": float(x),
    }
    return CellSolution(variant=variant, rho_schedule=schedule, hbar=float(hbar), corrector=corrector,
                        diagnostics=diagnostics)


def cell_residual(
    problem: ControlProblem,
    x: float,
    p: float,
    corrector: ValueField,
    hbar: float,
    variant: Variant | str = Variant.MINUS,
) -> float:
    """Sup-norm change of one undiscounted sweep with source ``hbar`` applied to ``corrector``."""
    table = build_options(problem, corrector.grid, p, variant, x=x)
    V = corrector.values
    return float(np.max(np.abs(bellman.explicit_sweep(table, V, 1.0, source=hbar) - V)))


def corrector_dpp_check(
    problem: ControlProblem,
    x: float,
    p: float,
    vplus: ValueField,
    hbar_plus: float,
    taus: Sequence[float] = (0.1, 0.5, 1.0),
    start_nodes: Sequence[int] | None = None,
    oracle_refine: int = 2,
) -> float:
    """Largest gap between ``vplus`` and the finite-horizon regular optimal-control value built on it.

    The right-hand side is the minimal cost of ``l + b p + hbar_plus`` over
    horizon ``tau`` with terminal payoff ``vplus``, restricted to regular
    interface behaviour. It is computed on a grid ``oracle_refine`` times finer
    than the corrector's; on the corrector's own grid the discrete principle
    holds up to discount and stopping error only, so a finer oracle is what
    exposes the spatial consistency error.
    """
    from .ergodic_oracle import finite_horizon_field

    if oracle_refine < 1:
        raise ValueError("oracle_refine must be a positive integer")
    coarse = vplus.grid
    fine = coarse.refine(oracle_refine)
    terminal = vplus(fine.nodes)
    nodes = np.arange(coarse.n) if start_nodes is None else np.asarray(start_nodes, dtype=int)
    worst = 0.0
    for tau in taus:
        if tau < 0:
            raise ValueError("horizons must be nonnegative")
        if tau == 0:
            continue
        field_ = finite_horizon_field(problem, x, p, tau, fine, Variant.PLUS, terminal=terminal, source=hbar_plus)
        rhs = field_.values[nodes * oracle_refine]
        worst = max(worst, float(np.max(np.abs(rhs - vplus.values[nodes]))))
    return worst
