"""Oscillating problems at scale eps, the homogenized equation, and eps -> 0 studies."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import bellman
from .bellman import build_options
from .cell_solver import STOP_TOL, MAX_SWEEPS
from .control_model import ControlProblem, Variant
from .effective_hamiltonian import HBarTable, tabulate
from .ergodic_oracle import DEFAULT_HORIZON
from .grid import PeriodicGrid, ValueField

MACRO_LENGTH = 2.0
MACRO_N = 3200
DEFAULT_P_GRID = tuple(np.round(np.arange(-6.0, 6.0 + 1e-9, 0.25), 10))
EFFECTIVE_TOL = 1e-10
EFFECTIVE_MAX_SWEEPS = 2_000_000


class PGridExceededError(RuntimeError):
    pass


@dataclass(frozen=True)
class EpsSolution:
    eps: float
    variant: Variant
    field: ValueField
    sweeps: int = 0

    @property
    def grid(self) -> PeriodicGrid:
        return self.field.grid


@dataclass(frozen=True)
class ConvergenceReport:
    variant: Variant
    eps_list: tuple[float, ...]
    sup_errors: tuple[float, ...]
    effective: ValueField
    slopes: tuple[float, ...] = ()
    hbar: HBarTable | None = field(default=None, repr=False)
    solutions: tuple[EpsSolution, ...] = field(default=(), repr=False)

    @property
    def monotone(self) -> bool:
        e = self.sup_errors
        return all(b <= a for a, b in zip(e, e[1:]))

    def rows(self):
        for eps, err in zip(self.eps_list, self.sup_errors):
            yield (self.variant.value, eps, err)


def macro_grid(problem: ControlProblem, eps: float, n: int = MACRO_N, length: float = MACRO_LENGTH) -> PeriodicGrid:
    """Grid on ``[0, length)`` whose nodes contain every scaled interface point."""
    return PeriodicGrid.aligned(problem.partition, n, length=length, scale=eps)


def solve_epsilon(
    problem: ControlProblem,
    eps: float,
    grid: PeriodicGrid | None = None,
    variant: Variant | str = Variant.MINUS,
    lam: float | None = None,
    stop_tol: float = STOP_TOL,
    max_sweeps: int = MAX_SWEEPS,
) -> EpsSolution:
    """Discounted fixed point of the scaled problem with ``x`` following the state."""
    variant = Variant(variant)
    lam = problem.lam if lam is None else float(lam)
    if grid is None:
        grid = macro_grid(problem, eps)
    if abs(grid.scale - eps) > 1e-15:
        raise ValueError(f"grid scale {grid.scale} does not match eps={eps}")
    table = build_options(problem, grid, 0.0, variant, x_live=True)
    V0 = np.full(grid.n, problem.bounds.M_l * table.dt / -np.expm1(-lam * table.dt))
    V, sweeps, _ = bellman.discounted_fixed_point(table, lam, V0, stop_tol / lam, max_sweeps)
    return EpsSolution(eps=float(eps), variant=variant, field=ValueField(grid, V), sweeps=int(sweeps))


def _lf_sweep(U, hbar: HBarTable, x, lam, h, sigma, theta):
    up, um = np.roll(U, -1), np.roll(U, 1)
    grad = (up - um) / (2 * h)
    H = np.array([hbar.interpolate(xi, gi) for xi, gi in zip(x, grad)]) if hbar.x_samples.size > 1 \
        else hbar.interpolate(x[0], grad)
    return U - theta * (lam * U + H - sigma * (up - 2 * U + um) / h**2), grad


def effective_residual(field_: ValueField, hbar: HBarTable, lam: float, M_b: float = 1.0) -> float:
    """Sup change of one Lax-Friedrichs sweep applied to ``field_``."""
    h = field_.grid.h
    sigma = M_b * h / 2
    theta = 1.0 / (lam + 2 * sigma / h**2)
    U = np.array(field_.values)
    new, _ = _lf_sweep(U, hbar, field_.grid.nodes, lam, h, sigma, theta)
    return float(np.max(np.abs(new - U)))


def solve_effective(
    hbar: HBarTable,
    lam: float,
    grid: PeriodicGrid,
    M_b: float | None = None,
    tol: float = EFFECTIVE_TOL,
    max_sweeps: int = EFFECTIVE_MAX_SWEEPS,
) -> ValueField:
    """Monotone Lax-Friedrichs fixed point of ``lam U + Hbar(x, U') = 0`` on a periodic grid.

    The artificial viscosity ``sigma = M_b h / 2`` dominates the slope of the
    interpolated table, and the pseudo-step makes the update a contraction with
    factor ``1 - theta * lam``.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if not hbar.complete:
        raise ValueError("effective Hamiltonian table has missing entries")
    M_b = hbar.metadata.get("M_b", 1.0) if M_b is None else M_b
    h = grid.h
    sigma = M_b * h / 2
    theta = 1.0 / (lam + 2 * sigma / h**2)
    x = grid.nodes
    U = np.zeros(grid.n)
    pmin, pmax = hbar.p_samples[0], hbar.p_samples[-1]
    for _ in range(max_sweeps):
        new, grad = _lf_sweep(U, hbar, x, lam, h, sigma, theta)
        if grad.min() < pmin or grad.max() > pmax:
            raise PGridExceededError(f"slopes in [{grad.min():.3g}, {grad.max():.3g}] leave the tabulated p-range")
        change = float(np.max(np.abs(new - U)))
        U = new
        if change <= tol:
            return ValueField(grid, U)
    raise bellman.NonConvergenceError(f"Lax-Friedrichs iteration stalled (last change {change:.3e})")


def effective_table(
    problem: ControlProblem,
    variant: Variant | str,
    p_grid: Sequence[float] = DEFAULT_P_GRID,
    method: str = "horizon",
    cell_n: int = 400,
    T: float = DEFAULT_HORIZON,
) -> HBarTable:
    cell = PeriodicGrid.aligned(problem.partition, cell_n)
    table = tabulate(problem, [0.0], p_grid, variant, method, grid=cell, T=T)
    table.metadata["M_b"] = problem.bounds.M_b
    return table


def convergence_study(
    problem: ControlProblem,
    eps_list: Sequence[float],
    lam: float | None = None,
    variant: Variant | str = Variant.MINUS,
    macro_n: int = MACRO_N,
    macro_length: float = MACRO_LENGTH,
    hbar: HBarTable | None = None,
    method: str = "horizon",
    p_grid: Sequence[float] = DEFAULT_P_GRID,
    cell_n: int = 400,
    T: float = DEFAULT_HORIZON,
) -> ConvergenceReport:
    variant = Variant(variant)
    lam = problem.lam if lam is None else float(lam)
    eps_list = tuple(float(e) for e in eps_list)
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    if hbar is None:
        hbar = effective_table(problem, variant, p_grid, method, cell_n, T)
    flat = PeriodicGrid(n=macro_n, length=macro_length, interface_indices=())
    U_eff = solve_effective(hbar, lam, flat, M_b=problem.bounds.M_b)
    errors, slopes, sols = [], [], []
    for eps in eps_list:
        sol = solve_epsilon(problem, eps, macro_grid(problem, eps, macro_n, macro_length), variant, lam)
        sols.append(sol)
        errors.append(float(np.max(np.abs(sol.field.values - U_eff.values))))
        slopes.append(sol.field.max_slope())
    return ConvergenceReport(variant, eps_list, tuple(errors), U_eff, tuple(slopes), hbar, tuple(sols))


def variant_gap(
    problem: ControlProblem,
    eps: float,
    lam: float | None = None,
    grid: PeriodicGrid | None = None,
) -> tuple[float, float]:
    """Extremes of ``U_plus - U_minus`` over the nodes of a shared grid."""
    if grid is None:
        grid = macro_grid(problem, eps)
    um = solve_epsilon(problem, eps, grid, Variant.MINUS, lam).field.values
    up = solve_epsilon(problem, eps, grid, Variant.PLUS, lam).field.values
    gap = up - um
    return float(gap.max()), float(gap.min())
