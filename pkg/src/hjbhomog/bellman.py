"""Semi-Lagrangian Bellman operators on interface-aligned periodic grids.

Every node carries a short list of *options*. An option moves the state by one
Euler step of length ``dt = h / M_b`` with velocity ``b``; its foot point lies
between the node and one neighbour, so it is stored as

    (cost rate c, neighbour index nb, weight w = |b| dt / h on the neighbour)

and its contribution to the discounted update is
``dt * (c + source) + gamma * ((1 - w) V[j] + w V[nb])``. Stay options have
``w = 0``.

For a fixed direction the update is affine in ``w``, so only options on the
lower convex hull of the points ``(w, c)`` can ever attain the minimum. Pruning
to the hull is exact and shortens the inner loop several fold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .control_model import (
    ControlProblem,
    EmptyControlSetError,
    Region,
    Variant,
    interface_normal,
    tangential_hamiltonian,
)
from .grid import PeriodicGrid

MOVE, DEPART, STAY = 0, 1, 2


@dataclass(frozen=True)
class OptionTable:
    grid: PeriodicGrid
    cost: np.ndarray
    nb: np.ndarray
    w: np.ndarray
    kind: np.ndarray
    dt: float
    variant: Variant
    regions: tuple[Region, ...]

    @property
    def max_rate(self) -> float:
        c = self.cost[np.isfinite(self.cost)]
        return float(np.max(np.abs(c)))


def _lower_hull(w: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Indices of the lower convex hull vertices of the points ``(w, c)``."""
    order = np.lexsort((c, w))
    hull: list[int] = []
    for k in order:
        if hull and w[hull[-1]] == w[k]:
            continue  # same abscissa, larger cost
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (w[b] - w[a]) * (c[k] - c[a]) - (c[b] - c[a]) * (w[k] - w[a])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(int(k))
    return np.asarray(hull, dtype=int)


def _prune(opts: list[tuple[float, int, float, int]], j: int) -> list[tuple[float, int, float, int]]:
    stays = [o for o in opts if o[2] == 0.0]
    best_stay = [min(stays, key=lambda o: o[0])] if stays else []
    kept = list(best_stay)
    for direction in (+1, -1):
        group = [o for o in opts if o[2] > 0.0 and o[3] == direction]
        if not group:
            continue
        pts = best_stay + group
        w = np.array([o[2] for o in pts])
        c = np.array([o[0] for o in pts])
        for k in _lower_hull(w, c):
            if pts[k][2] > 0.0:
                kept.append(pts[k])
    return kept


def build_options(
    problem: ControlProblem,
    grid: PeriodicGrid,
    p: float,
    variant: Variant | str,
    x: float = 0.0,
    x_live: bool = False,
    prune: bool = True,
) -> OptionTable:
    """Assemble per-node options for the p-augmented cost ``l + b p``.

    With ``x_live`` the slow variable follows the node position (oscillating
    problem); otherwise it is frozen at ``x`` (cell problem).
    """
    variant = Variant(variant)
    part = problem.partition
    n, h, s = grid.n, grid.h, grid.scale
    dt = h / problem.bounds.M_b
    regions = grid.regions(part)
    nodes = grid.nodes
    per_node: list[list[tuple[float, int, float, int]]] = [[] for _ in range(n)]

    def moves(j: int, i: int, alphas: np.ndarray, xj: float, keep=None):
        y = nodes[j] / s
        b = problem.b(i, xj, y, alphas) * np.ones_like(alphas)
        l = problem.l(i, xj, y, alphas) * np.ones_like(alphas)
        for bk, lk in zip(b, l):
            if keep is not None and not keep(bk):
                continue
            wk = abs(bk) * dt / h
            if wk > 1.0 + 1e-12:
                raise ValueError("velocity exceeds M_b")
            wk = min(wk, 1.0)
            direction = 1 if bk > 0 else -1
            yield (float(lk + bk * p), (j + direction) % n, float(wk) if bk != 0 else 0.0, direction)

    kinds: list[list[int]] = [[] for _ in range(n)]
    for j in range(n):
        xj = nodes[j] if x_live else x
        reg = regions[j]
        opts: list[tuple[float, int, float, int]] = []
        if reg is Region.INTERFACE:
            y = nodes[j] / s
            n1 = interface_normal(part, y)
            # departures strictly into each side; sideways-pointing velocities belong to the other side
            opts += list(moves(j, 1, problem.alphas(1), xj, keep=lambda b, n1=n1: b * n1 < 0))
            opts += list(moves(j, 2, problem.alphas(2), xj, keep=lambda b, n1=n1: -b * n1 < 0))
            try:
                stay_rate = -tangential_hamiltonian(problem, xj, y, 0.0, variant)
            except EmptyControlSetError:
                stay_rate = None  # no regular stay here: option absent
            if stay_rate is not None:
                opts.append((stay_rate, j, 0.0, 0))
        else:
            opts += list(moves(j, reg.side, problem.alphas(reg.side), xj))
        if prune:
            opts = _prune(opts, j)
        per_node[j] = opts
        kinds[j] = [STAY if o[2] == 0.0 else (DEPART if reg is Region.INTERFACE else MOVE) for o in opts]

    K = max(len(o) for o in per_node)
    cost = np.full((n, K), np.inf)
    nb = np.zeros((n, K), dtype=np.int64)
    w = np.zeros((n, K))
    kind = np.full((n, K), -1, dtype=np.int8)
    for j, opts in enumerate(per_node):
        for k, (c, m, wk, _) in enumerate(opts):
            cost[j, k], nb[j, k], w[j, k], kind[j, k] = c, m, wk, kinds[j][k]
        nb[j, len(opts):] = j
    return OptionTable(grid=grid, cost=cost, nb=nb, w=w, kind=kind, dt=dt, variant=variant, regions=tuple(regions))


# --------------------------------------------------------------------------- kernels


@numba.njit(cache=True)
def _implicit_sweep(cost, nb, w, dt, gamma, source, V, out):
    n, K = cost.shape
    change = 0.0
    for j in range(n):
        best = np.inf
        for k in range(K):
            c = cost[j, k]
            if c == np.inf:
                break
            wk = w[j, k]
            val = (dt * (c + source) + gamma * wk * V[nb[j, k]]) / (1.0 - gamma * (1.0 - wk))
            if val < best:
                best = val
        out[j] = best
        d = abs(best - V[j])
        if d > change:
            change = d
    return change


@numba.njit(cache=True)
def _discounted_fixed_point(cost, nb, w, dt, gamma, source, V0, tol, max_sweeps):
    V = V0.copy()
    out = np.empty_like(V)
    change = np.inf
    for it in range(max_sweeps):
        change = _implicit_sweep(cost, nb, w, dt, gamma, source, V, out)
        V, out = out, V
        if change <= tol:
            return V, it + 1, change
    return V, max_sweeps, change


@numba.njit(cache=True)
def _explicit_sweep(cost, nb, w, dt, gamma, source, V, out):
    n, K = cost.shape
    for j in range(n):
        best = np.inf
        for k in range(K):
            c = cost[j, k]
            if c == np.inf:
                break
            wk = w[j, k]
            val = dt * (c + source) + gamma * ((1.0 - wk) * V[j] + wk * V[nb[j, k]])
            if val < best:
                best = val
        out[j] = best


@numba.njit(cache=True)
def _backward_dp(cost, nb, w, dt, source, W0, steps):
    W = W0.copy()
    out = np.empty_like(W)
    for _ in range(steps):
        _explicit_sweep(cost, nb, w, dt, 1.0, source, W, out)
        W, out = out, W
    return W


@numba.njit(cache=True)
def _backward_dp_policy(cost, nb, w, dt, source, W0, steps):
    """Backward DP that also records the minimizing option per (step, node)."""
    n, K = cost.shape
    W = W0.copy()
    out = np.empty_like(W)
    policy = np.empty((steps, n), dtype=np.int64)
    for s in range(steps):
        for j in range(n):
            best = np.inf
            arg = 0
            for k in range(K):
                c = cost[j, k]
                if c == np.inf:
                    break
                wk = w[j, k]
                val = dt * (c + source) + (1.0 - wk) * W[j] + wk * W[nb[j, k]]
                if val < best:
                    best = val
                    arg = k
            out[j] = best
            policy[s, j] = arg
        W, out = out, W
    return W, policy


class NonConvergenceError(RuntimeError):
    pass


def discounted_fixed_point(
    table: OptionTable, rho: float, V0: np.ndarray, tol: float, max_sweeps: int, source: float = 0.0
) -> tuple[np.ndarray, int, float]:
    gamma = float(np.exp(-rho * table.dt))
    V, sweeps, change = _discounted_fixed_point(
        table.cost, table.nb, table.w, table.dt, gamma, float(source), np.asarray(V0, dtype=float), tol, max_sweeps
    )
    if change > tol:
        raise NonConvergenceError(f"no convergence after {sweeps} sweeps (last change {change:.3e})")
    return V, sweeps, change


def explicit_sweep(table: OptionTable, V: np.ndarray, gamma: float, source: float = 0.0) -> np.ndarray:
    out = np.empty(table.grid.n)
    _explicit_sweep(table.cost, table.nb, table.w, table.dt, float(gamma), float(source), np.asarray(V, float), out)
    return out


def backward_dp(table: OptionTable, W0: np.ndarray, steps: int, source: float = 0.0) -> np.ndarray:
    return _backward_dp(table.cost, table.nb, table.w, table.dt, float(source), np.asarray(W0, float), int(steps))


@numba.njit(cache=True)
def _backward_dp_track(cost, nb, w, dt, source, W0, steps, node):
    W = W0.copy()
    out = np.empty_like(W)
    track = np.empty(steps)
    for s in range(steps):
        _explicit_sweep(cost, nb, w, dt, 1.0, source, W, out)
        W, out = out, W
        track[s] = W[node]
    return W, track


def backward_dp_track(table: OptionTable, W0: np.ndarray, steps: int, node: int, source: float = 0.0):
    """Backward DP returning the final layer and the value at ``node`` after every step."""
    return _backward_dp_track(
        table.cost, table.nb, table.w, table.dt, float(source), np.asarray(W0, float), int(steps), int(node)
    )


def backward_dp_policy(table: OptionTable, W0: np.ndarray, steps: int, source: float = 0.0):
    return _backward_dp_policy(table.cost, table.nb, table.w, table.dt, float(source), np.asarray(W0, float), int(steps))
