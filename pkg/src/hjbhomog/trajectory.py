"""Controlled trajectories of the scaled bi-domain dynamics.

States live in macro coordinates ``X``; the fast variable is ``y = X / eps``.
Trajectories are produced from explicit control signals by forward Euler with
interface events: a step that would cross a scaled interface point is cut at
the crossing and the state is snapped onto the interface.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.optimize import bisect

from .control_model import (
    TANGENTIAL_TOL,
    ControlProblem,
    MixedControl,
    Region,
    classify_point,
    interface_normal,
)

SideControl = Union[float, tuple[float, float]]
HOLD_TOL = 1e-9
EVENT_TOL = 1e-12
TANGENCY_FACTOR = 10.0


class StepTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class ControlSignal:
    """Piecewise-constant controls on ``[breakpoints[k], breakpoints[k+1])``.

    A segment control is a ``MixedControl``, a scalar used on whichever side is
    occupied, or a pair ``(alpha1, alpha2)`` of side-specific values. The
    region actually occupied decides which part is used.
    """

    breakpoints: tuple[float, ...]
    controls: tuple[SideControl | MixedControl, ...]

    def __post_init__(self) -> None:
        bp = tuple(float(t) for t in self.breakpoints)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "controls", tuple(self.controls))
        if len(bp) != len(self.controls) + 1 or not self.controls:
            raise ValueError("need one control per segment and at least one segment")
        if bp[0] != 0.0 or any(b <= a for a, b in zip(bp, bp[1:])):
            raise ValueError("breakpoints must start at 0 and increase strictly")

    @classmethod
    def constant(cls, control: SideControl | MixedControl, T: float) -> "ControlSignal":
        return cls((0.0, float(T)), (control,))

    @property
    def horizon(self) -> float:
        return self.breakpoints[-1]

    def segment(self, t: float) -> int:
        k = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return min(max(k, 0), len(self.controls) - 1)


@dataclass(frozen=True)
class Trajectory:
    """Samples ``0..m``; interval arrays have length ``m`` and describe ``[t_k, t_{k+1}]``."""

    eps: float
    dt: float
    times: np.ndarray
    states: np.ndarray
    regions: tuple[Region, ...]
    cost_accum: np.ndarray
    rates: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    mu: np.ndarray
    on_interface: np.ndarray
    normal_speed: np.ndarray
    b1n1: np.ndarray
    b2n2: np.ndarray
    signal: ControlSignal
    interface_segments: tuple[tuple[int, int], ...] = ()
    regular_flags: tuple[bool, ...] = ()

    @property
    def tangency_bound(self) -> float:
        return TANGENCY_FACTOR * self.dt / self.eps

    @property
    def max_tangency(self) -> float:
        held = self.on_interface
        return float(np.max(self.normal_speed[held])) if np.any(held) else 0.0

    @property
    def tangency_ok(self) -> bool:
        return self.max_tangency <= self.tangency_bound

    def sample_regular_flags(self) -> list[str]:
        flags = [""] * len(self.times)
        for (a, b), ok in zip(self.interface_segments, self.regular_flags):
            for k in range(a, b + 1):
                flags[k] = "1" if ok else "0"
        return flags

    def write_csv(self, path) -> None:
        from .cli import format_float

        flags = self.sample_regular_flags()
        m = len(self.rates)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "y", "region", "alpha1", "alpha2", "mu", "cost_accum", "regular_flag"])
            for k in range(len(self.times)):
                j = min(k, m - 1)
                w.writerow([
                    format_float(self.times[k]),
                    format_float(self.states[k]),
                    self.regions[k].value,
                    format_float(self.alpha1[j]),
                    format_float(self.alpha2[j]),
                    format_float(self.mu[j]),
                    format_float(self.cost_accum[k]),
                    flags[k],
                ])


def _cell_interface(problem: ControlProblem, eps: float, X: float) -> float | None:
    """Exact cell coordinate of the interface point at ``X``, or None off the interface."""
    part = problem.partition
    y = X / eps
    k, d = part.nearest_interface(y)
    if abs(d) > part.snap:
        return None
    return y - d


def _next_interface(problem: ControlProblem, eps: float, X: float, v: float) -> float:
    """Macro position of the first scaled interface point strictly ahead of ``X`` in direction ``v``."""
    part = problem.partition
    y = X / eps
    P = part.period
    base = math.floor(y / P) * P
    cands = [q + base + s * P for s in (-1, 0, 1, 2) for q in part.interface_points]
    if v > 0:
        ahead = [z for z in cands if z > y + part.snap]
        return eps * min(ahead)
    ahead = [z for z in cands if z < y - part.snap]
    return eps * max(ahead)


def _side_alpha(control, i: int) -> float:
    if isinstance(control, MixedControl):
        return control.alpha1 if i == 1 else control.alpha2
    if isinstance(control, tuple):
        return float(control[i - 1])
    return float(control)


def integrate(
    problem: ControlProblem,
    eps: float,
    x0: float,
    signal: ControlSignal,
    T: float,
    dt: float,
    h_cell: float | None = None,
) -> Trajectory:
    if eps <= 0 or dt <= 0 or T <= 0:
        raise ValueError("eps, dt and T must be positive")
    if signal.horizon < T - 1e-12:
        raise ValueError("control signal does not cover the horizon")
    part = problem.partition
    if h_cell is None:
        h_cell = part.min_gap() / 10
    if dt > eps * h_cell + 1e-15:
        raise StepTooLargeError(f"dt={dt} exceeds eps*h_cell={eps * h_cell}")

    t, X = 0.0, float(x0)
    z = _cell_interface(problem, eps, X)
    if z is not None:
        X = eps * z
    times, states, cost = [t], [X], [0.0]
    rates, a1s, a2s, mus, held, nspeed, b1n1s, b2n2s = [], [], [], [], [], [], [], []

    while t < T - 1e-14:
        seg = signal.segment(t)
        t_end = min(T, signal.breakpoints[seg + 1], t + dt)
        step = t_end - t
        if step <= 1e-15:
            # a breakpoint within rounding distance: move past it
            t = t_end
            continue
        ctrl = signal.controls[seg]
        z = _cell_interface(problem, eps, X)
        hold = False
        b1n1 = b2n2 = math.nan
        a1 = a2 = mu = math.nan
        if z is not None:
            n1 = interface_normal(part, z)
            if isinstance(ctrl, MixedControl):
                a1, a2, mu = ctrl.alpha1, ctrl.alpha2, ctrl.mu
            else:
                a1, a2 = _side_alpha(ctrl, 1), _side_alpha(ctrl, 2)
            b1 = float(problem.b(1, X, z, a1))
            b2 = float(problem.b(2, X, z, a2))
            l1 = float(problem.l(1, X, z, a1))
            l2 = float(problem.l(2, X, z, a2))
            if not isinstance(ctrl, MixedControl):
                # a side control: depart into a side it points into, otherwise slide (Filippov)
                if b1 * n1 < 0:
                    mu = 1.0
                elif -b2 * n1 < 0:
                    mu = 0.0
                elif b1 == b2:
                    mu = 1.0
                else:
                    mu = b2 / (b2 - b1)
            v = mu * b1 + (1 - mu) * b2
            rate = mu * l1 + (1 - mu) * l2
            b1n1, b2n2 = b1 * n1, -b2 * n1
            if abs(v * n1) <= HOLD_TOL:
                hold, v = True, 0.0
                speed = abs(mu * b1 + (1 - mu) * b2)
            else:
                speed = abs(v)
            y_eval = z
        else:
            y_eval = X / eps
            i = classify_point(part, y_eval).side
            alpha = _side_alpha(ctrl, i)
            v = float(problem.b(i, X, y_eval, alpha))
            rate = float(problem.l(i, X, y_eval, alpha))
            if i == 1:
                a1, mu = alpha, 1.0
            else:
                a2, mu = alpha, 0.0
            speed = math.nan

        X_new = X + v * step
        if not hold and v != 0.0:
            target = _next_interface(problem, eps, X, v)
            if (X_new - target) * (X - target) <= 0:
                # event: locate by bisection on the signed distance and snap
                s_hit = bisect(lambda s: X + v * s - target, 0.0, step, xtol=EVENT_TOL)
                s_hit = min(max(s_hit, 0.0), step)
                if s_hit > 0:
                    step = s_hit
                X_new = target
        t_new = t + step
        rates.append(rate)
        a1s.append(a1)
        a2s.append(a2)
        mus.append(mu)
        held.append(hold)
        nspeed.append(speed if hold else math.nan)
        b1n1s.append(b1n1)
        b2n2s.append(b2n2)
        cost.append(cost[-1] + rate * step)
        t, X = t_new, X_new
        times.append(t)
        states.append(X)

    regions = tuple(classify_point(part, x / eps) for x in states)
    held_arr = np.asarray(held, dtype=bool)
    segments = _interface_segments(held_arr)
    b1n1_arr, b2n2_arr = np.asarray(b1n1s), np.asarray(b2n2s)
    flags = tuple(
        bool(np.all(b1n1_arr[a:b] >= -TANGENTIAL_TOL) and np.all(b2n2_arr[a:b] >= -TANGENTIAL_TOL))
        for a, b in segments
    )
    return Trajectory(
        eps=float(eps),
        dt=float(dt),
        times=np.asarray(times),
        states=np.asarray(states),
        regions=regions,
        cost_accum=np.asarray(cost),
        rates=np.asarray(rates),
        alpha1=np.asarray(a1s),
        alpha2=np.asarray(a2s),
        mu=np.asarray(mus),
        on_interface=held_arr,
        normal_speed=np.asarray(nspeed),
        b1n1=b1n1_arr,
        b2n2=b2n2_arr,
        signal=signal,
        interface_segments=segments,
        regular_flags=flags,
    )


def _interface_segments(held: np.ndarray) -> tuple[tuple[int, int], ...]:
    """Maximal runs of held intervals as sample-index pairs ``(first, last)``."""
    segs = []
    k, m = 0, len(held)
    while k < m:
        if held[k]:
            start = k
            while k < m and held[k]:
                k += 1
            segs.append((start, k))
        else:
            k += 1
    return tuple(segs)


@dataclass(frozen=True)
class DiscountedCost:
    value: float
    tail_bound: float

    @property
    def upper(self) -> float:
        return self.value + self.tail_bound


def discounted_cost(problem: ControlProblem, traj: Trajectory, lam: float | None = None, eps: float | None = None
                    ) -> DiscountedCost:
    """Trapezoidal ``int e^{-lam t} l dt`` along the samples plus the bound on the neglected tail."""
    lam = problem.lam if lam is None else lam
    if lam <= 0:
        raise ValueError("lambda must be positive")
    t = traj.times
    disc = np.exp(-lam * t)
    value = float(np.sum(traj.rates * np.diff(t) * 0.5 * (disc[:-1] + disc[1:])))
    tail = problem.bounds.M_l * math.exp(-lam * t[-1]) / lam
    return DiscountedCost(value=value, tail_bound=tail)


def classify_regularity(problem: ControlProblem, traj: Trajectory) -> tuple[list[bool], str]:
    flags = list(traj.regular_flags)
    return flags, "regular" if all(flags) else "singular"
