"""Bi-domain periodic control problems and their pointwise objects.

A problem lives on a 1-D periodic partition of the line into two families of
open intervals (``Omega1``, ``Omega2``) separated by interface points ``H``.
Each side carries its own dynamics ``b_i(x, y, alpha)`` and running cost
``l_i(x, y, alpha)``; on ``H`` the admissible motions are convex mixtures
``a = (alpha1, alpha2, mu)``.

Evaluators are plain callables ``f(i, x, y, alpha)`` that broadcast over numpy
arrays in ``y`` and ``alpha``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

Evaluator = Callable[[int, float, "np.ndarray | float", "np.ndarray | float"], "np.ndarray | float"]

SNAP_TOL = 1e-12
TANGENTIAL_TOL = 1e-9


class Region(str, Enum):
    OMEGA1 = "Omega1"
    OMEGA2 = "Omega2"
    INTERFACE = "H"

    def other(self) -> "Region":
        if self is Region.OMEGA1:
            return Region.OMEGA2
        if self is Region.OMEGA2:
            return Region.OMEGA1
        raise ValueError("the interface has no complementary region")

    @property
    def side(self) -> int:
        if self is Region.INTERFACE:
            raise ValueError("the interface is not a side")
        return 1 if self is Region.OMEGA1 else 2


class Variant(str, Enum):
    """``minus``: all strategies (U-). ``plus``: regular strategies only (U+)."""

    MINUS = "minus"
    PLUS = "plus"


class EmptyControlSetError(ValueError):
    """No (regular) tangential control was found at an interface point."""


class NotAnInterfaceError(ValueError):
    pass


@dataclass(frozen=True)
class DomainPartition:
    period: float
    interface_points: tuple[float, ...]
    first_region: Region = Region.OMEGA1
    dimension: int = 1

    def __post_init__(self) -> None:
        pts = tuple(float(q) for q in self.interface_points)
        object.__setattr__(self, "interface_points", pts)
        object.__setattr__(self, "first_region", Region(self.first_region))
        if self.dimension != 1:
            raise ValueError("only 1-D partitions are supported by the solvers")
        if not self.period > 0:
            raise ValueError("period must be positive")
        if len(pts) < 2 or len(pts) % 2:
            raise ValueError("need an even number (>= 2) of interface points per period")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("interface points must be strictly increasing")
        if pts[0] < 0 or pts[-1] >= self.period:
            raise ValueError("interface points must lie in [0, period)")
        if self.first_region is Region.INTERFACE:
            raise ValueError("first_region must be Omega1 or Omega2")

    @property
    def snap(self) -> float:
        return SNAP_TOL * self.period

    def interval_region(self, k: int) -> Region:
        """Label of the open interval starting at interface point ``k`` (mod count)."""
        k %= len(self.interface_points)
        return self.first_region if k % 2 == 0 else self.first_region.other()

    def nearest_interface(self, y: float) -> tuple[int, float]:
        """Index of the closest interface point and the signed offset ``y - point``."""
        r = math.fmod(y, self.period)
        if r < 0:
            r += self.period
        best_k, best_d = 0, math.inf
        for k, q in enumerate(self.interface_points):
            for shift in (-self.period, 0.0, self.period):
                d = r - (q + shift)
                if abs(d) < abs(best_d):
                    best_k, best_d = k, d
        return best_k, best_d

    def min_gap(self) -> float:
        pts = self.interface_points
        gaps = [b - a for a, b in zip(pts, pts[1:])]
        gaps.append(pts[0] + self.period - pts[-1])
        return min(gaps)


def classify_point(partition: DomainPartition, y: float) -> Region:
    _, d = partition.nearest_interface(float(y))
    if abs(d) <= partition.snap:
        return Region.INTERFACE
    r = math.fmod(float(y), partition.period)
    if r < 0:
        r += partition.period
    k = bisect.bisect_right(partition.interface_points, r) - 1
    return partition.interval_region(k)


def interface_normal(partition: DomainPartition, y: float) -> float:
    """Unit normal ``n1(y)`` exterior to Omega1 at an interface point (``n2 = -n1``)."""
    k, d = partition.nearest_interface(float(y))
    if abs(d) > partition.snap:
        raise NotAnInterfaceError(f"y={y} is not an interface point")
    return -1.0 if partition.interval_region(k) is Region.OMEGA1 else 1.0


@dataclass(frozen=True)
class ControlSample:
    values: tuple[float, ...]
    lower: float
    upper: float

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if not vals:
            raise ValueError("control sample must be nonempty")
        if any(b < a for a, b in zip(vals, vals[1:])):
            raise ValueError("control sample must be sorted")
        if vals[0] < self.lower or vals[-1] > self.upper:
            raise ValueError("control sample leaves its declared bounds")

    @classmethod
    def uniform(cls, lower: float, upper: float, n: int) -> "ControlSample":
        if n < 1:
            raise ValueError("resolution must be positive")
        vals = np.linspace(lower, upper, n) if n > 1 else np.array([0.5 * (lower + upper)])
        return cls(tuple(vals.tolist()), lower, upper)

    @property
    def resolution(self) -> int:
        return len(self.values)

    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class MixedControl:
    alpha1: float
    alpha2: float
    mu: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu={self.mu} outside [0, 1]")


@dataclass(frozen=True)
class ProblemBounds:
    M_b: float
    M_l: float
    delta: float
    lip_b_y: float = 0.0
    lip_l_y: float = 0.0

    def __post_init__(self) -> None:
        if min(self.M_b, self.M_l, self.delta) <= 0:
            raise ValueError("M_b, M_l and delta must be positive")
        if min(self.lip_b_y, self.lip_l_y) < 0:
            raise ValueError("Lipschitz constants must be nonnegative")
        if self.delta > self.M_b:
            raise ValueError("delta cannot exceed M_b")


@dataclass(frozen=True)
class ControlProblem:
    partition: DomainPartition
    dynamics: Evaluator
    cost: Evaluator
    controls: tuple[ControlSample, ControlSample]
    bounds: ProblemBounds
    lam: float = 1.0
    mu_resolution: int = 21
    preset_id: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if not self.lam > 0:
            raise ValueError("actualization factor must be positive")
        if self.mu_resolution < 2:
            raise ValueError("need at least the endpoints mu = 0, 1")
        problems = check_problem(self)
        if problems:
            raise ValueError("invalid control problem: " + "; ".join(problems))

    def b(self, i: int, x: float, y, alpha):
        return np.asarray(self.dynamics(i, x, y, alpha), dtype=float)

    def l(self, i: int, x: float, y, alpha):
        return np.asarray(self.cost(i, x, y, alpha), dtype=float)

    def alphas(self, i: int) -> np.ndarray:
        return self.controls[i - 1].array()

    def mu_grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.mu_resolution)


def check_problem(problem: ControlProblem, n_probe: int = 33, xs: Sequence[float] = (0.0,)) -> list[str]:
    """Probe the boundedness, periodicity and controllability invariants on samples."""
    part, bnd = problem.partition, problem.bounds
    ys = np.concatenate([np.linspace(0.0, part.period, n_probe, endpoint=False), part.interface_points])
    out = []
    slack = 1e-12
    for x in xs:
        for i in (1, 2):
            a = problem.alphas(i)[None, :]
            y = ys[:, None]
            b = problem.b(i, x, y, a)
            l = problem.l(i, x, y, a)
            if not (np.all(np.isfinite(b)) and np.all(np.isfinite(l))):
                out.append(f"side {i}: non-finite evaluator output")
                continue
            if np.max(np.abs(b)) > bnd.M_b + slack:
                out.append(f"side {i}: |b| exceeds M_b")
            if np.max(np.abs(l)) > bnd.M_l + slack:
                out.append(f"side {i}: |l| exceeds M_l")
            bs = problem.b(i, x, y + part.period, a)
            ls = problem.l(i, x, y + part.period, a)
            if np.max(np.abs(bs - b)) > 1e-9 or np.max(np.abs(ls - l)) > 1e-9:
                out.append(f"side {i}: evaluators are not periodic in y")
            for q in part.interface_points:
                bq = problem.b(i, x, q, problem.alphas(i))
                if np.min(bq) > -bnd.delta + slack or np.max(bq) < bnd.delta - slack:
                    out.append(f"side {i}: sampled controllability fails at y={q}")
    return out


def mixed_dynamics_cost(problem: ControlProblem, x: float, y: float, a: MixedControl) -> tuple[float, float]:
    if classify_point(problem.partition, y) is not Region.INTERFACE:
        raise NotAnInterfaceError(f"y={y} is not an interface point")
    b1 = float(problem.b(1, x, y, a.alpha1))
    b2 = float(problem.b(2, x, y, a.alpha2))
    l1 = float(problem.l(1, x, y, a.alpha1))
    l2 = float(problem.l(2, x, y, a.alpha2))
    return a.mu * b1 + (1 - a.mu) * b2, a.mu * l1 + (1 - a.mu) * l2


@dataclass(frozen=True)
class TangentialTable:
    """Vectorized tangential controls at one interface point, in enumeration order."""

    alpha1: np.ndarray
    alpha2: np.ndarray
    mu: np.ndarray
    b_H: np.ndarray
    l_H: np.ndarray
    b1n1: np.ndarray
    b2n2: np.ndarray

    def __len__(self) -> int:
        return len(self.mu)

    def regular_mask(self, tol: float = TANGENTIAL_TOL) -> np.ndarray:
        return (self.b1n1 >= -tol) & (self.b2n2 >= -tol)

    def controls(self, mask: np.ndarray | None = None) -> list[MixedControl]:
        idx = np.arange(len(self)) if mask is None else np.flatnonzero(mask)
        return [MixedControl(float(self.alpha1[k]), float(self.alpha2[k]), float(self.mu[k])) for k in idx]


def tangential_table(problem: ControlProblem, x: float, y: float, tol: float = TANGENTIAL_TOL) -> TangentialTable:
    n1 = interface_normal(problem.partition, y)
    a1, a2 = problem.alphas(1), problem.alphas(2)
    b1 = problem.b(1, x, y, a1) * np.ones_like(a1)
    b2 = problem.b(2, x, y, a2) * np.ones_like(a2)
    l1 = problem.l(1, x, y, a1) * np.ones_like(a1)
    l2 = problem.l(2, x, y, a2) * np.ones_like(a2)
    mus = problem.mu_grid()

    # pair (alpha1, alpha2) outer/middle, mu inner; exact roots merged into the mu order
    B1, B2 = np.meshgrid(b1, b2, indexing="ij")
    denom = B2 - B1
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.where(denom != 0, B2 / denom, np.nan)
    root_ok = np.isfinite(root) & (root >= 0) & (root <= 1)
    n1_, n2_ = len(a1), len(a2)
    m = len(mus)
    mu_all = np.empty((n1_, n2_, m + 1))
    mu_all[:, :, :m] = mus
    mu_all[:, :, m] = np.where(root_ok, root, np.nan)
    # drop roots that duplicate a grid value
    dup = np.any(np.abs(mu_all[:, :, :m] - mu_all[:, :, m:]) <= 1e-15, axis=2)
    mu_all[:, :, m] = np.where(dup, np.nan, mu_all[:, :, m])
    mu_all.sort(axis=2)  # nan sorts last

    bH = mu_all * B1[:, :, None] + (1 - mu_all) * B2[:, :, None]
    keep = np.isfinite(mu_all) & (np.abs(bH * n1) <= tol)
    i1, i2, _ = np.nonzero(keep)
    mu = mu_all[keep]
    L1 = l1[i1]
    L2 = l2[i2]
    return TangentialTable(
        alpha1=a1[i1],
        alpha2=a2[i2],
        mu=mu,
        b_H=bH[keep],
        l_H=mu * L1 + (1 - mu) * L2,
        b1n1=b1[i1] * n1,
        b2n2=b2[i2] * (-n1),
    )


def tangential_control_set(problem: ControlProblem, x: float, y: float, tol: float = TANGENTIAL_TOL) -> list[MixedControl]:
    table = tangential_table(problem, x, y, tol)
    if len(table) == 0:
        raise EmptyControlSetError(f"no tangential control at y={y}; controllability violated or sampling too coarse")
    return table.controls()


def regular_filter(
    problem: ControlProblem, x: float, y: float, controls: Sequence[MixedControl], tol: float = TANGENTIAL_TOL
) -> list[MixedControl]:
    n1 = interface_normal(problem.partition, y)
    kept = []
    for a in controls:
        b1 = float(problem.b(1, x, y, a.alpha1))
        b2 = float(problem.b(2, x, y, a.alpha2))
        if b1 * n1 >= -tol and -b2 * n1 >= -tol:
            kept.append(a)
    return kept


def hamiltonian(problem: ControlProblem, i: int, x: float, y: float, p: float) -> float:
    """``H_i(x, y, p) = max over sampled alpha of -b_i p - l_i``."""
    a = problem.alphas(i)
    vals = np.broadcast_to(-problem.b(i, x, y, a) * p - problem.l(i, x, y, a), a.shape)
    return float(vals[int(np.argmax(vals))])


def tangential_hamiltonian(
    problem: ControlProblem,
    x: float,
    y: float,
    p_T: float = 0.0,
    variant: Variant | str = Variant.MINUS,
    tol: float = TANGENTIAL_TOL,
) -> float:
    """Tangential Hamiltonian ``H_T`` (minus) or ``H_T^reg`` (plus) at an interface point.

    In 1-D the tangent space of ``H`` is ``{0}``: the costate is projected onto it
    and the transport term vanishes, leaving ``-min l_H`` over the admissible set.
    """
    variant = Variant(variant)
    table = tangential_table(problem, x, y, tol)
    lH = table.l_H
    if variant is Variant.PLUS:
        lH = lH[table.regular_mask(tol)]
    if lH.size == 0:
        kind = "regular tangential" if variant is Variant.PLUS else "tangential"
        raise EmptyControlSetError(f"no {kind} control at y={y}")
    return float(-lH[int(np.argmin(lH))])


@dataclass(frozen=True)
class Regularized:
    """Result of pushing a non-tangential mixed control back into ``A0``.

    ``b_H``/``l_H`` are the exact convex combination
    ``mu_bar * (b_H, l_H)(a) + (1 - mu_bar) * (b_H, l_H)(a_push)``; ``control``
    realizes that velocity as a single mixed control by averaging each side's
    velocity with its mass weights.
    """

    control: MixedControl
    mu_bar: float
    b_H: float
    l_H: float


def regularization_constant(bounds: ProblemBounds) -> float:
    """Constant ``2 max(M_b, M_l) / delta`` bounding the (b_H, l_H) shift per unit normal drift."""
    return 2.0 * max(bounds.M_b, bounds.M_l) / bounds.delta


def lemma_constants(bounds: ProblemBounds, normal_lip: float = 0.0) -> tuple[float, float]:
    """Coefficients of ``omega(x - z)`` and ``|y - w|`` in the control-regularization estimate.

    Returns ``(C_x, C_y)`` with ``C_x = 2 max(M_b, M_l)/delta + 1`` (the ``omega_l``
    term has coefficient 1 and is folded in by callers) and
    ``C_y = (2 max(M_b, M_l)/delta) (lip_b + M_b L_n) + max(lip_b, lip_l)``.
    """
    k = regularization_constant(bounds)
    c_x = k + 1.0
    c_y = k * (bounds.lip_b_y + bounds.M_b * normal_lip) + max(bounds.lip_b_y, bounds.lip_l_y)
    return c_x, c_y


def _invert_side_velocity(problem: ControlProblem, i: int, x: float, y: float, target: float) -> float:
    lo, hi = problem.controls[i - 1].lower, problem.controls[i - 1].upper
    f = lambda a: float(problem.b(i, x, y, a)) - target  # noqa: E731
    flo, fhi = f(lo), f(hi)
    if abs(flo) <= 1e-15:
        return lo
    if abs(fhi) <= 1e-15:
        return hi
    if flo * fhi > 0:
        raise ValueError(f"side-{i} velocity {target} not attained on the control interval")
    return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def regularize_control(
    problem: ControlProblem, x: float, y: float, a: MixedControl, a_push: MixedControl, tol: float = 1e-9
) -> Regularized:
    n1 = interface_normal(problem.partition, y)
    delta = problem.bounds.delta
    b_a, l_a = mixed_dynamics_cost(problem, x, y, a)
    b_p, l_p = mixed_dynamics_cost(problem, x, y, a_push)
    s = b_a * n1
    if s <= 0:
        raise ValueError("a must have a positive normal velocity b_H . n1 > 0")
    if abs(b_p * n1 + delta) > tol:
        raise ValueError("a_push must satisfy b_H . n1 = -delta")
    mu_bar = delta / (s + delta)
    b_H = mu_bar * b_a + (1 - mu_bar) * b_p
    l_H = mu_bar * l_a + (1 - mu_bar) * l_p

    # side masses and mass-weighted side velocities of the two-point mixture
    w1a, w1p = mu_bar * a.mu, (1 - mu_bar) * a_push.mu
    w2a, w2p = mu_bar * (1 - a.mu), (1 - mu_bar) * (1 - a_push.mu)
    m1 = w1a + w1p
    alphas = []
    for i, (wa, wp, al, ap) in enumerate(((w1a, w1p, a.alpha1, a_push.alpha1), (w2a, w2p, a.alpha2, a_push.alpha2)), 1):
        if wa + wp <= 0:
            alphas.append(al)
            continue
        v = (wa * float(problem.b(i, x, y, al)) + wp * float(problem.b(i, x, y, ap))) / (wa + wp)
        alphas.append(_invert_side_velocity(problem, i, x, y, v))
    control = MixedControl(alphas[0], alphas[1], min(max(m1, 0.0), 1.0))
    return Regularized(control=control, mu_bar=mu_bar, b_H=b_H, l_H=l_H)


def pushing_control(problem: ControlProblem, x: float, y: float, sign: float = -1.0) -> MixedControl:
    """A mixed control with normal velocity ``sign * delta`` built from one side's sample range."""
    n1 = interface_normal(problem.partition, y)
    target = sign * problem.bounds.delta * n1  # velocity with b . n1 = sign * delta
    for i in (1, 2):
        try:
            alpha = _invert_side_velocity(problem, i, x, y, target)
        except ValueError:
            continue
        other = problem.controls[2 - i].values
        idle = other[len(other) // 2]
        return MixedControl(alpha, idle, 1.0) if i == 1 else MixedControl(idle, alpha, 0.0)
    raise EmptyControlSetError("controllability radius not attained on either side")


# --------------------------------------------------------------------------- presets


def _oned_dynamics(i, x, y, alpha):
    return np.asarray(alpha, dtype=float) + 0.0 * np.asarray(y, dtype=float)


def _oned_cost(i, x, y, alpha):
    c = np.cos(np.pi * np.asarray(y, dtype=float))
    sign = -1.0 if i == 1 else 1.0
    return np.abs(np.asarray(alpha, dtype=float) + sign * c) + 1.0 - np.abs(c)


def oned_example(control_resolution: int = 41, mu_resolution: int = 21, lam: float = 1.0) -> ControlProblem:
    """Two-sided example with zero-cost singular stays at every interface point."""
    part = DomainPartition(period=2.0, interface_points=(0.0, 1.0), first_region=Region.OMEGA1)
    sample = ControlSample.uniform(-1.0, 1.0, control_resolution)
    return ControlProblem(
        partition=part,
        dynamics=_oned_dynamics,
        cost=_oned_cost,
        controls=(sample, sample),
        bounds=ProblemBounds(M_b=1.0, M_l=2.0, delta=1.0, lip_b_y=0.0, lip_l_y=2.0 * np.pi),
        lam=lam,
        mu_resolution=mu_resolution,
        preset_id="oned_example",
    )


def _constant_cost(c: float):
    def cost(i, x, y, alpha):
        return c + 0.0 * np.asarray(alpha, dtype=float) + 0.0 * np.asarray(y, dtype=float)

    return cost


def identical_sides_offset(
    offset: float = 1.0, control_resolution: int = 41, mu_resolution: int = 21, lam: float = 1.0
) -> ControlProblem:
    part = DomainPartition(period=2.0, interface_points=(0.0, 1.0), first_region=Region.OMEGA1)
    sample = ControlSample.uniform(-1.0, 1.0, control_resolution)
    return ControlProblem(
        partition=part,
        dynamics=_oned_dynamics,
        cost=_constant_cost(float(offset)),
        controls=(sample, sample),
        bounds=ProblemBounds(M_b=1.0, M_l=abs(offset) if offset else 1.0, delta=1.0),
        lam=lam,
        mu_resolution=mu_resolution,
        preset_id="identical_sides_offset",
        params={"offset": float(offset)},
    )


def identical_sides(control_resolution: int = 41, mu_resolution: int = 21, lam: float = 1.0) -> ControlProblem:
    prob = identical_sides_offset(1.0, control_resolution, mu_resolution, lam)
    return ControlProblem(
        partition=prob.partition,
        dynamics=prob.dynamics,
        cost=prob.cost,
        controls=prob.controls,
        bounds=prob.bounds,
        lam=lam,
        mu_resolution=mu_resolution,
        preset_id="identical_sides",
    )


PRESETS: dict[str, Callable[..., ControlProblem]] = {
    "oned_example": oned_example,
    "identical_sides": identical_sides,
    "identical_sides_offset": identical_sides_offset,
}


def make_problem(name: str, **params) -> ControlProblem:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None
    return factory(**params)
