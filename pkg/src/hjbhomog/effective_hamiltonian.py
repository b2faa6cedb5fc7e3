"""Tables of the effective Hamiltonian and checks of its structural properties."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cell_solver import DEFAULT_SCHEDULE, extract_ergodic
from .control_model import ControlProblem, ProblemBounds, Variant
from .ergodic_oracle import DEFAULT_HORIZON, crossing_estimate, long_time_average
from .grid import PeriodicGrid

METHODS = ("discount", "horizon", "crossing")
SLACK = 0.05


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class HBarTable:
    """``values[i, j]`` is the estimate at ``(x_samples[i], p_samples[j])``; failed entries are NaN with a
    message in ``errors``."""

    variant: Variant
    x_samples: np.ndarray
    p_samples: np.ndarray
    values: np.ndarray
    method: str
    metadata: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.values.shape != (len(self.x_samples), len(self.p_samples)):
            raise ValueError("values must have shape (len(x_samples), len(p_samples))")

    @property
    def complete(self) -> bool:
        return not self.errors and bool(np.all(np.isfinite(self.values)))

    def at(self, x: float, p: float) -> float:
        i = int(np.argmin(np.abs(self.x_samples - x)))
        j = int(np.argmin(np.abs(self.p_samples - p)))
        if abs(self.x_samples[i] - x) > 1e-12 or abs(self.p_samples[j] - p) > 1e-12:
            raise KeyError(f"({x}, {p}) is not a sample point")
        return float(self.values[i, j])

    def interpolate(self, x: float, p):
        """Piecewise-linear in ``p`` at the nearest x sample."""
        i = int(np.argmin(np.abs(self.x_samples - x)))
        return np.interp(p, self.p_samples, self.values[i])

    def rows(self):
        """``(variant, x, p, hbar, method, h, param)`` tuples in (x, p) order."""
        h = self.metadata.get("h", float("nan"))
        param = self.metadata.get("param", "")
        for i, x in enumerate(self.x_samples):
            for j, p in enumerate(self.p_samples):
                yield (self.variant.value, float(x), float(p), float(self.values[i, j]), self.method, h, param)


def tabulate(
    problem: ControlProblem,
    x_samples: Sequence[float],
    p_samples: Sequence[float],
    variant: Variant | str = Variant.MINUS,
    method: str = "discount",
    grid: PeriodicGrid | None = None,
    schedule: Sequence[float] = DEFAULT_SCHEDULE,
    T: float = DEFAULT_HORIZON,
) -> HBarTable:
    variant = Variant(variant)
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    xs = np.array(sorted(float(x) for x in x_samples))
    ps = np.array(sorted(float(p) for p in p_samples))
    if xs.size == 0 or ps.size == 0:
        raise ValueError("x and p samples must be nonempty")
    if grid is None:
        grid = PeriodicGrid.aligned(problem.partition, 400)

    values = np.full((xs.size, ps.size), np.nan)
    errors: dict[tuple[int, int], str] = {}
    for i, x in enumerate(xs):
        for j, p in enumerate(ps):
            try:
                if method == "discount":
                    values[i, j] = extract_ergodic(problem, x, p, schedule, grid, variant).hbar
                elif method == "horizon":
                    values[i, j] = long_time_average(problem, x, p, T, grid, variant)
                else:
                    values[i, j] = crossing_estimate(problem, x, p, grid, variant).effective
            except Exception as exc:  # recorded per entry, the rest of the table stays usable
                errors[(i, j)] = f"{type(exc).__name__}: {exc}"

    param = ";".join(f"{r:g}" for r in schedule) if method == "discount" else f"T={T:g}"
    metadata = {
        "h": grid.h,
        "n": grid.n,
        "param": param,
        "control_samples": [len(problem.alphas(1)), len(problem.alphas(2))],
        "mu_resolution": problem.mu_resolution,
        "preset": problem.preset_id,
    }
    return HBarTable(variant, xs, ps, values, method, metadata, errors)


@dataclass
class PropertyReport:
    name: str
    passed: bool
    violations: list[str] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}" + (
            f" ({len(self.violations)} violations)" if self.violations else ""
        )


def verify_coercivity(table: HBarTable, bounds: ProblemBounds, slack: float = SLACK) -> PropertyReport:
    """Every entry must satisfy ``hbar >= -M_l + delta |p| - slack``."""
    viol = []
    margin = np.inf
    for i, x in enumerate(table.x_samples):
        for j, p in enumerate(table.p_samples):
            lower = -bounds.M_l + bounds.delta * abs(p)
            v = table.values[i, j]
            if not np.isfinite(v):
                viol.append(f"x={x:g} p={p:g}: missing value")
                continue
            margin = min(margin, v - lower)
            if v < lower - slack:
                viol.append(f"x={x:g} p={p:g}: {v:.6g} < {lower:.6g}")
    return PropertyReport(f"coercivity[{table.variant.value}]", not viol, viol, {"min_margin": float(margin)})


def verify_lipschitz_p(table: HBarTable, bounds: ProblemBounds, slack: float = SLACK) -> PropertyReport:
    """All sample pairs at fixed x obey ``|H(p) - H(q)| <= M_b |p - q| + 2 slack``."""
    viol = []
    worst = 0.0
    ps = table.p_samples
    for i, x in enumerate(table.x_samples):
        v = table.values[i]
        for a in range(ps.size):
            for b in range(a + 1, ps.size):
                excess = abs(v[a] - v[b]) - bounds.M_b * abs(ps[a] - ps[b])
                if not np.isfinite(excess):
                    viol.append(f"x={x:g} p={ps[a]:g},{ps[b]:g}: missing value")
                    continue
                worst = max(worst, excess)
                if excess > 2 * slack:
                    viol.append(f"x={x:g} p={ps[a]:g},{ps[b]:g}: excess {excess:.4g}")
    return PropertyReport(f"lipschitz_p[{table.variant.value}]", not viol, viol, {"max_excess": float(worst)})


def verify_variant_order(table_minus: HBarTable, table_plus: HBarTable, slack: float = SLACK) -> PropertyReport:
    """``plus <= minus + slack`` entrywise; reports the largest gap ``minus - plus`` and where it occurs."""
    if not (
        np.array_equal(table_minus.x_samples, table_plus.x_samples)
        and np.array_equal(table_minus.p_samples, table_plus.p_samples)
    ):
        raise GridMismatchError("tables are sampled on different (x, p) grids")
    gap = table_minus.values - table_plus.values
    viol = []
    for i, x in enumerate(table_minus.x_samples):
        for j, p in enumerate(table_minus.p_samples):
            if not np.isfinite(gap[i, j]):
                viol.append(f"x={x:g} p={p:g}: missing value")
            elif gap[i, j] < -slack:
                viol.append(f"x={x:g} p={p:g}: plus exceeds minus by {-gap[i, j]:.4g}")
    details = {}
    if np.any(np.isfinite(gap)):
        i, j = np.unravel_index(int(np.nanargmax(gap)), gap.shape)
        details = {
            "max_gap": float(gap[i, j]),
            "at_x": float(table_minus.x_samples[i]),
            "at_p": float(table_minus.p_samples[j]),
            "min_gap": float(np.nanmin(gap)),
        }
    return PropertyReport("variant_order", not viol, viol, details)
