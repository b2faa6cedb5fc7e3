"""Named acceptance checks shared by ``hjbhomog verify`` and the test suite.

Each check returns a :class:`CheckResult`. Checks that only make sense for one
preset declare it; the rest run on whatever problem the context holds.
Expensive intermediate results (H-bar tables, eps solutions) are cached on the
context so that checks can share them.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .cell_solver import DEFAULT_SCHEDULE, corrector_dpp_check, extract_ergodic
from .control_model import (
    ControlProblem,
    MixedControl,
    Variant,
    interface_normal,
    mixed_dynamics_cost,
    pushing_control,
    regularization_constant,
    regularize_control,
)
from .effective_hamiltonian import (
    HBarTable,
    tabulate,
    verify_coercivity,
    verify_lipschitz_p,
    verify_variant_order,
)
from .ergodic_oracle import DEFAULT_HORIZON, long_time_average
from .grid import PeriodicGrid
from .homogenized_solver import MACRO_N, ConvergenceReport, convergence_study
from .trajectory import ControlSignal, classify_regularity, discounted_cost, integrate

SWEEP_P = tuple(float(p) for p in range(-4, 5))
EPS_LIST = (0.25, 0.125, 0.0625)
HALVING_RATIO = 0.55  # "halves" with 10% allowance for the ratio


@dataclass
class CheckResult:
    criterion: int
    name: str
    passed: bool
    detail: str = ""
    warnings: list[str] = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = "".join(f" [warning: {w}]" for w in self.warnings)
        return f"{status} criterion {self.criterion} {self.name}: {self.detail}{extra}"


@dataclass
class AcceptanceContext:
    problem: ControlProblem
    cell_n: int = 400
    schedule: tuple[float, ...] = DEFAULT_SCHEDULE
    T: float = DEFAULT_HORIZON
    sweep_p: tuple[float, ...] = SWEEP_P
    eps_list: tuple[float, ...] = EPS_LIST
    lam: float = 1.0
    macro_n: int = MACRO_N
    x: float = 0.0
    _tables: dict = field(default_factory=dict, repr=False)
    _reports: dict = field(default_factory=dict, repr=False)
    _timings: dict = field(default_factory=dict, repr=False)

    @cached_property
    def grid(self) -> PeriodicGrid:
        return PeriodicGrid.aligned(self.problem.partition, self.cell_n)

    def table(self, variant: Variant | str, method: str) -> HBarTable:
        key = (Variant(variant), method)
        if key not in self._tables:
            self._tables[key] = tabulate(
                self.problem, [self.x], self.sweep_p, key[0], method, self.grid, self.schedule, self.T
            )
        return self._tables[key]

    def convergence(self, variant: Variant | str) -> ConvergenceReport:
        v = Variant(variant)
        if v not in self._reports:
            t0 = time.perf_counter()
            self._reports[v] = convergence_study(
                self.problem, self.eps_list, self.lam, v, macro_n=self.macro_n, cell_n=self.cell_n, T=self.T
            )
            self._timings[("convergence", v)] = time.perf_counter() - t0
        return self._reports[v]


Check = Callable[[AcceptanceContext], CheckResult]
_REGISTRY: list[tuple[int, str, tuple[str, ...] | None, Check]] = []


def check(criterion: int, name: str, presets: tuple[str, ...] | None = None):
    def wrap(fn: Check) -> Check:
        _REGISTRY.append((criterion, name, presets, fn))
        return fn

    return wrap


def applicable_checks(preset_id: str) -> list[tuple[int, str, Check]]:
    return [(c, n, fn) for c, n, presets, fn in _REGISTRY if presets is None or preset_id in presets]


def run_checks(ctx: AcceptanceContext, criteria: set[int] | None = None) -> list[CheckResult]:
    out = []
    for c, name, fn in applicable_checks(ctx.problem.preset_id):
        if criteria is not None and c not in criteria:
            continue
        try:
            out.append(fn(ctx))
        except Exception as exc:  # a crashing check is a failed check, the rest still run
            out.append(CheckResult(c, name, False, f"raised {type(exc).__name__}: {exc}"))
    return out


# --------------------------------------------------------------------------- criteria


@check(1, "minus_constant_at_zero", ("oned_example",))
def _minus_constant(ctx: AcceptanceContext) -> CheckResult:
    t0 = time.perf_counter()
    sol = extract_ergodic(ctx.problem, ctx.x, 0.0, ctx.schedule, ctx.grid, Variant.MINUS)
    elapsed = time.perf_counter() - t0
    ok = abs(sol.hbar) <= 0.05 and elapsed <= 60.0
    return CheckResult(1, "minus_constant_at_zero", ok, f"hbar_minus(0)={sol.hbar:.6f} (0 +- 0.05), {elapsed:.1f}s (<= 60s)")


@check(2, "plus_negative_at_zero", ("oned_example",))
def _plus_negative(ctx: AcceptanceContext) -> CheckResult:
    sol = extract_ergodic(ctx.problem, ctx.x, 0.0, ctx.schedule, ctx.grid, Variant.PLUS)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        oracle = long_time_average(ctx.problem, ctx.x, 0.0, ctx.T, ctx.grid, Variant.PLUS)
    warns = []
    if abs(oracle + 1.0) > 0.1 or abs(sol.hbar + 1.0) > 0.1:
        warns.append(f"sharper target -1 +- 0.1 missed (discount {sol.hbar:.4f}, horizon {oracle:.4f})")
    ok = sol.hbar <= -0.5
    return CheckResult(
        2, "plus_negative_at_zero", ok, f"hbar_plus(0)={sol.hbar:.6f} (<= -0.5); horizon oracle {oracle:.6f}", warns
    )


@check(3, "variant_gap_at_zero", ("oned_example",))
def _variant_gap(ctx: AcceptanceContext) -> CheckResult:
    m = extract_ergodic(ctx.problem, ctx.x, 0.0, ctx.schedule, ctx.grid, Variant.MINUS).hbar
    p = extract_ergodic(ctx.problem, ctx.x, 0.0, ctx.schedule, ctx.grid, Variant.PLUS).hbar
    return CheckResult(3, "variant_gap_at_zero", m - p >= 0.5, f"minus - plus = {m - p:.6f} (>= 0.5)")


@check(4, "identical_sides_exact", ("identical_sides",))
def _identical_exact(ctx: AcceptanceContext) -> CheckResult:
    worst, where = 0.0, ""
    for v in Variant:
        for method in ("discount", "horizon"):
            t = ctx.table(v, method)
            for p in (-2.0, -1.0, 0.0, 1.0, 2.0):
                err = abs(t.at(ctx.x, p) - (abs(p) - 1.0))
                if err >= worst:
                    worst, where = err, f"{v.value}/{method}/p={p:g}"
    return CheckResult(4, "identical_sides_exact", worst <= 0.05, f"max |hbar - (|p|-1)| = {worst:.2e} at {where} (<= 0.05)")


@check(5, "two_oracle_agreement")
def _two_oracles(ctx: AcceptanceContext) -> CheckResult:
    worst, where = 0.0, ""
    for v in Variant:
        d = np.abs(ctx.table(v, "discount").values - ctx.table(v, "horizon").values)[0]
        j = int(np.nanargmax(d))
        if d[j] >= worst:
            worst, where = float(d[j]), f"{v.value}/p={ctx.sweep_p[j]:g}"
    complete = all(ctx.table(v, m).complete for v in Variant for m in ("discount", "horizon"))
    ok = complete and worst <= 0.1
    return CheckResult(5, "two_oracle_agreement", ok, f"max |discount - horizon| = {worst:.4f} at {where} (<= 0.1)")


def _all_tables(ctx: AcceptanceContext):
    for v in Variant:
        for method in ("discount", "horizon"):
            yield v, method, ctx.table(v, method)


@check(6, "coercivity")
def _coercivity(ctx: AcceptanceContext) -> CheckResult:
    reports = [(v, m, verify_coercivity(t, ctx.problem.bounds, 0.05)) for v, m, t in _all_tables(ctx)]
    bad = [f"{v.value}/{m}: {r.violations[0]}" for v, m, r in reports if not r.passed]
    margin = min(r.details["min_margin"] for _, _, r in reports)
    b = ctx.problem.bounds
    return CheckResult(6, "coercivity", not bad,
                       f"min(hbar + M_l - delta|p|) = {margin:.4f} with M_l={b.M_l:g}, delta={b.delta:g} (>= -0.05)"
                       + (f"; {bad[0]}" if bad else ""))


@check(7, "lipschitz_in_p")
def _lipschitz(ctx: AcceptanceContext) -> CheckResult:
    reports = [(v, m, verify_lipschitz_p(t, ctx.problem.bounds, 0.05)) for v, m, t in _all_tables(ctx)]
    bad = [f"{v.value}/{m}: {r.violations[0]}" for v, m, r in reports if not r.passed]
    excess = max(r.details["max_excess"] for _, _, r in reports)
    return CheckResult(7, "lipschitz_in_p", not bad,
                       f"max(|dH| - M_b|dp|) = {excess:.4f} (<= 0.1)" + (f"; {bad[0]}" if bad else ""))


@check(8, "variant_ordering")
def _ordering(ctx: AcceptanceContext) -> CheckResult:
    reports = [verify_variant_order(ctx.table(Variant.MINUS, m), ctx.table(Variant.PLUS, m), 0.05)
               for m in ("discount", "horizon")]
    worst = min(r.details["min_gap"] for r in reports)
    return CheckResult(8, "variant_ordering", all(r.passed for r in reports),
                       f"min(minus - plus) = {worst:.4f} (>= -0.05)")


@check(9, "eps_convergence")
def _eps_convergence(ctx: AcceptanceContext) -> CheckResult:
    parts, ok = [], True
    identical = ctx.problem.preset_id == "identical_sides"
    for v in Variant:
        r = ctx.convergence(v)
        errs = ", ".join(f"{e:.4f}" for e in r.sup_errors)
        if identical:
            good = max(r.sup_errors) <= 0.02
        else:
            good = r.monotone and r.sup_errors[-1] <= 0.1
        ok &= good
        parts.append(f"{v.value}: [{errs}]")
    elapsed = sum(t for k, t in ctx._timings.items() if k[0] == "convergence")
    ok &= elapsed <= 300.0
    rule = "all <= 0.02" if identical else "nonincreasing, final <= 0.1"
    return CheckResult(9, "eps_convergence", ok, f"{'; '.join(parts)} ({rule}); {elapsed:.0f}s (<= 300s)")


@check(10, "value_ordering_and_bounds")
def _value_bounds(ctx: AcceptanceContext) -> CheckResult:
    """The sup bound carries the one-step quadrature factor of the scheme (left-point cost, ``e^{-lam dt}``
    discount), the exact discrete counterpart of ``M_l / lam``."""
    b = ctx.problem.bounds
    minus, plus = ctx.convergence(Variant.MINUS), ctx.convergence(Variant.PLUS)
    order = min(float(np.min(sp.field.values - sm.field.values)) for sm, sp in zip(minus.solutions, plus.solutions))
    sup = max(s.field.sup() for r in (minus, plus) for s in r.solutions)
    dt = minus.solutions[0].grid.h / b.M_b
    quad = ctx.lam * dt / -np.expm1(-ctx.lam * dt)
    cap = b.M_l / ctx.lam * quad
    slope_max = max(max(r.slopes) for r in (minus, plus))
    spread = max(max(r.slopes) - min(r.slopes) for r in (minus, plus))
    ok = order >= -0.01 and sup <= cap + 1e-9 and slope_max <= b.M_l / b.delta + 0.1 and spread <= 0.05
    return CheckResult(
        10, "value_ordering_and_bounds", ok,
        f"min(U+ - U-) = {order:.4f} (>= -0.01); sup|U| = {sup:.6f} (<= M_l/lam * {quad:.7f} = {cap:.6f}); "
        f"max slope = {slope_max:.4f} (<= {b.M_l / b.delta + 0.1:g}); slope spread over eps = {spread:.4f} (<= 0.05)",
    )


@check(11, "corrector_optimality_principle")
def _corrector_dpp(ctx: AcceptanceContext) -> CheckResult:
    devs = {}
    for n in (ctx.cell_n, 2 * ctx.cell_n):
        g = PeriodicGrid.aligned(ctx.problem.partition, n)
        sol = extract_ergodic(ctx.problem, ctx.x, 0.0, ctx.schedule, g, Variant.PLUS)
        devs[n] = corrector_dpp_check(ctx.problem, ctx.x, 0.0, sol.corrector, sol.hbar, (0.1, 0.5, 1.0))
    coarse, fine = devs[ctx.cell_n], devs[2 * ctx.cell_n]
    ratio = fine / coarse if coarse > 0 else 0.0
    ok = coarse <= 0.1 and fine <= 0.1 and ratio <= HALVING_RATIO
    return CheckResult(
        11, "corrector_optimality_principle", ok,
        f"p=0 deviation n={ctx.cell_n}: {coarse:.3e}, n={2 * ctx.cell_n}: {fine:.3e} (<= 0.1); "
        f"refinement ratio {ratio:.3f} (<= {HALVING_RATIO})",
    )


@check(12, "trajectory_suite", ("oned_example",))
def _trajectories(ctx: AcceptanceContext) -> CheckResult:
    prob, eps, dt, T = ctx.problem, 0.1, 1e-3, 20.0
    singular = integrate(prob, eps, 0.0, ControlSignal.constant(MixedControl(1.0, -1.0, 0.5), T), T, dt)
    regular = integrate(prob, eps, 0.0, ControlSignal.constant(MixedControl(0.0, 0.0, 0.5), T), T, dt)
    wander = integrate(
        prob, eps, 0.013,
        ControlSignal((0.0, 0.3, 0.9, 2.0, 5.0),
                      (1.0, MixedControl(0.0, 0.0, 0.5), (-1.0, 1.0), MixedControl(1.0, -1.0, 0.5))),
        5.0, dt,
    )
    J_sing = discounted_cost(prob, singular, ctx.lam).value
    J_reg = discounted_cost(prob, regular, ctx.lam).value
    v_sing = classify_regularity(prob, singular)[1]
    v_reg = classify_regularity(prob, regular)[1]
    tangency = all(t.tangency_ok for t in (singular, regular, wander))
    ok = J_sing == 0.0 and v_sing == "singular" and abs(J_reg - 1.0) <= 0.02 and v_reg == "regular" and tangency
    return CheckResult(
        12, "trajectory_suite", ok,
        f"singular J={J_sing:g} ({v_sing}); regular J={J_reg:.5f} ({v_reg}); tangency bound held: {tangency}",
    )


@check(13, "regularization_lemma", ("oned_example",))
def _regularization(ctx: AcceptanceContext) -> CheckResult:
    """Outward-drifting samples only: ``regularize_control`` pushes against ``+n1`` drift."""
    prob = ctx.problem
    part = prob.partition
    rng = np.random.default_rng(20240613)
    C = regularization_constant(prob.bounds)
    done, failures, worst_normal, worst_realized, worst_ratio = 0, 0, 0.0, 0.0, 0.0
    while done < 1000:
        k = int(rng.integers(0, 4))
        y = part.interface_points[k % 2] + part.period * (k // 2 - 1)
        a = MixedControl(float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)), float(rng.uniform(0, 1)))
        b_H, l_H = mixed_dynamics_cost(prob, ctx.x, y, a)
        n1 = interface_normal(part, y)
        drift = b_H * n1
        if drift <= 1e-9:
            continue
        done += 1
        try:
            reg = regularize_control(prob, ctx.x, y, a, pushing_control(prob, ctx.x, y))
        except Exception:
            failures += 1
            continue
        worst_normal = max(worst_normal, abs(reg.b_H * n1))
        worst_realized = max(worst_realized, abs(mixed_dynamics_cost(prob, ctx.x, y, reg.control)[0] * n1))
        worst_ratio = max(worst_ratio, abs(reg.l_H - l_H) / (C * drift))
    ok = failures == 0 and worst_normal <= 1e-9 and worst_realized <= 1e-9 and worst_ratio <= 1.0
    return CheckResult(
        13, "regularization_lemma", ok,
        f"1000 samples, failures={failures}, max|b_H n1| = {worst_normal:.1e} (realized {worst_realized:.1e}, "
        f"<= 1e-9), max |cost change| / (C |b_H n1|) = {worst_ratio:.3f} (<= 1, C = {C:g})",
    )
