"""Config-driven command line entry point.

Usage: ``hjbhomog <command> --config <path> [--out <dir>]``.

The config is plain ``key = value`` text, one entry per line, ``#`` starting a
comment. Lists are comma separated; numeric lists also accept ``lo:hi:step``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .control_model import PRESETS, ControlProblem, MixedControl, Variant, make_problem
from .grid import GridAlignmentError

COMMANDS = ("effective", "cell", "horizon", "trajectory", "homogenize", "converge", "verify")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PROPERTY = 0, 1, 2, 3


class ConfigError(ValueError):
    """Parse or validation failure; ``field`` names the offending key when known."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        super().__init__(message)
        self.line = line
        self.field = field


class PropertyViolation(RuntimeError):
    pass


def format_float(x: float) -> str:
    return f"{float(x):.12g}"


def _p_grid_default() -> tuple[float, ...]:
    from .homogenized_solver import DEFAULT_P_GRID

    return tuple(float(p) for p in DEFAULT_P_GRID)


@dataclass(frozen=True)
class RunConfig:
    preset: str = "oned_example"
    preset_params: tuple[tuple[str, float], ...] = ()
    cell_n: int = 400
    macro_n: int = 3200
    macro_length: float = 2.0
    control_samples: int = 41
    mu_samples: int = 21
    rho_schedule: tuple[float, ...] = (0.08, 0.04, 0.02, 0.01)
    horizon: float = 50.0
    x_samples: tuple[float, ...] = (0.0,)
    p_samples: tuple[float, ...] = (-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0)
    p_grid: tuple[float, ...] = field(default_factory=_p_grid_default)
    eps_list: tuple[float, ...] = (0.25, 0.125, 0.0625)
    eps: float = 0.1
    lam: float = 1.0
    variants: tuple[str, ...] = ("minus", "plus")
    methods: tuple[str, ...] = ("discount", "horizon")
    effective_method: str = "horizon"
    out_dir: str = "out"
    traj_x0: float = 0.0
    traj_T: float = 20.0
    traj_dt: float = 0.001
    traj_control: str = "mixed:1,-1,0.5"

    def problem(self) -> ControlProblem:
        return make_problem(
            self.preset,
            control_resolution=self.control_samples,
            mu_resolution=self.mu_samples,
            lam=self.lam,
            **dict(self.preset_params),
        )


_POSITIVE = {
    "cell_n", "macro_n", "macro_length", "control_samples", "mu_samples", "rho_schedule", "horizon",
    "eps_list", "eps", "lam", "traj_T", "traj_dt",
}
_FLOAT_LISTS = {"rho_schedule", "x_samples", "p_samples", "p_grid", "eps_list"}
_STR_LISTS = {"variants", "methods"}


def _parse_float_list(text: str) -> tuple[float, ...]:
    text = text.strip()
    if ":" in text and "," not in text:
        lo, hi, step = (float(t) for t in text.split(":"))
        if step <= 0:
            raise ValueError("range step must be positive")
        count = int(np.floor((hi - lo) / step + 1e-9)) + 1
        return tuple(float(np.round(lo + k * step, 12)) for k in range(count))
    return tuple(float(t) for t in text.split(",") if t.strip())


def _parse_value(name: str, text: str):
    if name in _FLOAT_LISTS:
        return _parse_float_list(text)
    if name in _STR_LISTS:
        return tuple(t.strip() for t in text.split(",") if t.strip())
    if name == "preset_params":
        pairs = []
        for item in (t for t in text.split(",") if t.strip()):
            key, _, val = item.partition(":")
            if not _:
                raise ValueError(f"expected name:value, got {item!r}")
            pairs.append((key.strip(), float(val)))
        return tuple(pairs)
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    return text.strip()


def parse_config(text: str) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'", line=lineno)
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}", line=lineno, field=key)
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}", line=lineno, field=key)
        try:
            values[key] = _parse_value(key, val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}", line=lineno, field=key) from None
    config = RunConfig(**values)
    validate_config(config)
    return config


def validate_config(config: RunConfig) -> None:
    def fail(name: str, why: str):
        raise ConfigError(f"invalid {name}: {why}", field=name)

    for name in _POSITIVE:
        v = getattr(config, name)
        items = v if isinstance(v, tuple) else (v,)
        if not items or any(not np.isfinite(x) or x <= 0 for x in items):
            fail(name, "must be positive")
    for name in ("x_samples", "p_samples", "p_grid"):
        v = getattr(config, name)
        if not v or not all(np.isfinite(v)):
            fail(name, "must be a nonempty list of finite numbers")
    if config.preset not in PRESETS:
        fail("preset", f"unknown preset {config.preset!r}; known: {sorted(PRESETS)}")
    rs = config.rho_schedule
    if len(rs) < 2 or any(b >= a for a, b in zip(rs, rs[1:])):
        fail("rho_schedule", "needs at least two strictly decreasing entries")
    es = config.eps_list
    if any(b >= a for a, b in zip(es, es[1:])):
        fail("eps_list", "must be strictly decreasing")
    if any(v not in {m.value for m in Variant} for v in config.variants) or not config.variants:
        fail("variants", "entries must be minus or plus")
    from .effective_hamiltonian import METHODS

    if not config.methods or any(m not in METHODS for m in config.methods):
        fail("methods", f"entries must be among {METHODS}")
    if config.effective_method not in METHODS:
        fail("effective_method", f"must be one of {METHODS}")
    if "#" in config.out_dir or "\n" in config.out_dir or not config.out_dir:
        fail("out_dir", "must be a nonempty path without '#'")
    try:
        problem = config.problem()
    except (TypeError, ValueError) as exc:
        fail("preset_params", str(exc))
    period = problem.partition.period
    for name, eps_values in (("eps_list", es), ("eps", (config.eps,))):
        for eps in eps_values:
            copies = config.macro_length / (eps * period)
            if abs(copies - round(copies)) > 1e-9:
                fail(name, f"eps={eps} does not tile the macro period {config.macro_length} (cell period {period})")
    try:
        _parse_control(config.traj_control)
    except ValueError as exc:
        fail("traj_control", str(exc))


def _render_value(v) -> str:
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ",".join(f"{k}:{x!r}" for k, x in v)
        return ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def render_config(config: RunConfig) -> str:
    return "".join(f"{f.name} = {_render_value(getattr(config, f.name))}\n" for f in fields(RunConfig))


def _parse_control(text: str):
    kind, _, args = text.partition(":")
    nums = [float(t) for t in args.split(",") if t.strip()]
    if kind == "side" and len(nums) == 1:
        return nums[0]
    if kind == "pair" and len(nums) == 2:
        return (nums[0], nums[1])
    if kind == "mixed" and len(nums) == 3:
        return MixedControl(*nums)
    raise ValueError("expected side:a, pair:a1,a2 or mixed:a1,a2,mu")


# --------------------------------------------------------------------------- CSV


@dataclass(frozen=True)
class CsvTable:
    header: tuple[str, ...]
    rows: tuple[tuple, ...]
    key_columns: int = 0  # leading columns that define the row order


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def _sort_key(row, n):
    return tuple((0, v, "") if isinstance(v, (int, float, np.number)) else (1, 0.0, str(v)) for v in row[:n])


def _as_csv_table(artifact) -> CsvTable:
    from .effective_hamiltonian import HBarTable
    from .homogenized_solver import ConvergenceReport

    if isinstance(artifact, CsvTable):
        return artifact
    items = list(artifact) if isinstance(artifact, (list, tuple)) else [artifact]
    if items and all(isinstance(a, HBarTable) for a in items):
        rows = [r for t in items for r in t.rows()]
        rows.sort(key=lambda r: _sort_key((r[0], r[1], r[2], r[4]), 4))
        return CsvTable(("variant", "x", "p", "hbar", "method", "h", "param"), tuple(rows))
    if items and all(isinstance(a, ConvergenceReport) for a in items):
        rows = sorted((r for rep in items for r in rep.rows()), key=lambda r: _sort_key(r, 2))
        return CsvTable(("variant", "eps", "sup_error"), tuple(rows))
    raise TypeError(f"cannot serialize {type(artifact).__name__}")


def emit_csv(artifact, path) -> Path:
    from .trajectory import Trajectory

    path = Path(path)
    if isinstance(artifact, Trajectory):
        artifact.write_csv(path)
        return path
    table = _as_csv_table(artifact)
    rows = sorted(table.rows, key=lambda r: _sort_key(r, table.key_columns)) if table.key_columns else table.rows
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.header)
        for r in rows:
            w.writerow([_cell(v) for v in r])
    return path


# --------------------------------------------------------------------------- commands


def _cell_grid(config: RunConfig, problem: ControlProblem):
    from .grid import PeriodicGrid

    return PeriodicGrid.aligned(problem.partition, config.cell_n)


def _cmd_effective(config: RunConfig, out: Path) -> list[str]:
    from .effective_hamiltonian import tabulate

    problem = config.problem()
    grid = _cell_grid(config, problem)
    tables = [
        tabulate(problem, config.x_samples, config.p_samples, v, m, grid, config.rho_schedule, config.horizon)
        for v in config.variants
        for m in config.methods
    ]
    emit_csv(tables, out / "effective.csv")
    failures = [
        {"variant": t.variant.value, "method": t.method, "x": float(t.x_samples[i]), "p": float(t.p_samples[j]),
         "error": msg}
        for t in tables
        for (i, j), msg in sorted(t.errors.items())
    ]
    if failures:
        (out / "effective_errors.json").write_text(json.dumps(failures, indent=1) + "\n", encoding="utf-8")
        raise RuntimeError(f"{len(failures)} table entries failed; see effective_errors.json")
    return ["effective.csv"]


def _cmd_cell(config: RunConfig, out: Path) -> list[str]:
    from .cell_solver import cell_residual, extract_ergodic

    problem = config.problem()
    grid = _cell_grid(config, problem)
    summary, corrector, diag = [], [], []
    for v in config.variants:
        for x in config.x_samples:
            for p in config.p_samples:
                sol = extract_ergodic(problem, x, p, config.rho_schedule, grid, v)
                res = cell_residual(problem, x, p, sol.corrector, sol.hbar, v)
                summary.append((v, x, p, sol.hbar, res, grid.h))
                corrector += [(v, x, p, y, c) for y, c in zip(grid.nodes, sol.corrector.values)]
                d = sol.diagnostics
                diag += [
                    (v, x, p, rho, lam_, sw, r)
                    for rho, lam_, sw, r in zip(config.rho_schedule, d["lambdas"], d["sweeps"], d["fixed_point_residuals"])
                ]
    emit_csv(CsvTable(("variant", "x", "p", "hbar", "cell_residual", "h"), tuple(summary), 3), out / "cell.csv")
    emit_csv(CsvTable(("variant", "x", "p", "y", "corrector"), tuple(corrector), 4), out / "cell_corrector.csv")
    emit_csv(
        CsvTable(("variant", "x", "p", "rho", "lambda_rho", "sweeps", "fixed_point_residual"), tuple(diag), 3),
        out / "cell_diagnostics.csv",
    )
    return ["cell.csv", "cell_corrector.csv", "cell_diagnostics.csv"]


def _cmd_horizon(config: RunConfig, out: Path) -> list[str]:
    from .ergodic_oracle import HorizonTooShortWarning, crossing_estimate, long_time_average

    problem = config.problem()
    grid = _cell_grid(config, problem)
    rows = []
    for v in config.variants:
        for x in config.x_samples:
            for p in config.p_samples:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always", HorizonTooShortWarning)
                    lta = long_time_average(problem, x, p, config.horizon, grid, v)
                    ce = crossing_estimate(problem, x, p, grid, v, T_stationary=config.horizon)
                stable = not any(issubclass(w.category, HorizonTooShortWarning) for w in caught)
                rows.append((v, x, p, lta, ce.hbar, ce.crossing_time, ce.crossing, ce.effective, stable))
    header = ("variant", "x", "p", "long_time_average", "crossing_hbar", "crossing_time", "crossing",
              "crossing_effective", "stabilized")
    emit_csv(CsvTable(header, tuple(rows), 3), out / "horizon.csv")
    return ["horizon.csv"]


def _cmd_trajectory(config: RunConfig, out: Path) -> list[str]:
    from .trajectory import ControlSignal, classify_regularity, discounted_cost, integrate

    problem = config.problem()
    signal = ControlSignal.constant(_parse_control(config.traj_control), config.traj_T)
    traj = integrate(problem, config.eps, config.traj_x0, signal, config.traj_T, config.traj_dt)
    emit_csv(traj, out / "trajectory.csv")
    J = discounted_cost(problem, traj, config.lam)
    flags, verdict = classify_regularity(problem, traj)
    summary = (("discounted_cost", J.value), ("discounted_cost_upper", J.upper), ("verdict", verdict),
               ("interface_segments", len(flags)), ("max_tangency", traj.max_tangency),
               ("tangency_bound", traj.tangency_bound))
    emit_csv(CsvTable(("quantity", "value"), summary), out / "trajectory_summary.csv")
    return ["trajectory.csv", "trajectory_summary.csv"]


def _cmd_homogenize(config: RunConfig, out: Path) -> list[str]:
    from .grid import PeriodicGrid
    from .homogenized_solver import effective_table, macro_grid, solve_effective, solve_epsilon

    problem = config.problem()
    eps_rows, eff_rows = [], []
    for v in config.variants:
        sol = solve_epsilon(problem, config.eps, macro_grid(problem, config.eps, config.macro_n, config.macro_length),
                            v, config.lam)
        eps_rows += [(v, config.eps, x, u) for x, u in zip(sol.grid.nodes, sol.field.values)]
        table = effective_table(problem, v, config.p_grid, config.effective_method, config.cell_n, config.horizon)
        flat = PeriodicGrid(n=config.macro_n, length=config.macro_length, interface_indices=())
        U = solve_effective(table, config.lam, flat, M_b=problem.bounds.M_b)
        eff_rows += [(v, x, u) for x, u in zip(flat.nodes, U.values)]
    emit_csv(CsvTable(("variant", "eps", "x", "u"), tuple(eps_rows), 3), out / "homogenize_eps.csv")
    emit_csv(CsvTable(("variant", "x", "u"), tuple(eff_rows), 2), out / "homogenize_effective.csv")
    return ["homogenize_eps.csv", "homogenize_effective.csv"]


def _cmd_converge(config: RunConfig, out: Path) -> list[str]:
    from .homogenized_solver import convergence_study

    problem = config.problem()
    reports = [
        convergence_study(problem, config.eps_list, config.lam, v, config.macro_n, config.macro_length,
                          method=config.effective_method, p_grid=config.p_grid, cell_n=config.cell_n, T=config.horizon)
        for v in config.variants
    ]
    emit_csv(reports, out / "converge.csv")
    return ["converge.csv"]


def _cmd_verify(config: RunConfig, out: Path) -> list[str]:
    from .acceptance import AcceptanceContext, run_checks

    ctx = AcceptanceContext(
        config.problem(),
        cell_n=config.cell_n,
        schedule=config.rho_schedule,
        T=config.horizon,
        sweep_p=tuple(sorted(config.p_samples)),
        eps_list=config.eps_list,
        lam=config.lam,
        macro_n=config.macro_n,
        x=config.x_samples[0],
    )
    results = run_checks(ctx)
    for r in results:
        print(r.line())
    rows = tuple((r.criterion, r.name, "pass" if r.passed else "fail", r.detail, "; ".join(r.warnings))
                 for r in results)
    emit_csv(CsvTable(("criterion", "check", "status", "detail", "warnings"), rows, 1), out / "verify.csv")
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise PropertyViolation(f"failed checks: {', '.join(failed)}")
    return ["verify.csv"]


_DISPATCH = {
    "effective": _cmd_effective,
    "cell": _cmd_cell,
    "horizon": _cmd_horizon,
    "trajectory": _cmd_trajectory,
    "homogenize": _cmd_homogenize,
    "converge": _cmd_converge,
    "verify": _cmd_verify,
}


def _error_record(exc: BaseException, code: int, out: Path | None) -> None:
    record = {"status": "error", "exit_code": code, "error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        record.update({"line": exc.line, "field": exc.field})
    text = json.dumps(record)
    print(text, file=sys.stderr)
    if out is not None and out.is_dir():
        (out / "error.json").write_text(text + "\n", encoding="utf-8")


def run_command(config: RunConfig, command: str, out: str | Path | None = None) -> int:
    """Run ``command`` and write its artifacts; returns the process exit status."""
    out_dir = Path(config.out_dir if out is None else out)
    try:
        if command not in _DISPATCH:
            raise ConfigError(f"unknown command {command!r}; expected one of {COMMANDS}")
        out_dir.mkdir(parents=True, exist_ok=True)
        written = _DISPATCH[command](config, out_dir)
    except (ConfigError, GridAlignmentError) as exc:
        _error_record(exc, EXIT_CONFIG, out_dir)
        return EXIT_CONFIG
    except PropertyViolation as exc:
        _error_record(exc, EXIT_PROPERTY, out_dir)
        return EXIT_PROPERTY
    except OSError:
        raise
    except Exception as exc:
        _error_record(exc, EXIT_NUMERICAL, out_dir)
        return EXIT_NUMERICAL
    for name in written:
        print(out_dir / name)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="hjbhomog", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="key = value config file")
    parser.add_argument("--out", default=None, help="output directory (overrides out_dir)")
    args = parser.parse_args(argv)
    try:
        config = parse_config(Path(args.config).read_text(encoding="utf-8"))
    except (ConfigError, OSError) as exc:
        _error_record(exc, EXIT_CONFIG, None)
        return EXIT_CONFIG
    return run_command(config, args.command, args.out)


if __name__ == "__main__":
    sys.exit(main())
