import csv
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjbhomog.cli import (
    ConfigError,
    CsvTable,
    RunConfig,
    emit_csv,
    main,
    parse_config,
    render_config,
    run_command,
)
from hjbhomog.control_model import MixedControl, make_problem
from hjbhomog.effective_hamiltonian import tabulate
from hjbhomog.homogenized_solver import convergence_study
from hjbhomog.trajectory import ControlSignal, integrate


def _read(path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_defaults_apply():
    cfg = parse_config("preset = oned_example\n")
    assert cfg == RunConfig()


def test_list_values_and_comments():
    cfg = parse_config("# experiment\nrho_schedule = 0.08,0.04,0.02,0.01  # four entries\np_grid = -1:1:0.5\n")
    assert cfg.rho_schedule == (0.08, 0.04, 0.02, 0.01)
    assert cfg.p_grid == (-1.0, -0.5, 0.0, 0.5, 1.0)


def test_non_commensurate_eps_is_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config("preset = oned_example\neps_list = 0.3\n")
    assert info.value.field == "eps_list"


@pytest.mark.parametrize(
    "text, line, field",
    [
        ("preset = oned_example\nbogus = 1\n", 2, "bogus"),
        ("\n\nthis line has no separator\n", 3, None),
        ("cell_n = many\n", 1, "cell_n"),
        ("lam = 1\nlam = 2\n", 2, "lam"),
    ],
)
def test_parse_errors_carry_line_numbers(text, line, field):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line and info.value.field == field


@pytest.mark.parametrize(
    "text, field",
    [
        ("lam = -1\n", "lam"),
        ("preset = nothing\n", "preset"),
        ("rho_schedule = 0.01,0.02\n", "rho_schedule"),
        ("variants = minus,both\n", "variants"),
        ("traj_control = spin:1\n", "traj_control"),
        ("cell_n = 0\n", "cell_n"),
    ],
)
def test_validation_names_the_field(text, field):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.field == field


positive = st.floats(0.01, 100, allow_nan=False, allow_infinity=False)
finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(
    preset=st.sampled_from(["oned_example", "identical_sides"]),
    cell_n=st.integers(2, 5000),
    lam=positive,
    horizon=positive,
    schedule=st.lists(positive, min_size=2, max_size=5, unique=True),
    p_samples=st.lists(finite, min_size=1, max_size=6),
    eps_k=st.lists(st.integers(1, 64), min_size=1, max_size=4, unique=True),
    variants=st.sampled_from([("minus",), ("plus",), ("minus", "plus")]),
    x0=finite,
)
def test_render_parse_round_trip(preset, cell_n, lam, horizon, schedule, p_samples, eps_k, variants, x0):
    cfg = RunConfig(
        preset=preset,
        cell_n=cell_n,
        lam=lam,
        horizon=horizon,
        rho_schedule=tuple(sorted(schedule, reverse=True)),
        p_samples=tuple(p_samples),
        eps_list=tuple(1.0 / k for k in sorted(eps_k)),
        variants=variants,
        traj_x0=x0,
    )
    assert parse_config(render_config(cfg)) == cfg


def test_round_trip_with_preset_parameters():
    cfg = RunConfig(preset="identical_sides_offset", preset_params=(("offset", 0.5),))
    assert parse_config(render_config(cfg)) == cfg


def test_csv_schemas(tmp_path, identical):
    table = tabulate(identical, [0.0], [1.0, -1.0], method="horizon")
    rows = _read(emit_csv(table, tmp_path / "h.csv"))
    assert rows[0] == ["variant", "x", "p", "hbar", "method", "h", "param"]
    assert [r[2] for r in rows[1:]] == ["-1", "1"]
    rep = convergence_study(identical, [0.25], macro_n=400, cell_n=40, p_grid=(-6.0, 0.0, 6.0))
    assert _read(emit_csv(rep, tmp_path / "c.csv"))[0] == ["variant", "eps", "sup_error"]
    tr = integrate(identical, 1.0, 0.5, ControlSignal.constant(MixedControl(0.0, 0.0, 0.5), 1.0), 1.0, 0.01)
    assert _read(emit_csv(tr, tmp_path / "t.csv"))[0] == [
        "t", "y", "region", "alpha1", "alpha2", "mu", "cost_accum", "regular_flag"
    ]


def test_floats_use_twelve_significant_digits(tmp_path):
    rows = _read(emit_csv(CsvTable(("a", "b"), ((1 / 3, "z"),)), tmp_path / "f.csv"))
    assert rows[1] == ["0.333333333333", "z"]


def test_effective_command_reproduces_the_two_constants(tmp_path):
    cfg = parse_config("preset = oned_example\np_samples = 0\nmethods = discount\n")
    assert run_command(cfg, "effective", tmp_path) == 0
    rows = {r[0]: float(r[3]) for r in _read(tmp_path / "effective.csv")[1:]}
    assert rows["minus"] == pytest.approx(0.0, abs=0.05)
    assert rows["plus"] == pytest.approx(-1.0, abs=0.1)


def test_commands_are_deterministic(tmp_path):
    cfg = parse_config("preset = identical_sides\np_samples = -1,0,2\n")
    for cmd in ("effective", "cell", "horizon", "trajectory"):
        a, b = tmp_path / f"{cmd}_a", tmp_path / f"{cmd}_b"
        assert run_command(cfg, cmd, a) == 0 and run_command(cfg, cmd, b) == 0
        for f in a.iterdir():
            assert f.read_bytes() == (b / f.name).read_bytes()


def test_converge_command(tmp_path):
    cfg = parse_config("preset = oned_example\nvariants = minus\n")
    assert run_command(cfg, "converge", tmp_path) == 0
    rows = sorted(((float(r[1]), float(r[2])) for r in _read(tmp_path / "converge.csv")[1:]), reverse=True)
    errors = [e for _, e in rows]
    assert len(errors) == 3 and errors == sorted(errors, reverse=True)


def test_main_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.cfg"
    good.write_text("preset = identical_sides\ntraj_T = 1\n")
    assert main(["trajectory", "--config", str(good), "--out", str(tmp_path / "o")]) == 0
    bad = tmp_path / "bad.cfg"
    bad.write_text("preset = oned_example\neps_list = 0.3\n")
    assert main(["converge", "--config", str(bad)]) == 1
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["exit_code"] == 1 and record["field"] == "eps_list"
    numerical = tmp_path / "num.cfg"
    numerical.write_text("preset = identical_sides\nhorizon = 1\np_samples = 0\nmethods = horizon\n")
    assert main(["effective", "--config", str(numerical), "--out", str(tmp_path / "n")]) == 2
    assert (tmp_path / "n" / "error.json").exists()
    assert main(["cell", "--config", str(tmp_path / "missing.cfg")]) == 1


def test_verify_identical_sides_passes(tmp_path):
    cfg = parse_config("preset = identical_sides\n")
    assert run_command(cfg, "verify", tmp_path) == 0
    rows = _read(tmp_path / "verify.csv")
    assert rows[0] == ["criterion", "check", "status", "detail", "warnings"]
    assert all(r[2] == "pass" for r in rows[1:])
