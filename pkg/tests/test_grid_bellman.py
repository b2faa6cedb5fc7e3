import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjbhomog import bellman
from hjbhomog.bellman import STAY, build_options
from hjbhomog.control_model import Region, Variant, make_problem
from hjbhomog.grid import GridAlignmentError, PeriodicGrid, ValueField


def test_aligned_grid_places_interfaces_on_nodes(oned):
    g = PeriodicGrid.aligned(oned.partition, 400)
    assert g.h == pytest.approx(0.005)
    assert g.interface_indices == (0, 200)
    regions = g.regions(oned.partition)
    assert regions[0] is Region.INTERFACE and regions[100] is Region.OMEGA1 and regions[300] is Region.OMEGA2


def test_misaligned_grid_is_rejected(oned):
    with pytest.raises(GridAlignmentError):
        PeriodicGrid.aligned(oned.partition, 401)
    with pytest.raises(GridAlignmentError):
        PeriodicGrid.aligned(oned.partition, 400, length=3.0)


def test_scaled_grid_has_every_copy_of_the_interfaces(oned):
    g = PeriodicGrid.aligned(oned.partition, 320, length=2.0, scale=0.25)
    assert len(g.interface_indices) == 8
    assert np.allclose(np.array(g.interface_indices) * g.h, np.arange(8) * 0.25)


@settings(max_examples=50, deadline=None)
@given(y=st.floats(-10, 10), k=st.integers(-5, 5))
def test_interpolation_is_periodic_and_exact_at_nodes(y, k):
    g = PeriodicGrid(n=16, length=2.0, interface_indices=(0, 8))
    f = ValueField(g, np.sin(np.pi * g.nodes) + g.nodes)
    assert f(y + 2.0 * k) == pytest.approx(f(y), abs=1e-9)
    assert np.allclose(f(g.nodes), f.values)


def test_value_field_rejects_bad_input():
    g = PeriodicGrid(n=4, length=1.0, interface_indices=())
    with pytest.raises(ValueError):
        ValueField(g, np.ones(3))
    with pytest.raises(ValueError):
        ValueField(g, np.array([0, 1, np.nan, 2.0]))


def test_interface_stay_options_follow_the_variant(oned, cell_grid):
    minus = build_options(oned, cell_grid, 0.0, Variant.MINUS)
    plus = build_options(oned, cell_grid, 0.0, Variant.PLUS)
    for table, rate in ((minus, 0.0), (plus, 1.0)):
        stays = table.cost[0][table.kind[0] == STAY]
        assert stays.size == 1 and stays[0] == pytest.approx(rate)


def test_pruning_is_exact(oned):
    g = PeriodicGrid.aligned(oned.partition, 40)
    full = build_options(oned, g, 1.3, Variant.PLUS, prune=False)
    pruned = build_options(oned, g, 1.3, Variant.PLUS)
    assert pruned.cost.shape[1] < full.cost.shape[1]
    rng = np.random.default_rng(1)
    for _ in range(20):
        V = rng.normal(size=g.n)
        gamma = float(rng.uniform(0.5, 1.0))
        assert np.allclose(bellman.explicit_sweep(full, V, gamma), bellman.explicit_sweep(pruned, V, gamma))


@settings(max_examples=25, deadline=None)
@given(shift=st.floats(-3, 3), seed=st.integers(0, 1000))
def test_sweep_is_monotone_and_contractive(shift, seed):
    prob = make_problem("oned_example", control_resolution=11, mu_resolution=6)
    g = PeriodicGrid.aligned(prob.partition, 40)
    table = build_options(prob, g, 0.7, Variant.MINUS)
    rng = np.random.default_rng(seed)
    U = rng.normal(size=g.n)
    W = U + abs(shift) + rng.uniform(0, 1, size=g.n)
    gamma = float(np.exp(-0.1 * table.dt))
    TU, TW = bellman.explicit_sweep(table, U, gamma), bellman.explicit_sweep(table, W, gamma)
    assert np.all(TW >= TU - 1e-12)
    assert np.max(np.abs(TW - TU)) <= gamma * np.max(np.abs(W - U)) + 1e-12


def test_implicit_and_explicit_iterations_share_the_fixed_point(identical):
    g = PeriodicGrid.aligned(identical.partition, 40)
    table = build_options(identical, g, 0.5, Variant.MINUS)
    V, _, _ = bellman.discounted_fixed_point(table, 0.5, np.zeros(g.n), 1e-13, 1_000_000)
    gamma = float(np.exp(-0.5 * table.dt))
    assert np.max(np.abs(bellman.explicit_sweep(table, V, gamma) - V)) <= 1e-10


def test_non_convergence_is_reported(identical):
    g = PeriodicGrid.aligned(identical.partition, 40)
    table = build_options(identical, g, 0.0, Variant.MINUS)
    with pytest.raises(bellman.NonConvergenceError):
        bellman.discounted_fixed_point(table, 0.01, np.zeros(g.n), 1e-14, 3)
