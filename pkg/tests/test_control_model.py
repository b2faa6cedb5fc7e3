import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjbhomog.control_model import (
    ControlProblem,
    ControlSample,
    DomainPartition,
    EmptyControlSetError,
    MixedControl,
    NotAnInterfaceError,
    ProblemBounds,
    Region,
    Variant,
    check_problem,
    classify_point,
    hamiltonian,
    interface_normal,
    lemma_constants,
    make_problem,
    mixed_dynamics_cost,
    pushing_control,
    regular_filter,
    regularization_constant,
    regularize_control,
    tangential_control_set,
    tangential_hamiltonian,
)


def test_classify_points_of_the_two_sided_geometry(oned):
    part = oned.partition
    assert classify_point(part, 0.5) is Region.OMEGA1
    assert classify_point(part, 1.0) is Region.INTERFACE
    assert classify_point(part, 3.5) is Region.OMEGA2
    assert classify_point(part, -0.5) is Region.OMEGA2


@given(y=st.floats(-50, 50, allow_nan=False), k=st.integers(-20, 20))
def test_classification_is_periodic(y, k):
    part = make_problem("oned_example").partition
    shifted = y + 2.0 * k
    # skip points whose shifted image lands within rounding of an interface
    if abs(part.nearest_interface(y)[1]) < 1e-9:
        return
    assert classify_point(part, shifted) is classify_point(part, y)


def test_interface_normals(oned):
    part = oned.partition
    assert interface_normal(part, 0.0) == -1.0
    assert interface_normal(part, 1.0) == 1.0
    assert interface_normal(part, 2.0) == -1.0
    with pytest.raises(NotAnInterfaceError):
        interface_normal(part, 0.5)


@pytest.mark.parametrize(
    "points",
    [(0.0,), (0.0, 1.0, 1.5), (1.0, 0.5), (0.0, 2.0)],
)
def test_invalid_partitions_are_rejected(points):
    with pytest.raises(ValueError):
        DomainPartition(period=2.0, interface_points=points)


def test_mixed_dynamics_cost_examples(oned):
    assert mixed_dynamics_cost(oned, 0.0, 0.0, MixedControl(1.0, -1.0, 0.5)) == (0.0, 0.0)
    for mu in (0.0, 0.3, 1.0):
        assert mixed_dynamics_cost(oned, 0.0, 0.0, MixedControl(0.0, 0.0, mu)) == pytest.approx((0.0, 1.0))
    b, l = mixed_dynamics_cost(oned, 0.0, 1.0, MixedControl(0.4, 0.4, 1.0))
    assert (b, l) == pytest.approx((oned.b(1, 0.0, 1.0, 0.4), oned.l(1, 0.0, 1.0, 0.4)))
    with pytest.raises(NotAnInterfaceError):
        mixed_dynamics_cost(oned, 0.0, 0.5, MixedControl(0.0, 0.0, 0.5))


def test_mixed_control_rejects_bad_weight():
    with pytest.raises(ValueError):
        MixedControl(0.0, 0.0, 1.5)


def test_tangential_set_contains_singular_and_idle_stays(oned):
    A0 = tangential_control_set(oned, 0.0, 0.0)
    assert any(a.alpha1 == 1.0 and a.alpha2 == -1.0 and a.mu == 0.5 for a in A0)
    idle_mus = {a.mu for a in A0 if a.alpha1 == 0.0 and a.alpha2 == 0.0}
    assert set(oned.mu_grid()) <= idle_mus
    for a in A0:
        assert abs(mixed_dynamics_cost(oned, 0.0, 0.0, a)[0]) <= 1e-9


def _two_point_problem():
    part = DomainPartition(period=2.0, interface_points=(0.0, 1.0))
    sample = ControlSample.uniform(-1.0, 1.0, 2)
    return ControlProblem(
        partition=part,
        dynamics=lambda i, x, y, a: np.asarray(a, dtype=float),
        cost=lambda i, x, y, a: 1.0 + 0.0 * np.asarray(a, dtype=float),
        controls=(sample, sample),
        bounds=ProblemBounds(M_b=1.0, M_l=1.0, delta=1.0),
        mu_resolution=5,
    )


def _unchecked_inward_problem():
    """Both sides can only move away from the interface: violates controllability on purpose."""
    prob = object.__new__(ControlProblem)
    part = DomainPartition(period=2.0, interface_points=(0.0, 1.0))
    sample = ControlSample.uniform(0.5, 1.0, 3)

    def dynamics(i, x, y, a):
        n1 = -1.0 if abs(math.remainder(y, 2.0)) < 0.5 else 1.0
        inward = -n1 if i == 1 else n1
        return inward * np.asarray(a, dtype=float)

    for name, value in dict(
        partition=part,
        dynamics=dynamics,
        cost=lambda i, x, y, a: 1.0 + 0.0 * np.asarray(a, dtype=float),
        controls=(sample, sample),
        bounds=ProblemBounds(M_b=1.0, M_l=1.0, delta=0.5),
        lam=1.0,
        mu_resolution=5,
        preset_id="",
        params={},
    ).items():
        object.__setattr__(prob, name, value)
    return prob


def test_opposite_unit_speeds_force_half_weight():
    A0 = tangential_control_set(_two_point_problem(), 0.0, 0.0)
    assert A0 and all(a.mu == 0.5 for a in A0)
    assert {(a.alpha1, a.alpha2) for a in A0} == {(1.0, -1.0), (-1.0, 1.0)}


def test_empty_regular_set_is_an_error():
    prob = _unchecked_inward_problem()
    assert tangential_control_set(prob, 0.0, 0.0)
    with pytest.raises(EmptyControlSetError):
        tangential_hamiltonian(prob, 0.0, 0.0, 0.0, Variant.PLUS)


def test_regular_filter_examples(oned):
    A0 = tangential_control_set(oned, 0.0, 0.0)
    reg = regular_filter(oned, 0.0, 0.0, A0)
    assert not any(a.alpha1 == 1.0 and a.alpha2 == -1.0 for a in reg)
    assert any(a.alpha1 == 0.0 and a.alpha2 == 0.0 for a in reg)
    # regular: side 1 must not point into Omega1 (alpha1 <= 0), side 2 not into Omega2 (alpha2 >= 0)
    assert all(a.alpha1 <= 1e-12 and a.alpha2 >= -1e-12 for a in reg)
    assert regular_filter(oned, 0.0, 0.0, []) == []


def test_hamiltonian_examples(oned, identical):
    assert hamiltonian(identical, 1, 0.0, 0.3, 2.0) == pytest.approx(1.0)
    assert hamiltonian(oned, 1, 0.0, 0.0, 0.0) == pytest.approx(0.0)
    assert hamiltonian(oned, 1, 0.0, 0.5, 0.0) == pytest.approx(-1.0)


def test_tangential_hamiltonians(oned, identical):
    assert tangential_hamiltonian(oned, 0.0, 0.0, 0.0, Variant.MINUS) == 0.0
    assert tangential_hamiltonian(oned, 0.0, 0.0, 0.0, Variant.PLUS) == pytest.approx(-1.0)
    for v in Variant:
        assert tangential_hamiltonian(identical, 0.0, 1.0, 0.0, v) == pytest.approx(-1.0)


@settings(max_examples=40, deadline=None)
@given(y=st.sampled_from([0.0, 1.0, 2.0, -1.0]))
def test_tangential_hamiltonian_variant_order(y):
    prob = make_problem("oned_example", control_resolution=11, mu_resolution=6)
    assert tangential_hamiltonian(prob, 0.0, y, 0.0, Variant.MINUS) >= tangential_hamiltonian(
        prob, 0.0, y, 0.0, Variant.PLUS
    )


@settings(max_examples=60, deadline=None)
@given(p=st.floats(-5, 5), q=st.floats(-5, 5), y=st.floats(0, 2))
def test_side_hamiltonian_lipschitz_in_p(p, q, y):
    prob = make_problem("oned_example", control_resolution=21)
    for i in (1, 2):
        gap = abs(hamiltonian(prob, i, 0.0, y, p) - hamiltonian(prob, i, 0.0, y, q))
        assert gap <= prob.bounds.M_b * abs(p - q) + 1e-12


@settings(max_examples=40, deadline=None)
@given(p=st.floats(-5, 5), y=st.sampled_from([0.0, 1.0]))
def test_side_hamiltonian_coercive_at_interfaces(p, y):
    prob = make_problem("oned_example", control_resolution=21)
    b = prob.bounds
    for i in (1, 2):
        assert hamiltonian(prob, i, 0.0, y, p) >= b.delta * abs(p) - b.M_l - 1e-12


def test_presets_satisfy_their_declared_bounds(oned, identical):
    assert check_problem(oned) == []
    assert check_problem(identical) == []
    assert check_problem(make_problem("identical_sides_offset", offset=0.5)) == []


def test_unknown_preset():
    with pytest.raises(KeyError):
        make_problem("no_such_preset")


def test_regularization_formula_cases(oned):
    push = pushing_control(oned, 0.0, 0.0)
    reg = regularize_control(oned, 0.0, 0.0, MixedControl(-0.5, -0.5, 1.0), push)  # drift 0.5
    assert reg.mu_bar == pytest.approx(2 / 3)
    assert reg.b_H == pytest.approx(0.0, abs=1e-15)
    sym = regularize_control(oned, 0.0, 0.0, MixedControl(-1.0, 0.0, 1.0), push)  # drift = delta
    assert sym.mu_bar == pytest.approx(0.5)


def test_regularization_on_the_two_sided_example(oned):
    a = MixedControl(-1.0, -1.0, 1.0)
    b_H, _ = mixed_dynamics_cost(oned, 0.0, 0.0, a)
    assert b_H * interface_normal(oned.partition, 0.0) == pytest.approx(1.0)
    reg = regularize_control(oned, 0.0, 0.0, a, pushing_control(oned, 0.0, 0.0))
    assert abs(reg.b_H) <= 1e-12
    assert abs(mixed_dynamics_cost(oned, 0.0, 0.0, reg.control)[0]) <= 1e-9


def test_regularization_preconditions(oned):
    push = pushing_control(oned, 0.0, 0.0)
    with pytest.raises(ValueError):
        regularize_control(oned, 0.0, 0.0, MixedControl(1.0, 1.0, 1.0), push)  # drifts the wrong way
    with pytest.raises(ValueError):
        regularize_control(oned, 0.0, 0.0, MixedControl(-1.0, -1.0, 1.0), MixedControl(0.0, 0.0, 0.5))


@settings(max_examples=80, deadline=None)
@given(
    a1=st.floats(-1, 1), a2=st.floats(-1, 1), mu=st.floats(0, 1), y=st.sampled_from([0.0, 1.0, 2.0, 3.0])
)
def test_regularized_controls_are_tangential_with_bounded_cost_shift(a1, a2, mu, y):
    prob = make_problem("oned_example", control_resolution=11, mu_resolution=6)
    a = MixedControl(a1, a2, mu)
    b_H, l_H = mixed_dynamics_cost(prob, 0.0, y, a)
    drift = b_H * interface_normal(prob.partition, y)
    if drift <= 1e-9:
        return
    reg = regularize_control(prob, 0.0, y, a, pushing_control(prob, 0.0, y))
    assert abs(reg.b_H) <= 1e-9
    assert abs(mixed_dynamics_cost(prob, 0.0, y, reg.control)[0]) <= 1e-9
    assert abs(reg.l_H - l_H) <= regularization_constant(prob.bounds) * drift + 1e-12


def test_lemma_constants_grow_with_normal_lipschitz(oned):
    c0 = lemma_constants(oned.bounds)
    c1 = lemma_constants(oned.bounds, normal_lip=1.0)
    assert c0[0] == c1[0] and c1[1] > c0[1]
    assert math.isfinite(c0[1])
