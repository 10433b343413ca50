"""Tests for material laws and coercivity sampling."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from evoeq import ParameterError, ShapeError, TimeGrid, Trajectory, d0, d0_frac, d0_inv
from evoeq.matlaw import (
    apply_material,
    block_indicator_law,
    fractional_diagonal_law,
    lipschitz_budget,
    material_symbol,
    pencil_law,
    verify_coercivity,
)

COERCIVITY_SLACK = 1e-9
SAMPLING_ENVELOPE = 0.05  # how far above the exact infimum a sampled min may sit


def heat_law():
    return pencil_law(np.diag([0.0, 1.0]), np.diag([1.0, 0.0]))


def random_trajectory(grid, dof, rng):
    vals = rng.normal(size=(grid.n_steps, dof)) + 1j * rng.normal(size=(grid.n_steps, dof))
    return Trajectory(grid, vals)


def disc_grid_min(fn, r, n=241):
    """Brute-force oracle: minimize fn(z) over a grid covering B(r, r)."""
    best = math.inf
    for a in np.linspace(r * 1e-3, 2.0 * r, n):
        for b in np.linspace(-r, r, n):
            z = complex(a, b)
            if abs(z - r) < r and abs(z) > r * 1e-6:
                best = min(best, fn(z))
    return best


# ---------------------------------------------------------------- validation

def test_pencil_rejects_non_psd_m0():
    with pytest.raises(ParameterError):
        pencil_law(np.array([[-1.0]]), np.array([[0.0]]))


def test_pencil_rejects_non_selfadjoint_m0():
    with pytest.raises(ParameterError):
        pencil_law(np.array([[0.0, 1.0], [0.0, 0.0]]), np.zeros((2, 2)))


def test_pencil_rejects_shape_mismatch():
    with pytest.raises(ShapeError):
        pencil_law(np.eye(2), np.zeros((3, 3)))


def test_fractional_rejects_bad_orders():
    for alphas in ([0.0], [1.2], [-0.3], [0.5, 1.0001]):
        with pytest.raises(ParameterError):
            fractional_diagonal_law(alphas)


def test_fractional_rejects_bad_coeffs():
    with pytest.raises(ParameterError):
        fractional_diagonal_law([0.5], coeffs=[0.0])
    with pytest.raises(ShapeError):
        fractional_diagonal_law([0.5], coeffs=[1.0, 2.0])


def test_indicator_rejects_non_binary_mask():
    with pytest.raises(ParameterError):
        block_indicator_law([0.5, 1.0], [1.0, 0.0])


def test_indicator_rejects_uncovered_dof():
    with pytest.raises(ParameterError, match="dof 1"):
        block_indicator_law([1.0, 0.0], [0.0, 0.0])


def test_apply_rejects_dof_mismatch():
    grid = TimeGrid(0.1, 4, 1.0)
    with pytest.raises(ShapeError):
        apply_material(heat_law(), Trajectory.zeros(grid, 3))


# ------------------------------------------------------------------- apply

def test_apply_heat_law_oracle():
    # independent route: first column integrates, second passes through
    grid = TimeGrid(0.1, 6, 1.0)
    rng = np.random.default_rng(0)
    u = random_trajectory(grid, 2, rng)
    out = apply_material(heat_law(), u)
    cum = grid.dt * np.cumsum(u.values[:, 0])
    assert np.allclose(out.values[:, 0], cum, rtol=0, atol=1e-15)
    assert np.array_equal(out.values[:, 1], u.values[:, 1])


def test_apply_pencil_dense_oracle():
    grid = TimeGrid(0.2, 5, 1.0)
    rng = np.random.default_rng(1)
    a = rng.normal(size=(3, 3))
    m0 = a @ a.T  # symmetric PSD
    m1 = rng.normal(size=(3, 3))
    law = pencil_law(m0, m1)
    u = random_trajectory(grid, 3, rng)
    out = apply_material(law, u)
    for n in range(grid.n_steps):
        acc = grid.dt * u.values[: n + 1].sum(axis=0)
        expect = m0 @ u.values[n] + m1 @ acc
        assert np.allclose(out.values[n], expect, rtol=1e-12, atol=1e-12)


def test_apply_indicator_matches_pencil_route():
    grid = TimeGrid(0.1, 8, 1.0)
    rng = np.random.default_rng(2)
    mask0 = np.array([1.0, 1.0, 0.0, 1.0])
    mask1 = np.array([0.0, 1.0, 1.0, 1.0])
    ind = block_indicator_law(mask0, mask1)
    pen = pencil_law(np.diag(mask0), np.diag(mask1))
    u = random_trajectory(grid, 4, rng)
    a = apply_material(ind, u)
    b = apply_material(pen, u)
    assert np.allclose(a.values, b.values, rtol=1e-13, atol=1e-13)


def test_apply_fractional_identity_block_is_bitwise():
    grid = TimeGrid(0.05, 40, 1.0)
    rng = np.random.default_rng(3)
    u = random_trajectory(grid, 2, rng)
    law = fractional_diagonal_law([1.0, 1.0])
    assert np.array_equal(apply_material(law, u).values, u.values)


def test_apply_fractional_dual_route_against_d0_frac():
    # d0 applied after the order-(1-alpha) integral equals the order-alpha difference
    grid = TimeGrid(0.01, 300, 1.0)
    rng = np.random.default_rng(4)
    u = random_trajectory(grid, 1, rng)
    for alpha in (0.3, 0.6, 0.9):
        law = fractional_diagonal_law([alpha])
        lhs = d0(apply_material(law, u))
        rhs = d0_frac(u, alpha)
        scale = np.max(np.abs(rhs.values))
        assert np.max(np.abs(lhs.values - rhs.values)) <= 1e-12 * scale


def test_apply_fractional_coefficient_scales():
    grid = TimeGrid(0.1, 20, 1.0)
    rng = np.random.default_rng(5)
    u = random_trajectory(grid, 1, rng)
    base = apply_material(fractional_diagonal_law([0.5]), u)
    scaled = apply_material(fractional_diagonal_law([0.5], coeffs=[2.5]), u)
    assert np.allclose(scaled.values, 2.5 * base.values, rtol=1e-14)


@seed(11)
@given(st.integers(min_value=0, max_value=10**9))
@settings(max_examples=30, deadline=None)
def test_apply_is_linear(rngseed):
    rng = np.random.default_rng(rngseed)
    grid = TimeGrid(0.1, 12, 1.0)
    m1 = rng.normal(size=(2, 2))
    law = pencil_law(np.diag(rng.uniform(0.5, 2.0, size=2)), m1)
    u = random_trajectory(grid, 2, rng)
    v = random_trajectory(grid, 2, rng)
    a, b = complex(rng.normal(), rng.normal()), complex(rng.normal(), rng.normal())
    lhs = apply_material(law, a * u + b * v)
    rhs = a * apply_material(law, u) + b * apply_material(law, v)
    scale = np.max(np.abs(rhs.values)) + 1.0
    assert np.max(np.abs(lhs.values - rhs.values)) <= 1e-12 * scale


@seed(12)
@given(
    st.sampled_from(["pencil", "indicator", "fractional"]),
    st.integers(min_value=0, max_value=10**9),
)
@settings(max_examples=30, deadline=None)
def test_apply_is_causal_bitwise(variant, rngseed):
    rng = np.random.default_rng(rngseed)
    n = int(rng.integers(3, 32))
    m = int(rng.integers(0, n - 1))
    grid = TimeGrid(0.1, n, 1.0)
    if variant == "pencil":
        law = pencil_law(np.diag([1.0, 0.0]), rng.normal(size=(2, 2)))
    elif variant == "indicator":
        law = block_indicator_law([1.0, 0.0], [1.0, 1.0])
    else:
        law = fractional_diagonal_law([0.4, 0.8])
    u = random_trajectory(grid, 2, rng)
    v = u.copy()
    v.values[m + 1 :] = rng.normal(size=(n - m - 1, 2))
    a = apply_material(law, u)
    b = apply_material(law, v)
    assert np.array_equal(a.values[: m + 1], b.values[: m + 1])


def test_constant_matrix_commutes_with_d0_inv():
    grid = TimeGrid(0.1, 50, 1.0)
    rng = np.random.default_rng(6)
    c = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    u = random_trajectory(grid, 3, rng)
    lhs = d0_inv(Trajectory(grid, u.values @ c.T))
    rhs = Trajectory(grid, d0_inv(u).values @ c.T)
    scale = np.max(np.abs(rhs.values))
    assert np.max(np.abs(lhs.values - rhs.values)) <= 1e-13 * scale


# -------------------------------------------------------------- coercivity

def test_heat_law_coercive_at_unit_radius():
    rep = verify_coercivity(heat_law(), r=1.0, n_z=512, seed=3)
    assert rep.c_est >= 0.5 - COERCIVITY_SLACK
    assert rep.n_samples == 512


def test_heat_law_matches_brute_force_oracle():
    # both routes sample the same infimum from above, so they must agree
    # within the sampling envelope and sit above the analytic value 1/2
    r = 1.0
    oracle = disc_grid_min(lambda z: min(1.0, (1.0 / z).real), r)
    rep = verify_coercivity(heat_law(), r=r, n_z=1024, seed=0)
    assert abs(rep.c_est - oracle) <= SAMPLING_ENVELOPE
    assert oracle >= 0.5 - COERCIVITY_SLACK
    assert rep.c_est >= 0.5 - COERCIVITY_SLACK


@seed(13)
@given(st.floats(min_value=0.25, max_value=4.0))
@settings(max_examples=20, deadline=None)
def test_heat_law_bound_any_radius(r):
    rep = verify_coercivity(heat_law(), r=r, n_z=64, seed=1)
    assert rep.c_est >= min(1.0, 1.0 / (2.0 * r)) - COERCIVITY_SLACK


def test_identity_law_coercivity_is_half_over_r():
    rep = verify_coercivity(pencil_law(np.eye(2), np.zeros((2, 2))), r=1.0, n_z=2048, seed=0)
    assert 0.5 <= rep.c_est <= 0.5 + SAMPLING_ENVELOPE


def test_fractional_law_bound_and_sharp_value():
    alpha, r = 0.6, 1.0
    law = fractional_diagonal_law([alpha])
    rep = verify_coercivity(law, r=r, n_z=2048, seed=1)
    bound = (2.0 * r) ** (-alpha) * math.cos(alpha * math.pi / 2.0)
    assert rep.c_est >= bound - COERCIVITY_SLACK
    # oracle: independent grid sampling of the same infimum
    oracle = disc_grid_min(lambda z: (z ** (-alpha)).real, r)
    assert oracle >= bound - COERCIVITY_SLACK
    assert abs(rep.c_est - oracle) <= SAMPLING_ENVELOPE


def test_mixed_indicator_law_bound():
    law = block_indicator_law([1, 1, 0, 0, 1, 1], [0, 0, 1, 1, 1, 1])
    r = 1.0
    rep = verify_coercivity(law, r=r, n_z=1024, seed=2)
    oracle = disc_grid_min(lambda z: min((1.0 / z).real, 1.0, (1.0 / z).real + 1.0), r)
    assert abs(rep.c_est - oracle) <= SAMPLING_ENVELOPE
    assert rep.c_est >= min(1.0, 1.0 / (2.0 * r)) - COERCIVITY_SLACK
    assert oracle >= min(1.0, 1.0 / (2.0 * r)) - COERCIVITY_SLACK


def test_negative_coercivity_is_reported_not_raised():
    law = pencil_law(np.zeros((1, 1)), np.array([[-0.1]]))
    rep = verify_coercivity(law, r=1.0, n_z=64, seed=0)
    assert rep.c_est == pytest.approx(-0.1, abs=1e-15)


def test_coercivity_deterministic_per_seed():
    a = verify_coercivity(heat_law(), 1.0, n_z=128, seed=9)
    b = verify_coercivity(heat_law(), 1.0, n_z=128, seed=9)
    assert a == b


def test_coercivity_rejects_bad_radius():
    with pytest.raises(ParameterError):
        verify_coercivity(heat_law(), r=0.0)
    with pytest.raises(ParameterError):
        verify_coercivity(heat_law(), r=-1.0)


def test_material_symbol_shapes():
    sym = material_symbol(heat_law(), 0.5 + 0.5j)
    assert np.allclose(sym, np.diag([0.5 + 0.5j, 1.0]))
    law = fractional_diagonal_law([0.5], coeffs=[2.0])
    assert material_symbol(law, 4.0)[0, 0] == pytest.approx(2.0 * 2.0)


# -------------------------------------------------------------------- budget

def test_lipschitz_budget_values():
    b = lipschitz_budget(1.0, 2.0)
    assert b.nu_min == pytest.approx(2.0)
    assert b.q(2.0) == pytest.approx(1.0)
    assert b.q(8.0) == pytest.approx(0.5)


def test_lipschitz_budget_contraction_above_threshold():
    b = lipschitz_budget(0.5, 1.0)
    assert b.nu_min == pytest.approx(2.0)
    assert b.q(b.nu_min * 1.0001) < 1.0
    assert b.q(b.nu_min * 0.9999) > 1.0


def test_lipschitz_budget_rejects_bad_inputs():
    with pytest.raises(ParameterError):
        lipschitz_budget(0.0, 1.0)
    with pytest.raises(ParameterError):
        lipschitz_budget(-1.0, 1.0)
    with pytest.raises(ParameterError):
        lipschitz_budget(1.0, -0.5)
    with pytest.raises(ParameterError):
        lipschitz_budget(1.0, 1.0).q(0.0)


def test_lipschitz_budget_zero_l():
    assert lipschitz_budget(2.0, 0.0).nu_min == 0.0
