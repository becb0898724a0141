import logging

import numpy as np
import pytest

from sfvrom.config import ConfigurationError, log
from sfvrom.grid import Interval, build_tensor_grid, tensor_gauss_nodes
from sfvrom.weno import (
    BoundaryKind,
    WenoParams,
    evaluate_poly,
    reconstruct_physical,
    reconstruct_stochastic,
    stencil_neighbourhood,
    weno3_pair,
)

UNIT = Interval(0.0, 1.0)


def textbook_weno3(u_minus, u_center, u_plus, eps=1e-6):
    """Left and right face values of the classical two-stencil WENO3."""
    beta_forward = (u_plus - u_center) ** 2
    beta_backward = (u_center - u_minus) ** 2
    a0 = (2 / 3) / (eps + beta_forward) ** 2
    a1 = (1 / 3) / (eps + beta_backward) ** 2
    right = (a0 * (u_center + u_plus) / 2 + a1 * (3 * u_center - u_minus) / 2) / (a0 + a1)
    a0 = (1 / 3) / (eps + beta_forward) ** 2
    a1 = (2 / 3) / (eps + beta_backward) ** 2
    left = (a0 * (3 * u_center - u_plus) / 2 + a1 * (u_center + u_minus) / 2) / (a0 + a1)
    return left, right


class TestWeno3:
    def test_matches_textbook_formula(self):
        rng = np.random.default_rng(3)
        u = rng.normal(size=(3, 200))
        u[:, :20] = [[0.0], [1.0], [1.0]]
        left, right = weno3_pair(*u)
        expected_left, expected_right = textbook_weno3(*u)
        np.testing.assert_allclose(left, expected_left, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(right, expected_right, rtol=1e-12, atol=1e-14)

    def test_constant_is_exact(self):
        left, right = weno3_pair(np.full(4, 2.5), np.full(4, 2.5), np.full(4, 2.5))
        np.testing.assert_array_equal(left, 2.5)
        np.testing.assert_array_equal(right, 2.5)

    def test_affine_is_reproduced(self):
        i = np.arange(1.0, 9.0)
        a, b = 0.3, -1.7
        left, right = weno3_pair(a + b * (i - 1), a + b * i, a + b * (i + 1))
        np.testing.assert_allclose(left, a + b * (i - 0.5), rtol=1e-12)
        np.testing.assert_allclose(right, a + b * (i + 0.5), rtol=1e-12)

    def test_step_stays_bounded(self):
        left, right = weno3_pair(np.array([0.0]), np.array([0.0]), np.array([1.0]))
        assert 0.0 <= right[0] < 1e-3
        assert abs(left[0]) < 1e-10

    def test_params_validation(self):
        with pytest.raises(ConfigurationError):
            WenoParams(epsilon=0.0)
        with pytest.raises(ConfigurationError):
            WenoParams(linear_weights=(0.5, 0.6))


class TestPhysicalReconstruction:
    def test_periodic_wraps(self):
        x = np.linspace(0, 1, 8, endpoint=False)
        U = np.sin(2 * np.pi * x)[:, None, None] + np.zeros((8, 2, 1))
        states = reconstruct_physical(U, BoundaryKind.periodic)
        assert states.left.shape == (9, 2, 1)
        np.testing.assert_array_equal(states.left[0], states.left[-1])
        np.testing.assert_array_equal(states.right[0], states.right[-1])

    def test_interior_matches_pair(self):
        U = np.array([0.0, 1.0, 4.0, 9.0, 16.0, 25.0])
        states = reconstruct_physical(U, "outflow")
        left, right = weno3_pair(U[:-2], U[1:-1], U[2:])
        np.testing.assert_array_equal(states.left[2:-1], right)
        np.testing.assert_array_equal(states.right[1:-2], left)

    def test_outflow_boundary_is_constant_extension(self):
        U = np.array([2.0, 2.0, 3.0, 5.0, 5.0])
        states = reconstruct_physical(U, BoundaryKind.outflow)
        assert states.left[0] == 2.0 and states.right[0] == 2.0
        assert states.left[-1] == 5.0 and states.right[-1] == 5.0

    def test_perturbation_stays_local(self):
        rng = np.random.default_rng(6)
        U = rng.uniform(1, 2, size=(10, 3, 1))
        bumped = U.copy()
        bumped[5, 1] += 0.5
        before = reconstruct_physical(U, BoundaryKind.periodic)
        after = reconstruct_physical(bumped, BoundaryKind.periodic)
        changed = (before.left != after.left) | (before.right != after.right)
        interfaces, columns, _ = np.nonzero(changed)
        assert set(columns) == {1}
        assert {5, 6} <= set(interfaces) <= {4, 5, 6, 7}


def stochastic_grid(counts):
    return build_tensor_grid(UNIT, 4, [(UNIT, c) for c in counts])


class TestStochasticReconstruction:
    def test_perturbation_stays_in_neighbourhood(self):
        grid = stochastic_grid((5, 5))
        values = np.random.default_rng(7).uniform(1, 2, size=grid.ny)
        bumped = values.copy()
        bumped[12] += 0.5
        before = reconstruct_stochastic(values, grid).coefficients
        after = reconstruct_stochastic(bumped, grid).coefficients
        changed = np.flatnonzero(np.any(before != after, axis=1))
        reach = stencil_neighbourhood(grid, np.arange(grid.ny)).reshape(grid.ny, -1)
        assert 12 in changed
        assert set(changed) <= set(np.flatnonzero(np.any(reach == 12, axis=1)))

    def test_neighbourhood_is_clipped(self):
        grid = stochastic_grid((4,))
        np.testing.assert_array_equal(
            stencil_neighbourhood(grid, [0, 2, 3]), [[0, 0, 1], [1, 2, 3], [2, 3, 3]]
        )
        assert stencil_neighbourhood(stochastic_grid((3, 3)), [4]).shape == (1, 3, 3)

    def test_multilinear_data_is_exact_inside(self):
        grid = stochastic_grid((5, 4))
        qs = tensor_gauss_nodes(grid)
        f = lambda y: 0.4 + 1.3 * y[:, 0] - 0.8 * y[:, 1] + 2.1 * y[:, 0] * y[:, 1]
        # cell averages of a multilinear function are its center values
        poly = reconstruct_stochastic(f(grid.cell_centers), grid)
        values = evaluate_poly(poly, qs)
        index = grid.multi_index(qs.owner_cell)
        interior = np.all((index > 0) & (index < np.array(grid.counts) - 1), axis=1)
        np.testing.assert_allclose(values[interior], f(qs.nodes)[interior], rtol=1e-12, atol=1e-12)

    def test_one_dimensional_interpolant(self):
        grid = stochastic_grid((4,))
        qs = tensor_gauss_nodes(grid)
        cells = np.array([1.0, 3.0, 2.0, 7.0])
        values = evaluate_poly(reconstruct_stochastic(cells, grid), qs)
        for j in range(4):
            lo, hi = max(j - 1, 0), min(j + 1, 3)
            left, right = textbook_weno3(cells[lo], cells[j], cells[hi])
            xi = np.array([-1, 1]) / np.sqrt(3)
            expected = 0.5 * (left + right) + xi * 0.5 * (right - left)
            np.testing.assert_allclose(values[2 * j : 2 * j + 2], expected, rtol=1e-12)

    def test_vector_values(self):
        grid = stochastic_grid((3, 3))
        qs = tensor_gauss_nodes(grid)
        values = np.random.default_rng(0).normal(size=(9, 5, 2))
        poly = reconstruct_stochastic(values, grid)
        assert poly.coefficients.shape == (9, 4, 5, 2)
        nodal = evaluate_poly(poly, qs)
        assert nodal.shape == (36, 5, 2)
        constant = evaluate_poly(reconstruct_stochastic(np.ones((9, 5, 2)), grid), qs)
        np.testing.assert_array_equal(constant, 1.0)

    def test_restricted_reconstruction_is_bit_identical(self):
        grid = stochastic_grid((6, 5))
        qs = tensor_gauss_nodes(grid)
        values = np.random.default_rng(1).normal(size=(grid.ny, 7))
        full = evaluate_poly(reconstruct_stochastic(values, grid), qs)
        nodes = np.array([3, 41, 42, 77, 118])
        cells = np.unique(qs.owner_cell[nodes])
        source = np.unique(stencil_neighbourhood(grid, cells))
        poly = reconstruct_stochastic(values[source], grid, cells=cells, source_cells=source)
        np.testing.assert_array_equal(evaluate_poly(poly, qs, nodes), full[nodes])

    def test_missing_source_cells(self):
        grid = stochastic_grid((5,))
        with pytest.raises(IndexError):
            reconstruct_stochastic(np.ones(2), grid, cells=[2], source_cells=[1, 2])

    def test_node_outside_polynomial_cells(self):
        grid = stochastic_grid((4,))
        qs = tensor_gauss_nodes(grid)
        poly = reconstruct_stochastic(np.ones(3), grid, cells=[1], source_cells=[0, 1, 2])
        with pytest.raises(IndexError):
            evaluate_poly(poly, qs, [0])

    def test_short_dimension_falls_back_to_constant(self, caplog):
        grid = stochastic_grid((1, 2))
        qs = tensor_gauss_nodes(grid)
        with caplog.at_level(logging.WARNING):
            poly = reconstruct_stochastic(np.array([1.0, 4.0]), grid)
        np.testing.assert_array_equal(evaluate_poly(poly, qs), np.repeat([1.0, 4.0], 4))
        assert "piecewise-constant" in caplog.text

    def test_fallback_warns_once_per_grid_shape(self, caplog, monkeypatch):
        monkeypatch.setattr(log, "filters", [])
        grid = stochastic_grid((2, 1))
        with caplog.at_level(logging.WARNING):
            for _ in range(3):
                reconstruct_stochastic(np.array([1.0, 4.0]), grid)
        assert sum("piecewise-constant" in r.getMessage() for r in caplog.records) == 1
