import numpy as np
import pytest

from sfvrom.config import ConfigurationError, RankDeficiencyError
from sfvrom.grid import Interval, build_tensor_grid, cell_measures, tensor_gauss_nodes
from sfvrom.models import Burgers
from sfvrom.rom import (
    HyperReducedOperator,
    ReducedModel,
    ReducedOperator,
    build_face_integrals,
    compute_pod,
    hyper_reduced_rhs,
    hyper_reduction_index,
    least_squares_coefficients,
    load_basis,
    monomial_basis,
    numerical_rank,
    pseudo_inverse,
    qdeim_select,
    rom_rhs,
    save_basis,
    stencil_closure,
)
from sfvrom.solver import SFVDiscretization, flux_trace, rhs_flux_reconstruction

UNIT = Interval(0.0, 1.0)


def burgers_disc(nx=8, counts=(3, 3)):
    grid = build_tensor_grid(UNIT, nx, [(UNIT, c) for c in counts])
    return SFVDiscretization(grid, Burgers())


def smooth_field(disc):
    x = disc.grid.x_centers[:, None]
    y = disc.grid.cell_centers
    u = 0.6 + 0.3 * np.sin(2 * np.pi * x) * (1 + y[:, 0] - 0.5 * y[:, -1] ** 2)
    return u[..., None]


def trace_basis(U, disc):
    """POD basis spanning the flux trace of ``U`` exactly."""
    data = flux_trace(U, disc).values.reshape(disc.quadrature.size, -1)
    return compute_pod(data, numerical_rank(np.linalg.svd(data, compute_uv=False)))


class TestPod:
    def test_rank_one_snapshots(self):
        a, b = np.array([1.0, -3.0, 2.0]), np.array([0.5, 1.0, -1.0, 2.0])
        basis = compute_pod(np.outer(a, b), 1)
        np.testing.assert_allclose(basis.V[:, 0], -a / np.linalg.norm(a), rtol=1e-14)
        np.testing.assert_allclose(
            basis.singular_values[0], np.linalg.norm(a) * np.linalg.norm(b), rtol=1e-14
        )
        assert basis.rank == 1
        with pytest.raises(RankDeficiencyError) as error:
            compute_pod(np.outer(a, b), 2)
        assert error.value.rank == 1

    def test_orthonormal_modes_and_tail(self):
        S = np.random.default_rng(0).normal(size=(30, 12))
        basis = compute_pod(S, 5)
        np.testing.assert_allclose(basis.V.T @ basis.V, np.eye(5), atol=1e-13)
        residual = S - basis.V @ (basis.V.T @ S)
        np.testing.assert_allclose(np.sum(residual**2), basis.tail_energy(), rtol=1e-10)
        assert basis.tail_energy(12) == 0.0

    def test_sign_convention(self):
        basis = compute_pod(np.random.default_rng(1).normal(size=(20, 8)), 6)
        pivots = np.argmax(np.abs(basis.V), axis=0)
        assert np.all(basis.V[pivots, np.arange(6)] > 0)

    @pytest.mark.parametrize("n_modes", [0, 5])
    def test_invalid_mode_count(self, n_modes):
        with pytest.raises(ConfigurationError):
            compute_pod(np.ones((4, 3)) + np.eye(4, 3), n_modes)


class TestFaceIntegrals:
    def test_monomials_on_symmetric_cell(self):
        grid = build_tensor_grid(UNIT, 4, [(Interval(-1.0, 1.0), 1)])
        qs = tensor_gauss_nodes(grid)
        B = build_face_integrals(monomial_basis(qs, degree=2), qs).B
        np.testing.assert_allclose(B, [[1.0, 0.0, 1.0 / 3.0]], atol=1e-15)

    def test_constant_mode_gives_cell_measures(self):
        grid = build_tensor_grid(UNIT, 4, [(UNIT, 3), (UNIT, 2)])
        qs = tensor_gauss_nodes(grid)
        B = build_face_integrals(np.ones((qs.size, 1)), qs).B
        np.testing.assert_allclose(B[:, 0], cell_measures(grid).stochastic, rtol=1e-15)

    def test_row_mismatch(self):
        qs = tensor_gauss_nodes(build_tensor_grid(UNIT, 4, [(UNIT, 3)]))
        with pytest.raises(ConfigurationError):
            build_face_integrals(np.ones((5, 1)), qs)


class TestLeastSquares:
    def test_matches_normal_equations(self):
        rng = np.random.default_rng(2)
        V = rng.normal(size=(20, 4))
        F = rng.normal(size=(20, 3, 2))
        C = least_squares_coefficients(V, F)
        expected = np.linalg.solve(V.T @ V, V.T @ F.reshape(20, -1)).reshape(4, 3, 2)
        np.testing.assert_allclose(C, expected, rtol=1e-10, atol=1e-12)

    def test_recovers_span_and_ignores_complement(self):
        rng = np.random.default_rng(3)
        V = np.linalg.qr(rng.normal(size=(12, 3)))[0]
        C = rng.normal(size=(3, 5))
        np.testing.assert_allclose(least_squares_coefficients(V, V @ C), C, atol=1e-13)
        orthogonal = rng.normal(size=(12, 5))
        orthogonal -= V @ (V.T @ orthogonal)
        np.testing.assert_allclose(least_squares_coefficients(V, orthogonal), 0.0, atol=1e-13)

    def test_rank_deficient_basis(self):
        V = np.column_stack([np.ones(6), 2 * np.ones(6)])
        with pytest.raises(RankDeficiencyError):
            pseudo_inverse(V)


class TestQdeim:
    def setup_method(self):
        self.grid = build_tensor_grid(UNIT, 4, [(UNIT, 2)])
        self.qs = tensor_gauss_nodes(self.grid)

    def test_identity_rows(self):
        V = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        index = qdeim_select(V, 2, self.grid, self.qs)
        assert set(index.nodes) == {0, 1}
        assert index.condition == pytest.approx(1.0)

    def test_ties_go_to_lowest_index(self):
        V = np.ones((4, 1)) / 2
        assert qdeim_select(V, 1, self.grid, self.qs).nodes.tolist() == [0]

    def test_full_selection_is_permutation(self):
        V = np.linalg.qr(np.random.default_rng(4).normal(size=(4, 2)))[0]
        index = qdeim_select(V, 4, self.grid, self.qs)
        assert sorted(index.nodes.tolist()) == [0, 1, 2, 3]
        np.testing.assert_array_equal(index.cells, [0, 1])

    def test_too_few_nodes(self):
        V = np.eye(4)[:, :3]
        with pytest.raises(ConfigurationError):
            qdeim_select(V, 2, self.grid, self.qs)

    def test_selected_rows_span_basis(self):
        grid = build_tensor_grid(UNIT, 4, [(UNIT, 4), (UNIT, 4)])
        qs = tensor_gauss_nodes(grid)
        V = monomial_basis(qs, degree=2).V
        index = qdeim_select(V, V.shape[1], grid, qs)
        assert index.rank == V.shape[1]
        assert np.linalg.matrix_rank(V[index.nodes]) == V.shape[1]
        assert np.isfinite(index.condition)

    def test_closure_contains_stencils(self):
        grid = build_tensor_grid(UNIT, 4, [(UNIT, 5), (UNIT, 5)])
        np.testing.assert_array_equal(stencil_closure(grid, [12]), [6, 7, 8, 11, 12, 13, 16, 17, 18])
        np.testing.assert_array_equal(stencil_closure(grid, [0]), [0, 1, 5, 6])

    def test_duplicate_nodes(self):
        with pytest.raises(ConfigurationError):
            hyper_reduction_index([1, 1], np.eye(4)[:, :2], self.grid, self.qs)


class TestReducedOperators:
    def test_rom_is_exact_on_trace_span(self):
        disc = burgers_disc()
        U = smooth_field(disc)
        basis = trace_basis(U, disc)
        fi = build_face_integrals(basis, disc.quadrature)
        np.testing.assert_allclose(
            rom_rhs(U, disc, basis, fi), rhs_flux_reconstruction(U, disc), rtol=1e-9, atol=1e-10
        )

    def test_constant_state_is_stationary(self):
        disc = burgers_disc()
        basis = monomial_basis(disc.quadrature, degree=1)
        fi = build_face_integrals(basis, disc.quadrature)
        U = np.full(disc.shape, 0.8)
        np.testing.assert_allclose(rom_rhs(U, disc, basis, fi), 0.0, atol=1e-13)
        index = qdeim_select(basis, basis.n_modes, disc.grid, disc.quadrature)
        np.testing.assert_allclose(hyper_reduced_rhs(U, disc, basis, fi, index), 0.0, atol=1e-12)

    def test_full_selection_matches_rom(self):
        disc = burgers_disc()
        U = smooth_field(disc)
        basis = monomial_basis(disc.quadrature, degree=2)
        fi = build_face_integrals(basis, disc.quadrature)
        index = qdeim_select(basis, disc.quadrature.size, disc.grid, disc.quadrature)
        np.testing.assert_allclose(
            hyper_reduced_rhs(U, disc, basis, fi, index),
            rom_rhs(U, disc, basis, fi),
            rtol=1e-10,
            atol=1e-11,
        )

    def test_selected_trace_is_bit_identical(self):
        disc = burgers_disc(counts=(6, 5))
        U = smooth_field(disc)
        basis = monomial_basis(disc.quadrature, degree=2)
        fi = build_face_integrals(basis, disc.quadrature)
        index = qdeim_select(basis, 9, disc.grid, disc.quadrature)
        operator = HyperReducedOperator(basis, fi, index)
        trace = flux_trace(U, disc).values
        np.testing.assert_array_equal(operator.selected_trace(U, disc), trace[index.nodes])
        dense = disc.assemble(
            np.tensordot(fi.B @ pseudo_inverse(basis.V[index.nodes]), trace[index.nodes], axes=(1, 0))
        )
        np.testing.assert_allclose(operator.rhs(U, disc), dense, rtol=1e-12, atol=1e-13)

    def test_hyper_reduction_interpolates_trace_span(self):
        disc = burgers_disc(counts=(4, 4))
        U = smooth_field(disc)
        basis = trace_basis(U, disc)
        fi = build_face_integrals(basis, disc.quadrature)
        index = qdeim_select(basis, basis.n_modes + 3, disc.grid, disc.quadrature)
        np.testing.assert_allclose(
            hyper_reduced_rhs(U, disc, basis, fi, index),
            rhs_flux_reconstruction(U, disc),
            rtol=1e-7,
            atol=1e-8,
        )

    def test_hyper_reduction_saves_flux_evaluations(self):
        disc = burgers_disc(counts=(8, 8))
        U = smooth_field(disc)
        basis = monomial_basis(disc.quadrature, degree=1)
        fi = build_face_integrals(basis, disc.quadrature)
        index = qdeim_select(basis, basis.n_modes, disc.grid, disc.quadrature)
        disc.counter.reset()
        ReducedOperator(basis, fi).rhs(U, disc)
        full = disc.counter.evaluations
        disc.counter.reset()
        HyperReducedOperator(basis, fi, index).rhs(U, disc)
        assert disc.counter.evaluations == 9 * len(index.closure)
        assert disc.counter.evaluations < 0.5 * full

    def test_basis_rows_must_match(self):
        disc = burgers_disc()
        other = tensor_gauss_nodes(build_tensor_grid(UNIT, 8, [(UNIT, 4)]))
        basis = monomial_basis(other)
        fi = build_face_integrals(basis, other)
        with pytest.raises(ConfigurationError):
            rom_rhs(np.ones(disc.shape), disc, basis, fi)


class TestBasisArtifacts:
    def test_save_and_load(self, tmp_path):
        disc = burgers_disc()
        basis = monomial_basis(disc.quadrature, degree=2)
        model = ReducedModel(
            basis=basis,
            face_integrals=build_face_integrals(basis, disc.quadrature),
            hyper_nodes=qdeim_select(basis, 8, disc.grid, disc.quadrature).nodes,
            manifest={"snapshot_hash": "abc"},
        )
        manifest = save_basis(tmp_path / "basis", model, disc.quadrature, disc.grid)
        assert manifest["N"] == basis.n_modes and manifest["N_H"] == 8
        loaded = load_basis(tmp_path / "basis")
        np.testing.assert_array_equal(loaded.basis.V, basis.V)
        np.testing.assert_array_equal(loaded.face_integrals.B, model.face_integrals.B)
        np.testing.assert_array_equal(loaded.hyper_nodes, model.hyper_nodes)
        assert loaded.manifest["snapshot_hash"] == "abc"
        operator = loaded.operator(disc, 6)
        np.testing.assert_array_equal(operator.index.nodes, model.hyper_nodes[:6])
