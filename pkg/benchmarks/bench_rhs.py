import numpy as np
import pytest

from sfvrom.problems import Preset
from sfvrom.rom import (
    HyperReducedOperator,
    ReducedOperator,
    build_face_integrals,
    monomial_basis,
    qdeim_select,
)
from sfvrom.solver import (
    project_initial_condition,
    rhs_flux_reconstruction,
    rhs_state_reconstruction,
)

NX = 64
COUNTS = (16, 16)


@pytest.fixture(scope="module")
def burgers():
    problem = Preset.burgers_sine.build()
    disc = problem.discretization(NX, COUNTS)
    initial = project_initial_condition(problem.initial_condition, disc)
    return disc, initial.values


def bench_flux_reconstruction(benchmark, burgers):
    disc, U = burgers
    benchmark(rhs_flux_reconstruction, U, disc)


def bench_state_reconstruction(benchmark, burgers):
    disc, U = burgers
    benchmark(rhs_state_reconstruction, U, disc)


def bench_flux_evaluation_ratio(burgers):
    disc, U = burgers
    disc.counter.reset()
    rhs_flux_reconstruction(U, disc)
    flux = disc.counter.evaluations
    disc.counter.reset()
    rhs_state_reconstruction(U, disc)
    assert disc.counter.evaluations == 2 ** disc.grid.q * flux


class BenchmarkReducedOperators:
    @pytest.fixture(autouse=True)
    def operators(self, burgers):
        self.disc, self.U = burgers
        basis = monomial_basis(self.disc.quadrature, degree=2)
        fi = build_face_integrals(basis, self.disc.quadrature)
        index = qdeim_select(basis, basis.n_modes, self.disc.grid, self.disc.quadrature)
        self.rom = ReducedOperator(basis, fi)
        self.hr = HyperReducedOperator(basis, fi, index)

    def bench_rom(self, benchmark):
        benchmark(self.rom.rhs, self.U, self.disc)

    def bench_hyper_reduced(self, benchmark):
        benchmark(self.hr.rhs, self.U, self.disc)

    def bench_hyper_reduction_saves_fluxes(self):
        self.disc.counter.reset()
        self.rom.rhs(self.U, self.disc)
        full = self.disc.counter.evaluations
        self.disc.counter.reset()
        self.hr.rhs(self.U, self.disc)
        assert self.disc.counter.evaluations < 0.5 * full
        assert np.isfinite(self.hr.index.condition)
