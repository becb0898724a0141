"""POD interpolation of the stochastic flux trace and Q-DEIM hyper-reduction."""

from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg

from sfvrom.config import (
    AssemblyError,
    ConfigurationError,
    RankDeficiencyError,
    log,
    raise_error,
)
from sfvrom.grid import QuadratureSet, TensorGrid, cell_integrals
from sfvrom.solver import SFVDiscretization, flux_trace, interface_fluxes
from sfvrom.stats import read_matrix, write_matrix
from sfvrom.utils import (
    BASIS_FILE,
    BASIS_MANIFEST,
    FACE_INTEGRALS_FILE,
    HYPER_INDEX_FILE,
    SINGULAR_VALUES_FILE,
    create_folder,
    dump_json,
    json_load,
)
from sfvrom.weno import evaluate_poly, reconstruct_stochastic, stencil_neighbourhood

RANK_TOL = 1e-14
"""Relative singular-value cutoff for rank decisions and pseudoinverses."""
PIVOT_TIE_TOL = 1e-14

# snapshot column metadata fields
FRAME, COMPONENT, SIDE, INTERFACE = range(4)
PLUS, MINUS = 0, 1


@dataclass
class SnapshotMatrix:
    """Flux snapshots, one row per quadrature node.

    ``columns[c] = (frame, component, side, interface)`` where ``side`` is
    ``PLUS`` for a right face ``x_{i+1/2}`` and ``MINUS`` for a left face, and
    ``interface`` is ``k`` of ``x_{k-1/2}``.
    """

    data: np.ndarray
    columns: np.ndarray
    frame_times: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        self.columns = np.asarray(self.columns, dtype=int).reshape(-1, 4)
        if self.data.ndim != 2 or self.data.shape[1] != len(self.columns):
            raise_error(
                AssemblyError,
                f"Snapshot data {self.data.shape} does not match {len(self.columns)} column labels.",
            )
        if self.data.size and np.any(np.all(np.isnan(self.data), axis=0)):
            raise_error(AssemblyError, "Snapshot matrix has an all-NaN column.")

    @property
    def shape(self):
        return self.data.shape


@dataclass
class PodBasis:
    """Node values ``V[l, k]`` of the stochastic basis."""

    V: np.ndarray
    singular_values: np.ndarray
    n_modes: int

    @property
    def rank(self):
        return numerical_rank(self.singular_values)

    def tail_energy(self, n_modes=None):
        n_modes = self.n_modes if n_modes is None else n_modes
        return float(np.sum(self.singular_values[n_modes:] ** 2))


@dataclass(frozen=True)
class FaceIntegralMatrix:
    B: np.ndarray
    """``B[j, k]`` is the density-weighted integral of mode ``k`` over stochastic cell ``j``."""


@dataclass(frozen=True)
class HyperReductionIndex:
    nodes: np.ndarray
    """Selected global node indices, in pivot order."""
    cells: np.ndarray
    """Sorted owner cells of ``nodes``."""
    closure: np.ndarray
    """Sorted owner cells plus their stochastic WENO stencils."""
    condition: float
    rank: int

    @property
    def n_hyper(self):
        return len(self.nodes)


def numerical_rank(singular_values, tol=RANK_TOL):
    s = np.asarray(singular_values, dtype=float)
    if not s.size or s[0] == 0:
        return 0
    return int(np.sum(s / s[0] >= tol))


def compute_pod(snap, n_modes: int) -> PodBasis:
    """Leading ``n_modes`` left singular vectors, each with its largest-magnitude entry positive."""
    data = snap.data if isinstance(snap, SnapshotMatrix) else np.asarray(snap, dtype=float)
    if not 1 <= n_modes <= min(data.shape):
        raise_error(
            ConfigurationError,
            f"Need 1 <= N <= {min(data.shape)} for a {data.shape} snapshot matrix, got {n_modes}.",
        )
    U, s, _ = scipy.linalg.svd(data, full_matrices=False)
    rank = numerical_rank(s)
    if n_modes > rank:
        raise_error(
            RankDeficiencyError,
            f"Requested N={n_modes} modes but the snapshot matrix has numerical rank {rank}.",
            rank=rank,
        )
    V = U[:, :n_modes]
    pivots = np.argmax(np.abs(V), axis=0)
    V = V * np.sign(V[pivots, np.arange(n_modes)])
    log.info(
        f"POD basis: N={n_modes}, sigma_1={s[0]:.4e}, sigma_N={s[n_modes - 1]:.4e}, rank={rank}"
    )
    return PodBasis(V=V, singular_values=s, n_modes=n_modes)


def monomial_basis(qs: QuadratureSet, degree: int = 1) -> PodBasis:
    """Global monomials ``prod_d y_d**a_d`` with ``sum(a) <= degree`` at the nodes."""
    exponents = [a for a in product(range(degree + 1), repeat=qs.q) if sum(a) <= degree]
    V = np.column_stack([np.prod(qs.nodes ** np.array(a), axis=1) for a in exponents])
    return PodBasis(V=V, singular_values=scipy.linalg.svdvals(V), n_modes=V.shape[1])


def _basis_matrix(basis):
    return basis.V if isinstance(basis, PodBasis) else np.asarray(basis, dtype=float)


def build_face_integrals(basis, qs: QuadratureSet) -> FaceIntegralMatrix:
    V = _basis_matrix(basis)
    if len(V) != qs.size:
        raise_error(
            ConfigurationError,
            f"Basis has {len(V)} rows but the quadrature has {qs.size} nodes.",
        )
    return FaceIntegralMatrix(cell_integrals(qs, V))


def pseudo_inverse(V):
    """Minimum-norm pseudoinverse with cutoff ``max(V.shape) * sigma_1 * 1e-14``."""
    V = np.asarray(V, dtype=float)
    pinv, rank = scipy.linalg.pinv(
        V, atol=0.0, rtol=max(V.shape) * RANK_TOL, return_rank=True
    )
    if rank < V.shape[1]:
        raise_error(
            RankDeficiencyError,
            f"Basis matrix {V.shape} has rank {rank} < {V.shape[1]}.",
            rank=rank,
        )
    return pinv


def least_squares_coefficients(basis, values):
    """``V^+ F`` for node-indexed ``values`` of shape ``(L, ...)``."""
    V = _basis_matrix(basis)
    values = np.asarray(values, dtype=float)
    return np.tensordot(pseudo_inverse(V), values, axes=(1, 0))


def _greedy_pivots(A):
    """Column pivots of the QR factorization of ``A`` with lowest-index tie-breaking.

    Stops early once the remaining columns are numerically zero.
    """
    R = np.array(A, dtype=float)
    n_rows, n_cols = R.shape
    pivots = []
    available = np.ones(n_cols, dtype=bool)
    first = None
    for _ in range(min(n_rows, n_cols)):
        norms = np.where(available, np.sum(R**2, axis=0), -np.inf)
        best = norms.max()
        if first is None:
            first = best
        if not best > (RANK_TOL**2) * first:
            break
        p = int(np.flatnonzero(norms >= best * (1.0 - PIVOT_TIE_TOL))[0])
        pivots.append(p)
        available[p] = False
        direction = R[:, p] / np.sqrt(norms[p])
        R -= np.outer(direction, direction @ R)
    return np.array(pivots, dtype=int)


def stencil_closure(grid: TensorGrid, cells):
    cells = np.unique(np.asarray(cells, dtype=int))
    return np.unique(stencil_neighbourhood(grid, cells))


def hyper_reduction_index(nodes, basis, grid: TensorGrid, qs: QuadratureSet, rank=None):
    nodes = np.asarray(nodes, dtype=int)
    if len(np.unique(nodes)) != len(nodes):
        raise_error(ConfigurationError, "Hyper-reduction nodes must be distinct.")
    if np.any((nodes < 0) | (nodes >= qs.size)):
        raise_error(ConfigurationError, "Hyper-reduction node outside the quadrature set.")
    V = _basis_matrix(basis)
    s = scipy.linalg.svdvals(V[nodes])
    condition = float(s[0] / s[-1]) if s[-1] > 0 else float("inf")
    cells = np.unique(qs.owner_cell[nodes])
    return HyperReductionIndex(
        nodes=nodes,
        cells=cells,
        closure=stencil_closure(grid, cells),
        condition=condition,
        rank=numerical_rank(s) if rank is None else rank,
    )


def qdeim_select(basis, n_hyper: int, grid: TensorGrid, qs: QuadratureSet) -> HyperReductionIndex:
    """Pivoted QR of ``V^T``; the first ``n_hyper`` pivots are the interpolation nodes.

    Beyond the numerical rank the remaining nodes follow in decreasing row norm
    of ``V`` (ties to the lowest index).
    """
    V = _basis_matrix(basis)
    n_rows, n_modes = V.shape
    if not n_modes <= n_hyper <= n_rows:
        raise_error(
            ConfigurationError,
            f"Need N={n_modes} <= N_H <= {n_rows}, got N_H={n_hyper}.",
        )
    pivots = _greedy_pivots(V.T)
    if len(pivots) < n_hyper:
        if len(pivots) < min(n_rows, n_modes):
            log.warning(
                f"Q-DEIM exhausted the basis rank after {len(pivots)} pivots; "
                f"filling to N_H={n_hyper} by row norm."
            )
        rest = np.setdiff1d(np.arange(n_rows), pivots)
        row_norms = np.sum(V[rest] ** 2, axis=1)
        rest = rest[np.lexsort((rest, -row_norms))]
        pivots = np.concatenate([pivots, rest])
    index = hyper_reduction_index(pivots[:n_hyper], V, grid, qs, rank=min(len(pivots), n_modes))
    log.info(
        f"Q-DEIM: N_H={n_hyper}, {len(index.cells)} owner cells, "
        f"closure of {len(index.closure)}/{grid.ny} cells, cond={index.condition:.3e}"
    )
    return index


def _check_rows(V, disc: SFVDiscretization):
    if len(V) != disc.quadrature.size:
        raise_error(
            ConfigurationError,
            f"Basis has {len(V)} rows but the discretization has {disc.quadrature.size} nodes.",
        )


class ReducedOperator:
    """``-M^{-1} (B V^+ F+ - B V^+ F-)`` with the projector ``B V^+`` precomputed."""

    def __init__(self, basis, face_integrals: FaceIntegralMatrix):
        self.V = _basis_matrix(basis)
        self.B = face_integrals.B
        self.projector = self.B @ pseudo_inverse(self.V)

    def rhs(self, U, disc: SFVDiscretization):
        _check_rows(self.V, disc)
        trace = flux_trace(U, disc)
        return disc.assemble(np.tensordot(self.projector, trace.values, axes=(1, 0)))


class HyperReducedOperator:
    """Reduced operator that only reconstructs the flux at the Q-DEIM nodes.

    Physical WENO and numerical fluxes run on the stochastic closure of the
    selected nodes; ``B`` stays the full face-integral matrix.
    """

    def __init__(self, basis, face_integrals: FaceIntegralMatrix, index: HyperReductionIndex):
        self.V = _basis_matrix(basis)
        self.B = face_integrals.B
        self.index = index
        self.projector = self.B @ pseudo_inverse(self.V[index.nodes])

    def selected_trace(self, U, disc: SFVDiscretization):
        """Reconstructed flux rows ``F[I]``, shape ``(N_H, N_x + 1, n)``."""
        fluxes = interface_fluxes(U, disc, columns=self.index.closure)
        poly = reconstruct_stochastic(
            fluxes,
            disc.grid,
            disc.weno,
            cells=self.index.cells,
            source_cells=self.index.closure,
        )
        return evaluate_poly(poly, disc.quadrature, node_index=self.index.nodes)

    def rhs(self, U, disc: SFVDiscretization):
        _check_rows(self.V, disc)
        values = self.selected_trace(U, disc)
        return disc.assemble(np.tensordot(self.projector, values, axes=(1, 0)))


def rom_rhs(U, disc: SFVDiscretization, basis, face_integrals: FaceIntegralMatrix):
    return ReducedOperator(basis, face_integrals).rhs(U, disc)


def hyper_reduced_rhs(
    U, disc: SFVDiscretization, basis, face_integrals: FaceIntegralMatrix, index: HyperReductionIndex
):
    return HyperReducedOperator(basis, face_integrals, index).rhs(U, disc)


@dataclass
class ReducedModel:
    """A persisted basis with its face integrals and optional Q-DEIM nodes."""

    basis: PodBasis
    face_integrals: FaceIntegralMatrix
    hyper_nodes: Optional[np.ndarray] = None
    manifest: dict = field(default_factory=dict)

    def operator(self, disc: SFVDiscretization, n_hyper=None):
        if n_hyper is None:
            return ReducedOperator(self.basis, self.face_integrals)
        if self.hyper_nodes is not None and len(self.hyper_nodes) >= n_hyper:
            index = hyper_reduction_index(
                self.hyper_nodes[:n_hyper], self.basis, disc.grid, disc.quadrature
            )
        else:
            index = qdeim_select(self.basis, n_hyper, disc.grid, disc.quadrature)
        return HyperReducedOperator(self.basis, self.face_integrals, index)


def save_basis(folder, model: ReducedModel, qs: QuadratureSet, grid: TensorGrid):
    folder = create_folder(folder)
    write_matrix(folder / BASIS_FILE, model.basis.V)
    write_matrix(folder / SINGULAR_VALUES_FILE, model.basis.singular_values.reshape(-1, 1))
    write_matrix(folder / FACE_INTEGRALS_FILE, model.face_integrals.B)
    if model.hyper_nodes is not None:
        write_matrix(folder / HYPER_INDEX_FILE, np.asarray(model.hyper_nodes, dtype=float).reshape(-1, 1))
    manifest = {
        "N": model.basis.n_modes,
        "N_H": None if model.hyper_nodes is None else len(model.hyper_nodes),
        "q": grid.q,
        "N_y": grid.ny,
        "N_q": qs.nq,
        **model.manifest,
    }
    dump_json(folder / BASIS_MANIFEST, manifest)
    log.info(f"Saved basis with N={model.basis.n_modes} to {folder}")
    return manifest


def load_basis(folder) -> ReducedModel:
    folder = Path(folder)
    manifest = json_load(folder / BASIS_MANIFEST)
    V = read_matrix(folder / BASIS_FILE)
    sigma = read_matrix(folder / SINGULAR_VALUES_FILE).reshape(-1)
    B = read_matrix(folder / FACE_INTEGRALS_FILE)
    hyper = None
    if (folder / HYPER_INDEX_FILE).exists():
        hyper = read_matrix(folder / HYPER_INDEX_FILE).reshape(-1).astype(int)
    if V.shape[1] != manifest["N"] or B.shape != (manifest["N_y"], manifest["N"]):
        raise_error(AssemblyError, f"Basis files in {folder} disagree with the manifest.")
    return ReducedModel(
        basis=PodBasis(V=V, singular_values=sigma, n_modes=V.shape[1]),
        face_integrals=FaceIntegralMatrix(B),
        hyper_nodes=hyper,
        manifest=manifest,
    )
