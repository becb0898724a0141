"""Physical/stochastic meshes, tensor Gauss quadrature and stochastic cell measures."""

from dataclasses import dataclass, replace
from enum import Enum, auto
from itertools import product
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from sfvrom.config import ConfigurationError, log, raise_error

MIN_PHYSICAL_CELLS = 3
"""Smallest physical mesh supported by the three-cell WENO stencil."""
NORMALIZATION_TOL = 1e-12
GAUSS_POINTS_PER_DIM = 2


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.lo >= self.hi:
            raise_error(
                ConfigurationError,
                f"Degenerate interval [{self.lo}, {self.hi}]: need lo < hi.",
            )

    @property
    def length(self):
        return self.hi - self.lo


@dataclass(frozen=True)
class TensorGrid:
    """Uniform Cartesian partition of ``D_x`` times ``D_y``.

    Stochastic cells are linearized row-major: the last stochastic dimension
    runs fastest, so ``j = np.ravel_multi_index(index, counts)``.
    """

    physical: Interval
    nx: int
    stochastic: Tuple[Tuple[Interval, int], ...] = ()

    @property
    def q(self):
        return len(self.stochastic)

    @property
    def counts(self):
        return tuple(count for _, count in self.stochastic)

    @property
    def ny(self):
        return int(np.prod(self.counts, dtype=int)) if self.q else 1

    @property
    def dx(self):
        return np.full(self.nx, self.physical.length / self.nx)

    @property
    def x_faces(self):
        return np.linspace(self.physical.lo, self.physical.hi, self.nx + 1)

    @property
    def x_centers(self):
        faces = self.x_faces
        return 0.5 * (faces[:-1] + faces[1:])

    def multi_index(self, j):
        """Per-dimension indices of stochastic cell(s) ``j``, shape ``(..., q)``."""
        if self.q == 0:
            return np.zeros(np.shape(j) + (0,), dtype=int)
        return np.stack(np.unravel_index(j, self.counts), axis=-1)

    def linear_index(self, index):
        if self.q == 0:
            return np.zeros(np.shape(index)[:-1], dtype=int)
        index = np.asarray(index)
        return np.ravel_multi_index(tuple(np.moveaxis(index, -1, 0)), self.counts)

    @property
    def cell_lo(self):
        """Lower corners of the stochastic cells, shape ``(ny, q)``."""
        index = self.multi_index(np.arange(self.ny))
        lo = np.array([interval.lo for interval, _ in self.stochastic])
        return lo + index * self.cell_widths

    @property
    def cell_widths(self):
        return np.array(
            [interval.length / count for interval, count in self.stochastic]
        ).reshape(self.q)

    @property
    def cell_centers(self):
        return self.cell_lo + 0.5 * self.cell_widths

    @property
    def stochastic_volume(self):
        return float(np.prod([interval.length for interval, _ in self.stochastic]))


def build_tensor_grid(
    physical: Interval, nx: int, stochastic_dims: Sequence[Tuple[Interval, int]] = ()
) -> TensorGrid:
    """Uniform tensor grid; an empty ``stochastic_dims`` gives the deterministic (q=0) grid."""
    if int(nx) != nx or nx < MIN_PHYSICAL_CELLS:
        raise_error(
            ConfigurationError,
            f"Need at least {MIN_PHYSICAL_CELLS} physical cells, got N_x={nx}.",
        )
    dims = []
    for interval, count in stochastic_dims:
        if int(count) != count or count < 1:
            raise_error(
                ConfigurationError,
                f"Stochastic cell count must be a positive integer, got {count}.",
            )
        if not isinstance(interval, Interval):
            interval = Interval(*interval)
        dims.append((interval, int(count)))
    return TensorGrid(physical=physical, nx=int(nx), stochastic=tuple(dims))


class DensityKind(Enum):
    uniform = auto()
    callable = auto()


@dataclass(frozen=True)
class DensityFn:
    """Probability density ``mu(y)`` on ``D_y``.

    ``func`` receives nodes of shape ``(L, q)`` and returns ``(L,)`` values.
    """

    kind: DensityKind = DensityKind.uniform
    func: Optional[Callable] = None

    @classmethod
    def uniform(cls):
        return cls(DensityKind.uniform)

    @classmethod
    def from_callable(cls, func):
        return cls(DensityKind.callable, func)

    def __call__(self, nodes, grid: TensorGrid):
        nodes = np.asarray(nodes, dtype=float)
        if self.kind is DensityKind.uniform:
            values = np.full(len(nodes), 1.0 / grid.stochastic_volume)
        else:
            values = np.asarray(self.func(nodes), dtype=float).reshape(len(nodes))
        if np.any(~np.isfinite(values)) or np.any(values < 0):
            raise_error(
                ConfigurationError, "Density must be finite and non-negative on D_y."
            )
        return values


@dataclass(frozen=True)
class QuadratureSet:
    """Global list of stochastic quadrature nodes.

    Node ``l`` belongs to cell ``owner_cell[l] = l // nq``; geometric weights and
    density values are kept apart so a density swap does not rebuild nodes.
    """

    nodes: np.ndarray
    weights: np.ndarray
    pdf_values: np.ndarray
    owner_cell: np.ndarray
    nq: int

    @property
    def size(self):
        return len(self.weights)

    @property
    def ny(self):
        return self.size // self.nq

    @property
    def q(self):
        return self.nodes.shape[1]

    @property
    def mass(self):
        """Density-weighted weights ``mu(y_l) w_l``."""
        return self.pdf_values * self.weights

    def cell_slice(self, j):
        return slice(j * self.nq, (j + 1) * self.nq)

    def with_density(self, density: DensityFn, grid: TensorGrid):
        """Same nodes and weights, ``mu`` re-evaluated for ``density``."""
        return replace(self, pdf_values=density(self.nodes, grid))


def reference_gauss_nodes(q: int):
    """Tensor-product two-point Gauss-Legendre rule on ``[-1, 1]^q``."""
    points, weights = np.polynomial.legendre.leggauss(GAUSS_POINTS_PER_DIM)
    if q == 0:
        return np.zeros((1, 0)), np.ones(1)
    nodes = np.array(list(product(points, repeat=q)))
    tensor_weights = np.prod(np.array(list(product(weights, repeat=q))), axis=1)
    return nodes, tensor_weights


def tensor_gauss_nodes(grid: TensorGrid, density: DensityFn = None) -> QuadratureSet:
    density = DensityFn.uniform() if density is None else density
    reference, ref_weights = reference_gauss_nodes(grid.q)
    nq = len(ref_weights)
    half = 0.5 * grid.cell_widths
    centers = grid.cell_centers
    nodes = (centers[:, None, :] + half * reference[None, :, :]).reshape(
        grid.ny * nq, grid.q
    )
    weights = np.tile(ref_weights * np.prod(half), grid.ny)
    return QuadratureSet(
        nodes=nodes,
        weights=weights,
        pdf_values=density(nodes, grid),
        owner_cell=np.repeat(np.arange(grid.ny), nq),
        nq=nq,
    )


def cell_integrals(qs: QuadratureSet, values):
    """Per-cell sums of ``values * mu * w``; ``values`` has shape ``(L, ...)``."""
    values = np.asarray(values, dtype=float)
    weighted = values * qs.mass.reshape((-1,) + (1,) * (values.ndim - 1))
    return weighted.reshape((qs.ny, qs.nq) + values.shape[1:]).sum(axis=1)


def quadrature_integrate(qs: QuadratureSet, f, j: int) -> float:
    """Quadrature of ``f * mu`` over stochastic cell ``j``; ``f`` is node-indexed."""
    cell = qs.cell_slice(j)
    return float(np.sum(np.asarray(f, dtype=float)[cell] * qs.mass[cell]))


@dataclass(frozen=True)
class CellMeasures:
    stochastic: np.ndarray
    physical: np.ndarray


def cell_measures(grid: TensorGrid, density: DensityFn = None, qs=None) -> CellMeasures:
    if qs is None:
        qs = tensor_gauss_nodes(grid, density)
    stochastic = cell_integrals(qs, np.ones(qs.size))
    if np.any(stochastic <= 0):
        bad = int(np.argmax(stochastic <= 0))
        raise_error(
            ConfigurationError,
            f"Stochastic cell {bad} has non-positive probability mass {stochastic[bad]}.",
        )
    total = stochastic.sum()
    if abs(total - 1.0) > NORMALIZATION_TOL:
        log.warning(f"Stochastic cell measures sum to {total:.16g}, not 1.")
    return CellMeasures(stochastic=stochastic, physical=grid.dx)
