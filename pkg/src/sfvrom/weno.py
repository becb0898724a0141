"""Third-order WENO reconstruction in the physical and stochastic dimensions."""

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from itertools import product

import numba
import numpy as np

from sfvrom.config import ConfigurationError, log, raise_error
from sfvrom.grid import QuadratureSet, TensorGrid

DEFAULT_EPSILON = 1e-6
MIN_STOCHASTIC_STENCIL = 3
INSIDE_TOL = 1e-12


class BoundaryKind(str, Enum):
    """Physical ghost-cell policy."""

    periodic = "periodic"
    """Wrap-around copy."""
    outflow = "outflow"
    """Zero-gradient copy of the boundary cell."""


@dataclass(frozen=True)
class WenoParams:
    """``linear_weights`` are ``(d_0, d_1)`` at the right face ``x_{i+1/2}``;
    the left face uses the mirrored pair ``(d_1, d_0)``."""

    epsilon: float = DEFAULT_EPSILON
    linear_weights: tuple = (2.0 / 3.0, 1.0 / 3.0)

    def __post_init__(self):
        d0, d1 = self.linear_weights
        if not self.epsilon > 0:
            raise_error(ConfigurationError, f"epsilon must be positive, got {self.epsilon}.")
        if not (d0 > 0 and d1 > 0 and abs(d0 + d1 - 1.0) < 1e-14):
            raise_error(
                ConfigurationError,
                f"Linear weights must be positive and sum to one, got {self.linear_weights}.",
            )

    @property
    def d_right(self):
        return self.linear_weights[0]

    @property
    def d_left(self):
        return self.linear_weights[1]


@numba.vectorize(
    ["float64(float64, float64, float64, float64, float64, float64)"]
)
def _weno3_face(u_minus, u_center, u_plus, d0, side, epsilon):
    # side = +1 for x_{i+1/2}, -1 for x_{i-1/2}
    forward = u_plus - u_center
    backward = u_center - u_minus
    alpha0 = d0 / (epsilon + forward * forward) ** 2
    alpha1 = (1.0 - d0) / (epsilon + backward * backward) ** 2
    w0 = alpha0 / (alpha0 + alpha1)
    w1 = alpha1 / (alpha0 + alpha1)
    return u_center + side * 0.5 * (w0 * forward + w1 * backward)


def weno3_pair(u_minus, u_center, u_plus, params: WenoParams = WenoParams()):
    """Values of the center cell's reconstruction at its left and right faces.

    Smoothness indicators are undivided differences, so the (uniform) cell
    width drops out.
    """
    left = _weno3_face(u_minus, u_center, u_plus, params.d_left, -1.0, params.epsilon)
    right = _weno3_face(u_minus, u_center, u_plus, params.d_right, 1.0, params.epsilon)
    return left, right


@dataclass(frozen=True)
class InterfaceStates:
    """``left[k]`` / ``right[k]`` are the states on either side of interface
    ``x_{k-1/2}``, ``k = 0..N_x``; shape ``(N_x + 1, N_y, n)``."""

    left: np.ndarray
    right: np.ndarray


def reconstruct_physical(
    U, bc: BoundaryKind, params: WenoParams = WenoParams()
) -> InterfaceStates:
    """WENO3 along ``x`` for every stochastic cell and component of ``U`` (``(N_x, ...)``)."""
    U = np.asarray(U, dtype=float)
    mode = "wrap" if BoundaryKind(bc) is BoundaryKind.periodic else "edge"
    padded = np.pad(U, [(2, 2)] + [(0, 0)] * (U.ndim - 1), mode=mode)
    # faces of cells -1..N_x
    left, right = weno3_pair(padded[:-2], padded[1:-1], padded[2:], params)
    return InterfaceStates(left=right[:-1], right=left[1:])


@lru_cache(maxsize=None)
def _warn_fallback(counts):
    """Warns once per stochastic grid shape."""
    log.warning(
        f"Stochastic grid {counts} has dimensions with fewer than "
        f"{MIN_STOCHASTIC_STENCIL} cells; using piecewise-constant reconstruction there."
    )


@dataclass(frozen=True)
class StochasticPoly:
    """Multilinear reconstruction inside stochastic cells.

    ``coefficients[c, b]`` multiplies ``prod_d xi_d**b_d`` where ``b`` is the
    binary multi-index of ``b`` (first dimension most significant) and ``xi``
    the cell-local coordinate in ``[-1, 1]^q``. Row ``c`` belongs to stochastic
    cell ``cells[c]``.
    """

    coefficients: np.ndarray
    cells: np.ndarray
    centers: np.ndarray
    half_widths: np.ndarray

    @property
    def q(self):
        return self.centers.shape[1]


def stencil_neighbourhood(grid: TensorGrid, cells):
    """Linear indices of the clipped ``3^q`` neighbourhood of each cell, shape ``(len(cells), 3, ..., 3)``."""
    cells = np.asarray(cells, dtype=int)
    if grid.q == 0:
        return cells.reshape(-1)
    index = grid.multi_index(cells)
    offsets = np.array(list(product((-1, 0, 1), repeat=grid.q)))
    counts = np.array(grid.counts)
    shifted = np.clip(index[:, None, :] + offsets[None, :, :], 0, counts - 1)
    return grid.linear_index(shifted).reshape((len(cells),) + (3,) * grid.q)


def _sweep_neighbourhoods(block, q, counts, params):
    """Collapse the ``3^q`` stencil axes (1..q) of ``block`` dimension by dimension."""
    coefficient_axes = 0
    for dim in range(q):
        # the active stencil axis is always the first remaining one
        axis = 1 + coefficient_axes
        lower = np.take(block, 0, axis=axis)
        center = np.take(block, 1, axis=axis)
        upper = np.take(block, 2, axis=axis)
        if counts[dim] < MIN_STOCHASTIC_STENCIL:
            mean, slope = center, np.zeros_like(center)
        else:
            left, right = weno3_pair(lower, center, upper, params)
            mean, slope = 0.5 * (right + left), 0.5 * (right - left)
        block = np.stack([mean, slope], axis=1 + coefficient_axes)
        coefficient_axes += 1
    return block


def reconstruct_stochastic(
    values, grid: TensorGrid, params: WenoParams = WenoParams(), cells=None, source_cells=None
) -> StochasticPoly:
    """Dimension-by-dimension WENO3 polynomials from per-cell values.

    ``values`` has shape ``(len(source_cells), ...)`` with rows ordered as
    ``source_cells`` (default: all ``N_y`` cells). Polynomials are built for
    ``cells`` (default: all) and only read values inside their stencils.
    Ghost cells in ``D_y`` are zero-gradient copies.
    """
    values = np.asarray(values, dtype=float)
    cells = np.arange(grid.ny) if cells is None else np.asarray(cells, dtype=int)
    neighbourhood = stencil_neighbourhood(grid, cells)
    if source_cells is not None:
        source_cells = np.asarray(source_cells, dtype=int)
        position = np.minimum(
            np.searchsorted(source_cells, neighbourhood), len(source_cells) - 1
        )
        if np.any(source_cells[position] != neighbourhood):
            raise_error(IndexError, "Stochastic stencil reaches outside the supplied cells.")
        neighbourhood = position
    if any(count < MIN_STOCHASTIC_STENCIL for count in grid.counts):
        _warn_fallback(tuple(grid.counts))
    block = _sweep_neighbourhoods(values[neighbourhood], grid.q, grid.counts, params)
    trailing = values.shape[1:]
    coefficients = block.reshape((len(cells), 2**grid.q) + trailing)
    return StochasticPoly(
        coefficients=coefficients,
        cells=cells,
        centers=grid.cell_centers[cells],
        half_widths=0.5 * grid.cell_widths,
    )


def _monomials(xi):
    """Multilinear monomials of ``xi`` (``(L, q)``), shape ``(L, 2^q)``."""
    columns = np.ones((len(xi), 1))
    for dim in range(xi.shape[1]):
        columns = np.stack([columns, columns * xi[:, dim : dim + 1]], axis=-1).reshape(
            len(xi), -1
        )
    return columns


def evaluate_poly(poly: StochasticPoly, qs: QuadratureSet, node_index=None):
    """Evaluate ``poly`` at quadrature nodes (all, or ``node_index``), shape ``(L, ...)``."""
    node_index = np.arange(qs.size) if node_index is None else np.asarray(node_index)
    owners = qs.owner_cell[node_index]
    rows = np.searchsorted(poly.cells, owners)
    rows = np.minimum(rows, len(poly.cells) - 1)
    if np.any(poly.cells[rows] != owners):
        raise_error(IndexError, "Quadrature node lies in a cell without a polynomial.")
    if poly.q:
        xi = (qs.nodes[node_index] - poly.centers[rows]) / poly.half_widths
    else:
        xi = np.zeros((len(node_index), 0))
    if np.any(np.abs(xi) > 1.0 + INSIDE_TOL):
        raise_error(IndexError, "Quadrature node lies outside its polynomial's cell.")
    basis = _monomials(xi)
    coefficients = poly.coefficients[rows]
    shape = (len(rows),) + (1,) * (coefficients.ndim - 2)
    # fixed accumulation order, so restricted and full evaluations agree bitwise
    result = basis[:, 0].reshape(shape) * coefficients[:, 0]
    for b in range(1, basis.shape[1]):
        result = result + basis[:, b].reshape(shape) * coefficients[:, b]
    return result
