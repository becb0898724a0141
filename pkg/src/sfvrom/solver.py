"""Semi-discrete SFV system, its two right-hand sides and the adaptive time integrator."""

import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, List, Optional

import numpy as np

from sfvrom.config import (
    ConfigurationError,
    IntegrationError,
    PositivityError,
    log,
    raise_error,
)
from sfvrom.grid import (
    DensityFn,
    TensorGrid,
    cell_integrals,
    cell_measures,
    reference_gauss_nodes,
    tensor_gauss_nodes,
)
from sfvrom.models.physics import ConservationLaw, lax_friedrichs
from sfvrom.weno import (
    BoundaryKind,
    WenoParams,
    evaluate_poly,
    reconstruct_physical,
    reconstruct_stochastic,
)

RTOL = 1e-6
ATOL = 1e-8
FRAMES = 50
CFL = 0.5
UNDERFLOW = 1e-14


class Method(str, Enum):
    """Solution methods selectable from the command line."""

    fom_state = "fom-state"
    """Full order model, stochastic reconstruction of the interface states."""
    fom_flux = "fom-flux"
    """Full order model, stochastic reconstruction of the numerical flux."""
    rom = "rom"
    """POD interpolation of the flux trace, all quadrature nodes."""
    rom_hr = "rom-hr"
    """POD interpolation with Q-DEIM node selection."""
    det_1d = "det-1d"
    """Deterministic finite-volume run at a single parameter point."""


@dataclass
class FluxCounter:
    """Counts numerical-flux evaluations, one per ``(u_L, u_R)`` pair."""

    evaluations: int = 0
    calls: int = 0

    def record(self, pairs):
        self.evaluations += int(pairs)
        self.calls += 1

    def reset(self):
        self.evaluations = 0
        self.calls = 0


@dataclass(frozen=True)
class StateField:
    """PDF-weighted cell averages ``U[i, j, p]`` at time ``t``."""

    values: np.ndarray
    t: float = 0.0


@dataclass(frozen=True)
class MassMatrix:
    factors: np.ndarray
    """Diagonal entries ``|K_x^i| |K_y^j|``, shape ``(N_x, N_y)``."""

    @classmethod
    def build(cls, physical, stochastic):
        factors = np.outer(physical, stochastic)
        if np.any(factors <= 0):
            raise_error(ConfigurationError, "Mass matrix must be strictly positive.")
        return cls(factors)

    def solve(self, rhs):
        return rhs / self.factors[..., None]


@dataclass(frozen=True)
class FluxTrace:
    """Reconstructed flux at every global quadrature node of every interface.

    ``values[l, k, p]`` is component ``p`` at node ``l`` on interface ``x_{k-1/2}``;
    ``plus`` and ``minus`` are the ``(N_q N_y, N_x)`` views of the right and left
    faces of each physical cell.
    """

    values: np.ndarray

    @property
    def plus(self):
        return self.values[:, 1:]

    @property
    def minus(self):
        return self.values[:, :-1]


class SFVDiscretization:
    """Everything the right-hand sides need: mesh, quadrature, law and boundary policy."""

    def __init__(
        self,
        grid: TensorGrid,
        law: ConservationLaw,
        bc: BoundaryKind = BoundaryKind.periodic,
        weno: WenoParams = WenoParams(),
        density: DensityFn = None,
    ):
        self.grid = grid
        self.law = law
        self.bc = BoundaryKind(bc)
        self.weno = weno
        self.density = DensityFn.uniform() if density is None else density
        self.quadrature = tensor_gauss_nodes(grid, self.density)
        self.measures = cell_measures(grid, self.density, self.quadrature)
        self.mass = MassMatrix.build(self.measures.physical, self.measures.stochastic)
        self.counter = FluxCounter()

    @property
    def shape(self):
        return (self.grid.nx, self.grid.ny, self.law.n_components)

    def check_states(self, states, labels):
        """Raise :class:`PositivityError` at the first inadmissible state.

        ``labels`` maps an index tuple of ``states`` to a location dict.
        """
        finite = np.isfinite(states).all(axis=-1)
        checks = [("finite", ~finite)] + self.law.violations(states)
        for quantity, bad in checks:
            if np.any(bad):
                index = np.unravel_index(np.argmax(bad), bad.shape)
                location = dict(labels(tuple(int(i) for i in index)), quantity=quantity)
                raise_error(
                    PositivityError, f"Inadmissible {quantity} at {location}.", location=location
                )

    def assemble(self, fbar):
        """``-M^{-1} (F+ - F-)`` from cell flux integrals ``fbar`` of shape ``(N_y, N_x + 1, n)``."""
        fbar = np.swapaxes(fbar, 0, 1)
        return -self.mass.solve(fbar[1:] - fbar[:-1])


def project_initial_condition(u0: Callable, disc: SFVDiscretization) -> StateField:
    """Cell averages of ``u0(x, y)`` with two-point Gauss rules in ``x`` and ``y``.

    ``u0`` receives ``x`` of shape ``(P,)`` and ``y`` of shape ``(P, q)`` and
    returns ``(P, n)`` (or ``(P,)`` for scalar laws).
    """
    grid, qs = disc.grid, disc.quadrature
    reference, ref_weights = reference_gauss_nodes(1)
    half = 0.5 * grid.dx
    x = (grid.x_centers[:, None] + half[:, None] * reference[:, 0]).reshape(-1)
    x_weights = (half[:, None] * ref_weights).reshape(grid.nx, 2)
    points = x.size * qs.size
    values = np.asarray(
        u0(np.repeat(x, qs.size), np.tile(qs.nodes, (x.size, 1))), dtype=float
    ).reshape(grid.nx, 2, qs.size, -1)
    if values.shape[-1] != disc.law.n_components:
        raise_error(
            ConfigurationError,
            f"Initial condition returned {values.shape[-1]} components, "
            f"expected {disc.law.n_components}.",
        )
    log.info(f"Projecting initial condition on {points} space-parameter points.")
    x_integrals = np.einsum("ia,ialp->lip", x_weights, values)
    integrals = cell_integrals(qs, x_integrals)
    averages = np.swapaxes(integrals, 0, 1) / disc.mass.factors[..., None]
    disc.check_states(
        averages, lambda index: {"cell": index[0], "stochastic_cell": index[1]}
    )
    return StateField(averages, 0.0)


def interface_fluxes(U, disc: SFVDiscretization, columns=None):
    """Lax-Friedrichs flux at every interface of the stochastic cells ``columns``.

    Returns shape ``(len(columns), N_x + 1, n)``; ``columns`` defaults to all cells.
    """
    U = np.asarray(U, dtype=float)
    columns = np.arange(disc.grid.ny) if columns is None else np.asarray(columns)
    states = reconstruct_physical(U[:, columns], disc.bc, disc.weno)
    labels = lambda index: {
        "interface": index[0],
        "stochastic_cell": int(columns[index[1]]),
    }
    disc.check_states(states.left, labels)
    disc.check_states(states.right, labels)
    fhat = lax_friedrichs(states.left, states.right, disc.law)
    disc.counter.record(fhat.shape[0] * fhat.shape[1])
    return np.swapaxes(fhat, 0, 1)


def flux_trace(U, disc: SFVDiscretization) -> FluxTrace:
    """Stochastic WENO of the interface fluxes, evaluated at every quadrature node."""
    poly = reconstruct_stochastic(interface_fluxes(U, disc), disc.grid, disc.weno)
    return FluxTrace(evaluate_poly(poly, disc.quadrature))


def rhs_flux_reconstruction(U, disc: SFVDiscretization, return_trace=False):
    """Numerical flux once per (interface, stochastic cell), then WENO in ``y``."""
    trace = flux_trace(U, disc)
    rhs = disc.assemble(cell_integrals(disc.quadrature, trace.values))
    return (rhs, trace) if return_trace else rhs


def rhs_state_reconstruction(U, disc: SFVDiscretization):
    """WENO of the states in ``x`` then ``y``; numerical flux at every quadrature node."""
    qs = disc.quadrature
    states = reconstruct_physical(U, disc.bc, disc.weno)
    nodal = []
    for side in (states.left, states.right):
        poly = reconstruct_stochastic(np.swapaxes(side, 0, 1), disc.grid, disc.weno)
        nodal.append(evaluate_poly(poly, qs))
    labels = lambda index: {
        "node": index[0],
        "stochastic_cell": int(qs.owner_cell[index[0]]),
        "interface": index[1],
    }
    for side in nodal:
        disc.check_states(side, labels)
    fluxes = lax_friedrichs(nodal[0], nodal[1], disc.law)
    disc.counter.record(fluxes.shape[0] * fluxes.shape[1])
    return disc.assemble(cell_integrals(qs, fluxes))


@dataclass
class TimeIntegratorConfig:
    rtol: float = RTOL
    atol: float = ATOL
    t_final: float = 0.2
    initial_dt: Optional[float] = None
    max_steps: int = 200000
    frames: int = FRAMES
    safety: float = 0.9
    min_factor: float = 0.2
    max_factor: float = 10.0
    beta: float = 0.04
    """PI-control exponent on the previous error (Hairer/Wanner DOPRI5 default)."""

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise_error(ConfigurationError, "Integrator tolerances must be positive.")
        if not self.t_final > 0:
            raise_error(ConfigurationError, "t_final must be positive.")
        if self.frames < 1:
            raise_error(ConfigurationError, "At least one output frame is required.")
        if self.initial_dt is not None and not self.initial_dt > 0:
            raise_error(ConfigurationError, "initial_dt must be positive.")

    @property
    def frame_times(self):
        if self.frames == 1:
            return np.array([self.t_final])
        return np.linspace(0.0, self.t_final, self.frames)


@dataclass
class IntegrationStats:
    accepted: int = 0
    rejected: int = 0
    rhs_evaluations: int = 0
    error_estimates: List[float] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def max_accepted_error(self):
        return max(self.error_estimates, default=0.0)


@dataclass
class Trajectory:
    times: np.ndarray
    frames: List[np.ndarray]
    final: StateField
    stats: IntegrationStats


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)


def _combine(coefficients, stages):
    total = np.zeros_like(stages[0])
    for coefficient, stage in zip(coefficients, stages):
        if coefficient != 0.0:
            total += coefficient * stage
    return total


def _error_norm(error, y, y_new, cfg):
    scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.max(np.abs(error) / scale))


def _initial_step(y0, f0, cfg):
    scale = cfg.atol + cfg.rtol * np.abs(y0)
    d0 = float(np.max(np.abs(y0) / scale))
    d1 = float(np.max(np.abs(f0) / scale))
    h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    return min(h, cfg.t_final)


def integrate(U0, rhs: Callable, cfg: TimeIntegratorConfig) -> Trajectory:
    """Adaptive Dormand-Prince 5(4) with PI step control.

    Steps are shortened to land exactly on the ``cfg.frames`` equally spaced
    output times, so frames are integrator states (no interpolation).
    ``rhs(t, y)`` returns ``dy/dt``.
    """
    start = time.perf_counter()
    stats = IntegrationStats()
    y = np.array(U0.values if isinstance(U0, StateField) else U0, dtype=float)
    t = 0.0
    targets = cfg.frame_times
    frames, times = [], []
    if targets[0] == 0.0:
        frames.append(y.copy())
        times.append(0.0)
        targets = targets[1:]

    k1 = rhs(t, y)
    stats.rhs_evaluations += 1
    h = cfg.initial_dt if cfg.initial_dt is not None else _initial_step(y, k1, cfg)
    expo = 0.2 - 0.75 * cfg.beta
    err_old = 1e-4
    rejected_last = False
    h_min = UNDERFLOW * cfg.t_final

    for target in targets:
        while t < target:
            if stats.accepted + stats.rejected >= cfg.max_steps:
                raise_error(
                    IntegrationError,
                    f"Exceeded {cfg.max_steps} steps at t={t:.6g}.",
                    last_state=StateField(y.copy(), t),
                    time=t,
                )
            h_try = min(h, target - t)
            clipped = h_try < h
            stages = [k1]
            for s in range(1, 7):
                stage_y = y + h_try * _combine(_A[s], stages)
                stages.append(rhs(t + _C[s] * h_try, stage_y))
            stats.rhs_evaluations += 6
            y_new = stage_y
            error = h_try * _combine(_E, stages)
            err = _error_norm(error, y, y_new, cfg)
            fac11 = err**expo if np.isfinite(err) else np.inf
            if err <= 1.0:
                fac = fac11 / err_old**cfg.beta
                fac = min(1 / cfg.min_factor, max(1 / cfg.max_factor, fac / cfg.safety))
                h_new = h_try / fac
                if rejected_last:
                    h_new = min(h_new, h_try)
                err_old = max(err, 1e-4)
                t = target if clipped or h_try == target - t else t + h_try
                y = y_new
                k1 = stages[6]
                stats.accepted += 1
                stats.error_estimates.append(err)
                rejected_last = False
                h = max(h_new, h) if clipped else h_new
            else:
                h = h_try / min(1 / cfg.min_factor, fac11 / cfg.safety)
                stats.rejected += 1
                rejected_last = True
            if h < h_min:
                raise_error(
                    IntegrationError,
                    f"Step size underflow (dt={h:.3g}) at t={t:.6g}.",
                    last_state=StateField(y.copy(), t),
                    time=t,
                )
        frames.append(y.copy())
        times.append(float(target))
        log.info(
            f"Frame {len(frames)}/{cfg.frames} at t={target:.4g} "
            f"({stats.accepted} steps, {stats.rejected} rejected)"
        )
    stats.wall_time = time.perf_counter() - start
    return Trajectory(
        times=np.array(times), frames=frames, final=StateField(y, t), stats=stats
    )


def cfl_time_step(U, disc: SFVDiscretization, cfl=CFL):
    """``cfl * min |K_x| / max wave speed`` over the cell averages."""
    speed = float(np.max(disc.law.wave_speed(np.asarray(U))))
    if speed <= 0:
        return None
    return cfl * float(np.min(disc.grid.dx)) / speed


@dataclass
class FomResult:
    trajectory: Trajectory
    method: Method
    flux_evaluations: int
    rhs_calls: int

    @property
    def final(self):
        return self.trajectory.final


def make_rhs(method: Method, disc: SFVDiscretization, operator=None):
    """``rhs(t, U)`` for ``method``; ROM methods need their reduced ``operator``."""
    method = Method(method)
    if method in (Method.fom_flux, Method.det_1d):
        return lambda t, U: rhs_flux_reconstruction(U, disc)
    if method is Method.fom_state:
        return lambda t, U: rhs_state_reconstruction(U, disc)
    if operator is None:
        raise_error(ConfigurationError, f"Method {method.value} needs a reduced operator.")
    return lambda t, U: operator.rhs(U, disc)


def run_fom(
    disc: SFVDiscretization,
    initial: StateField,
    cfg: TimeIntegratorConfig,
    method: Method = Method.fom_flux,
    operator=None,
) -> FomResult:
    """Integrate ``M dU/dt + (F+ - F-) = 0`` from ``initial`` with ``method``."""
    method = Method(method)
    if cfg.initial_dt is None:
        dt = cfl_time_step(initial.values, disc)
        if dt is not None:
            cfg = replace(cfg, initial_dt=min(dt, cfg.t_final))
    log.info(
        f"Running {method.value}: N_x={disc.grid.nx}, N_y={disc.grid.ny}, "
        f"q={disc.grid.q}, T={cfg.t_final}"
    )
    disc.counter.reset()
    trajectory = integrate(initial, make_rhs(method, disc, operator), cfg)
    log.info(
        f"Finished {method.value} in {trajectory.stats.wall_time:.2f}s, "
        f"{disc.counter.evaluations} flux evaluations"
    )
    return FomResult(
        trajectory=trajectory,
        method=method,
        flux_evaluations=disc.counter.evaluations,
        rhs_calls=disc.counter.calls,
    )
