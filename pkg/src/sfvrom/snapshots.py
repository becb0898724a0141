"""Flux snapshot collection, intrusive (from FOM states) and non-intrusive (one
deterministic run per quadrature node)."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence

import numpy as np

from sfvrom.config import AssemblyError, IntegrationError, PositivityError, log, raise_error
from sfvrom.grid import build_tensor_grid
from sfvrom.problems import Problem
from sfvrom.rom import COMPONENT, FRAME, INTERFACE, MINUS, PLUS, SnapshotMatrix
from sfvrom.solver import (
    Method,
    SFVDiscretization,
    TimeIntegratorConfig,
    flux_trace,
    interface_fluxes,
    project_initial_condition,
    run_fom,
)
from sfvrom.stats import read_matrix, write_matrix
from sfvrom.utils import (
    SNAPSHOT_COLUMNS_FILE,
    SNAPSHOT_FILE,
    SNAPSHOT_MANIFEST,
    array_hash,
    create_folder,
    dump_json,
    json_load,
)
from sfvrom.weno import BoundaryKind, WenoParams


@dataclass
class DeterministicRun:
    y: np.ndarray
    times: np.ndarray
    frames: List[np.ndarray]
    """Cell averages per frame, shape ``(N_x, n)``."""
    fluxes: np.ndarray
    """Lax-Friedrichs interface fluxes, shape ``(m, N_x + 1, n)``."""


def snapshot_columns(frames, n_components, nx, bc: BoundaryKind, dedupe=True):
    """Column labels ``(frame, component, side, interface)`` in snapshot order.

    All right faces come first, then the left faces; each block is ordered by
    frame, then component, then interface. With ``dedupe`` a left face is kept
    only where it is not the right face of another cell.
    """
    plus = [(f, p, PLUS, k) for f in range(frames) for p in range(n_components) for k in range(1, nx + 1)]
    if not dedupe:
        left = range(nx)
    elif BoundaryKind(bc) is BoundaryKind.periodic:
        left = ()
    else:
        left = (0,)
    minus = [(f, p, MINUS, k) for f in range(frames) for p in range(n_components) for k in left]
    return np.array(plus + minus, dtype=int).reshape(-1, 4)


def assemble_snapshots(traces: Sequence[np.ndarray], frame_times, bc, dedupe=True) -> SnapshotMatrix:
    """Snapshot matrix from per-frame traces of shape ``(L, N_x + 1, n)``."""
    frame_times = np.asarray(frame_times, dtype=float)
    if len(traces) != len(frame_times):
        raise_error(
            AssemblyError,
            f"Got {len(traces)} flux traces for {len(frame_times)} frame times.",
        )
    shapes = {np.shape(trace) for trace in traces}
    if len(shapes) != 1:
        raise_error(AssemblyError, f"Flux traces have different shapes: {sorted(shapes)}.")
    stack = np.stack(traces)
    _, _, interfaces, n_components = stack.shape
    columns = snapshot_columns(len(traces), n_components, interfaces - 1, bc, dedupe)
    data = stack[columns[:, FRAME], :, columns[:, INTERFACE], columns[:, COMPONENT]].T
    log.info(f"Assembled snapshot matrix of shape {data.shape} from {len(traces)} frames")
    return SnapshotMatrix(data=data, columns=columns, frame_times=frame_times)


class FrameSpool:
    """Writes one trace per frame to disk and assembles them afterwards."""

    def __init__(self, folder, bc, dedupe=True):
        self.folder = create_folder(folder)
        self.bc = bc
        self.dedupe = dedupe
        self.times = []
        self.shape = None

    def _path(self, index):
        return self.folder / f"frame_{index:05d}.sfvm"

    def append(self, time, trace):
        trace = np.asarray(trace, dtype=float)
        if self.shape is None:
            self.shape = trace.shape
        elif trace.shape != self.shape:
            raise_error(AssemblyError, f"Frame trace {trace.shape} differs from {self.shape}.")
        write_matrix(self._path(len(self.times)), trace.reshape(trace.shape[0], -1))
        self.times.append(float(time))

    def assemble(self) -> SnapshotMatrix:
        traces = [
            read_matrix(self._path(index)).reshape(self.shape)
            for index in range(len(self.times))
        ]
        return assemble_snapshots(traces, self.times, self.bc, self.dedupe)

    def clear(self):
        for index in range(len(self.times)):
            self._path(index).unlink(missing_ok=True)


def _collect(traces, frame_times, bc, dedupe, spool_folder):
    if spool_folder is None:
        return assemble_snapshots(list(traces), frame_times, bc, dedupe)
    spool = FrameSpool(spool_folder, bc, dedupe)
    for time, trace in zip(frame_times, traces):
        spool.append(time, trace)
    matrix = spool.assemble()
    spool.clear()
    return matrix


def collect_intrusive(
    disc: SFVDiscretization, frames, frame_times, dedupe=True, spool_folder=None
) -> SnapshotMatrix:
    """Flux-reconstruction traces of stored FOM states, one per frame."""
    if len(frames) != len(frame_times):
        raise_error(
            AssemblyError, f"Got {len(frames)} stored frames for {len(frame_times)} frame times."
        )
    traces = (flux_trace(frame, disc).values for frame in frames)
    return _collect(traces, frame_times, disc.bc, dedupe, spool_folder)


def run_deterministic_1d(
    problem: Problem, y, nx, cfg: TimeIntegratorConfig, weno: WenoParams = WenoParams()
) -> DeterministicRun:
    """Standard WENO3 finite-volume run of ``problem`` at the fixed parameter ``y``."""
    y = np.asarray(y, dtype=float)
    disc = SFVDiscretization(build_tensor_grid(problem.physical, nx), problem.law, problem.bc, weno)
    try:
        initial = project_initial_condition(problem.at(y), disc)
        result = run_fom(disc, initial, cfg, Method.det_1d)
    except PositivityError as error:
        location = dict(error.location, y=y.tolist())
        raise PositivityError(f"Deterministic run at y={y.tolist()}: {error}", location) from error
    except IntegrationError as error:
        raise IntegrationError(
            f"Deterministic run at y={y.tolist()}: {error}", error.last_state, error.time
        ) from error
    trajectory = result.trajectory
    fluxes = np.stack([interface_fluxes(frame, disc)[0] for frame in trajectory.frames])
    return DeterministicRun(
        y=y,
        times=trajectory.times,
        frames=[frame[:, 0] for frame in trajectory.frames],
        fluxes=fluxes,
    )


def collect_nonintrusive(
    problem: Problem,
    disc: SFVDiscretization,
    cfg: TimeIntegratorConfig,
    workers=1,
    dedupe=True,
    spool_folder=None,
) -> SnapshotMatrix:
    """One deterministic run per quadrature node; row ``l`` holds the fluxes of run ``l``."""
    nodes = disc.quadrature.nodes
    log.info(f"Running {len(nodes)} deterministic simulations with {workers} worker(s)")
    run = lambda y: run_deterministic_1d(problem, y, disc.grid.nx, cfg, disc.weno)
    with ThreadPoolExecutor(max_workers=max(1, int(workers))) as pool:
        runs = list(pool.map(run, nodes))
    times = runs[0].times
    if any(not np.array_equal(r.times, times) for r in runs):
        raise_error(AssemblyError, "Deterministic runs produced different frame schedules.")
    fluxes = np.stack([r.fluxes for r in runs], axis=1)
    return _collect(iter(fluxes), times, disc.bc, dedupe, spool_folder)


def save_snapshots(folder, snap: SnapshotMatrix, disc: SFVDiscretization, mode):
    folder = create_folder(folder)
    write_matrix(folder / SNAPSHOT_FILE, snap.data)
    write_matrix(folder / SNAPSHOT_COLUMNS_FILE, snap.columns.astype(float))
    manifest = {
        "mode": mode,
        "shape": list(snap.shape),
        "frame_times": snap.frame_times,
        "nodes": disc.quadrature.nodes,
        "N_x": disc.grid.nx,
        "counts": list(disc.grid.counts),
        "mesh_hash": array_hash(disc.grid.x_faces, disc.quadrature.nodes),
        "hash": array_hash(snap.data),
    }
    dump_json(folder / SNAPSHOT_MANIFEST, manifest)
    log.info(f"Saved {mode} snapshots {snap.shape} to {folder}")
    return manifest


def load_snapshots(folder):
    folder = Path(folder)
    manifest = json_load(folder / SNAPSHOT_MANIFEST)
    data = read_matrix(folder / SNAPSHOT_FILE)
    columns = read_matrix(folder / SNAPSHOT_COLUMNS_FILE).astype(int)
    snap = SnapshotMatrix(data=data, columns=columns, frame_times=np.array(manifest["frame_times"]))
    if array_hash(snap.data) != manifest["hash"]:
        raise_error(AssemblyError, f"Snapshot data in {folder} does not match its manifest hash.")
    return snap, manifest
