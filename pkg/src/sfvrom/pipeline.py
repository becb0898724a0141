"""Single runs driven by a :class:`RunConfig`: setup, solve, persist and reload."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from sfvrom.config import ArtifactIOError, ConfigurationError, log, raise_error
from sfvrom.grid import build_tensor_grid
from sfvrom.models.physics import Euler
from sfvrom.problems import Problem, get_problem
from sfvrom.rom import (
    ReducedModel,
    build_face_integrals,
    compute_pod,
    load_basis,
    qdeim_select,
)
from sfvrom.runconfig import RunConfig
from sfvrom.snapshots import load_snapshots
from sfvrom.solver import (
    FomResult,
    Method,
    SFVDiscretization,
    TimeIntegratorConfig,
    project_initial_condition,
    run_fom,
)
from sfvrom.stats import (
    FieldStats,
    field_stats,
    primitive_stats,
    read_matrix,
    relative_l1,
    stats_means,
    write_csv,
    write_matrix,
    write_slice_csv,
    write_summary,
)
from sfvrom.utils import (
    BASIS_MANIFEST,
    CONFIG_FILE,
    FRAME_TIMES_FILE,
    FRAMES_FILE,
    SLICE_FILE,
    STATS_FILE,
    SUMMARY_FILE,
    array_hash,
    create_folder,
    generate_path,
    json_load,
)
from sfvrom.weno import WenoParams


@dataclass
class RunSetup:
    problem: Problem
    disc: SFVDiscretization
    initial_condition: object
    integrator: TimeIntegratorConfig
    method: Method


@dataclass
class RunOutcome:
    config: RunConfig
    setup: RunSetup
    result: FomResult
    stats: List[FieldStats]
    model: Optional[ReducedModel] = None
    summary: dict = field(default_factory=dict)

    @property
    def disc(self):
        return self.setup.disc


def setup_run(cfg: RunConfig) -> RunSetup:
    problem = get_problem(cfg.problem, cfg.custom_problem)
    method = Method(cfg.method)
    weno = WenoParams(epsilon=cfg.epsilon)
    if method is Method.det_1d:
        grid = build_tensor_grid(problem.physical, cfg.nx or problem.nx)
        disc = SFVDiscretization(grid, problem.law, problem.bc, weno)
        u0 = problem.at(cfg.y)
    else:
        disc = problem.discretization(cfg.nx, cfg.ny, weno)
        u0 = problem.initial_condition
    return RunSetup(problem, disc, u0, cfg.integrator(problem.t_final), method)


def build_reduced_model(snap, n_modes, disc: SFVDiscretization, n_hyper=None) -> ReducedModel:
    """POD basis, face integrals and (optionally) Q-DEIM nodes from a snapshot matrix."""
    if snap.shape[0] != disc.quadrature.size:
        raise_error(
            ConfigurationError,
            f"Snapshots have {snap.shape[0]} rows but the grid has {disc.quadrature.size} nodes.",
        )
    basis = compute_pod(snap, n_modes)
    hyper = None
    if n_hyper is not None:
        hyper = qdeim_select(basis, n_hyper, disc.grid, disc.quadrature).nodes
    return ReducedModel(
        basis=basis,
        face_integrals=build_face_integrals(basis, disc.quadrature),
        hyper_nodes=hyper,
        manifest={"snapshot_hash": array_hash(snap.data)},
    )


def reduced_model(cfg: RunConfig, disc: SFVDiscretization) -> ReducedModel:
    if cfg.basis and (Path(cfg.basis) / BASIS_MANIFEST).exists():
        model = load_basis(cfg.basis)
        if cfg.n_modes is not None and cfg.n_modes != model.basis.n_modes:
            raise_error(
                ConfigurationError,
                f"Basis in {cfg.basis} has N={model.basis.n_modes}, config asks for {cfg.n_modes}.",
            )
        return model
    if not cfg.snapshots:
        raise_error(ArtifactIOError, f"No basis found in {cfg.basis}.")
    snap, _ = load_snapshots(cfg.snapshots)
    return build_reduced_model(snap, cfg.n_modes, disc, cfg.n_hyper)


def slice_cell(grid, value=None):
    """Stochastic cell whose center is nearest ``value`` (default: upper corner of ``D_y``)."""
    if grid.q == 0:
        return 0
    if value is None:
        value = [interval.hi for interval, _ in grid.stochastic]
    value = np.asarray(value, dtype=float)
    if value.shape != (grid.q,):
        raise_error(ConfigurationError, f"slice_value needs {grid.q} entries, got {value.tolist()}.")
    return int(np.argmin(np.sum((grid.cell_centers - value) ** 2, axis=1)))


def solution_stats(U, disc: SFVDiscretization):
    stats = [field_stats(U, disc.measures, disc.grid.x_centers, disc.law.component_names)]
    if isinstance(disc.law, Euler):
        stats.append(primitive_stats(U, disc.measures, disc.grid.x_centers, disc.law))
    return stats


def solve(cfg: RunConfig) -> RunOutcome:
    """Run ``cfg.method`` on ``cfg.problem`` and compute the final statistics."""
    setup = setup_run(cfg)
    disc = setup.disc
    model = operator = None
    if setup.method in (Method.rom, Method.rom_hr):
        model = reduced_model(cfg, disc)
        operator = model.operator(disc, cfg.n_hyper if setup.method is Method.rom_hr else None)
    initial = project_initial_condition(setup.initial_condition, disc)
    result = run_fom(disc, initial, setup.integrator, setup.method, operator)
    stats = solution_stats(result.final.values, disc)
    return RunOutcome(cfg, setup, result, stats, model)


def summarize(outcome: RunOutcome, slice_index=None):
    disc, cfg, result = outcome.disc, outcome.config, outcome.result
    trajectory = result.trajectory
    final = result.final.values
    summary = {
        "problem": cfg.problem,
        "method": result.method.value,
        "Nx": disc.grid.nx,
        "Ny": disc.grid.ny,
        "q": disc.grid.q,
        "counts": list(disc.grid.counts),
        "N": None if outcome.model is None else outcome.model.basis.n_modes,
        "N_H": cfg.n_hyper if result.method is Method.rom_hr else None,
        "t_final": float(trajectory.times[-1]),
        "frames": len(trajectory.frames),
        "components": list(disc.law.component_names),
        "dx": float(disc.grid.dx[0]),
        "state_shape": list(final.shape),
        "flux_evaluations": result.flux_evaluations,
        "rhs_calls": result.rhs_calls,
        "wall_time": trajectory.stats.wall_time,
        "integrator": {
            "accepted": trajectory.stats.accepted,
            "rejected": trajectory.stats.rejected,
            "rhs_evaluations": trajectory.stats.rhs_evaluations,
            "max_accepted_error": trajectory.stats.max_accepted_error,
        },
        "errors": None,
    }
    if result.method is Method.det_1d:
        summary["y"] = list(cfg.y)
    if slice_index is not None:
        summary["slice"] = {
            "cell": slice_index,
            "center": disc.grid.cell_centers[slice_index] if disc.grid.q else [],
            "requested": cfg.slice_value,
            "rule": "nearest stochastic cell center",
        }
    if isinstance(disc.law, Euler):
        primitive = disc.law.to_primitive(final)
        summary["min_density"] = float(primitive[..., 0].min())
        summary["min_pressure"] = float(primitive[..., 2].min())
    if cfg.reference:
        names = list(disc.law.component_names)
        _, reference = stats_means(Path(cfg.reference) / STATS_FILE, names)
        summary["errors"] = relative_l1(
            outcome.stats[0].mean, reference, disc.grid.dx, names
        ).to_dict()
    return summary


def save_run(folder, outcome: RunOutcome):
    """Statistics and slice CSVs, stored frames, config and the JSON summary."""
    folder = create_folder(folder)
    disc = outcome.disc
    final = outcome.result.final.values
    write_csv(folder / STATS_FILE, *outcome.stats)
    index = slice_cell(disc.grid, outcome.config.slice_value)
    center = disc.grid.cell_centers[index] if disc.grid.q else []
    write_slice_csv(
        folder / SLICE_FILE, disc.grid.x_centers, center, final[:, index], disc.law.component_names
    )
    trajectory = outcome.result.trajectory
    write_matrix(folder / FRAMES_FILE, np.stack([f.reshape(-1) for f in trajectory.frames], axis=1))
    write_matrix(folder / FRAME_TIMES_FILE, trajectory.times.reshape(-1, 1))
    try:
        (folder / CONFIG_FILE).write_text(outcome.config.to_text())
    except OSError as error:
        raise_error(ArtifactIOError, f"Cannot write {folder / CONFIG_FILE}: {error}")
    outcome.summary = summarize(outcome, index)
    write_summary(folder / SUMMARY_FILE, outcome.summary)
    log.info(f"Run artifacts in {folder}")
    return outcome.summary


def output_folder(cfg: RunConfig, disc: SFVDiscretization):
    return Path(cfg.output or generate_path(None, cfg.problem, cfg.method, disc.grid.nx, disc.grid.counts))


@dataclass
class StoredRun:
    summary: dict
    frames: List[np.ndarray]
    times: np.ndarray


def load_run(folder) -> StoredRun:
    folder = Path(folder)
    if not folder.is_dir():
        raise_error(ArtifactIOError, f"Run folder {folder} does not exist.")
    summary = json_load(folder / SUMMARY_FILE)
    columns = read_matrix(folder / FRAMES_FILE)
    times = read_matrix(folder / FRAME_TIMES_FILE).reshape(-1)
    shape = tuple(summary["state_shape"])
    if columns.shape != (int(np.prod(shape)), len(times)):
        raise_error(ArtifactIOError, f"Stored frames in {folder} do not match the summary.")
    return StoredRun(summary, [columns[:, f].reshape(shape) for f in range(len(times))], times)


def compare_runs(folder_a, folder_b):
    """Relative L1 error of the means of run ``a`` against reference run ``b``."""
    summaries = [json_load(Path(f) / SUMMARY_FILE) for f in (folder_a, folder_b)]
    names = summaries[1]["components"]
    _, a = stats_means(Path(folder_a) / STATS_FILE, names)
    _, b = stats_means(Path(folder_b) / STATS_FILE, names)
    if a.shape != b.shape:
        raise_error(
            ConfigurationError,
            f"Runs have different physical meshes: {a.shape[0]} vs {b.shape[0]} cells.",
        )
    widths = np.full(len(b), summaries[1]["dx"])
    return relative_l1(a, b, widths, names)
