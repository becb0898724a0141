"""Resolution and mode sweeps behind ``sfvrom reproduce``."""

from dataclasses import replace
from enum import Enum
from pathlib import Path

import numpy as np

from sfvrom.config import ConfigurationError, IntegrationError, PositivityError, log, raise_error
from sfvrom.pipeline import build_reduced_model, solution_stats
from sfvrom.problems import Preset, Problem
from sfvrom.rom import HyperReducedOperator, ReducedOperator, qdeim_select
from sfvrom.runconfig import RunConfig
from sfvrom.snapshots import collect_intrusive
from sfvrom.solver import Method, project_initial_condition, run_fom
from sfvrom.stats import (
    convergence_order,
    error_ratio,
    mean,
    relative_l1,
    write_csv,
    write_summary,
    write_table,
)
from sfvrom.utils import ROOT_FOLDER, create_folder
from sfvrom.weno import WenoParams


class Experiment(str, Enum):
    """Experiments available from ``sfvrom reproduce``."""

    table1 = "table1"
    """State vs flux reconstruction on Burgers over N_y = L^2."""
    table2 = "table2"
    """State vs flux reconstruction on the narrow Sod tube over N_y = L."""
    burgers_rom_sweep = "burgers-rom-sweep"
    """ROM error against the flux FOM over the number of modes."""
    burgers_hr_sweep = "burgers-hr-sweep"
    """Hyper-reduced ROM error over the number of Q-DEIM nodes."""
    sod_rom_sweep = "sod-rom-sweep"
    """ROM error against the flux FOM on the narrow Sod tube over the number of modes."""
    sod_hr = "sod-hr"
    """Hyper-reduced Sod run with N = N_H = 20."""
    sod_positivity = "sod-positivity"
    """Wide Sod tube: whether each full-order method keeps density and pressure positive."""


DEFAULT_LEVELS = {Experiment.table1: (4, 8, 16, 32), Experiment.table2: (4, 8, 16, 32, 64)}
DEFAULT_MODES = {Experiment.burgers_rom_sweep: (10, 20, 50), Experiment.sod_rom_sweep: (5, 10, 15, 20, 30)}
DEFAULT_HYPER = (50, 75, 100, 150)
BURGERS_HR_MODES = 50
SOD_HR_MODES = 20


def total_variation(values):
    return float(np.sum(np.abs(np.diff(values, axis=0)), axis=0).sum())


def _integrator(cfg: RunConfig, problem: Problem, **changes):
    return replace(cfg.integrator(problem.t_final), **changes)


def _mean_error(result, reference, disc):
    return relative_l1(
        mean(result.final, disc.measures),
        mean(reference.final, disc.measures),
        disc.grid.dx,
        disc.law.component_names,
    )


def _field_error(result, reference, disc):
    """Relative L1 difference over all space-parameter cells, weighted by ``|K_y^j|``."""
    weights = disc.measures.stochastic[None, :, None]
    return relative_l1(
        result.final.values * weights, reference.final.values * weights, disc.grid.dx
    ).aggregate


def convergence_table(problem: Problem, cfg: RunConfig, levels, folder, name):
    """Relative L1 difference of state and flux reconstruction means over ``levels``.

    The difference of the full stochastic fields is reported alongside as ``field_error``.

    Args:
        problem (Problem): problem whose every stochastic dimension gets ``level`` cells.
        cfg (RunConfig): tolerances, ``nx`` and ``epsilon``.
        levels (tuple): per-dimension stochastic cell counts, each twice the previous.
        folder (Path): output folder for ``<name>.csv`` and ``<name>.json``.
        name (str): experiment name.
    """
    weno = WenoParams(epsilon=cfg.epsilon)
    integrator = _integrator(cfg, problem, frames=1)
    rows, records, previous = [], [], None
    for level in levels:
        disc = problem.discretization(cfg.nx, (level,) * problem.q, weno)
        initial = project_initial_condition(problem.initial_condition, disc)
        state = run_fom(disc, initial, integrator, Method.fom_state)
        flux = run_fom(disc, initial, integrator, Method.fom_flux)
        report = _mean_error(flux, state, disc)
        error = report.aggregate
        field_error = _field_error(flux, state, disc)
        report.order = convergence_order(previous, error) if previous else None
        report.ratio = error_ratio(previous, error) if previous else None
        evaluation_ratio = (state.flux_evaluations / state.rhs_calls) / (
            flux.flux_evaluations / flux.rhs_calls
        )
        log.info(
            f"{name}: N_y={disc.grid.ny} error={error:.3e} field error={field_error:.3e} "
            f"order={report.order} ratio={report.ratio} flux-eval ratio={evaluation_ratio:g}"
        )
        rows.append(
            [level, disc.grid.ny, error, field_error, report.order, report.ratio, evaluation_ratio,
             state.trajectory.stats.wall_time, flux.trajectory.stats.wall_time]
        )
        records.append({"level": level, "Ny": disc.grid.ny, **report.to_dict(),
                        "field_error": field_error, "flux_eval_ratio": evaluation_ratio})
        previous = error
    header = ["level", "Ny", "error", "field_error", "order", "ratio", "flux_eval_ratio", "state_time", "flux_time"]
    write_table(folder / f"{name}.csv", header, rows)
    write_summary(folder / f"{name}.json", {"problem": problem.name, "Nx": cfg.nx or problem.nx, "rows": records})
    return records


def _fom_with_snapshots(problem: Problem, cfg: RunConfig, counts):
    disc = problem.discretization(cfg.nx, counts, WenoParams(epsilon=cfg.epsilon))
    initial = project_initial_condition(problem.initial_condition, disc)
    fom = run_fom(disc, initial, _integrator(cfg, problem), Method.fom_flux)
    snap = collect_intrusive(
        disc, fom.trajectory.frames, fom.trajectory.times, dedupe=cfg.dedupe
    )
    return disc, initial, fom, snap


def _reduced_run(disc, initial, integrator, method, operator, fom, label):
    """Reduced run compared with ``fom``; failures are recorded, not raised."""
    try:
        result = run_fom(disc, initial, integrator, method, operator)
    except (IntegrationError, PositivityError) as error:
        log.warning(f"{label} failed: {error}")
        return {"status": type(error).__name__, "message": str(error)}, None
    report = _mean_error(result, fom, disc)
    return {
        "status": "ok",
        "error": report.aggregate,
        "per_component": report.per_component,
        "total_variation": total_variation(mean(result.final, disc.measures)),
        "flux_evaluations": result.flux_evaluations,
        "wall_time": result.trajectory.stats.wall_time,
    }, result


def rom_sweep(problem: Problem, cfg: RunConfig, modes, folder, name):
    """ROM error against the flux FOM for each number of modes in ``modes``."""
    counts = cfg.ny or problem.counts
    disc, initial, fom, snap = _fom_with_snapshots(problem, cfg, counts)
    integrator = _integrator(cfg, problem)
    fom_tv = total_variation(mean(fom.final, disc.measures))
    records, rows = [], []
    for n_modes in modes:
        model = build_reduced_model(snap, n_modes, disc)
        operator = ReducedOperator(model.basis, model.face_integrals)
        record, _ = _reduced_run(disc, initial, integrator, Method.rom, operator, fom, f"N={n_modes}")
        record["N"] = n_modes
        records.append(record)
        rows.append([n_modes, record.get("error"), record.get("total_variation"), fom_tv])
        log.info(f"{name}: N={n_modes} {record['status']} error={record.get('error')}")
    write_table(folder / f"{name}.csv", ["N", "error", "total_variation", "fom_total_variation"], rows)
    write_summary(
        folder / f"{name}.json",
        {"problem": problem.name, "Nx": disc.grid.nx, "counts": list(disc.grid.counts),
         "snapshot_shape": list(snap.shape), "fom_total_variation": fom_tv, "rows": records},
    )
    return records


def hyper_sweep(problem: Problem, cfg: RunConfig, n_modes, hyper, folder, name):
    """HR error over ``hyper`` at fixed ``n_modes``; the first row is the plain ROM."""
    counts = cfg.ny or problem.counts
    disc, initial, fom, snap = _fom_with_snapshots(problem, cfg, counts)
    integrator = _integrator(cfg, problem)
    model = build_reduced_model(snap, n_modes, disc)
    plain, _ = _reduced_run(
        disc, initial, integrator, Method.rom,
        ReducedOperator(model.basis, model.face_integrals), fom, f"N={n_modes}",
    )
    plain.update(N=n_modes, N_H=None)
    records = [plain]
    rows = [[n_modes, np.nan, plain.get("error"), np.nan, plain.get("flux_evaluations")]]
    results = {}
    for n_hyper in hyper:
        index = qdeim_select(model.basis, n_hyper, disc.grid, disc.quadrature)
        operator = HyperReducedOperator(model.basis, model.face_integrals, index)
        record, result = _reduced_run(
            disc, initial, integrator, Method.rom_hr, operator, fom, f"N={n_modes}, N_H={n_hyper}"
        )
        record.update(N=n_modes, N_H=n_hyper, closure=len(index.closure), condition=index.condition)
        if record["status"] == "ok" and plain.get("error"):
            record["error_over_rom"] = record["error"] / plain["error"]
        records.append(record)
        results[n_hyper] = result
        rows.append([n_modes, n_hyper, record.get("error"), len(index.closure), record.get("flux_evaluations")])
        log.info(f"{name}: N_H={n_hyper} {record['status']} error={record.get('error')}")
    write_table(folder / f"{name}.csv", ["N", "N_H", "error", "closure", "flux_evaluations"], rows)
    write_summary(
        folder / f"{name}.json",
        {"problem": problem.name, "Nx": disc.grid.nx, "counts": list(disc.grid.counts), "rows": records},
    )
    return disc, fom, results, records


def sod_hr(problem: Problem, cfg: RunConfig, folder, name):
    n_modes = cfg.n_modes or SOD_HR_MODES
    n_hyper = cfg.n_hyper or n_modes
    disc, fom, results, records = hyper_sweep(problem, cfg, n_modes, (n_hyper,), folder, name)
    write_csv(folder / f"{name}_fom.csv", *solution_stats(fom.final.values, disc))
    if results[n_hyper] is not None:
        write_csv(folder / f"{name}_hr.csv", *solution_stats(results[n_hyper].final.values, disc))
    return records


def sod_positivity(problem: Problem, cfg: RunConfig, folder, name):
    """Run both full-order methods on the wide Sod tube and record which one fails.

    ``dichotomy`` is true when state reconstruction stops with a positivity
    error while flux reconstruction completes.
    """
    disc = problem.discretization(cfg.nx, cfg.ny, WenoParams(epsilon=cfg.epsilon))
    initial = project_initial_condition(problem.initial_condition, disc)
    integrator = _integrator(cfg, problem)
    records = {}
    for method in (Method.fom_state, Method.fom_flux):
        try:
            result = run_fom(disc, initial, integrator, method)
        except (PositivityError, IntegrationError) as error:
            records[method.value] = {
                "status": type(error).__name__,
                "message": str(error),
                "location": getattr(error, "location", None),
                "time": getattr(error, "time", None),
            }
            continue
        primitive = np.stack([disc.law.to_primitive(f) for f in result.trajectory.frames])
        records[method.value] = {
            "status": "ok",
            "min_density": float(primitive[..., 0].min()),
            "min_pressure": float(primitive[..., 2].min()),
        }
        write_csv(folder / f"{name}_{method.value}.csv", *solution_stats(result.final.values, disc))
    records["dichotomy"] = (
        records[Method.fom_state.value]["status"] == PositivityError.__name__
        and records[Method.fom_flux.value]["status"] == "ok"
    )
    if not records["dichotomy"]:
        log.warning(
            f"{name}: state reconstruction {records[Method.fom_state.value]['status']}, "
            f"flux reconstruction {records[Method.fom_flux.value]['status']}."
        )
    write_summary(folder / f"{name}.json", {"problem": problem.name, **records})
    return records


def run_experiment(name, cfg: RunConfig = RunConfig()):
    """Run a named experiment and write its tables under ``cfg.output``.

    Args:
        name (str): one of :class:`Experiment`.
        cfg (RunConfig): overrides for mesh sizes (``nx``, ``ny``), sweeps
            (``levels``, ``modes``, ``hyper``, ``n_modes``, ``n_hyper``) and
            integrator tolerances. ``problem`` and ``method`` are ignored.
    """
    try:
        experiment = Experiment(name)
    except ValueError:
        raise_error(
            ConfigurationError,
            f"Unknown experiment {name!r}; choose from {[e.value for e in Experiment]}.",
        )
    folder = create_folder(Path(cfg.output or f"./{ROOT_FOLDER}/{experiment.value}"))
    log.info(f"Reproducing {experiment.value} into {folder}")
    if experiment in DEFAULT_LEVELS:
        preset = Preset.burgers_sine if experiment is Experiment.table1 else Preset.sod_narrow
        return convergence_table(
            preset.build(), cfg, cfg.levels or DEFAULT_LEVELS[experiment], folder, experiment.value
        )
    if experiment in DEFAULT_MODES:
        preset = Preset.burgers_sine if experiment is Experiment.burgers_rom_sweep else Preset.sod_narrow
        return rom_sweep(
            preset.build(), cfg, cfg.modes or DEFAULT_MODES[experiment], folder, experiment.value
        )
    if experiment is Experiment.burgers_hr_sweep:
        return hyper_sweep(
            Preset.burgers_sine.build(), cfg, cfg.n_modes or BURGERS_HR_MODES,
            cfg.hyper or DEFAULT_HYPER, folder, experiment.value,
        )[-1]
    if experiment is Experiment.sod_hr:
        return sod_hr(Preset.sod_narrow.build(), cfg, folder, experiment.value)
    return sod_positivity(Preset.sod_wide.build(), cfg, folder, experiment.value)
