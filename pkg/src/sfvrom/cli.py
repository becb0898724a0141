"""``sfvrom`` command line: solve, snapshots, basis, compare and reproduce."""

import argparse
import logging
import sys
from pathlib import Path

from sfvrom.config import ConfigurationError, SFVError, log, raise_error
from sfvrom.experiments import Experiment, run_experiment
from sfvrom.pipeline import (
    build_reduced_model,
    compare_runs,
    load_run,
    output_folder,
    save_run,
    setup_run,
    solve,
)
from sfvrom.rom import save_basis
from sfvrom.runconfig import RunConfig, load_config
from sfvrom.snapshots import (
    collect_intrusive,
    collect_nonintrusive,
    load_snapshots,
    save_snapshots,
)
from sfvrom.solver import Method, project_initial_condition, run_fom
from sfvrom.stats import write_summary
from sfvrom.utils import SPOOL_FOLDER


def cmd_solve(cfg: RunConfig):
    outcome = solve(cfg)
    folder = output_folder(cfg, outcome.disc)
    return save_run(folder, outcome)


def cmd_snapshots(cfg: RunConfig):
    """Intrusive snapshots from a stored (or fresh) flux FOM run, or non-intrusive ones."""
    setup = setup_run(cfg)
    disc = setup.disc
    folder = Path(cfg.snapshots or output_folder(cfg, disc) / "snapshots")
    spool = folder / SPOOL_FOLDER
    if cfg.snapshot_mode == "nonintrusive":
        snap = collect_nonintrusive(
            setup.problem, disc, setup.integrator, cfg.workers, cfg.dedupe, spool
        )
    else:
        if cfg.fom_run:
            stored = load_run(cfg.fom_run)
            if tuple(stored.summary["state_shape"]) != disc.shape:
                raise_error(
                    ConfigurationError,
                    f"Stored run {cfg.fom_run} has state shape {stored.summary['state_shape']}, "
                    f"expected {list(disc.shape)}.",
                )
            frames, times = stored.frames, stored.times
        else:
            initial = project_initial_condition(setup.initial_condition, disc)
            trajectory = run_fom(disc, initial, setup.integrator, Method.fom_flux).trajectory
            frames, times = trajectory.frames, trajectory.times
        snap = collect_intrusive(disc, frames, times, cfg.dedupe, spool)
    return save_snapshots(folder, snap, disc, cfg.snapshot_mode)


def cmd_basis(cfg: RunConfig):
    if not (cfg.snapshots and cfg.n_modes):
        raise_error(ConfigurationError, "basis needs snapshots=<dir> and n_modes.")
    disc = setup_run(cfg).disc
    snap, manifest = load_snapshots(cfg.snapshots)
    model = build_reduced_model(snap, cfg.n_modes, disc, cfg.n_hyper)
    model.manifest["snapshot_mode"] = manifest.get("mode")
    folder = Path(cfg.basis or output_folder(cfg, disc) / "basis")
    return save_basis(folder, model, disc.quadrature, disc.grid)


def cmd_compare(run_a, run_b, output=None):
    report = compare_runs(run_a, run_b)
    for name, error in report.per_component.items():
        print(f"{name:>8s}  {error:.6e}")
    print(f"{'total':>8s}  {report.aggregate:.6e}")
    if output:
        write_summary(output, {"run": str(run_a), "reference": str(run_b), **report.to_dict()})
    return report.to_dict()


def cmd_reproduce(experiment, cfg: RunConfig):
    return run_experiment(experiment, cfg)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sfvrom",
        description="Stochastic finite volume solver with POD/Q-DEIM reduced models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(name, help, leading=()):
        command = sub.add_parser(name, help=help)
        for argument, kwargs in leading:
            command.add_argument(argument, **kwargs)
        command.add_argument("--config", type=str, default=None, help="key = value config file.")
        command.add_argument(
            "overrides", nargs="*", default=[], help="key=value settings overriding the config file."
        )
        return command

    with_config("solve", "Run one method and write statistics, frames and a summary.")
    with_config("snapshots", "Collect flux snapshots (intrusive or non-intrusive).")
    with_config("basis", "Build the POD basis, face integrals and Q-DEIM nodes.")
    compare = sub.add_parser("compare", help="Relative L1 error of run A against reference run B.")
    compare.add_argument("run_a", type=str)
    compare.add_argument("run_b", type=str)
    compare.add_argument("--output", type=str, default=None, help="Write the report as JSON.")
    with_config(
        "reproduce",
        "Run a bundled experiment.",
        leading=[("experiment", {"choices": [e.value for e in Experiment]})],
    )
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO)
    try:
        if args.command == "compare":
            cmd_compare(args.run_a, args.run_b, args.output)
            return 0
        cfg = load_config(args.config, args.overrides)
        if args.command == "solve":
            cmd_solve(cfg)
        elif args.command == "snapshots":
            cmd_snapshots(cfg)
        elif args.command == "basis":
            cmd_basis(cfg)
        else:
            cmd_reproduce(args.experiment, cfg)
    except SFVError as error:
        log.debug("Run aborted", exc_info=True)
        print(f"sfvrom {args.command}: {error}", file=sys.stderr)
        return error.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
