import argparse
import logging

from sfvrom.cli import cmd_solve
from sfvrom.problems import Preset
from sfvrom.runconfig import RunConfig
from sfvrom.solver import Method


def main():
    parser = argparse.ArgumentParser(description="Run one stochastic finite volume simulation.")

    parser.add_argument("--output_folder", type=str, default=None, help="Output folder for results.")
    parser.add_argument(
        "--problem",
        type=str,
        default=Preset.burgers_sine.value,
        choices=[p.value for p in Preset],
        help="Problem preset (default: burgers-sine).",
    )
    parser.add_argument(
        "--method",
        type=str,
        default=Method.fom_flux.value,
        choices=[m.value for m in Method],
        help="Solution method (default: fom-flux).",
    )
    parser.add_argument("--nx", type=int, default=None, help="Number of physical cells.")
    parser.add_argument(
        "--ny",
        type=int,
        nargs="+",
        default=None,
        help="Stochastic cells per dimension, e.g. --ny 16 16.",
    )
    parser.add_argument("--n_modes", type=int, default=None, help="Number of POD modes.")
    parser.add_argument("--n_hyper", type=int, default=None, help="Number of Q-DEIM nodes.")
    parser.add_argument("--basis", type=str, default=None, help="Folder with a saved basis.")
    parser.add_argument("--snapshots", type=str, default=None, help="Folder with saved snapshots.")
    parser.add_argument("--rtol", type=float, default=1e-6, help="Relative tolerance.")
    parser.add_argument("--atol", type=float, default=1e-8, help="Absolute tolerance.")
    parser.add_argument("--frames", type=int, default=50, help="Number of stored frames.")
    parser.add_argument("--custom_problem", type=str, default=None, help="module:function.")
    parser.add_argument(
        "--y", type=float, nargs="+", default=None, help="Parameter point for det-1d runs."
    )

    args = parser.parse_args()

    # Set up logging
    logging.basicConfig(level=logging.INFO)

    cfg = RunConfig(
        problem=args.problem,
        method=args.method,
        nx=args.nx,
        ny=None if args.ny is None else tuple(args.ny),
        n_modes=args.n_modes,
        n_hyper=args.n_hyper,
        basis=args.basis,
        snapshots=args.snapshots,
        rtol=args.rtol,
        atol=args.atol,
        frames=args.frames,
        output=args.output_folder,
        custom_problem=args.custom_problem,
        y=None if args.y is None else tuple(args.y),
    ).validate()
    cmd_solve(cfg)


if __name__ == "__main__":
    main()
