"""Command line entry point: `hho-plate run ...` for studies, `hho-plate probe ...` for projector rates."""
import argparse
import logging
import sys

from hho_plate.errors import HHOError
from hho_plate.generators import FAMILIES
from hho_plate.polyspace import approximation_rate_probe
from hho_plate.study import parse_config, run_study
from hho_plate.utils import configure_logging, parse_number_list

logger = logging.getLogger(__name__)

EXIT_THRESHOLD = 1


def _eta_sweep(text):
    try:
        return parse_number_list(text, "eta-sweep")
    except HHOError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser():
    parser = argparse.ArgumentParser(prog="hho-plate", description="HHO discretization of clamped Kirchhoff-Love plates")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a convergence study or eta sweep")
    run.add_argument("--config", help="flat key = value configuration file")
    run.add_argument("--problem", help="square_manufactured, square_orthotropic, lshape_uniform or custom_mesh_file")
    run.add_argument("--k", type=int, help="polynomial degree (1..4)")
    run.add_argument("--family", choices=FAMILIES)
    run.add_argument("--levels", type=int, help="number of refinement levels")
    run.add_argument("--first-level", type=int, dest="first_level", help="first level (n = 2^level)")
    eta = run.add_mutually_exclusive_group()
    eta.add_argument("--eta", type=float, help="stabilization parameter")
    eta.add_argument("--eta-sweep", type=_eta_sweep, dest="eta_sweep", help="comma separated eta values")
    run.add_argument("--mesh", help="mesh file for custom_mesh_file")
    run.add_argument("--solver", choices=("direct", "cg"))
    run.add_argument("--tol", type=float, help="solver relative residual tolerance")
    run.add_argument("--out", help="CSV output path")
    run.add_argument("--flux-report", action="store_true", default=None, dest="flux_report")
    run.add_argument("--export-matrix", dest="export_matrix", help="Matrix Market path for the final system")
    run.add_argument("--dump-local", dest="dump_local", help="text dump of the final level's local operators")
    run.add_argument("--threads", type=int, help="worker threads (overrides HHO_THREADS, 0 = serial)")
    for name in ("min-eoc-energy", "min-eoc-l2", "energy-min", "energy-max", "max-flux-residual"):
        run.add_argument(f"--{name}", type=float, dest=name.replace("-", "_"))

    probe = sub.add_parser("probe", help="observed approximation rate of the energy projector")
    probe.add_argument("--l", type=int, default=3, dest="degree")
    probe.add_argument("--s", type=int, default=4)
    probe.add_argument("--m", type=int, default=0)
    probe.add_argument("--family", choices=FAMILIES, default="triangular")
    probe.add_argument("--levels", type=int, default=4)
    return parser


RUN_KEYS = (
    "problem", "k", "family", "levels", "first_level", "eta", "eta_sweep", "mesh", "solver", "tol", "out",
    "flux_report", "export_matrix", "dump_local", "threads",
    "min_eoc_energy", "min_eoc_l2", "energy_min", "energy_max", "max_flux_residual",
)


def cmd_run(args):
    config = parse_config({key: getattr(args, key) for key in RUN_KEYS}, args.config)
    result = run_study(config)
    for key, value in result.summary.items():
        print(f"{key}: {value}")
    if not result.passed:
        for failure in result.failures:
            print(f"FAILED {failure}", file=sys.stderr)
        return EXIT_THRESHOLD
    return 0


def cmd_probe(args):
    try:
        res = approximation_rate_probe(args.degree, args.s, args.m, args.family, args.levels)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for h, e in zip(res.sizes, res.normalized):
        print(f"h={h:.6e} ratio={e:.6e}")
    print(f"slope: {res.slope:.4f} (expected {args.s - args.m})")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO)
    try:
        return cmd_run(args) if args.command == "run" else cmd_probe(args)
    except HHOError as exc:
        level = getattr(exc, "level", None)
        prefix = f"level {level}: " if level is not None else ""
        print(f"error: {prefix}{exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
