"""Command-line entry point.

    poincare-vi run --problem kepler --ecc 0.9 --integrator euler-b --monitor trunc --tol 1e-5 --h 0.1 --t-end 100
    poincare-vi convergence --problem harmonic --integrator htvi4 --hs 0.2,0.1,0.05,0.025 --t-end 1
    poincare-vi table e09
    poincare-vi symplecticity --integrator htvi4 --monitor energy --h 0.01 --samples 20

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from ..core.newton import NewtonError
from ..integrators import IntegrationError, StepError
from .config import INTEGRATORS, MONITORS, PROBLEMS, ConfigError, load_config, make_config
from .experiments import cmd_convergence, cmd_run, cmd_symplecticity, cmd_table, preset_names

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

# flag name -> RunConfig field
_RUN_FLAGS = ("problem", "ecc", "dim", "integrator", "monitor", "tol", "gamma", "h", "t_end",
              "g_min", "g_max", "dt_min", "dt_max", "expansion", "csv", "max_steps")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value file; flags given here override it")
    p.add_argument("--problem", choices=PROBLEMS)
    p.add_argument("--ecc", type=float, help="Kepler eccentricity")
    p.add_argument("--dim", type=int, help="dimension for harmonic/free problems")
    p.add_argument("--integrator", choices=INTEGRATORS)
    p.add_argument("--monitor", choices=MONITORS)
    p.add_argument("--tol", type=float, help="trunc monitor tolerance")
    p.add_argument("--gamma", type=float, help="power monitor exponent")
    p.add_argument("--fourth-root", action="store_true", default=None,
                   help="use the fourth-root truncation monitor")
    p.add_argument("--h", type=float, help="fictive step")
    p.add_argument("--t-end", type=float, help="final physical time")
    p.add_argument("--g-min", type=float, help="lower monitor bound a")
    p.add_argument("--g-max", type=float, help="upper monitor bound b")
    p.add_argument("--dt-min", type=float, help="lower physical step bound (a = dt_min / h)")
    p.add_argument("--dt-max", type=float, help="upper physical step bound (b = dt_max / h)")
    p.add_argument("--expansion", choices=("reduced", "full"), help="HTVI Taylor expansion field")
    p.add_argument("--csv", help="write the per-step trajectory here")
    p.add_argument("--max-steps", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="poincare-vi", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="integrate one configuration")
    _add_run_flags(p)

    p = sub.add_parser("convergence", help="global error against step size and fitted order")
    _add_run_flags(p)
    p.add_argument("--hs", required=True, help="comma-separated step sizes, each half the previous")

    p = sub.add_parser("table", help="run a table preset")
    p.add_argument("preset", help="preset name, e.g. e09 or e099")

    p = sub.add_parser("symplecticity", help="finite-difference symplecticity check of one step")
    _add_run_flags(p)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _config_from(args):
    flags = {name: getattr(args, name, None) for name in _RUN_FLAGS}
    flags["fourth_root"] = args.fourth_root
    if args.config:
        return load_config(args.config, **flags)
    return make_config(**flags)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = sys.stdout
    try:
        if args.command == "run":
            cmd_run(_config_from(args), out=out)
        elif args.command == "convergence":
            try:
                hs = [float(v) for v in args.hs.split(",") if v.strip()]
            except ValueError:
                raise ConfigError(f"cannot parse step sizes {args.hs!r}") from None
            cmd_convergence(_config_from(args), hs, out=out)
        elif args.command == "table":
            if args.preset not in preset_names():
                raise ConfigError(f"unknown preset {args.preset!r}; available: {', '.join(preset_names())}")
            rows = cmd_table(args.preset, out=out)
            if any(r.error for r in rows):
                return EXIT_SOLVER
        elif args.command == "symplecticity":
            if args.samples < 1:
                raise ConfigError("samples must be at least 1")
            cfg = _config_from(args)
            cmd_symplecticity(cfg, args.samples, args.seed, out=out)
    except ConfigError as exc:
        print(f"poincare-vi: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, StepError, NewtonError, ArithmeticError) as exc:
        print(f"poincare-vi: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"poincare-vi: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
