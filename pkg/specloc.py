import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from specloc_core.config import ENV_PATH, LOG_LEVELS, get_settings

load_dotenv(ENV_PATH)

from specloc_core.errors import ArgumentError, SpeclocError  # noqa: E402
from specloc_core.graph_nodes import COMMANDS  # noqa: E402
from specloc_core.orchestrator import run_command  # noqa: E402
from specloc_core.oscillator import FamilyTag  # noqa: E402


class SpeclocArgumentParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so usage errors get exit code 1 and the usual error line."""

    def error(self, message: str) -> None:
        raise ArgumentError(message, usage=self.prog)


def build_parser() -> argparse.ArgumentParser:
    parser = SpeclocArgumentParser(
        prog="specloc",
        description="Eigenvalues, spectral determinants and real spectral loci of polynomial oscillators.",
    )
    sub = parser.add_subparsers(dest="command", parser_class=SpeclocArgumentParser)

    shared = SpeclocArgumentParser(add_help=False)
    problem = shared.add_argument_group("problem")
    problem.add_argument("--family", choices=[t.value for t in FamilyTag])
    problem.add_argument("--a", type=float)
    problem.add_argument("--b", type=float)
    problem.add_argument("--c", type=float)
    problem.add_argument("--j", type=float, help="J of the QES quartic")
    problem.add_argument("--n", type=int)
    problem.add_argument("--m", type=int)
    problem.add_argument("--potential", help='custom potential, e.g. "z^2" or "z^3 + 2*I*z"')
    problem.add_argument("--rays", help="two boundary ray angles, e.g. 0,pi")

    numerics = shared.add_argument_group("numerics")
    numerics.add_argument("--range", help="lo,hi (use --range=-6,8 for a negative start)")
    numerics.add_argument("--lam-range", dest="lam_range", help="lambda window lo,hi for trace")
    numerics.add_argument("--box", help="re0,re1,im0,im1")
    numerics.add_argument("--step", type=float, help="continuation step")
    numerics.add_argument("--rtol", type=float, help="ODE relative tolerance")
    numerics.add_argument("--eig-tol", dest="eig_tol", type=float)
    numerics.add_argument("--radius", type=float, help="fixed seed radius instead of the automatic one")
    numerics.add_argument("--max-points", dest="max_points", type=int)
    numerics.add_argument("--workers", type=int, default=1)

    output = shared.add_argument_group("output")
    output.add_argument("--out", help="write to this file instead of stdout")
    output.add_argument("--format", choices=["csv", "json"], default="csv")
    output.add_argument("--log-level", dest="log_level", type=str.upper, choices=LOG_LEVELS)

    helps = {
        "sectors": "Stokes sectors of a degree (or of a problem's potential)",
        "eig": "real eigenvalues in --range or complex ones in --box",
        "det": "spectral determinant at --mu",
        "trace": "real spectral locus curves",
        "qes": "QES points, spectral polynomial and equivalence report",
        "bethe": "roots of the QES factor from the Bethe system",
        "darboux": "Darboux transform L_J -> L_-J and its spectral check",
        "crossings": "level crossings of the QES branch",
        "reality": "reality check of the first eigenvalues",
    }
    commands = {name: sub.add_parser(name, parents=[shared], help=helps[name]) for name in COMMANDS}
    commands["sectors"].add_argument("--d", type=int, help="degree of the potential")
    commands["eig"].add_argument("--zeros", action="store_true", help="count eigenfunction zeros")
    commands["det"].add_argument("--mu", help="internal spectral parameter, e.g. 1 or 2+3i")
    commands["bethe"].add_argument("--branch", type=int, default=0, help="which QES point seeds the roots")
    commands["darboux"].add_argument("--count", type=int)
    commands["crossings"].add_argument("--bmin", type=float, required=True)
    commands["crossings"].add_argument("--kmax", type=int, required=True)
    commands["reality"].add_argument("--count", type=int, help="number of eigenvalues (default 8)")
    return parser


def _configure_logging(level: Optional[str]) -> None:
    try:
        level = level or get_settings().log_level
    except SpeclocError:
        level = "WARNING"
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def main(argv: Optional[List[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = build_parser().parse_args(argv)
    except SpeclocError as e:
        print(e.describe(), file=sys.stderr)
        return e.exit_code
    if args.command is None:
        build_parser().print_help(sys.stderr)
        return 1

    _configure_logging(args.log_level)
    exit_code, output, debug_state = run_command(vars(args), argv)
    if exit_code != 0:
        print(debug_state["error"], file=sys.stderr)
        return exit_code

    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(output, encoding="utf-8")
    else:
        sys.stdout.write(output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
