import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional

# ---------------------------------------------------
#  Project Root Setup
# ---------------------------------------------------
ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from app.commands import COMMANDS  # noqa: E402
from src.lbsdc.core.config import Config  # noqa: E402
from src.lbsdc.core.log_manager import log_mgr  # noqa: E402
from src.lbsdc.utils.safe_exec import EXIT_CONFIG, exit_code, safe_call  # noqa: E402

# command-line flag -> config key
FLAG_KEYS = {
    "phase": "phase",
    "n": "n",
    "dt": "dt",
    "scheme": "scheme",
    "nodes": "nodes",
    "adaptive": "adaptive",
    "eps": "eps",
    "eref": "eref",
    "out": "out",
    "max_iters": "max_iters",
    "amplitude": "amplitude",
    "jobs": "jobs",
    "workers": "workers",
    "bound_lambda": "bound_lambda",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lb-sdc",
        description="Landau-Brazovskii relaxations with convex splitting and (adaptive) SDC.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value run configuration")
    common.add_argument("--phase", help="lamellar, cylindrical, a15, bcc, fcc, gyr or manufactured")
    common.add_argument("--n", type=int, help="grid points per axis")
    common.add_argument("--dt", type=float, help="time step")
    common.add_argument("--scheme", help="M,K or cs")
    common.add_argument("--nodes", choices=("legendre", "chebyshev"))
    common.add_argument("--adaptive", action=argparse.BooleanOptionalAction, default=None, help="ASDC on or off")
    common.add_argument("--eps", type=float, help="stop tolerance")
    common.add_argument("--eref", type=float, help="reference energy for the gap rule")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--max-iters", dest="max_iters", type=int)
    common.add_argument("--amplitude", type=float, help="3D seed amplitude")
    common.add_argument("--jobs", type=int, help="worker threads for the convergence study")
    common.add_argument("--workers", type=int, help="FFT threads")
    common.add_argument("--bound-lambda", dest="bound_lambda", type=float, help="lambda for the L-infinity bound")

    sub.add_parser("converge", parents=[common], help="temporal convergence study (manufactured solution)")
    sub.add_parser("relax", parents=[common], help="relax a phase seed to a stationary state")
    sub.add_parser("energy-ref", parents=[common], help="reference energy from an N / 2N refinement")
    return parser


def overrides_from(args: argparse.Namespace) -> Dict[str, object]:
    out: Dict[str, object] = {"experiment": args.command}
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            out[key] = value
    return out


def load_config(args: argparse.Namespace):
    base = {"phase": "manufactured"} if args.command == "converge" else None
    cfg = Config(args.config, overrides_from(args), base=base)
    return cfg, cfg.to_run_config()


def run_command(command: str, cfg: Config, run) -> object:
    """Prepare the output directory, then run the command with its events copied there."""
    run.out.mkdir(parents=True, exist_ok=True)
    cfg.save(run.out / "run.cfg")
    with log_mgr.tee(run.out / "events.jsonl"):
        return COMMANDS[command](run)


def _print_status(level: str, message: str) -> None:
    print(f"[{level}] {message}", file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    log_mgr.set_status_handler(_print_status)

    ok, msg, payload = safe_call("config", load_config, args)
    if not ok:
        print(msg, file=sys.stderr)
        return EXIT_CONFIG
    cfg, run = payload

    ok, msg, payload = safe_call(args.command, run_command, args.command, cfg, run)
    if not ok:
        print(msg, file=sys.stderr)
    return exit_code(ok, payload)


if __name__ == "__main__":
    sys.exit(main())
