"""``relboltz`` command line: simulate, estimate, verify, dump-path."""
from __future__ import annotations

import argparse
import sys

from ..errors import ConfigError, RelBoltzError
from .config import shipped_scenarios
from .run import run_dump_path, run_estimate, run_scenario, run_simulate

_COMMANDS = {
    "simulate": (run_simulate, "forward paths from the [simulate] section"),
    "estimate": (run_estimate, "causal (past-directed) estimate at the [estimate] point"),
    "verify": (run_scenario, "run the scenario's [[checks]]; exit 0 iff all pass"),
    "dump-path": (run_dump_path, "one forward trajectory as a path CSV"),
}


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _pos_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    ap = argparse.ArgumentParser(prog="relboltz", description=__doc__)
    ap.add_argument("--list", action="store_true", help="list the shipped scenarios and exit")
    sub = ap.add_subparsers(dest="command")
    for name, (_, help_) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="TOML file or shipped scenario name")
        p.add_argument("--seed", type=_nonneg_int, default=None, help="override the config seed")
        p.add_argument("--workers", type=_pos_int, default=None, help="worker threads (results do not depend on it)")
        p.add_argument("--out-dir", default=".", help="directory for JSON and CSV output")
    return ap


def _report(command, res):
    s = res.summary
    if command == "verify":
        for c in s["checks"]:
            tag = "PASS" if c["passed"] else "FAIL"
            extra = f"  ({c['error']})" if "error" in c else ""
            print(f"{tag} {c['name']}{extra}")
        print(f"{s['scenario']}: {s['n_passed']}/{s['n_checks']} checks passed")
    elif command == "estimate":
        print(f"{s['scenario']}: estimate {s['estimate']:.6g} +- {s['stderr']:.2g} "
              f"(field value {s['field_value']:.6g}, {s['n_paths']} paths)")
    elif command == "simulate":
        print(f"{s['scenario']}: {s['n_paths']} paths, mean jumps {s['mean_jumps']:.3g}, "
              f"aborted {s['n_aborted']}")
    else:
        print(f"{s['scenario']}: {s['n_records']} records, {s['n_jumps']} jumps")
    for f in res.files:
        print(f"wrote {f}")


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.list:
        print("\n".join(shipped_scenarios()))
        return 0
    if args.command is None:
        ap.print_help()
        return 2
    fn = _COMMANDS[args.command][0]
    try:
        res = fn(args.config, seed=args.seed, workers=args.workers, out_dir=args.out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RelBoltzError as exc:
        print(f"{args.config}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    _report(args.command, res)
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
