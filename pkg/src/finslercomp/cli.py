"""Command line: ``finslercomp run <config>`` and ``finslercomp list``."""
from __future__ import annotations

import argparse
import os
import sys

from .errors import CheckFailure, ConfigError

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="finslercomp", description="Finsler comparison-geometry verification scenarios.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a scenario file (or the name of a bundled scenario)")
    r.add_argument("config")
    r.add_argument("--out-dir", default="reports")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--tolerance-scale", type=float, default=1.0)
    ls = sub.add_parser("list", help="list bundled scenarios")
    ls.add_argument("--check", default=None, help="only scenarios running this check")
    return ap


def _resolve(config: str) -> str:
    if os.path.exists(config):
        return config
    from .scenarios import bundled_dir

    cand = os.path.join(bundled_dir(), f"{config}.toml")
    return cand if os.path.exists(cand) else config


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.cmd == "list":
        from .scenarios import list_scenarios

        for sid, desc in list_scenarios(args.check):
            print(f"{sid:24s} {desc}")
        return EXIT_PASS
    if args.workers < 1 or args.tolerance_scale <= 0:
        print("error: --workers must be >= 1 and --tolerance-scale > 0", file=sys.stderr)
        return EXIT_CONFIG
    from .scenarios import run

    try:
        result = run(_resolve(args.config), args.out_dir, args.workers, args.tolerance_scale, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckFailure as exc:
        print(f"FAIL {exc}")
        return EXIT_FAIL
    n = len(result.report["rows"])
    print(f"PASS {result.scenario.id}: {n} rows")
    return EXIT_PASS


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
