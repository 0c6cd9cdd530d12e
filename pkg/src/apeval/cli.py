"""Command-line entry point: ``apeval <stage> --config FILE``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config, parse_bool_list, with_overrides
from .errors import ApevalError
from .pipeline import STAGES, run_stages


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="apeval", description="Authorship privacy evaluation.")
    p.add_argument("command", choices=[*STAGES, "all"])
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--providers", help="comma-separated provider ids to evaluate")
    p.add_argument("--dataset", help="restrict to one configured corpus")
    p.add_argument("--cycles", type=int, help="number of AM/AO cycles")
    p.add_argument("--with-metadata", dest="with_metadata",
                   help="comma-separated booleans, e.g. true,false")
    p.add_argument("--offline", action="store_true",
                   help="never touch the network; fail on cache misses")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        cfg = with_overrides(
            cfg,
            providers=[s.strip() for s in args.providers.split(",")] if args.providers else None,
            dataset=args.dataset,
            cycles=args.cycles,
            with_metadata=parse_bool_list(args.with_metadata) if args.with_metadata else None,
        )
        stages = list(STAGES) if args.command == "all" else [args.command]
        path = run_stages(cfg, stages, offline=args.offline, label=args.command)
    except ApevalError as exc:
        stage = getattr(exc, "stage", None)
        prefix = f"[{stage}] " if stage else ""
        print(f"apeval: {prefix}{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
