"""Command line: ``vmbc {simulate,sweep,meanfield,jump,couple,validate}``.

Exit status is 0 on success, 1 on a usage or configuration error and 2 when
a checked property fails (coupling order or kernel validation).
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from datetime import datetime, timezone

from . import __version__, experiments
from .config import ConfigError, list_presets, load

COMMANDS = {
    "simulate": lambda cfg, par: experiments.simulate(cfg, par),
    "sweep": lambda cfg, par: experiments.sweep(cfg, par),
    "meanfield": lambda cfg, par: experiments.meanfield_table(cfg, par),
    "jump": lambda cfg, par: experiments.jump_table(cfg),
    "couple": lambda cfg, par: experiments.couple_table(cfg, par),
    "validate": lambda cfg, par: experiments.validate_table(cfg),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vmbc", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="path to a key = value config file")
    src.add_argument("--preset", help="shipped preset name (see --list-presets)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
    p.add_argument("--replicas", type=int, help="replicas per grid point (overrides run.replicas)")
    p.add_argument("--parallel", type=int, default=None, help="worker processes (default: all cores)")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--no-timestamp", action="store_true", help="omit the leading timestamp comment")
    return p


def render_csv(table: experiments.Table, timestamp: bool) -> str:
    buf = io.StringIO()
    if timestamp:
        now = datetime.now(timezone.utc).isoformat(timespec="seconds")
        buf.write(f"# generated {now} by vmbc {__version__}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.header)
    w.writerows(table.rows)
    return buf.getvalue()


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    if "--list-presets" in argv:
        print("\n".join(list_presets()))
        return 0
    args = build_parser().parse_args(argv)
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            print(f"error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return 1
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["run.seed"] = str(args.seed)
    if args.replicas is not None:
        overrides["run.replicas"] = str(args.replicas)
    try:
        cfg = load(args.config, args.preset, overrides)
        table = COMMANDS[args.command](cfg, args.parallel)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = render_csv(table, not args.no_timestamp)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if table.failed:
        print(f"{args.command}: property check failed", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
