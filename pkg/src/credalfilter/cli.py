"""Command-line entry point: ``scalar-demo``, ``track`` and ``compare``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError
from .scenarios import (
    FILTERS,
    VARIANTS,
    ScenarioConfig,
    compare_report,
    format_report,
    format_scalar_table,
    scalar_demo,
    track2d_run,
    write_scalar_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_FILTER = 0, 2, 3


def build_parser():
    p = argparse.ArgumentParser(prog="credalfilter")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sd = sub.add_parser("scalar-demo", help="width contraction on the four-step trapezoid sequence")
    sd.add_argument("--output", type=Path, default=None, help="CSV path (default: print only)")

    tr = sub.add_parser("track", help="run the 2-D tracking scenario")
    tr.add_argument("--config", type=Path, required=True)
    tr.add_argument("--filter", choices=FILTERS, default=None)
    tr.add_argument("--variant", choices=VARIANTS, default=None)
    tr.add_argument("--seed", type=int, default=None)
    tr.add_argument("--output-dir", default=None)

    cp = sub.add_parser("compare", help="side-by-side diagnostics of two runs")
    cp.add_argument("run_a", type=Path)
    cp.add_argument("run_b", type=Path)
    cp.add_argument("--json", action="store_true", help="emit JSON instead of a markdown table")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "scalar-demo":
            rows = scalar_demo()
            print(format_scalar_table(rows))
            if args.output:
                args.output.parent.mkdir(parents=True, exist_ok=True)
                write_scalar_csv(rows, args.output)
            return EXIT_OK
        if args.command == "track":
            cfg = ScenarioConfig.load(args.config, filter=args.filter, variant=args.variant,
                                      seed=args.seed, output_dir=args.output_dir)
            result = track2d_run(cfg)
            s = result.summary
            print(f"{cfg.filter}/{cfg.variant} seed={cfg.seed}: {s['status']}, "
                  f"{s['steps_completed']} steps, final position error {s['final_pos_error']}")
            print(f"wrote {cfg.output_dir}/steps.csv, summary.json, switches.csv")
            return EXIT_FILTER if result.failure else EXIT_OK
        report = compare_report(args.run_a, args.run_b)
        print(json.dumps(report, indent=2) if args.json else format_report(report))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
