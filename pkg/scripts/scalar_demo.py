#!/usr/bin/env python3
"""Print the four-step trapezoid contraction table and write it to CSV."""
import argparse
from pathlib import Path

from credalfilter.scenarios import format_scalar_table, scalar_demo, write_scalar_csv


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--output", type=Path, default=Path("runs/scalar_demo.csv"))
    args = p.parse_args()
    rows = scalar_demo()
    print(format_scalar_table(rows))
    args.output.parent.mkdir(parents=True, exist_ok=True)
    write_scalar_csv(rows, args.output)
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
