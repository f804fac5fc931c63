#!/usr/bin/env python3
"""Extract 1880-1985 from a year/value table into `label,value` rows."""

import argparse
import csv
import sys


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("source", help="CSV with a header row")
    parser.add_argument("--year-column", default="Year")
    parser.add_argument("--value-column", default="Value")
    parser.add_argument("--first", type=int, default=1880)
    parser.add_argument("--last", type=int, default=1985)
    args = parser.parse_args()

    rows = {}
    with open(args.source, newline="") as fh:
        for rec in csv.DictReader(fh):
            year = int(float(rec[args.year_column]))
            if args.first <= year <= args.last:
                rows[year] = float(rec[args.value_column])

    missing = [y for y in range(args.first, args.last + 1) if y not in rows]
    if missing:
        print(f"missing years: {missing}", file=sys.stderr)
        return 1

    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["label", "value"])
    for year in range(args.first, args.last + 1):
        out.writerow([year, repr(rows[year])])
    return 0


if __name__ == "__main__":
    sys.exit(main())
