#!/usr/bin/env python3
"""Convert the UCI Airfoil Self-Noise file to the CSV layout localcp reads.

The UCI distribution (airfoil_self_noise.dat) is whitespace separated with no
header. This writes data/airfoil.csv with named columns; the target column is
sound_pressure.

Usage: prepare_airfoil.py airfoil_self_noise.dat [data/airfoil.csv]
"""

import csv
import sys
from pathlib import Path

COLUMNS = ["frequency", "angle", "chord", "velocity", "thickness", "sound_pressure"]


def main():
    if len(sys.argv) not in (2, 3):
        sys.exit(__doc__)
    src = Path(sys.argv[1])
    dst = Path(sys.argv[2]) if len(sys.argv) == 3 else Path(__file__).resolve().parent.parent / "data" / "airfoil.csv"
    rows = [line.split() for line in src.read_text().splitlines() if line.strip()]
    bad = [i + 1 for i, r in enumerate(rows) if len(r) != len(COLUMNS)]
    if bad:
        sys.exit(f"{src}: lines {bad[:5]} do not have {len(COLUMNS)} fields")
    if len(rows) != 1503:
        print(f"warning: expected 1503 rows, found {len(rows)}", file=sys.stderr)
    dst.parent.mkdir(parents=True, exist_ok=True)
    with dst.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(COLUMNS)
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {dst}")


if __name__ == "__main__":
    main()
