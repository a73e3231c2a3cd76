"""Stand-alone re-computation of ``summary.csv`` from the raw per-seed records.

Uses only the standard library and none of the writer's helpers, so it can
serve as an independent check of the emitted aggregates::

    python -m xpolab.harness.reader OUTPUT_DIR
"""

from __future__ import annotations

import csv
import json
import math
import sys
from pathlib import Path


def load_regrets(out_dir: Path) -> list[list[float]]:
    runs = []
    for f in sorted(Path(out_dir).glob("seed_*/run.jsonl")):
        with open(f) as fh:
            next(fh)  # header
            runs.append([json.loads(line)["regret"] for line in fh])
    return runs


def recompute(out_dir: Path) -> list[list[float]]:
    runs = load_regrets(out_dir)
    table = []
    best = [r[:] for r in runs]
    for r in best:
        for t in range(1, len(r)):
            r[t] = min(r[t], r[t - 1])
    for t in range(len(runs[0])):
        col = sorted(r[t] for r in runs)
        n = len(col)
        mean = math.fsum(col) / n
        median = col[n // 2] if n % 2 else (col[n // 2 - 1] + col[n // 2]) / 2.0
        qs = []
        for q in (0.1, 0.9):
            h = (n - 1) * q
            k = math.floor(h)
            qs.append(col[-1] if k + 1 >= n else col[k] + (h - k) * (col[k + 1] - col[k]))
        table.append([t, mean, median, qs[0], qs[1], math.fsum(b[t] for b in best) / n])
    return table


def read_summary(out_dir: Path) -> list[list[float]]:
    with open(Path(out_dir) / "summary.csv") as fh:
        rows = list(csv.reader(fh))[1:]
    return [[int(r[0])] + [float(x) for x in r[1:]] for r in rows]


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: python -m xpolab.harness.reader OUTPUT_DIR", file=sys.stderr)
        return 1
    ok = recompute(Path(argv[0])) == read_summary(Path(argv[0]))
    print("summary matches" if ok else "summary MISMATCH")
    return 0 if ok else 2


if __name__ == "__main__":
    sys.exit(main())
