#!/usr/bin/env python3
"""Measure how index construction and detection scale with corpus size.

Builds indexes over doubling random-walk corpora and times (a) reference
index construction against an n log n model and (b) query-side indexing plus
detection against m log m + m log n.  Prints one row per size; the ratio
column should stay roughly flat if the implementation scales as intended.
Example::

    python scripts/scaling_study.py --csv scaling.csv
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
import time

import numpy as np

from obstra import Trajectory, build_index, detect


def walk_corpus(n_traj: int, n_pts: int, seed: int, prefix: str = "t"):
    """Random-walk trajectories with per-trajectory drift: smooth, varied,
    never stationary."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_traj):
        start = rng.uniform(-5000.0, 5000.0, 2)
        steps = rng.normal(0.0, 40.0, (n_pts - 1, 2)) + rng.uniform(-15, 15, 2)
        pts = np.vstack([start, start + np.cumsum(steps, axis=0)])
        out.append(Trajectory(f"{prefix}{i:04d}", pts))
    return out


def warm_up() -> None:
    """Trigger the jit compilations outside the timed region."""
    tiny = walk_corpus(4, 12, seed=0)
    detect(build_index(tiny), build_index(tiny, corpus_kind="query"))


def study_build(sizes, n_pts, seed):
    rows = []
    for n_traj in sizes:
        corpus = walk_corpus(n_traj, n_pts, seed)
        t0 = time.perf_counter()
        index = build_index(corpus)
        elapsed = time.perf_counter() - t0
        n = len(index)
        rows.append(("build", n, elapsed, elapsed / (n * math.log(n))))
    return rows


def study_query(sizes, n_pts, ref_traj, seed):
    ref = build_index(walk_corpus(ref_traj, n_pts, seed))
    n = len(ref)
    rows = []
    for m_traj in sizes:
        corpus = walk_corpus(m_traj, n_pts, seed + 1, prefix="q")
        t0 = time.perf_counter()
        qry = build_index(corpus, corpus_kind="query")
        detect(ref, qry)
        elapsed = time.perf_counter() - t0
        m = len(qry)
        model = m * math.log(m) + m * math.log(n)
        rows.append(("query", m, elapsed, elapsed / model))
    return rows


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--build-sizes", type=int, nargs="+",
                        default=[100, 200, 400],
                        help="reference corpus sizes, in trajectories")
    parser.add_argument("--query-sizes", type=int, nargs="+",
                        default=[10, 20, 40],
                        help="query corpus sizes, in trajectories")
    parser.add_argument("--points", type=int, default=105,
                        help="points per trajectory (105 -> 100 windows)")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--csv", default=None, help="also write rows here")
    args = parser.parse_args()

    warm_up()
    rows = study_build(args.build_sizes, args.points, args.seed)
    rows += study_query(args.query_sizes, args.points,
                        args.build_sizes[0], args.seed)

    print(f"{'phase':<6} {'windows':>8} {'seconds':>9} {'ratio':>12}")
    for phase, n, elapsed, ratio in rows:
        print(f"{phase:<6} {n:>8} {elapsed:>9.2f} {ratio:>12.3e}")

    for phase in ("build", "query"):
        ratios = [r[3] for r in rows if r[0] == phase]
        spread = max(ratios) / min(ratios)
        print(f"{phase} ratio spread: {spread:.2f}x "
              f"({'flat' if spread <= 4.0 else 'NOT flat'})")

    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fp:
            writer = csv.writer(fp)
            writer.writerow(["phase", "windows", "seconds", "ratio"])
            writer.writerows(rows)
        print(f"wrote {args.csv}", file=sys.stderr)


if __name__ == "__main__":
    main()
