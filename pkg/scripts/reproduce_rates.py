"""Convergence rates of the Picard scheme on the built-in experiments.

Writes one error-report CSV and one trajectory CSV per case into --out and
prints a summary table of E(n) and fitted slopes.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from mkv_picard import benchmark

CASES = ("gaussian_1d", "kou_1d", "multidim_2", "multidim_5", "stable_init_2")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="results")
    parser.add_argument("--cases", nargs="+", default=list(CASES))
    parser.add_argument("--n", type=int, nargs="+", default=list(benchmark.DEFAULT_N))
    parser.add_argument("--timings", action="store_true")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = "case".ljust(16) + "".join(f"E({n})".rjust(12) for n in args.n) + "slope".rjust(10)
    print(header)
    for cid in args.cases:
        rep = benchmark.error_report(benchmark.case_from_id(cid), args.n)
        (out / f"{cid}.csv").write_text(rep.to_csv(timings=args.timings))
        (out / f"{cid}_trajectory.csv").write_text(rep.trajectory_csv())
        print(cid.ljust(16) + "".join(f"{e:12.3e}" for e in rep.errors) + f"{rep.slope:10.4f}")


if __name__ == "__main__":
    main()
