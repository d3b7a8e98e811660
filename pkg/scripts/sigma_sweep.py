"""Maximum certifiable step size of gradient tracking over the two-node family.

Writes a CSV with one row per sigma (same schema as ``iqccert sweep``) and
prints the ratio to the closed-form bound next to each row.

    python scripts/sigma_sweep.py --out sweep.csv --step 0.05
"""
import argparse
import time

import numpy as np

from iqccert.stepsearch import format_sweep_csv, sweep_sigma


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lo", type=float, default=-0.95)
    ap.add_argument("--hi", type=float, default=0.95)
    ap.add_argument("--step", type=float, default=0.05)
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--eta-tol", type=float, default=None, help="bisection width (default 0.01/beta)")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="sigma_sweep.csv")
    args = ap.parse_args()

    count = int(np.floor((args.hi - args.lo) / args.step + 1e-9)) + 1
    grid = [round(args.lo + i * args.step, 12) + 0.0 for i in range(count)]
    t0 = time.perf_counter()
    rows = sweep_sigma(grid, args.beta, eta_tol=args.eta_tol, jobs=args.jobs)
    elapsed = time.perf_counter() - t0

    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_sweep_csv(rows))

    print(f"{'sigma':>7} {'eta_max':>10} {'bound':>10} {'ratio':>9}")
    for r in rows:
        ratio = r.eta_max / r.analytic_bound if r.status == "ok" else float("nan")
        print(f"{r.sigma:7.3f} {r.eta_max:10.5f} {r.analytic_bound:10.3e} {ratio:9.1f}  {r.status}")
    print(f"{len(rows)} rows in {elapsed:.1f}s -> {args.out}")


if __name__ == "__main__":
    main()
