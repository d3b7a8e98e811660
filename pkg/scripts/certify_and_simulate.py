"""Certify one step size, then run gradient tracking and check every certified inequality.

    python scripts/certify_and_simulate.py --sigma 0.5 --eta 1.0 --steps 10000
"""
import argparse

import numpy as np

from iqccert.certify import problem_for
from iqccert.model import dgt_realization, two_node_w
from iqccert.sdpfeas import solve_feasibility
from iqccert.simulate import diagnostics, make_objective, reference_minimum, run_dgt


def objectives(n, rng):
    c = rng.standard_normal(n) * 2
    w = np.where(np.arange(n) % 2 == 0, 1.5, -1.5)
    return {
        "quadratic": make_objective("quadratic", n, a=rng.uniform(0.2, 1.0, n), c=c),
        "huber": make_objective("huber", n, delta=rng.uniform(0.2, 2.0, n), c=c),
        "logistic": make_objective("logistic", n, w=w, c=c),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sigma", type=float, default=0.5)
    ap.add_argument("--eta", type=float, default=1.0)
    ap.add_argument("--steps", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    w = two_node_w(args.sigma)
    lmi, _ = problem_for("dgt", w, args.eta, 1.0)
    res = solve_feasibility(lmi)
    print(f"LMI at sigma={args.sigma} eta={args.eta}: {res.status} (t={res.objective_t:.3e}, "
          f"{res.iterations} iterations)")
    if not res.feasible:
        return
    cert = res.certificate
    print(f"  lambda={cert.lambdas[0]:.4g}  eig(P) in [{cert.margins['min_eig_P']:.3g}, "
          f"{np.linalg.eigvalsh(cert.p)[-1]:.3g}]")

    rng = np.random.default_rng(args.seed)
    r, _ = dgt_realization(w, args.eta, 1.0)
    for name, obj in objectives(2, rng).items():
        x_star, f_star = reference_minimum(obj)
        x0 = x_star + 5 * rng.standard_normal(2)
        traj = run_dgt(obj, w, args.eta, x0, args.steps)
        rep = diagnostics(traj, obj, r, cert, minimum=(x_star, f_star))
        verdict = "holds" if rep.holds else "FAILS: " + ",".join(rep.failures())
        print(f"{name:>9}: diss {rep.max_dissipation_residual:9.2e}  supply {rep.max_supplyrate_violation:9.2e}  "
              f"iqc {rep.min_iqc_value:9.2e}  max ratio {rep.max_bound_ratio:.3e}  V0 {rep.v0:.3e}  {verdict}")


if __name__ == "__main__":
    main()
