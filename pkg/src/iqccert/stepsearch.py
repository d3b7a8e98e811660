"""Largest certifiable step size by bisection on LMI feasibility, and sigma sweeps."""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .certify import FEAS_TOL, analytic_bound_qu_li, problem_for
from .errors import SearchError
from .model import two_node_w
from .sdpfeas import FEASIBLE, INDETERMINATE, ITER_CAP, solve_feasibility

log = logging.getLogger(__name__)

MAX_HALVINGS = 40
INTERVAL_CHECKS = 8
SWEEP_HEADER = "sigma,eta_max,eta_lo,eta_hi,analytic_bound,status"


@dataclass
class StepSearchResult:
    eta_max: float
    certificate_at: float
    bracket: tuple
    tolerance: float
    verdict_trace: list = field(default_factory=list)
    certificate: object = None


def _verdict(model, w, eta, beta, tol, iter_cap):
    lmi, _ = problem_for(model, w, eta, beta)
    return solve_feasibility(lmi, tol=tol, iter_cap=iter_cap)


def max_step_size(w, beta, eta_tol=None, eta_cap=None, model="dgt", tol=FEAS_TOL,
                  iter_cap=ITER_CAP, max_halvings=MAX_HALVINGS, check_interval=True):
    """Bisect on ``eta`` for the largest step size with a feasible LMI.

    The search halves ``eta`` from ``eta_cap`` until the LMI becomes feasible,
    then bisects the bracket down to width ``eta_tol``.  Afterwards eight
    step sizes below ``eta_lo`` are re-tested; an infeasible one means the
    feasible set is not an interval and is raised as :class:`SearchError`.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    eta_tol = 1e-2 / beta if eta_tol is None else eta_tol
    eta_cap = 10.0 / beta if eta_cap is None else eta_cap
    if eta_tol <= 0 or eta_cap <= 0:
        raise ValueError("eta_tol and eta_cap must be positive")

    trace = []

    def check(eta):
        res = _verdict(model, w, eta, beta, tol, iter_cap)
        trace.append((eta, res.status))
        log.debug("eta=%.6g -> %s (t=%.3e)", eta, res.status, res.objective_t)
        if res.status == INDETERMINATE:
            raise SearchError(f"solver indeterminate at eta={eta:.6g}: {res.reason}", eta=eta,
                              diagnostics={"t": res.objective_t, "gap": res.gap,
                                           "iterations": res.iterations})
        return res

    lo = hi = None
    cert = None
    for k in range(max_halvings + 1):
        eta = eta_cap / 2.0 ** k
        res = check(eta)
        if res.status == FEASIBLE:
            lo, cert = eta, res.certificate
            break
        hi = eta
    if lo is None:
        raise SearchError(f"no certifiable step size found down to eta={eta_cap / 2.0 ** max_halvings:.3g}",
                          eta=eta_cap / 2.0 ** max_halvings)
    if hi is None:
        # feasible at the cap itself; nothing above was tested
        return StepSearchResult(lo, lo, (lo, math.inf), eta_tol, trace, cert)

    while hi - lo > eta_tol:
        mid = 0.5 * (lo + hi)
        res = check(mid)
        if res.status == FEASIBLE:
            lo, cert = mid, res.certificate
        else:
            hi = mid

    if check_interval:
        start = eta_tol if eta_tol < lo else lo / INTERVAL_CHECKS
        for eta in np.linspace(start, lo, INTERVAL_CHECKS):
            if check(float(eta)).status != FEASIBLE:
                raise SearchError(
                    f"feasible set in eta is not an interval: eta={eta:.6g} infeasible below eta_lo={lo:.6g}",
                    eta=float(eta))

    return StepSearchResult(lo, lo, (lo, hi), eta_tol, trace, cert)


@dataclass
class SweepRow:
    sigma: float
    eta_max: float
    eta_lo: float
    eta_hi: float
    analytic_bound: float
    status: str
    error: str = ""

    def csv_line(self):
        vals = [self.sigma, self.eta_max, self.eta_lo, self.eta_hi, self.analytic_bound]
        # "+ 0.0" folds a grid point of -0.0 into 0
        return ",".join(f"{v + 0.0:.12g}" for v in vals) + f",{self.status}"


def _sweep_row(args):
    sigma, beta, eta_tol, kwargs = args
    bound = analytic_bound_qu_li(abs(sigma), beta)
    try:
        res = max_step_size(two_node_w(sigma), beta, eta_tol=eta_tol, **kwargs)
    except Exception as exc:  # noqa: BLE001 - a failed row must not stop the sweep
        log.warning("sigma=%g failed: %s", sigma, exc)
        return SweepRow(sigma, math.nan, math.nan, math.nan, bound, "failed", str(exc))
    lo, hi = res.bracket
    return SweepRow(sigma, res.eta_max, lo, hi, bound, "ok")


def sweep_sigma(sigma_grid, beta, eta_tol=None, jobs=1, **kwargs):
    """Maximum step size for the two-node family at every ``sigma`` in order."""
    tasks = [(float(s), beta, eta_tol, kwargs) for s in sigma_grid]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_row, tasks))
    return [_sweep_row(t) for t in tasks]


def format_sweep_csv(rows):
    return SWEEP_HEADER + "\n" + "".join(r.csv_line() + "\n" for r in rows)
