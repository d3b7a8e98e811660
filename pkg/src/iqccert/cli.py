"""Command-line interface: ``iqccert {certify,max-step,sweep,simulate,verify-certificate}``.

Exit codes: 0 success / certified, 1 negative result (infeasible, failed
check), 2 usage, input or solver error.  Every run prints exactly one
summary line on stdout.
"""
import argparse
import logging
import math
import os
import sys

import numpy as np

from . import certify as cf
from . import model as md
from . import sdpfeas, simulate, stepsearch
from .errors import DivergenceError, IqcCertError

OK, NEGATIVE, ERROR = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(v):
    return f"{v:.12g}"


def _emit(line):
    print(line, flush=True)


def _mixing_from_args(args):
    sources = [s for s in ("sigma", "w_file", "adjacency") if getattr(args, s, None) is not None]
    if args.model == "centralized":
        if sources:
            raise UsageError("--model centralized takes no mixing matrix")
        return None
    if len(sources) != 1:
        raise UsageError("give exactly one of --sigma, --w-file, --adjacency")
    if args.sigma is not None:
        return md.two_node_w(args.sigma)
    if args.w_file is not None:
        return md.load_mixing_csv(args.w_file)
    return md.load_adjacency_csv(args.adjacency)


def _add_model_args(p, eta=True, eta_required=True):
    p.add_argument("--model", choices=("dgt", "centralized"), default="dgt",
                   help="algorithm to analyse (default: dgt)")
    p.add_argument("--sigma", type=float, help="two-node mixing matrix parameter in (-1, 1)")
    p.add_argument("--w-file", help="CSV file with an n x n doubly stochastic mixing matrix")
    p.add_argument("--adjacency", help="CSV 0/1 adjacency matrix; Metropolis weights are used")
    p.add_argument("--beta", type=float, default=None, help="smoothness constant (default: 1)")
    if eta:
        p.add_argument("--eta", type=float, required=eta_required, help="step size")


def _add_solver_args(p):
    p.add_argument("--feas-tol", type=float, default=cf.FEAS_TOL,
                   help=f"LMI feasibility tolerance on the slack t (default: {cf.FEAS_TOL:g})")
    p.add_argument("--psd-tol", type=float, default=cf.PSD_TOL,
                   help=f"tolerance for P >= 0 in verification (default: {cf.PSD_TOL:g})")
    p.add_argument("--iter-cap", type=int, default=sdpfeas.ITER_CAP,
                   help=f"interior-point iteration cap (default: {sdpfeas.ITER_CAP})")


def _beta(args, default=1.0):
    beta = default if args.beta is None else args.beta
    if not beta > 0:
        raise UsageError("--beta must be positive")
    return beta


def cmd_certify(args):
    beta = _beta(args)
    w = _mixing_from_args(args)
    lmi, _ = cf.problem_for(args.model, w, args.eta, beta)
    res = sdpfeas.solve_feasibility(lmi, tol=args.feas_tol, iter_cap=args.iter_cap, psd_tol=args.psd_tol)
    head = f"certify status={res.status} eta={_fmt(args.eta)} beta={_fmt(beta)} t={res.objective_t:.6e}"
    if res.feasible:
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(res.certificate.to_json())
        m = res.certificate.margins
        _emit(f"{head} min_eig_P={m['min_eig_P']:.6e} max_eig_lhs={m['max_eig_lhs']:.6e}")
        return OK
    if res.status == sdpfeas.INFEASIBLE:
        _emit(f"{head} margin={res.best_margin:.6e} gap={res.gap:.3e}")
        return NEGATIVE
    _emit(f"{head} reason={res.reason!r}")
    return ERROR


def cmd_max_step(args):
    beta = _beta(args)
    w = _mixing_from_args(args)
    try:
        res = stepsearch.max_step_size(w, beta, eta_tol=args.tol, eta_cap=args.eta_cap, model=args.model,
                                       tol=args.feas_tol, iter_cap=args.iter_cap)
    except IqcCertError as exc:
        code = NEGATIVE if "no certifiable step size" in str(exc) else ERROR
        _emit(f"max-step status=failed error={str(exc)!r}")
        return code
    if args.out and res.certificate is not None:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(res.certificate.to_json())
    lo, hi = res.bracket
    _emit(f"eta_max={_fmt(res.eta_max)} bracket=[{_fmt(lo)},{_fmt(hi)}]")
    return OK


def parse_grid(text):
    """``lo:hi:step`` (inclusive) or a comma-separated list of sigma values."""
    text = text.strip()
    if not text:
        raise UsageError("empty sigma grid")
    try:
        if ":" in text:
            parts = [float(v) for v in text.split(":")]
            if len(parts) != 3:
                raise UsageError("sigma grid must be lo:hi:step")
            lo, hi, step = parts
            if step <= 0:
                raise UsageError("sigma grid step must be positive")
            count = math.floor((hi - lo) / step + 1e-9) + 1
            grid = [round(lo + i * step, 12) + 0.0 for i in range(max(count, 0))]
        else:
            grid = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse sigma grid {text!r}: {exc}") from None
    if not grid:
        raise UsageError(f"sigma grid {text!r} is empty")
    bad = [s for s in grid if not -1.0 < s < 1.0]
    if bad:
        raise UsageError(f"sigma values must lie in (-1, 1): {bad[0]}")
    return grid


def _default_jobs():
    try:
        return max(1, int(os.environ.get("IQCCERT_JOBS", "1")))
    except ValueError:
        return 1


def cmd_sweep(args):
    beta = _beta(args)
    grid = parse_grid(args.sigma_grid)
    rows = stepsearch.sweep_sigma(grid, beta, eta_tol=args.tol, jobs=args.jobs,
                                  tol=args.feas_tol, iter_cap=args.iter_cap)
    text = stepsearch.format_sweep_csv(rows)
    failed = sum(r.status != "ok" for r in rows)
    dominated = sum(r.status == "ok" and r.eta_max >= r.analytic_bound for r in rows)
    summary = f"sweep rows={len(rows)} ok={len(rows) - failed} failed={failed} dominates_bound={dominated}"
    if args.out == "-":
        sys.stdout.write(text)
        print(summary, file=sys.stderr)
    else:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        _emit(summary)
    return OK if failed == 0 else NEGATIVE


def _load_certificate(path):
    with open(path, encoding="utf-8") as fh:
        return cf.Certificate.from_json(fh.read())


def cmd_simulate(args):
    beta = _beta(args)
    if args.model != "dgt":
        raise UsageError("simulate supports only --model dgt")
    w = _mixing_from_args(args)
    with open(args.objective, encoding="utf-8") as fh:
        obj = simulate.objective_from_json(fh.read())
    if obj.n != w.n:
        raise UsageError(f"objective has {obj.n} agents but W has {w.n}")
    if obj.beta > beta * (1 + 1e-12):
        raise UsageError(f"objective is {obj.beta:g}-smooth, larger than --beta {beta:g}")
    if args.x0 is not None:
        x0 = np.array([float(v) for v in args.x0.split(",")]).reshape(obj.n, -1)
        if x0.shape[1] != obj.d:
            raise UsageError(f"--x0 needs {obj.n * obj.d} values")
    else:
        rng = np.random.default_rng(args.seed)
        x0 = np.mean(obj.params["c"], axis=0) + rng.standard_normal((obj.n, obj.d))

    cert = None
    if args.certificate:
        cert = _load_certificate(args.certificate)
        if not cert.matches(cf.w_digest(w.w), args.eta, beta):
            _emit("simulate status=error error='certificate does not match parameters'")
            return ERROR

    try:
        traj = simulate.run_dgt(obj, w, args.eta, x0, args.steps)
    except DivergenceError as exc:
        _emit(f"simulate status=diverged step={exc.step} bound_claim=none")
        return NEGATIVE

    cons = simulate.conservation_error(traj, obj)
    convex = simulate.convexity_violations(obj, np.random.default_rng(args.seed))
    cons_ok = cons <= 1e-10 * max(1, args.steps)
    convex_ok = max(convex.values()) <= 1e-9
    report = None
    if cert is None:
        line = (f"simulate status={'ok' if cons_ok and convex_ok else 'fail'} steps={args.steps} "
                f"conservation={cons:.3e} convexity={max(convex.values()):.3e}")
        code = OK if cons_ok and convex_ok else NEGATIVE
    else:
        lmi, _ = cf.problem_for("dgt", w, args.eta, beta)
        vr = cf.verify_certificate(lmi, cert, tol=args.feas_tol, psd_tol=args.psd_tol)
        r, _ = md.dgt_realization(w, args.eta, beta)
        report = simulate.diagnostics(traj, obj, r, cert)
        fails = report.failures()
        if not vr.passed:
            fails.insert(0, "certificate")
        if not cons_ok:
            fails.append("conservation")
        ok = not fails
        line = (f"simulate status={'ok' if ok else 'fail'} steps={args.steps} "
                f"max_dissipation_residual={report.max_dissipation_residual:.3e} "
                f"max_supplyrate_violation={report.max_supplyrate_violation:.3e} "
                f"min_iqc_value={report.min_iqc_value:.3e} "
                f"bound_ratio_final={report.bound_ratio_series[-1, 1]:.6e} "
                f"bound_ratio_max={report.max_bound_ratio:.6e} v0={report.v0:.6e}"
                + (f" failed={','.join(fails)}" if fails else ""))
        code = OK if ok else NEGATIVE
    if args.dump:
        with open(args.dump, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(simulate.trajectory_csv(traj, report))
    _emit(line)
    return code


def cmd_verify(args):
    cert = _load_certificate(args.certificate)
    model = args.model if args.model_given else cert.model
    args.model = model
    beta = cert.beta if args.beta is None else args.beta
    eta = cert.eta if args.eta is None else args.eta
    w = _mixing_from_args(args)
    digest = cf.w_digest(np.ones((1, 1)) if w is None else w.w)
    if not cert.matches(digest, eta, beta):
        _emit("verify status=error error='certificate does not match parameters'")
        return ERROR
    lmi, _ = cf.problem_for(model, w, eta, beta)
    if cert.p.shape != (lmi.state_dim, lmi.state_dim):
        _emit(f"verify status=error error='P is {cert.p.shape[0]}x{cert.p.shape[1]}, "
              f"expected order {lmi.state_dim}'")
        return ERROR
    report = cf.verify_certificate(lmi, cert, tol=args.feas_tol, psd_tol=args.psd_tol)
    _emit("verify " + report.summary())
    return OK if report.passed else NEGATIVE


def build_parser():
    parser = _Parser(prog="iqccert", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("certify", help="solve the certification LMI at one step size")
    _add_model_args(p)
    _add_solver_args(p)
    p.add_argument("--out", help="write the certificate JSON here when feasible")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("max-step", help="bisection for the largest certifiable step size")
    _add_model_args(p, eta=False)
    _add_solver_args(p)
    p.add_argument("--tol", type=float, default=None, help="bisection width (default: 0.01/beta)")
    p.add_argument("--eta-cap", type=float, default=None, help="initial step size (default: 10/beta)")
    p.add_argument("--out", help="write the certificate at eta_max here")
    p.set_defaults(func=cmd_max_step)

    p = sub.add_parser("sweep", help="maximum step size over the two-node family (CSV)")
    p.add_argument("--sigma-grid", required=True,
                   help="lo:hi:step (inclusive) or comma list; use --sigma-grid=-0.9:0.9:0.1 for negatives")
    p.add_argument("--beta", type=float, default=None, help="smoothness constant (default: 1)")
    p.add_argument("--tol", type=float, default=None, help="bisection width (default: 0.01/beta)")
    p.add_argument("--out", required=True, help="output CSV path, or - for stdout")
    p.add_argument("--jobs", type=int, default=_default_jobs(),
                   help="parallel rows (default: $IQCCERT_JOBS or 1)")
    _add_solver_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="run gradient tracking and check certified inequalities")
    _add_model_args(p)
    _add_solver_args(p)
    p.add_argument("--objective", required=True, help="objective JSON {kind, n, d, params}")
    p.add_argument("--steps", type=int, default=10_000, help="iterations K (default: 10000)")
    p.add_argument("--x0", help="comma-separated initial iterate (agent-major)")
    p.add_argument("--seed", type=int, default=0, help="seed for x0 and spot checks (default: 0)")
    p.add_argument("--certificate", help="certificate JSON to cross-check along the trajectory")
    p.add_argument("--dump", help="write the full trajectory CSV here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify-certificate", help="re-check a stored certificate")
    p.add_argument("certificate", help="certificate JSON file")
    _add_model_args(p, eta_required=False)
    _add_solver_args(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required")
        if args.command == "verify-certificate":
            raw = sys.argv[1:] if argv is None else argv
            args.model_given = any(a == "--model" or a.startswith("--model=") for a in raw)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        return args.func(args)
    except UsageError as exc:
        _emit(f"error usage: {exc}")
        return ERROR
    except (IqcCertError, OSError) as exc:
        _emit(f"error: {exc}")
        return ERROR


if __name__ == "__main__":
    sys.exit(main())
