"""Feasibility of the certification LMI via a dense primal-dual interior-point method.

The slack program

    minimize t  s.t.  LHS(P, lam) <= t I,  P >= 0,  lam >= 0,
                      trace(P) + sum(lam) <= TRACE_CAP

is written in inequality form ``S(y) = F0 + sum_i y_i F_i >= 0`` over
``y = (svec(P), lam, t)`` with all blocks packed into one block-diagonal
matrix.  It is solved with an infeasible-start HKM predictor-corrector
method.  Dual iterates ``y`` are kept exactly feasible (``S(y)`` is
recomputed from ``y``), so any iterate with ``t <= tol`` is already a
witness: ``LHS <= t I``.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .certify import FEAS_TOL, PSD_TOL, Certificate, verify_certificate

log = logging.getLogger(__name__)

TRACE_CAP = 1e6
ITER_CAP = 200

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
INDETERMINATE = "indeterminate"


@dataclass
class FeasibilityResult:
    status: str
    objective_t: float
    iterations: int
    gap: float
    certificate: Certificate = None
    best_margin: float = None
    reason: str = ""

    @property
    def feasible(self):
        return self.status == FEASIBLE


def _sym_basis(k):
    basis = []
    for i in range(k):
        for j in range(i, k):
            e = np.zeros((k, k))
            e[i, j] = e[j, i] = 1.0
            basis.append(e)
    return basis


class _SlackSdp:
    """Block-diagonal data ``F0, F_i`` of the slack program for one LMI."""

    def __init__(self, lmi, trace_cap):
        nx = lmi.state_dim
        m = lmi.reduced_order
        nl = lmi.n_multipliers
        self.nx, self.m, self.nl = nx, m, nl
        self.p_basis = _sym_basis(nx)
        nvar = len(self.p_basis) + nl + 1
        size = m + nx + nl + 1
        o_p, o_l, o_c = m, m + nx, m + nx + nl
        f = np.zeros((nvar + 1, size, size))
        # index 0 holds F0
        f[0, :m, :m] = -lmi.base
        f[0, o_c, o_c] = trace_cap
        for i, e in enumerate(self.p_basis, start=1):
            f[i, :m, :m] = -lmi.p_map(e)
            f[i, o_p:o_l, o_p:o_l] = e
            f[i, o_c, o_c] = -np.trace(e)
        for j, term in enumerate(lmi.iqc_terms):
            i = len(self.p_basis) + 1 + j
            f[i, :m, :m] = -term
            f[i, o_l + j, o_l + j] = 1.0
            f[i, o_c, o_c] = -1.0
        f[nvar, :m, :m] = np.eye(m)
        self.f0 = f[0]
        self.fi = f[1:]
        self.nvar = nvar
        self.size = size
        self.flat = self.fi.reshape(nvar, -1)

    def slack(self, y):
        return self.f0 + np.tensordot(y, self.fi, axes=1)

    def unpack(self, y):
        k = len(self.p_basis)
        p = np.tensordot(y[:k], np.array(self.p_basis), axes=1)
        return p, tuple(y[k:k + self.nl]), y[-1]

    def initial_point(self, lmi):
        k = len(self.p_basis)
        y = np.zeros(self.nvar)
        diag = [i for i, e in enumerate(self.p_basis) if np.count_nonzero(e) == 1]
        y[diag] = 1.0
        y[k:k + self.nl] = 1.0
        p, lam, _ = self.unpack(y)
        top = np.linalg.eigvalsh(lmi.evaluate(p, lam))[-1]
        y[-1] = max(top, 0.0) + 1.0
        return y


def _max_step(x, dx):
    """Largest ``a`` with ``x + a dx`` positive semidefinite (inf if unbounded)."""
    try:
        lo = np.linalg.cholesky(x)
    except np.linalg.LinAlgError:
        return 0.0
    li = np.linalg.inv(lo)
    ev = np.linalg.eigvalsh(li @ dx @ li.T)
    return np.inf if ev[0] >= 0 else -1.0 / ev[0]


def solve_feasibility(lmi, tol=FEAS_TOL, iter_cap=ITER_CAP, trace_cap=TRACE_CAP, psd_tol=PSD_TOL):
    """Decide whether some ``P >= 0, lam >= 0`` make ``LHS(P, lam) <= 0``.

    Feasible iff the optimal slack ``t`` is at most ``tol``; the witness is
    re-checked with :func:`iqccert.certify.verify_certificate` before being
    returned.  Infeasible is reported once the slack exceeds ``tol`` with a
    duality gap below ``tol * (1 + |t|)``.  Anything else after ``iter_cap``
    iterations is Indeterminate.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    sdp = _SlackSdp(lmi, trace_cap)
    n_var, size = sdp.nvar, sdp.size
    a = -sdp.fi                     # constraint matrices A_i = -F_i
    a_flat = -sdp.flat
    b = np.zeros(n_var)
    b[-1] = -1.0                    # maximize -t
    c = sdp.f0

    y = sdp.initial_point(lmi)
    z = sdp.slack(y)
    x = np.eye(size)
    target = 1e-3 * tol
    b_norm = 1.0 + np.linalg.norm(b)

    def finish(status, it, gap, reason=""):
        t = float(y[-1])
        result = FeasibilityResult(status, t, it, gap, reason=reason)
        if status == FEASIBLE:
            p, lam, _ = sdp.unpack(y)
            meta = lmi.meta
            cert = Certificate(p=0.5 * (p + p.T), lambdas=tuple(float(v) for v in lam),
                               eta=meta.get("eta"), beta=meta.get("beta"), n=meta.get("n"),
                               w_digest=meta.get("w_digest", ""), model=meta.get("model", "dgt"))
            report = verify_certificate(lmi, cert, tol=tol, psd_tol=psd_tol)
            cert.margins = {"min_eig_P": report.min_eig_p, "max_eig_lhs": report.max_eig_lhs,
                            "tol": report.tol_feas}
            if not report.passed:
                return FeasibilityResult(INDETERMINATE, t, it, gap,
                                         reason=f"witness failed re-verification: {report.reason}")
            result.certificate = cert
        else:
            result.best_margin = t
        return result

    stalled = 0
    gap = np.inf
    best_lower = -np.inf
    it = 0

    def fallback(it, gap, why):
        t = float(y[-1])
        if t <= tol:
            return finish(FEASIBLE, it, gap)
        if best_lower > tol:
            return finish(INFEASIBLE, it, gap)
        return finish(INDETERMINATE, it, gap, reason=f"{why}: t={t:.3e}, duality gap={gap:.3e}")

    for it in range(1, iter_cap + 1):
        t = float(y[-1])
        lower = -float(np.sum(c * x))
        gap = t - lower
        rp = b - a_flat @ x.ravel()
        rp_rel = np.linalg.norm(rp) / b_norm
        # weak duality bound, discounted by the primal residual
        if rp_rel <= 1e-8:
            best_lower = max(best_lower, lower - np.linalg.norm(rp) * max(1.0, np.linalg.norm(y)))

        if t <= target:
            return finish(FEASIBLE, it, gap)
        if t > tol and best_lower > tol:
            return finish(INFEASIBLE, it, gap)
        if rp_rel <= 1e-9 and abs(gap) <= 1e-10 * (1.0 + abs(t)):
            if t <= tol:
                return finish(FEASIBLE, it, gap)
            if gap <= tol * (1.0 + abs(t)):
                return finish(INFEASIBLE, it, gap)

        mu = float(np.sum(x * z)) / size
        log.debug("iter %d t=%.4e lower=%.4e rp=%.2e mu=%.2e", it, t, lower, rp_rel, mu)
        try:
            zl = np.linalg.cholesky(z)
        except np.linalg.LinAlgError:
            return fallback(it, gap, "slack matrix lost definiteness")
        zl_inv = np.linalg.inv(zl)
        z_inv = zl_inv.T @ zl_inv
        # Schur complement M_ij = <A_i, Z^-1 A_j X>
        g = z_inv @ a @ x
        schur = a_flat @ g.reshape(n_var, -1).T
        schur = 0.5 * (schur + schur.T)

        def direction(k_mat):
            rhs = rp - a_flat @ k_mat.ravel()
            try:
                dy = np.linalg.solve(schur, rhs)
            except np.linalg.LinAlgError:
                dy = np.linalg.lstsq(schur, rhs, rcond=None)[0]
            dz = -np.tensordot(dy, a, axes=1)
            dx = k_mat - x @ dz @ z_inv
            dx = 0.5 * (dx + dx.T)
            return dx, dy, dz

        # predictor
        dx_p, dy_p, dz_p = direction(-x)
        ap = min(1.0, _max_step(x, dx_p))
        ad = min(1.0, _max_step(z, dz_p))
        mu_aff = float(np.sum((x + ap * dx_p) * (z + ad * dz_p))) / size
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
        # corrector
        k_mat = sigma * mu * z_inv - x - dx_p @ dz_p @ z_inv
        dx, dy, dz = direction(0.5 * (k_mat + k_mat.T))
        ap = min(1.0, 0.95 * _max_step(x, dx))
        ad = min(1.0, 0.95 * _max_step(z, dz))

        x = x + ap * dx
        x = 0.5 * (x + x.T)
        y = y + ad * dy
        z = sdp.slack(y)
        if max(ap, ad) < 1e-10:
            stalled += 1
            if stalled >= 5:
                return fallback(it, gap, "interior-point steps stalled")
        else:
            stalled = 0

    return fallback(it, gap, f"no verdict after {it} iterations")
