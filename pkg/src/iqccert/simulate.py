"""Run distributed gradient tracking and check certified inequalities along trajectories.

Objectives are separable across coordinates so that ``d > 1`` runs reuse the
scalar families.  Per-agent parameters are stored as ``(n, d)`` arrays.
"""
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .errors import DivergenceError, DomainError, MinimizerError, ValidationError
from .model import as_mixing, lift_dimension
from .certify import build_smoothness_iqc, build_supply_rate

KINDS = ("quadratic", "huber", "logistic")


@dataclass(frozen=True, eq=False)
class ObjectiveFamily:
    """Per-agent convex, beta-smooth objectives ``f_i : R^d -> R``.

    quadratic: ``a_i/2 ||x - c_i||^2``                       (beta = max a_i)
    huber:     ``sum_j h_delta_i(x_j - c_ij)``, unit curvature (beta = 1)
    logistic:  ``sum_j log(1 + exp(w_ij (x_j - c_ij)))``     (beta = max w^2/4)
    """

    kind: str
    params: dict
    n: int
    d: int = 1

    @property
    def beta(self):
        if self.kind == "quadratic":
            return float(np.max(self.params["a"]))
        if self.kind == "huber":
            return 1.0
        return float(np.max(self.params["w"] ** 2) / 4.0)

    def values(self, x):
        """``f_i(x_i)`` for ``x`` of shape ``(..., n, d)``; returns ``(..., n)``."""
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.kind == "quadratic":
            return 0.5 * p["a"][:, 0] * np.sum((x - p["c"]) ** 2, axis=-1)
        if self.kind == "huber":
            z = np.abs(x - p["c"])
            delta = p["delta"]
            return np.sum(np.where(z <= delta, 0.5 * z * z, delta * (z - 0.5 * delta)), axis=-1)
        return np.sum(np.logaddexp(0.0, p["w"] * (x - p["c"])), axis=-1)

    def grads(self, x):
        """``grad f_i(x_i)`` with the same shape as ``x``."""
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.kind == "quadratic":
            return p["a"] * (x - p["c"])
        if self.kind == "huber":
            return np.clip(x - p["c"], -p["delta"], p["delta"])
        return p["w"] * expit(p["w"] * (x - p["c"]))

    def f0(self, v):
        """Average objective at ``v`` of shape ``(..., d)``."""
        v = np.asarray(v, dtype=float)[..., None, :]
        return np.mean(self.values(np.broadcast_to(v, v.shape[:-2] + (self.n, self.d))), axis=-1)

    def f0_grad(self, v):
        v = np.asarray(v, dtype=float)[..., None, :]
        return np.mean(self.grads(np.broadcast_to(v, v.shape[:-2] + (self.n, self.d))), axis=-2)

    def to_dict(self):
        return {"kind": self.kind, "n": self.n, "d": self.d,
                "params": {k: v.tolist() for k, v in self.params.items()}}


def _per_agent(name, values, n, d):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full((n, 1), float(arr))
    if arr.ndim == 1:
        if arr.shape[0] != n:
            raise ValidationError(f"parameter {name!r} needs {n} per-agent entries, got {arr.shape[0]}")
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] != n or arr.shape[1] not in (1, d):
        raise ValidationError(f"parameter {name!r} must have shape ({n},) or ({n}, {d}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"parameter {name!r} has non-finite entries")
    return np.ascontiguousarray(np.broadcast_to(arr, (n, d)))


def make_objective(kind, n, d=1, **params):
    if kind not in KINDS:
        raise ValidationError(f"unknown objective kind {kind!r}; expected one of {KINDS}")
    if n < 1 or d < 1:
        raise ValidationError("n and d must be positive")
    names = {"quadratic": ("a", "c"), "huber": ("delta", "c"), "logistic": ("w", "c")}[kind]
    missing = [k for k in names if k not in params]
    if missing:
        raise ValidationError(f"{kind} objective missing parameters {missing}")
    p = {k: _per_agent(k, params[k], n, d) for k in names}
    if kind == "quadratic":
        if np.any(p["a"] < 0):
            raise ValidationError("quadratic curvatures a_i must be nonnegative")
        if not np.all(p["a"][:, 0] == p["a"][:, -1]):
            raise ValidationError("quadratic curvature a_i must be a scalar per agent")
        if np.sum(p["a"][:, 0]) <= 0:
            raise ValidationError("quadratic aggregate has no minimizer: all a_i are zero")
    elif kind == "huber":
        if np.any(p["delta"] <= 0):
            raise ValidationError("huber thresholds delta_i must be positive")
    else:
        # f0 is coercive in coordinate j only if weights of both signs appear
        if np.any(np.all(p["w"] >= 0, axis=0)) or np.any(np.all(p["w"] <= 0, axis=0)):
            raise ValidationError("logistic aggregate has no minimizer: each coordinate needs "
                                  "weights of both signs")
    return ObjectiveFamily(kind, p, n, d)


def objective_from_json(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"objective is not valid JSON: {exc}") from exc
    try:
        return make_objective(data["kind"], int(data["n"]), int(data.get("d", 1)), **data["params"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed objective description: {exc}") from exc


def reference_minimum(obj):
    """Minimizer and minimum of ``f0``, solved coordinate-wise by bracketed root finding."""
    centre = np.mean(obj.params["c"], axis=0)
    x_star = np.empty(obj.d)
    for j in range(obj.d):
        def dphi(v, j=j):
            point = centre.copy()
            point[j] = v
            return float(obj.f0_grad(point)[j])

        lo, hi, width = centre[j] - 1.0, centre[j] + 1.0, 1.0
        for _ in range(200):
            if dphi(lo) <= 0.0 <= dphi(hi):
                break
            width *= 2.0
            lo, hi = centre[j] - width, centre[j] + width
        else:
            raise MinimizerError(f"could not bracket a minimizer in coordinate {j}")
        if dphi(lo) == 0.0:
            x_star[j] = lo
        elif dphi(hi) == 0.0:
            x_star[j] = hi
        else:
            x_star[j] = brentq(dphi, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=2000)
    gnorm = float(np.linalg.norm(obj.f0_grad(x_star)))
    if gnorm > 1e-12 * (1.0 + obj.beta):
        raise MinimizerError(f"minimizer residual too large: |grad f0| = {gnorm:.3e}")
    return x_star, float(obj.f0(x_star))


@dataclass(eq=False)
class Trajectory:
    """Iterates indexed ``k = 0..K``; arrays are ``(K+1, n, d)``."""

    x: np.ndarray
    s: np.ndarray
    u: np.ndarray
    running_avg: np.ndarray
    eta: float

    @property
    def steps(self):
        return self.x.shape[0] - 1


def _as_states(x0, n, d):
    x0 = np.asarray(x0, dtype=float)
    if x0.shape == (n,) and d == 1:
        x0 = x0[:, None]
    if x0.shape != (n, d):
        raise DomainError(f"x0 must have shape ({n},) or ({n}, {d}), got {x0.shape}")
    return x0


def run_dgt(obj, w, eta, x0, steps):
    """Gradient tracking ``x+ = Wx - eta s``, ``s+ = Ws + g(x+) - g(x)``, ``s0 = g(x0)``."""
    mix = as_mixing(w).w
    n = mix.shape[0]
    if obj.n != n:
        raise DomainError(f"objective has {obj.n} agents, W has {n}")
    if not eta > 0:
        raise DomainError(f"eta must be positive, got {eta}")
    steps = int(steps)
    xk = _as_states(x0, n, obj.d)
    gk = obj.grads(xk)
    sk = gk.copy()
    shape = (steps + 1, n, obj.d)
    xs, ss, us, avg = np.empty(shape), np.empty(shape), np.empty(shape), np.empty(shape)
    total = np.zeros((n, obj.d))
    for k in range(steps + 1):
        xs[k], ss[k], us[k] = xk, sk, gk
        total += xk
        avg[k] = total / (k + 1)
        if k == steps:
            break
        with np.errstate(over="ignore", invalid="ignore"):
            x_next = mix @ xk - eta * sk
            g_next = obj.grads(x_next)
            sk = mix @ sk + g_next - gk
        xk, gk = x_next, g_next
        if not (np.all(np.isfinite(xk)) and np.all(np.isfinite(sk))):
            raise DivergenceError(k + 1)
    return Trajectory(xs, ss, us, avg, float(eta))


@dataclass
class DiagnosticsReport:
    max_dissipation_residual: float
    min_iqc_value: float
    max_supplyrate_violation: float
    bound_ratio_series: np.ndarray
    v0: float
    max_conservation_error: float
    state_growth: float
    p_norm: float = 0.0
    series: dict = field(default_factory=dict, repr=False)

    @property
    def max_bound_ratio(self):
        return float(np.max(self.bound_ratio_series[:, 1]))

    def failures(self, diss_tol=1e-8, supply_tol=1e-8, iqc_tol=1e-10):
        out = []
        if not self.max_dissipation_residual <= diss_tol * (1.0 + self.p_norm):
            out.append("dissipation")
        if not self.max_supplyrate_violation <= supply_tol:
            out.append("supply-rate")
        if not self.min_iqc_value >= -iqc_tol:
            out.append("iqc")
        if not self.max_bound_ratio <= 1.0:
            out.append("bound-ratio")
        return out

    @property
    def holds(self):
        return not self.failures()


def _shifted(traj, obj, x_star):
    """``(xi_hat, u_hat)`` flattened agent-major, with ``u`` recomputed as ``g(x)``."""
    n, d = obj.n, obj.d
    x = traj.x
    u = obj.grads(x)
    xs = np.broadcast_to(x_star, (n, d))
    us = obj.grads(xs)
    xi1 = (x - xs).reshape(len(x), n * d)
    xi2 = (traj.s - u + us).reshape(len(x), n * d)
    uh = (u - us).reshape(len(x), n * d)
    return np.hstack([xi1, xi2]), uh, u


def conservation_error(traj, obj):
    """``max_k |1^T (s^k - g(x^k))|`` per coordinate."""
    u = obj.grads(traj.x)
    return float(np.max(np.abs(np.sum(traj.s - u, axis=1))))


def running_average_gap(traj, obj, f0_star):
    """``(1/n) sum_i [f0(xbar_i^K) - f0*]`` for every K."""
    return np.mean(obj.f0(traj.running_avg), axis=-1) - f0_star


def diagnostics(traj, obj, r, cert, minimum=None):
    """Evaluate every certified inequality along ``traj``.

    ``r`` is the (d = 1) distributed realization the certificate was issued
    for; it is lifted to the objective's dimension internally.  Violations
    are reported in the returned :class:`DiagnosticsReport`, never raised.
    """
    x_star, f0_star = reference_minimum(obj) if minimum is None else minimum
    n, d = obj.n, obj.d
    if r.n != n:
        raise DomainError(f"realization has {r.n} agents, objective has {n}")
    if r.dim != d:
        r, _ = lift_dimension(r, None, d // r.dim)
    p = np.kron(np.asarray(cert.p, dtype=float), np.eye(r.a.shape[0] // len(cert.p)))
    lam = float(cert.lambdas[0])
    s0 = build_supply_rate(r).s0
    m1 = build_smoothness_iqc(n, r.beta, d).m
    cd = np.block([[r.c, r.d], [np.zeros((r.input_dim, r.state_dim)), np.eye(r.input_dim)]])
    m_full = cd.T @ m1 @ cd

    xi, uh, _ = _shifted(traj, obj, x_star)
    z = np.hstack([xi, uh])
    v = np.einsum("ki,ij,kj->k", xi, p, xi)
    sigma0 = np.einsum("ki,ij,kj->k", z, s0, z)
    psi = np.einsum("ki,ij,kj->k", z, m_full, z)
    supply = sigma0 - lam * psi
    diss = v[1:] - v[:-1] - supply[:-1]

    per_step_gap = np.mean(obj.f0(traj.x), axis=-1) - f0_star
    supply_slack = sigma0 + per_step_gap

    gap_avg = running_average_gap(traj, obj, f0_star)
    ks = np.arange(len(gap_avg))
    v0 = float(v[0])
    if v0 > 0:
        ratio = gap_avg * (ks + 1) / v0
    else:
        ratio = np.where(np.abs(gap_avg) <= 1e-15, 0.0, np.inf)
    norms = np.linalg.norm(xi, axis=1)
    growth = float(np.max(norms) / norms[0]) if norms[0] > 0 else (0.0 if np.max(norms) == 0 else np.inf)

    series = {
        "gap_running_avg": gap_avg,
        "dissipation_residual": np.append(diss, np.nan),
        "iqc_value": psi,
        "bound_ratio": ratio,
    }
    return DiagnosticsReport(
        max_dissipation_residual=float(np.max(diss)) if len(diss) else 0.0,
        min_iqc_value=float(np.min(psi)),
        max_supplyrate_violation=float(np.max(supply_slack)),
        bound_ratio_series=np.column_stack([ks, ratio]),
        v0=v0,
        max_conservation_error=conservation_error(traj, obj),
        state_growth=growth,
        p_norm=float(np.linalg.norm(cert.p, 2)),
        series=series,
    )


def convexity_violations(obj, rng, pairs=1000, scale=5.0):
    """Largest violations of the first-order, smoothness and co-coercivity inequalities.

    Each agent's ``f_i`` is tested on ``pairs`` random point pairs; all three
    numbers are ``<= 0`` (up to roundoff) for a convex, ``beta``-smooth family.
    """
    centre = np.mean(obj.params["c"], axis=0)
    x = centre + scale * rng.standard_normal((pairs, obj.n, obj.d))
    y = centre + scale * rng.standard_normal((pairs, obj.n, obj.d))
    fx, fy = obj.values(x), obj.values(y)
    gx, gy = obj.grads(x), obj.grads(y)
    lin = np.sum(gy * (x - y), axis=-1)
    dist2 = np.sum((x - y) ** 2, axis=-1)
    dg = gx - gy
    beta = obj.beta
    return {
        "first_order": float(np.max(fy + lin - fx)),
        "smoothness": float(np.max(fx - fy - lin - 0.5 * beta * dist2)),
        "co_coercivity": float(np.max(np.sum(dg * dg, axis=-1) / beta - np.sum(dg * (x - y), axis=-1))),
    }


def trajectory_csv(traj, report=None):
    """Full trajectory table; certificate columns are ``nan`` without a report."""
    kk, n, d = traj.x.shape

    def names(prefix):
        if d == 1:
            return [f"{prefix}_{i + 1}" for i in range(n)]
        return [f"{prefix}_{i + 1}_{j + 1}" for i in range(n) for j in range(d)]

    header = ["k"] + names("x") + names("s") + names("u") + [
        "gap_running_avg", "dissipation_residual", "iqc_value", "bound_ratio"]
    nan = np.full(kk, np.nan)
    extra = [report.series[c] if report is not None else nan
             for c in ("gap_running_avg", "dissipation_residual", "iqc_value", "bound_ratio")]
    cols = np.column_stack([traj.x.reshape(kk, -1), traj.s.reshape(kk, -1), traj.u.reshape(kk, -1)] + extra)
    lines = [",".join(header)]
    for k in range(kk):
        lines.append(str(k) + "," + ",".join(f"{v:.12g}" for v in cols[k]))
    return "\n".join(lines) + "\n"
