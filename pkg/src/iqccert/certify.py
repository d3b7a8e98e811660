"""Supply rate, smoothness IQC and the dissipation LMI in ``(P, lambda)``.

The LMI certifying O(1/K) convergence of the running average is

    R^T { [[A'PA - P, A'PB], [B'PA, B'PB]] - S0
          + sum_i lambda_i [C D; 0 I]' M_i [C D; 0 I] } R  <=  0,

with ``P >= 0``, ``lambda >= 0`` and ``R`` an orthonormal basis of the
nullspace of ``[F G]``.  Everything here is a pure function of the
realization; the SDP itself lives in :mod:`iqccert.sdpfeas`.
"""
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import matkernel as mk
from .errors import AssemblyError, DomainError, ValidationError
from .model import as_mixing, centralized_gd_realization, dgt_realization, lift_dimension

FEAS_TOL = 1e-8
PSD_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SupplyRate:
    s0: np.ndarray


@dataclass(frozen=True, eq=False)
class PointwiseIqc:
    m: np.ndarray
    name: str = "smoothness"


@dataclass(frozen=True, eq=False)
class LmiProblem:
    """Affine map ``(P, lambda) -> LHS`` restricted to ``range(R)``."""

    base: np.ndarray
    iqc_terms: tuple
    r: np.ndarray
    a: np.ndarray
    b: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def state_dim(self):
        return self.a.shape[0]

    @property
    def input_dim(self):
        return self.b.shape[1]

    @property
    def reduced_order(self):
        return self.r.shape[1]

    @property
    def n_multipliers(self):
        return len(self.iqc_terms)

    def p_map(self, p):
        """Reduced ``R^T [[A'PA - P, A'PB], [B'PA, B'PB]] R``."""
        p = np.asarray(p, dtype=float)
        if p.shape != (self.state_dim, self.state_dim):
            raise AssemblyError(f"P must be {self.state_dim}x{self.state_dim}, got {p.shape}")
        ab = np.hstack([self.a, self.b])
        e = np.hstack([np.eye(self.state_dim), np.zeros((self.state_dim, self.input_dim))])
        q = ab.T @ p @ ab - e.T @ p @ e
        out = self.r.T @ q @ self.r
        return 0.5 * (out + out.T)

    def evaluate(self, p, lambdas):
        lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
        if lambdas.shape != (self.n_multipliers,):
            raise AssemblyError(f"expected {self.n_multipliers} multipliers, got {lambdas.shape[0]}")
        out = self.base + self.p_map(p)
        for lam, term in zip(lambdas, self.iqc_terms):
            out = out + lam * term
        return 0.5 * (out + out.T)

    def with_base_scaled(self, factor):
        return LmiProblem(factor * self.base, self.iqc_terms, self.r, self.a, self.b, dict(self.meta))


@dataclass
class Certificate:
    p: np.ndarray
    lambdas: tuple
    eta: float
    beta: float
    n: int
    w_digest: str
    margins: dict = field(default_factory=dict)
    model: str = "dgt"

    def to_dict(self):
        return {
            "model": self.model,
            "n": self.n,
            "eta": self.eta,
            "beta": self.beta,
            "w_digest": self.w_digest,
            "P": [[float(v) for v in row] for row in np.atleast_2d(self.p)],
            "lambda": [float(v) for v in self.lambdas],
            "margins": {k: float(v) for k, v in self.margins.items()},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, data):
        try:
            p = np.array(data["P"], dtype=float)
            if p.ndim == 1:
                # flat row-major storage
                k = int(round(np.sqrt(p.size)))
                if k * k != p.size:
                    raise ValueError(f"P has {p.size} entries, not a square count")
                p = p.reshape(k, k)
            if p.ndim != 2 or p.shape[0] != p.shape[1]:
                raise ValueError(f"P must be square, got shape {p.shape}")
            margins = data.get("margins", {})
            return cls(
                p=p,
                lambdas=tuple(float(v) for v in data["lambda"]),
                eta=float(data["eta"]),
                beta=float(data["beta"]),
                n=int(data["n"]),
                w_digest=str(data["w_digest"]),
                margins={k: float(v) for k, v in margins.items()},
                model=str(data.get("model", "dgt")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed certificate: {exc}") from exc

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"certificate is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ValidationError("certificate JSON must be an object")
        return cls.from_dict(data)

    def matches(self, w_digest_value, eta, beta, rtol=1e-12):
        return (self.w_digest == w_digest_value
                and abs(self.eta - eta) <= rtol * abs(eta)
                and abs(self.beta - beta) <= rtol * abs(beta))


@dataclass(frozen=True)
class VerificationReport:
    passed: bool
    min_eig_p: float
    max_eig_lhs: float
    min_lambda: float
    tol_feas: float
    tol_psd: float
    reason: str = ""

    def summary(self):
        verdict = "pass" if self.passed else "fail"
        line = (f"{verdict} min_eig_P={self.min_eig_p:.6e} max_eig_lhs={self.max_eig_lhs:.6e} "
                f"min_lambda={self.min_lambda:.6e} tol={self.tol_feas:.3e}")
        return line + (f" reason={self.reason}" if self.reason else "")


def w_digest(w):
    """SHA-256 of the exact float64 contents and shape of ``W``."""
    w = np.ascontiguousarray(np.atleast_2d(np.asarray(w, dtype="<f8")))
    h = hashlib.sha256()
    h.update(f"{w.shape[0]}x{w.shape[1]}:".encode())
    h.update(w.tobytes())
    return h.hexdigest()


def _avg_projector(n, dim):
    j = np.full((n, n), 1.0 / n)
    return mk.kron(j, np.eye(dim))


def build_supply_rate(r):
    """Base supply rate ``S0 = -(1/n) [[beta C'JperpC, C'J/2], [JC/2, 0]]``."""
    n, beta = r.n, r.beta
    c = r.c
    ny = c.shape[0]
    if ny != n * r.dim:
        raise AssemblyError(f"output dimension {ny} does not match n*dim = {n * r.dim}")
    j = _avg_projector(n, r.dim)
    j_perp = np.eye(ny) - j
    top_left = beta * c.T @ j_perp @ c
    top_right = c.T @ j / 2.0
    nu = r.input_dim
    s0 = -(1.0 / n) * np.block([[top_left, top_right], [top_right.T, np.zeros((nu, nu))]])
    return SupplyRate(mk.as_sym(s0))


def build_smoothness_iqc(n, beta, dim=1):
    """Co-coercivity multiplier ``M1 = [[0, beta I], [beta I, -2 I]]``."""
    if not beta > 0:
        raise DomainError(f"beta must be positive, got {beta}")
    eye = np.eye(n * dim)
    zero = np.zeros_like(eye)
    return PointwiseIqc(np.block([[zero, beta * eye], [beta * eye, -2.0 * eye]]))


def assemble_lmi(r, eq, s0, iqcs):
    nx, nu, ny = r.state_dim, r.input_dim, r.c.shape[0]
    if r.a.shape != (nx, nx):
        raise AssemblyError(f"A must be square, got {r.a.shape}")
    if r.b.shape[0] != nx:
        raise AssemblyError(f"B has {r.b.shape[0]} rows, expected {nx}")
    if r.c.shape[1] != nx:
        raise AssemblyError(f"C has {r.c.shape[1]} columns, expected {nx}")
    if r.d.shape != (ny, nu):
        raise AssemblyError(f"D must be {ny}x{nu}, got {r.d.shape}")
    s0m = s0.s0 if isinstance(s0, SupplyRate) else np.asarray(s0, dtype=float)
    if s0m.shape != (nx + nu, nx + nu):
        raise AssemblyError(f"S0 must be {nx + nu}x{nx + nu}, got {s0m.shape}")
    if eq is None:
        basis = np.eye(nx + nu)
    else:
        if eq.f.shape[1] != nx:
            raise AssemblyError(f"F has {eq.f.shape[1]} columns, expected {nx}")
        if eq.g.shape[1] != nu or eq.g.shape[0] != eq.f.shape[0]:
            raise AssemblyError(f"G must be {eq.f.shape[0]}x{nu}, got {eq.g.shape}")
        basis = mk.nullspace_basis(eq.stacked)
    cd = np.block([[r.c, r.d], [np.zeros((nu, nx)), np.eye(nu)]])
    terms = []
    for k, iqc in enumerate(iqcs):
        m = iqc.m if isinstance(iqc, PointwiseIqc) else np.asarray(iqc, dtype=float)
        if m.shape != (ny + nu, ny + nu):
            raise AssemblyError(f"IQC {k} matrix M must be {ny + nu}x{ny + nu}, got {m.shape}")
        terms.append(mk.as_sym(basis.T @ cd.T @ m @ cd @ basis))
    base = mk.as_sym(-basis.T @ s0m @ basis)
    meta = {"model": r.kind, "n": r.n, "dim": r.dim, "eta": r.eta, "beta": r.beta}
    return LmiProblem(base, tuple(terms), basis, r.a.copy(), r.b.copy(), meta)


def problem_for(model, w, eta, beta, dim=1):
    """Assemble the certification LMI for ``model`` in {"dgt", "centralized"}.

    Returns ``(lmi, digest)`` where ``digest`` fingerprints the mixing matrix
    (``[[1]]`` for the centralized method).
    """
    if model == "centralized":
        r, eq = centralized_gd_realization(eta, beta), None
        digest = w_digest(np.ones((1, 1)))
    elif model == "dgt":
        mix = as_mixing(w)
        r, eq = dgt_realization(mix, eta, beta)
        digest = w_digest(mix.w)
    else:
        raise DomainError(f"unknown model {model!r}")
    if dim > 1:
        r, eq = lift_dimension(r, eq, dim)
    lmi = assemble_lmi(r, eq, build_supply_rate(r), [build_smoothness_iqc(r.n, beta, r.dim)])
    lmi.meta["w_digest"] = digest
    return lmi, digest


def verify_certificate(lmi, cert, tol=FEAS_TOL, psd_tol=PSD_TOL):
    """Re-check ``P >= 0``, ``lambda >= 0`` and ``LHS(P, lambda) <= 0``.

    The LMI test is ``max_eig(LHS) <= tol * (1 + ||LHS||_2)``.  A failed check
    is reported, not raised.
    """
    p = np.asarray(cert.p, dtype=float)
    if p.shape != (lmi.state_dim, lmi.state_dim):
        raise AssemblyError(f"certificate P is {p.shape}, LMI expects order {lmi.state_dim}")
    lhs = lmi.evaluate(mk.as_sym(p), cert.lambdas)
    ev = mk.eigvals(lhs)
    max_lhs = float(ev[-1])
    threshold = tol * (1.0 + float(np.max(np.abs(ev))))
    min_p = mk.min_eig(p)
    min_lam = float(np.min(cert.lambdas)) if len(cert.lambdas) else 0.0
    reasons = []
    if min_p < -psd_tol:
        reasons.append("P not positive semidefinite")
    if min_lam < 0:
        reasons.append("negative multiplier")
    if max_lhs > threshold:
        reasons.append("LMI violated")
    return VerificationReport(not reasons, min_p, max_lhs, min_lam, threshold, psd_tol, "; ".join(reasons))


def analytic_bound_qu_li(sigma2, beta):
    """Closed-form step-size bound ``(1 - sigma2)^2 / (160 beta)`` from the gradient-tracking literature."""
    if not 0.0 <= sigma2 < 1.0:
        raise DomainError(f"sigma2 must lie in [0, 1), got {sigma2}")
    if not beta > 0:
        raise DomainError(f"beta must be positive, got {beta}")
    return (1.0 - sigma2) ** 2 / (160.0 * beta)


def centralized_feasibility_oracle(eta, beta):
    """Gradient descent is certified exactly when ``0 < eta < 2/beta``."""
    return 0.0 < eta < 2.0 / beta
