"""Mixing matrices and state-space realizations of the analysed algorithms.

Distributed gradient tracking,

    x+ = W x - eta s,    s+ = W s + g(x+) - g(x),    s0 = g(x0),

is written as an LTI system in feedback with the gradient map ``u = g(x)``
using the state ``xi = (x, s - u)``.  Centralized gradient descent is the
scalar case ``(A, B, C, D) = (1, -eta, 1, 0)``.
"""
import csv
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from . import matkernel as mk
from .errors import DomainError, ValidationError

STOCHASTIC_TOL = 1e-12
SUPPORT_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    w: np.ndarray

    @property
    def n(self):
        return self.w.shape[0]


@dataclass(frozen=True, eq=False)
class Realization:
    """State-space data ``(A, B, C, D)`` of an algorithm.

    ``n`` is the number of agents and ``dim`` the per-agent variable
    dimension (1 unless the realization was lifted with :func:`lift_dimension`).
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    n: int
    eta: float
    beta: float
    dim: int = 1
    kind: str = "dgt"

    @property
    def state_dim(self):
        return self.a.shape[0]

    @property
    def input_dim(self):
        return self.b.shape[1]


@dataclass(frozen=True, eq=False)
class EqualityConstraint:
    """Rows of ``F xi_hat + G u_hat = 0`` satisfied along every trajectory."""

    f: np.ndarray
    g: np.ndarray

    @property
    def stacked(self):
        return np.hstack([self.f, self.g])


def _components(support):
    n = support.shape[0]
    seen = np.zeros(n, dtype=bool)
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        comp = []
        queue = deque([start])
        seen[start] = True
        while queue:
            i = queue.popleft()
            comp.append(i)
            for j in np.flatnonzero(support[i]):
                if not seen[j]:
                    seen[j] = True
                    queue.append(j)
        comps.append(sorted(comp))
    return comps


def _reachable(support, start):
    seen = np.zeros(support.shape[0], dtype=bool)
    seen[start] = True
    queue = deque([start])
    while queue:
        i = queue.popleft()
        for j in np.flatnonzero(support[i]):
            if not seen[j]:
                seen[j] = True
                queue.append(j)
    return seen


def validate_mixing(w):
    """Check that ``w`` is doubly stochastic and irreducible; wrap it."""
    try:
        w = mk.as_matrix(w)
    except Exception as exc:
        raise ValidationError(f"invalid mixing matrix: {exc}") from exc
    n, m = w.shape
    if n != m:
        raise ValidationError(f"mixing matrix must be square, got {n}x{m}")
    if np.any(w < -STOCHASTIC_TOL):
        i, j = np.argwhere(w < -STOCHASTIC_TOL)[0]
        raise ValidationError(f"not doubly stochastic: negative entry at row {i + 1}, column {j + 1}")
    row_err = np.abs(w.sum(axis=1) - 1.0)
    if np.any(row_err > STOCHASTIC_TOL):
        i = int(np.argmax(row_err > STOCHASTIC_TOL))
        raise ValidationError(f"not doubly stochastic: row {i + 1} sums to {w[i].sum():.12g}")
    col_err = np.abs(w.sum(axis=0) - 1.0)
    if np.any(col_err > STOCHASTIC_TOL):
        j = int(np.argmax(col_err > STOCHASTIC_TOL))
        raise ValidationError(f"not doubly stochastic: column {j + 1} sums to {w[:, j].sum():.12g}")
    support = np.abs(w) > SUPPORT_TOL
    np.fill_diagonal(support, False)
    # strongly connected iff node 0 reaches all nodes in the graph and its reverse
    if n > 1 and not (_reachable(support, 0).all() and _reachable(support.T, 0).all()):
        raise ValidationError("not irreducible: support graph of W is not strongly connected")
    return MixingMatrix(w)


def as_mixing(w):
    return w if isinstance(w, MixingMatrix) else validate_mixing(w)


def two_node_w(sigma):
    """Symmetric two-agent mixing matrix with eigenvalues 1 and ``sigma``."""
    if not -1.0 < sigma < 1.0:
        raise DomainError(f"sigma must lie in (-1, 1), got {sigma}")
    a, b = (1.0 + sigma) / 2.0, (1.0 - sigma) / 2.0
    return validate_mixing(np.array([[a, b], [b, a]]))


def metropolis_w(adjacency):
    """Metropolis-Hastings weights for an undirected connected graph."""
    adj = mk.as_matrix(adjacency)
    n = adj.shape[0]
    if adj.shape != (n, n):
        raise ValidationError(f"adjacency must be square, got {adj.shape}")
    if not np.array_equal(adj, adj.T):
        raise ValidationError("adjacency must be symmetric")
    if np.any(np.diag(adj) != 0):
        raise ValidationError("adjacency must have a zero diagonal")
    if not np.all((adj == 0) | (adj == 1)):
        raise ValidationError("adjacency entries must be 0 or 1")
    comps = _components(adj > 0)
    if len(comps) > 1:
        nodes = ", ".join(str(i + 1) for i in comps[1])
        raise ValidationError(f"graph is disconnected: nodes {{{nodes}}} are not reachable from node 1")
    deg = adj.sum(axis=1)
    w = np.zeros((n, n))
    for i, j in zip(*np.nonzero(adj)):
        w[i, j] = 1.0 / (1.0 + max(deg[i], deg[j]))
    w[np.diag_indices(n)] = 1.0 - w.sum(axis=1)
    return validate_mixing(w)


def second_singular_value(w):
    w = as_mixing(w).w
    if w.shape[0] == 1:
        return 0.0
    ev = mk.eigvals(w.T @ w)
    sv = np.sqrt(np.clip(ev[::-1], 0.0, None))
    return float(min(sv[1], 1.0))


def _check_params(eta, beta):
    if not (np.isfinite(eta) and eta > 0):
        raise DomainError(f"step size eta must be positive, got {eta}")
    if not (np.isfinite(beta) and beta > 0):
        raise DomainError(f"smoothness constant beta must be positive, got {beta}")


def dgt_realization(w, eta, beta):
    """Realization and conserved-sum constraint of distributed gradient tracking.

    With ``xi = (x, s - u)``:  A = [[W, -eta I], [0, W]],  B = [[-eta I], [W - I]],
    C = [I, 0], D = 0, and ``F = [0, 1^T]``, ``G = 0``.
    """
    _check_params(eta, beta)
    w = as_mixing(w).w
    n = w.shape[0]
    eye, zero = np.eye(n), np.zeros((n, n))
    a = np.block([[w, -eta * eye], [zero, w]])
    b = np.vstack([-eta * eye, w - eye])
    c = np.hstack([eye, zero])
    d = np.zeros((n, n))
    f = np.hstack([np.zeros((1, n)), np.ones((1, n))])
    g = np.zeros((1, n))
    r = Realization(a, b, c, d, n=n, eta=float(eta), beta=float(beta), kind="dgt")
    return r, EqualityConstraint(f, g)


def centralized_gd_realization(eta, beta):
    _check_params(eta, beta)
    one = np.ones((1, 1))
    return Realization(one.copy(), -eta * one, one.copy(), np.zeros((1, 1)),
                       n=1, eta=float(eta), beta=float(beta), kind="centralized")


def lift_dimension(r, eq, d):
    """Replace every matrix ``X`` by ``kron(X, I_d)``; ``eq`` may be None."""
    if int(d) != d or d < 1:
        raise DomainError(f"lift dimension must be a positive integer, got {d}")
    d = int(d)
    eye = np.eye(d)
    lifted = replace(r, a=mk.kron(r.a, eye), b=mk.kron(r.b, eye), c=mk.kron(r.c, eye),
                     d=mk.kron(r.d, eye), dim=r.dim * d)
    if eq is None:
        return lifted, None
    return lifted, EqualityConstraint(mk.kron(eq.f, eye), mk.kron(eq.g, eye))


def change_state_basis(r, eq, t):
    """Realization in the coordinates ``xi' = T xi`` (T invertible)."""
    t = mk.as_matrix(t)
    t_inv = np.linalg.inv(t)
    new = replace(r, a=t @ r.a @ t_inv, b=t @ r.b, c=r.c @ t_inv)
    if eq is None:
        return new, None
    return new, EqualityConstraint(eq.f @ t_inv, eq.g.copy())


def xi2_sign_flip(r):
    """The similarity ``diag(I, -I)`` that negates the tracking-error block."""
    half = r.state_dim // 2
    return np.diag(np.r_[np.ones(half), -np.ones(r.state_dim - half)])


def permute_agents(w, perm):
    w = as_mixing(w).w
    p = np.eye(w.shape[0])[list(perm)]
    return validate_mixing(p @ w @ p.T)


def load_matrix_csv(path):
    """Read a dense real matrix from CSV; errors name the first bad cell."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for i, line in enumerate(csv.reader(fh)):
            if not line or all(not cell.strip() for cell in line):
                continue
            row = []
            for j, cell in enumerate(line):
                try:
                    val = float(cell)
                except ValueError:
                    raise ValidationError(
                        f"row {i + 1}, column {j + 1}: cannot parse {cell.strip()!r} as a number") from None
                if not np.isfinite(val):
                    raise ValidationError(f"row {i + 1}, column {j + 1}: non-finite entry")
                row.append(val)
            if rows and len(row) != len(rows[0]):
                raise ValidationError(
                    f"row {i + 1}, column {min(len(row), len(rows[0])) + 1}: "
                    f"expected {len(rows[0])} columns, got {len(row)}")
            rows.append(row)
    if not rows:
        raise ValidationError("row 1, column 1: file contains no matrix entries")
    return np.array(rows, dtype=float)


def load_mixing_csv(path):
    w = load_matrix_csv(path)
    if w.shape[0] != w.shape[1]:
        raise ValidationError(f"row {min(w.shape) + 1}, column 1: mixing matrix must be square, got {w.shape}")
    return validate_mixing(w)


def load_adjacency_csv(path):
    return metropolis_w(load_matrix_csv(path))


def write_matrix_csv(path, m):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for row in np.atleast_2d(m):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
