"""Small dense symmetric linear algebra.

Everything here works on plain ``numpy`` arrays.  The eigensolver and the
nullspace routine are cyclic Jacobi methods, written out so that the
certificate checks do not depend on the LAPACK path used by the SDP solver.
Problem sizes in this package stay well below 100x100.
"""
import math

import numpy as np

from .errors import KernelError

_EPS = np.finfo(float).eps


def as_matrix(m):
    """Return ``m`` as a finite 2-D float array (a copy)."""
    a = np.array(m, dtype=float, ndmin=2)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise KernelError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise KernelError("matrix has non-finite entries")
    return a


def as_sym(m):
    """Return the symmetric part of a square matrix; entries (i,j) and (j,i) agree exactly."""
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise KernelError(f"symmetric matrix must be square, got {a.shape}")
    return 0.5 * (a + a.T)


def sym_eig(m, max_sweeps=60):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(w, V)`` with ``w`` ascending and ``V`` orthonormal such that
    ``m @ V == V @ diag(w)``.
    """
    a = as_sym(m)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if n == 1 or scale == 0.0:
        return np.diag(a).copy(), v

    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= _EPS * scale:
            break
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                app, aqq = a[p, p], a[q, q]
                # below roundoff of the diagonal pair: drop it
                if abs(apq) <= 0.5 * _EPS * math.sqrt(abs(app * aqq)) and abs(apq) <= _EPS * scale:
                    a[p, q] = a[q, p] = 0.0
                    continue
                diff = aqq - app
                if abs(diff) > 1e150 * abs(apq):
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q]
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :]
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
                rotated = True
        if not rotated:
            break
    else:
        raise KernelError(f"Jacobi eigensolver did not converge for a matrix of order {n}")

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def eigvals(m):
    return sym_eig(m)[0]


def min_eig(m):
    return float(sym_eig(m)[0][0])


def max_eig(m):
    return float(sym_eig(m)[0][-1])


def is_psd(m, tol=0.0):
    """True iff the smallest eigenvalue of ``m`` is at least ``-tol``."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return min_eig(m) >= -tol


def svd_jacobi(m, max_sweeps=60):
    """One-sided (Hestenes) Jacobi SVD.

    Returns ``(s, V)`` where ``s`` holds the singular values in descending
    order (length ``cols``, zeros padded) and ``V`` is orthogonal with
    ``m @ V[:, j]`` of norm ``s[j]``.
    """
    u = as_matrix(m).copy()
    cols = u.shape[1]
    v = np.eye(cols)
    # columns below this squared norm are roundoff and need no rotation
    tiny = (_EPS * np.linalg.norm(u)) ** 2
    for _ in range(max_sweeps):
        rotated = False
        for p in range(cols - 1):
            for q in range(p + 1, cols):
                alpha = float(u[:, p] @ u[:, p])
                beta = float(u[:, q] @ u[:, q])
                gamma = float(u[:, p] @ u[:, q])
                if alpha <= tiny or beta <= tiny or abs(gamma) <= _EPS * math.sqrt(alpha * beta):
                    continue
                diff = beta - alpha
                if abs(diff) > 1e150 * abs(gamma):
                    t = gamma / diff
                else:
                    zeta = diff / (2.0 * gamma)
                    t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                up = u[:, p].copy()
                u[:, p] = c * up - s * u[:, q]
                u[:, q] = s * up + c * u[:, q]
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
                rotated = True
        if not rotated:
            break
    else:
        raise KernelError(f"Jacobi SVD did not converge for a {u.shape[0]}x{cols} matrix")
    sv = np.linalg.norm(u, axis=0)
    order = np.argsort(-sv, kind="stable")
    return sv[order], v[:, order]


def numerical_rank(m, rank_tol=None):
    a = as_matrix(m)
    if rank_tol is None:
        rank_tol = 1e-10 * max(a.shape)
    sv, _ = svd_jacobi(a)
    if sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rank_tol * sv[0]))


def nullspace_basis(m, rank_tol=None):
    """Orthonormal basis of the nullspace of ``m`` (columns).

    Singular values at or below ``rank_tol * ||m||_2`` are treated as zero;
    the default is ``rank_tol = 1e-10 * max(rows, cols)``.  A matrix of full
    column rank gives a ``(cols, 0)`` array.
    """
    a = as_matrix(m)
    if rank_tol is None:
        rank_tol = 1e-10 * max(a.shape)
    if rank_tol <= 0:
        raise ValueError("rank_tol must be positive")
    sv, v = svd_jacobi(a)
    if sv[0] == 0.0:
        return np.eye(a.shape[1])
    keep = sv <= rank_tol * sv[0]
    return v[:, keep].copy()


def kron(a, b):
    return np.kron(as_matrix(a), as_matrix(b))
