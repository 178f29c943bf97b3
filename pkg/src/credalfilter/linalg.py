"""Small linear-algebra helpers shared by the filters."""
from __future__ import annotations

import numpy as np
from scipy import linalg as sla

from .errors import CredalError, DegenerateCovarianceError

JITTER_ESCALATIONS = 3


def symmetrize(P):
    P = np.asarray(P, dtype=float)
    return 0.5 * (P + P.T)


def cholesky_jitter(P):
    """Lower Cholesky factor, adding 1e-12 * trace/n * I (then x10, up to 3 times) on failure.

    Returns ``(L, jitter)`` where ``jitter`` is the diagonal load that was used.
    """
    P = symmetrize(P)
    n = P.shape[0]
    try:
        return np.linalg.cholesky(P), 0.0
    except np.linalg.LinAlgError:
        pass
    base = 1e-12 * max(np.trace(P) / n, np.finfo(float).tiny)
    for k in range(JITTER_ESCALATIONS + 1):
        jitter = base * 10.0 ** k
        try:
            return np.linalg.cholesky(P + jitter * np.eye(n)), jitter
        except np.linalg.LinAlgError:
            continue
    raise DegenerateCovarianceError("degenerate covariance: Cholesky failed after jitter")


def require_pd(M, name="matrix"):
    M = symmetrize(np.atleast_2d(np.asarray(M, dtype=float)))
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise CredalError(f"{name} must be symmetric positive definite") from None
    return M


def mahalanobis_sq(residuals, M):
    """Row-wise r^T M^-1 r for a stack of residuals."""
    residuals = np.atleast_2d(residuals)
    c = sla.cho_factor(M, lower=True)
    return np.einsum("ij,ij->i", residuals, sla.cho_solve(c, residuals.T).T)


def apply_map(fn, X, batched=False):
    """Apply a point map to each row of ``X``; ``batched`` maps take the whole stack."""
    X = np.atleast_2d(X)
    if batched:
        return np.atleast_2d(np.asarray(fn(X), dtype=float))
    return np.array([np.atleast_1d(np.asarray(fn(x), dtype=float)) for x in X])


def log_det_pd(M):
    sign, value = np.linalg.slogdet(M)
    if sign <= 0:
        return -np.inf
    return float(value)
