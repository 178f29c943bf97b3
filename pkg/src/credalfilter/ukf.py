"""Reference unscented Kalman filter (additive noise, scaled sigma points)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import logging

import numpy as np
from scipy import linalg as sla

from .errors import CredalError
from .linalg import apply_map, cholesky_jitter, symmetrize

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise CredalError("covariance shape does not match the mean")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise CredalError("belief must be finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", symmetrize(cov))

    @property
    def dim(self):
        return self.mean.shape[0]


@dataclass(frozen=True)
class UkfConfig:
    alpha: float = 1e-3
    beta: float = 2.0
    kappa: float = 0.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise CredalError("alpha must be positive")

    def lam(self, n):
        return self.alpha ** 2 * (n + self.kappa) - n


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Additive-noise dynamics and measurement maps.

    ``f`` and ``h`` act on one state vector, or on a stack of them when
    ``batched`` is set.
    """

    f: Callable
    h: Callable
    Q: np.ndarray
    R: np.ndarray
    batched: bool = False

    def __post_init__(self):
        object.__setattr__(self, "Q", symmetrize(np.atleast_2d(self.Q)))
        object.__setattr__(self, "R", symmetrize(np.atleast_2d(self.R)))

    @property
    def meas_dim(self):
        return self.R.shape[0]

    def propagate(self, X):
        return apply_map(self.f, X, self.batched)

    def measure(self, X):
        return apply_map(self.h, X, self.batched)


class UpdateResult(NamedTuple):
    belief: GaussianBelief
    innovation: np.ndarray
    innov_cov: np.ndarray
    nis: float


def sigma_points(belief: GaussianBelief, cfg: UkfConfig):
    """2n+1 scaled sigma points with Merwe-van der Wan mean and covariance weights."""
    n = belief.dim
    lam = cfg.lam(n)
    if n + lam <= 0:
        raise CredalError("alpha^2 (n + kappa) must be positive")
    L, _ = cholesky_jitter((n + lam) * belief.cov)
    X = np.vstack([belief.mean, belief.mean + L.T, belief.mean - L.T])
    wm = np.full(2 * n + 1, 1.0 / (2 * (n + lam)))
    wc = wm.copy()
    wm[0] = lam / (n + lam)
    wc[0] = wm[0] + 1 - cfg.alpha ** 2 + cfg.beta
    return X, wm, wc


def _moments(Y, wm, wc):
    """Weighted mean and covariance, accumulated relative to the central point.

    With alpha = 1e-3 the central covariance weight is about -1e6, so summing
    deviations from the mean directly loses most significant digits.
    """
    e = Y[1:] - Y[0]
    delta = wm[1:] @ e
    cov = (e.T * wc[1:]) @ e + (wc.sum() - 2.0) * np.outer(delta, delta)
    return Y[0] + delta, cov, e, delta


def _cross(ex, dx, ez, dz, wc):
    return (ex.T * wc[1:]) @ ez + (wc.sum() - 2.0) * np.outer(dx, dz)


def ukf_predict(belief: GaussianBelief, model: SystemModel, cfg: UkfConfig) -> GaussianBelief:
    X, wm, wc = sigma_points(belief, cfg)
    mean, cov, _, _ = _moments(model.propagate(X), wm, wc)
    return GaussianBelief(mean, cov + model.Q)


def ukf_update(belief: GaussianBelief, model: SystemModel, cfg: UkfConfig, y) -> UpdateResult:
    """Unscented measurement update; also returns innovation, its covariance and the NIS."""
    X, wm, wc = sigma_points(belief, cfg)
    Z = model.measure(X)
    z_mean, S, ez, dz = _moments(Z, wm, wc)
    S = symmetrize(S + model.R)
    _, _, ex, dx = _moments(X, wm, wc)
    Pxz = _cross(ex, dx, ez, dz, wc)
    try:
        S_factor = sla.cho_factor(S, lower=True)
    except np.linalg.LinAlgError:
        raise CredalError("singular innovation covariance") from None
    innovation = np.atleast_1d(np.asarray(y, dtype=float)) - z_mean
    K = sla.cho_solve(S_factor, Pxz.T).T
    mean = belief.mean + K @ innovation
    cov = symmetrize(belief.cov - K @ S @ K.T)
    nis = float(innovation @ sla.cho_solve(S_factor, innovation))
    return UpdateResult(GaussianBelief(mean, cov), innovation, S, nis)


def log_det_cov(belief: GaussianBelief) -> float:
    """log det P from the Cholesky diagonal; -inf flags a degenerate covariance."""
    try:
        L = np.linalg.cholesky(belief.cov)
    except np.linalg.LinAlgError:
        log.warning("log_det_cov: covariance is not positive definite")
        return -np.inf
    return float(2.0 * np.sum(np.log(np.diag(L))))


def nees(belief: GaussianBelief, truth) -> float:
    err = np.asarray(truth, dtype=float) - belief.mean
    return float(err @ np.linalg.solve(belief.cov, err))
