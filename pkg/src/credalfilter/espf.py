"""Epistemic support-point filter.

The belief is a :class:`SupportCloud`. A step regenerates a sparse support
grid from the current cloud, pushes it through the dynamics and the process
noise vertex set (sup-min convolution), and then conditions on the
measurement by compatibility: points whose predicted measurement falls
outside the gate ellipsoid are pruned rather than down-weighted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import NamedTuple

import numpy as np
from scipy import linalg as sla
from scipy import special, stats
from scipy.spatial import ConvexHull, QhullError

from .errors import CredalError, EvidenceContradictionError
from .linalg import apply_map, cholesky_jitter, log_det_pd, mahalanobis_sq, require_pd, symmetrize
from .possibility import MERGE_TOL, SupportCloud, merge_duplicates
from .width import UpdateStats

AXIS_GRADE = math.exp(-0.5)
PAIR_GRADE = math.exp(-1.0)
GATE_INFLATION = 4.0
EULER_GAMMA = float(np.euler_gamma)


# --------------------------------------------------------------------------- ellipsoids


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """{z : (z - center)^T shape^-1 (z - center) <= 1}."""

    center: np.ndarray
    shape: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))
        object.__setattr__(self, "shape", require_pd(self.shape, "ellipsoid shape"))

    @property
    def log_det(self):
        return log_det_pd(self.shape)

    def mahalanobis(self, points):
        return mahalanobis_sq(np.atleast_2d(points) - self.center, self.shape)


def _khachiyan(X, tol, max_iter=100_000):
    """Weights of the minimum-volume enclosing ellipsoid, Todd-Yildirim with away steps.

    ``X`` is (k, d) with affinely spanning rows. Stops when every lifted
    point satisfies M_i <= (1 + tol) (d + 1).
    """
    k, d = X.shape
    q = np.hstack([X, np.ones((k, 1))])
    dim = d + 1
    u = np.full(k, 1.0 / k)
    for _ in range(max_iter):
        V = (q.T * u) @ q
        M = np.einsum("ij,ij->i", q, np.linalg.solve(V, q.T).T)
        j = int(np.argmax(M))
        eps_plus = M[j] / dim - 1.0
        active = u > 0
        k_away = int(np.flatnonzero(active)[np.argmin(M[active])])
        eps_minus = 1.0 - M[k_away] / dim
        if eps_plus <= tol and eps_minus <= tol:
            break
        if eps_plus >= eps_minus:
            beta = (M[j] - dim) / (dim * (M[j] - 1.0))
            u *= 1.0 - beta
            u[j] += beta
        else:
            mk = M[k_away]
            if u[k_away] >= 1.0:
                break
            beta = u[k_away] / (1.0 - u[k_away])
            if mk > 1.0 + 1e-12:
                beta = min(beta, (dim - mk) / (dim * (mk - 1.0)))
            u *= 1.0 + beta
            u[k_away] -= beta
            u[k_away] = max(u[k_away], 0.0)
    return u


def _hull_candidates(coords):
    """Only hull vertices can carry MVEE weight; dropping the interior saves most of the work."""
    k, r = coords.shape
    if r == 1:
        return coords[[int(np.argmin(coords[:, 0])), int(np.argmax(coords[:, 0]))]]
    if k <= 4 * (r + 1):
        return coords
    try:
        return coords[ConvexHull(coords).vertices]
    except QhullError:
        return coords


def mvee(points, tol: float = 1e-6) -> Ellipsoid:
    """Minimum-volume enclosing ellipsoid of a point set.

    Rank-deficient sets are solved in their affine hull and padded with
    ``tol * mean squared radius`` along the missing directions; fewer than
    two distinct points give a tiny ball flagged ``degenerate``.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    k, m = P.shape
    mean = P.mean(axis=0)
    centered = P - mean
    scale = max(1.0, float(np.abs(P).max()))
    if k < 2 or np.abs(centered).max() <= 1e-12 * scale:
        return Ellipsoid(mean, tol * scale ** 2 * np.eye(m), degenerate=True)
    _, sv, Vt = np.linalg.svd(centered, full_matrices=False)
    rank = int(np.sum(sv > 1e-10 * sv[0]))
    basis = Vt[:rank].T
    coords = centered @ basis
    cand = _hull_candidates(coords)
    u = _khachiyan(cand, tol * rank / (rank + 1))
    c = u @ cand
    dev_c = cand - c
    shape_r = rank * ((dev_c.T * u) @ dev_c)
    dev = coords - c
    # rescale so every point is enclosed exactly
    md = mahalanobis_sq(dev, shape_r)
    shape_r *= max(1.0, float(md.max()))
    center = mean + basis @ c
    shape = basis @ shape_r @ basis.T
    degenerate = rank < m
    if degenerate:
        radius2 = float(np.mean(np.sum(dev ** 2, axis=1)))
        shape = shape + tol * max(radius2, 1e-300) * np.eye(m)
    return Ellipsoid(center, symmetrize(shape), degenerate=degenerate)


# --------------------------------------------------------------------------- support generation


def whitened_grid(n: int, level: int) -> np.ndarray:
    """Center, +-1 on every axis, and for level 3 every (+-1, +-1) coordinate pair."""
    if level not in (2, 3):
        raise CredalError("support grids are defined for levels 2 and 3")
    eye = np.eye(n)
    rows = [np.zeros(n), *eye, *(-eye)]
    if level == 3:
        for i, j in combinations(range(n), 2):
            for si, sj in product((1.0, -1.0), repeat=2):
                z = np.zeros(n)
                z[i], z[j] = si, sj
                rows.append(z)
    return np.array(rows)


def smolyak_grid(center, shape, level: int = 3) -> SupportCloud:
    """Sparse support grid on an ellipsoid: 2n+1 points at level 2, 2n^2+1 at level 3.

    Grades follow a Gaussian profile in whitened coordinates: 1 at the
    center, exp(-1/2) on the axes, exp(-1) on the pair points.
    """
    if isinstance(shape, Ellipsoid):
        shape = shape.shape
    center = np.atleast_1d(np.asarray(center, dtype=float))
    L, _ = cholesky_jitter(np.atleast_2d(shape))
    Z = whitened_grid(center.shape[0], level)
    grades = np.exp(-0.5 * np.sum(Z ** 2, axis=1))
    return SupportCloud(center + Z @ L.T, grades)


def grid_spread_factor(n: int, level: int) -> float:
    """Ratio between the grade-weighted scatter of a seeded grid and its shape matrix."""
    Z = whitened_grid(n, level)
    w = np.exp(-0.5 * np.sum(Z ** 2, axis=1))
    return float(np.sum(w * Z[:, 0] ** 2) / w.sum())


def box_noise_vertices(Q, scale: float = 3.0) -> np.ndarray:
    """Vertices of the axis-aligned box at +-scale standard deviations of Q."""
    sigma = np.sqrt(np.clip(np.diag(np.atleast_2d(Q)), 0.0, None))
    live = np.flatnonzero(sigma > 0)
    n = sigma.shape[0]
    if live.size == 0:
        return np.zeros((1, n))
    out = []
    for signs in product((1.0, -1.0), repeat=live.size):
        v = np.zeros(n)
        v[live] = scale * sigma[live] * np.array(signs)
        out.append(v)
    return np.array(out)


def minkowski_propagate(cloud: SupportCloud, f, noise_vertices, noise_grades=None,
                        batched=False, merge_tol=MERGE_TOL) -> SupportCloud:
    """Push every point through ``f`` and add every noise vertex.

    The grade of a sum point is min(point grade, vertex grade), and points
    landing on the same location keep the largest such grade.
    """
    W = np.atleast_2d(np.asarray(noise_vertices, dtype=float))
    if W.shape[0] == 0:
        raise CredalError("noise vertex set must be nonempty; use the origin for noiseless steps")
    wg = np.ones(W.shape[0]) if noise_grades is None else np.asarray(noise_grades, dtype=float)
    moved = apply_map(f, cloud.points, batched)
    if W.shape[1] != moved.shape[1]:
        raise CredalError("noise vertices must live in the state space")
    pts = (moved[:, None, :] + W[None, :, :]).reshape(-1, moved.shape[1])
    grades = np.minimum(cloud.grades[:, None], wg[None, :]).reshape(-1)
    pts, grades = merge_duplicates(pts, grades, merge_tol)
    return SupportCloud(pts, grades)


# --------------------------------------------------------------------------- update


class GateResult(NamedTuple):
    mask: np.ndarray
    prune_count: int
    min_stat: float
    d2: np.ndarray
    total_pruning: bool


def compatibility_gate(residuals, Pi_e, r2: float) -> GateResult:
    """Hard gate d_i^2 = r_i^T Pi_e^-1 r_i <= r2 (inclusive)."""
    if isinstance(Pi_e, Ellipsoid):
        Pi_e = Pi_e.shape
    if r2 <= 0:
        raise CredalError("gate radius must be positive")
    d2 = mahalanobis_sq(np.atleast_2d(residuals), require_pd(Pi_e, "Pi_e"))
    mask = d2 <= r2
    return GateResult(mask, int(np.sum(~mask)), float(d2.min()), d2, not mask.any())


def chi2_gate_r2(meas_dim: int, level: float = 0.99) -> float:
    return float(stats.chi2.ppf(level, meas_dim))


@dataclass(frozen=True, eq=False)
class EspfConfig:
    """ESPF settings.

    ``sensor_spread`` is the sensor's support ellipsoid (Pi_y), e.g. 9 R
    for a 3-sigma shell. Because Pi_e = MVEE + Pi_y is itself an enclosing
    set, the default gate ``gate_r2 = 1`` is plain set membership;
    :func:`chi2_gate_r2` gives the chi-square alternative.
    ``noise_support_vertices`` defaults to the box at ``noise_scale``
    standard deviations of the model's Q. With ``soft_compatibility`` the
    0/1 gate is intersected with the Gaussian profile exp(-r^T Pi_y^-1 r / 2).
    """

    sensor_spread: np.ndarray
    smolyak_level: int = 3
    gate_r2: float = 1.0
    noise_support_vertices: np.ndarray | None = None
    noise_scale: float = 3.0
    mvee_tol: float = 1e-3
    soft_compatibility: bool = False
    min_survivors: int = 2
    expansion_factor: float = 4.0
    max_expansions: int = 12
    scatter_floor: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "sensor_spread", symmetrize(np.atleast_2d(self.sensor_spread)))
        if self.smolyak_level not in (2, 3):
            raise CredalError("smolyak_level must be 2 or 3")
        if not self.gate_r2 > 0:
            raise CredalError("gate_r2 must be positive")
        if self.min_survivors < 1:
            raise CredalError("min_survivors must be at least 1")
        if self.expansion_factor <= 1 or self.max_expansions < 0:
            raise CredalError("expansion_factor must exceed 1 and max_expansions be nonnegative")
        if not 0 < self.mvee_tol < 0.1:
            raise CredalError("mvee_tol must lie in (0, 0.1)")
        if not 0 <= self.scatter_floor <= 1:
            raise CredalError("scatter_floor must lie in [0, 1]")

    @property
    def meas_dim(self):
        return self.sensor_spread.shape[0]

    def r2(self):
        return float(self.gate_r2)

    def noise_vertices(self, Q):
        if self.noise_support_vertices is not None:
            return np.atleast_2d(self.noise_support_vertices)
        return box_noise_vertices(Q, self.noise_scale)


def measurement_spread(Z, cfg: EspfConfig) -> np.ndarray:
    """Pi_e: MVEE shape of the predicted measurements plus the sensor spread."""
    return symmetrize(mvee(Z, cfg.mvee_tol).shape + cfg.sensor_spread)


def espf_update(cloud: SupportCloud, y, h, cfg: EspfConfig, batched=False, measurement_hull=None):
    """Compatibility update: gate, min-condition, prune, max-normalize.

    ``necessity_saturation`` in the returned stats is 1 minus the largest
    prior grade inside the nominal gate, i.e. the necessity of the event
    "the prediction was wrong"; it is 1 whenever the inflated gate was needed.
    The soft profile is applied in log space so far-off measurements do not
    underflow every grade to zero.

    If fewer than ``cfg.min_survivors`` points pass the gate (by default:
    every point fails, or only one is left, which cannot carry a spread),
    the radius is inflated x4 once; a second failure raises
    :class:`EvidenceContradictionError`.
    Returns the posterior cloud and the :class:`UpdateStats` of the gate.
    ``measurement_hull`` may carry an already computed MVEE of h(points).
    """
    Z = apply_map(h, cloud.points, batched)
    if measurement_hull is None:
        measurement_hull = mvee(Z, cfg.mvee_tol)
    Pi_e = symmetrize(measurement_hull.shape + cfg.sensor_spread)
    residuals = np.atleast_1d(np.asarray(y, dtype=float))[None, :] - Z
    r2 = cfg.r2()
    live = cloud.grades > 0
    need = min(cfg.min_survivors, int(live.sum()))
    gate = compatibility_gate(residuals, Pi_e, r2)
    inflated = False
    if np.sum(gate.mask & live) < need:
        inflated = True
        gate = compatibility_gate(residuals, Pi_e, GATE_INFLATION * r2)
        if np.sum(gate.mask & live) < need:
            raise EvidenceContradictionError("evidence contradiction: the gate leaves too few support points",
                                             min_stat=gate.min_stat)
    keep = gate.mask & live
    # the event ruled out by the nominal gate is necessary to this degree
    conflict = 1.0 if inflated else 1.0 - float(cloud.grades[keep].max())
    log_raw = np.log(cloud.grades[keep])
    if cfg.soft_compatibility:
        log_kappa = -0.5 * mahalanobis_sq(residuals[keep], cfg.sensor_spread)
        log_raw = np.minimum(log_raw, log_kappa)
    grades = np.exp(log_raw - log_raw.max())
    live = grades > 0
    points = cloud.points[keep][live]
    posterior = SupportCloud(points, grades[live], raw_grades=np.exp(log_raw[live]))
    update_stats = UpdateStats(prune_count=gate.prune_count, min_stat=gate.min_stat, gate_r2=r2,
                               necessity_saturation=conflict, inflated=inflated)
    return posterior, update_stats


# --------------------------------------------------------------------------- Gaussian limit


def unit_ball_log_volume(n: int) -> float:
    return 0.5 * n * math.log(math.pi) - special.gammaln(0.5 * n + 1)


def possibilistic_entropy_gaussian(cov) -> float:
    """Integral over alpha in (0, 1] of log volume of the Gaussian-profile alpha-cut.

    Equals 1/2 log det cov + (n/2)(log 2 - gamma) + log(unit-ball volume).
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    try:
        L = np.linalg.cholesky(symmetrize(cov))
    except np.linalg.LinAlgError:
        raise CredalError("entropy needs a positive definite covariance") from None
    n = cov.shape[0]
    half_logdet = float(np.sum(np.log(np.diag(L))))
    return half_logdet + 0.5 * n * (math.log(2.0) - EULER_GAMMA) + unit_ball_log_volume(n)


@dataclass(frozen=True, eq=False)
class GaussianLimitExtract:
    mean: np.ndarray
    cov: np.ndarray
    h_pi: float
    degenerate: bool = False


def gaussian_limit_extract(cloud: SupportCloud) -> GaussianLimitExtract:
    """Grade-weighted mean and scatter of the cloud, with the entropy of that scatter.

    A single effective point gives a point mass padded with a tiny ball,
    flagged ``degenerate``.
    """
    w = cloud.grades / cloud.grades.sum()
    mean = w @ cloud.points
    dev = cloud.points - mean
    cov = symmetrize((dev.T * w) @ dev)
    n = cloud.dim
    scale = max(1.0, float(np.abs(cloud.points).max()))
    eps = 1e-12 * scale ** 2
    degenerate = int(np.sum(w > 0)) < 2
    if degenerate:
        cov = eps * np.eye(n)
    else:
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            cov = cov + eps * np.eye(n)
            try:
                np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                degenerate = True
                _, jitter = cholesky_jitter(cov)
                cov = cov + max(jitter, eps) * np.eye(n)
    return GaussianLimitExtract(mean, cov, possibilistic_entropy_gaussian(cov), degenerate)


# --------------------------------------------------------------------------- filter loop


@dataclass
class EspfStep:
    cloud: SupportCloud
    predicted: SupportCloud
    stats: UpdateStats
    extract: GaussianLimitExtract
    log_det_mvee: float
    expansions: int = 0
    floor: np.ndarray | None = None


def resupport(cloud: SupportCloud, level: int) -> SupportCloud:
    """Fresh grid whose grade-weighted moments match the cloud's."""
    ex = gaussian_limit_extract(cloud)
    return smolyak_grid(ex.mean, ex.cov / grid_spread_factor(cloud.dim, level), level)


def floor_scatter(cov, floor):
    """Smallest matrix that dominates both ``cov`` and ``floor`` along floor's eigenframe.

    Eigenvalues of cov in the whitened frame of ``floor`` are clipped at 1,
    so directions already wider than the floor are left alone.
    """
    if floor is None:
        return cov
    L = np.linalg.cholesky(symmetrize(floor))
    A = sla.solve_triangular(L, sla.solve_triangular(L, cov, lower=True).T, lower=True)
    s, V = np.linalg.eigh(symmetrize(A))
    B = L @ V
    return symmetrize((B * np.maximum(s, 1.0)) @ B.T)


def espf_predict(cloud: SupportCloud, model, cfg: EspfConfig, widen: float = 1.0, floor=None) -> SupportCloud:
    """Resupport, then sup-min propagate. ``widen`` scales the grid shape and the
    noise box (spread squared), which is how contradictions are handled."""
    ex = gaussian_limit_extract(cloud)
    level = cfg.smolyak_level
    cov = floor_scatter(ex.cov, floor)
    grid = smolyak_grid(ex.mean, widen * cov / grid_spread_factor(cloud.dim, level), level)
    vertices = math.sqrt(widen) * cfg.noise_vertices(model.Q)
    return minkowski_propagate(grid, model.f, vertices, batched=model.batched)


def espf_step(cloud: SupportCloud, model, y, cfg: EspfConfig, floor=None) -> EspfStep:
    """Predict and update once.

    When the measurement contradicts the whole predicted support, the prior
    grid and the noise box are widened (x ``expansion_factor`` in spread
    squared per retry) until something survives; the step then reports full
    necessity of the falsified prediction.

    ``floor`` is the ``EspfStep.floor`` of the previous step. A handful of
    survivors cannot span the state space, and without a floor their
    rank-deficient scatter would seed a grid that is flat in the
    unobserved directions.
    """
    predicted = espf_predict(cloud, model, cfg, floor=floor)
    hull = mvee(apply_map(model.h, predicted.points, model.batched), cfg.mvee_tol)
    candidate = predicted
    first_min_stat = None
    for expansions in range(cfg.max_expansions + 1):
        try:
            posterior, st = espf_update(candidate, y, model.h, cfg, batched=model.batched,
                                        measurement_hull=hull if expansions == 0 else None)
        except EvidenceContradictionError as exc:
            if first_min_stat is None:
                first_min_stat = exc.min_stat
            candidate = espf_predict(cloud, model, cfg, widen=cfg.expansion_factor ** (expansions + 1),
                                     floor=floor)
            continue
        if expansions:
            st = UpdateStats(prune_count=predicted.size, min_stat=first_min_stat, gate_r2=st.gate_r2,
                             necessity_saturation=1.0, inflated=True, contradiction=True)
        next_floor = None
        if cfg.scatter_floor > 0:
            next_floor = cfg.scatter_floor * gaussian_limit_extract(candidate).cov
        return EspfStep(posterior, predicted, st, gaussian_limit_extract(posterior), hull.log_det,
                        expansions, next_floor)
    raise EvidenceContradictionError("evidence contradiction: support expansion exhausted",
                                     min_stat=first_min_stat)
