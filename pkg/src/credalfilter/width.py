"""Epistemic width diagnostics.

Widths measure how far a possibility distribution is from collapsing onto a
single probability: ``Pi(A) - N(A)`` per event, its domain average for the
trapezoid and cloud representations, and the innovation-based proxy used
while a Gaussian filter is running.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate

from .errors import ColdStartError, CredalError
from .integrals import alpha_of_confidence
from .possibility import (
    ENUMERATION_LIMIT,
    SupportCloud,
    TrapezoidPossibility,
    credal_width,
    credal_width_exact,
    event_possibilities,
    necessity_kernel_trapezoid,
    necessity_of,
    possibility_of,
)

CLOSED_FORM = "closed_form"
QUADRATURE = "quadrature"


def pointwise_width(dist, event) -> float:
    """w(A) = Pi(A) - N(A)."""
    return possibility_of(dist, event) - necessity_of(dist, event)


def aggregate_width_trapezoid(dist: TrapezoidPossibility, method: str) -> float:
    """Normalized aggregate width of a trapezoid.

    ``closed_form`` evaluates ``2 delta (l + delta) / (l + 2 delta)`` and
    ``quadrature`` integrates ``pi - n`` with the trapezoid necessity kernel.
    The two do not agree; callers pick one explicitly. Both divide by the
    domain length and both give 1 for total ignorance, where the kernel is
    identically zero.
    """
    mu = dist.domain_measure
    if not np.isfinite(mu):
        raise CredalError("unbounded domain: pick a finite normalizing sub-domain")
    if dist.is_ignorance:
        return 1.0
    ell, delta = dist.plateau_width, dist.delta
    if method == CLOSED_FORM:
        if ell + 2 * delta == 0:
            return 0.0
        return 2 * delta * (ell + delta) / (ell + 2 * delta) / mu
    if method == QUADRATURE:
        lo, hi = dist.support
        if hi <= lo:
            return 0.0
        breaks = [dist.a, dist.b]
        value, _ = integrate.quad(
            lambda x: float(dist(x) - necessity_kernel_trapezoid(dist, x)),
            lo, hi, points=breaks, epsabs=1e-12, epsrel=1e-10, limit=200,
        )
        return value / mu
    raise CredalError(f"unknown width method {method!r}; use {CLOSED_FORM!r} or {QUADRATURE!r}")


def cloud_necessity_kernel(grades) -> np.ndarray:
    """n_i = max(0, pi_i - max_{j != i} pi_j): the necessity of each singleton."""
    grades = np.asarray(grades, dtype=float)
    if grades.shape[0] == 1:
        return grades.copy()
    order = np.argsort(-grades, kind="stable")
    others = np.full(grades.shape, grades[order[0]])
    others[order[0]] = grades[order[1]]
    return np.maximum(0.0, grades - others)


def aggregate_width_cloud(cloud: SupportCloud) -> float:
    """Mean of pi - n over the points (counting reference measure)."""
    grades = cloud.grades
    return float(np.mean(grades - cloud_necessity_kernel(grades)))


# --------------------------------------------------------------------------- online proxy


@dataclass(frozen=True)
class SwitchThresholds:
    w_crit: float = 0.5
    hysteresis: float = 0.1
    kappa_w: float = 0.5

    def __post_init__(self):
        if not 0 < self.w_crit < 1:
            raise CredalError("w_crit must lie in (0, 1)")
        if self.hysteresis <= 0 or self.kappa_w <= 0:
            raise CredalError("hysteresis and kappa_w must be positive")
        if not (self.w_crit + self.hysteresis < 1 and self.w_crit - self.hysteresis > 0):
            raise CredalError("hysteresis band must stay inside (0, 1)")

    @property
    def upper(self):
        return self.w_crit + self.hysteresis

    @property
    def lower(self):
        return self.w_crit - self.hysteresis


class NeesWindow:
    """Sliding window of per-step innovation statistics y^T S^-1 y."""

    def __init__(self, window_len=20, meas_dim=1):
        if window_len < 1 or meas_dim < 1:
            raise CredalError("window length and measurement dimension must be positive")
        self.window_len = int(window_len)
        self.meas_dim = int(meas_dim)
        self.buffer = deque(maxlen=self.window_len)

    def push(self, value):
        value = float(value)
        if not value >= 0:
            raise CredalError("innovation statistic must be nonnegative")
        self.buffer.append(value)

    def clear(self):
        self.buffer.clear()

    def __len__(self):
        return len(self.buffer)

    def nees(self):
        """Window mean of the statistic per measurement dimension."""
        if not self.buffer:
            raise ColdStartError("cold start: empty NEES window")
        return float(np.mean(self.buffer)) / self.meas_dim


def w_hat_from_nees(nees: float, kappa_w: float) -> float:
    return -math.expm1(-kappa_w * nees)


def w_hat(window: NeesWindow, thresholds: SwitchThresholds) -> float:
    """1 - exp(-kappa_w * NEES) over the window."""
    return w_hat_from_nees(window.nees(), thresholds.kappa_w)


# --------------------------------------------------------------------------- domain expansion


def domain_expand(cloud: SupportCloud, new_points) -> SupportCloud:
    """Append new states at grade 1: nothing is known about the added region."""
    new_points = np.asarray(new_points, dtype=float)
    if new_points.size == 0:
        return cloud
    new_points = new_points.reshape(-1, cloud.dim)
    scale = max(1.0, float(np.abs(cloud.points).max()), float(np.abs(new_points).max()))
    gaps = np.linalg.norm(new_points[:, None, :] - cloud.points[None, :, :], axis=2)
    if gaps.min() <= 1e-9 * scale:
        raise CredalError("new points must be disjoint from the existing support")
    return SupportCloud(np.vstack([cloud.points, new_points]),
                        np.concatenate([cloud.grades, np.ones(new_points.shape[0])]))


def _hull_boundary_points(cloud: SupportCloud, count: int) -> np.ndarray:
    lo, hi = cloud.points.min(axis=0), cloud.points.max(axis=0)
    step = np.maximum(hi - lo, 1.0) / max(count, 1)
    return np.array([hi + (k + 1) * step for k in range(count)])


def fragility_estimate(cloud: SupportCloud, expansion_fraction: float) -> float:
    """Finite-difference rate of width increase when the support grows by a fraction.

    Adds ``ceil(fraction * M)`` grade-1 points just outside the bounding box.
    """
    if not 0 < expansion_fraction <= 1:
        raise CredalError("expansion fraction must lie in (0, 1]")
    count = math.ceil(expansion_fraction * cloud.size)
    expanded = domain_expand(cloud, _hull_boundary_points(cloud, count))
    rate = (aggregate_width_cloud(expanded) - aggregate_width_cloud(cloud)) / expansion_fraction
    return max(rate, 0.0)


def additive_extension(p_star, alpha: float, r) -> np.ndarray:
    """Probability vector on X + dX that restricts to ``p_star`` on X.

    ``(1 - alpha) p*/p*(X)`` on the original points, ``alpha r/r(dX)`` on the
    new ones; every alpha in [0, 1) and every r gives a different extension.
    """
    p_star = np.asarray(p_star, dtype=float)
    r = np.asarray(r, dtype=float)
    if not 0 <= alpha < 1:
        raise CredalError("alpha must lie in [0, 1)")
    if p_star.sum() <= 0 or r.sum() <= 0 or p_star.min() < 0 or r.min() < 0:
        raise CredalError("p_star and r must be nonnegative with positive mass")
    return np.concatenate([(1 - alpha) * p_star / p_star.sum(), alpha * r / r.sum()])


def restrict(p_tilde, original_size: int) -> np.ndarray:
    """Conditional probability on the first ``original_size`` states."""
    head = np.asarray(p_tilde, dtype=float)[:original_size]
    return head / head.sum()


# --------------------------------------------------------------------------- metric


def credal_pseudometric(d1: SupportCloud, d2: SupportCloud) -> float:
    """sup over events of |Pi1(A) - Pi2(A)|, by enumeration over shared points."""
    if d1.size != d2.size or not np.allclose(d1.points, d2.points, rtol=1e-12, atol=0):
        raise CredalError("clouds must share the same point set")
    if d1.size > ENUMERATION_LIMIT:
        raise CredalError(f"enumeration limit: {d1.size} > {ENUMERATION_LIMIT}")
    diff = np.abs(event_possibilities(d1.grades) - event_possibilities(d2.grades))
    return float(diff[1:].max())


# --------------------------------------------------------------------------- monitor report


@dataclass(frozen=True)
class UpdateStats:
    """What the last compatibility update saw, as needed by the width report."""

    prune_count: int = 0
    min_stat: float = 0.0
    gate_r2: float = 1.0
    necessity_saturation: float = 0.0
    inflated: bool = False
    contradiction: bool = False


@dataclass(frozen=True)
class WidthReport:
    w_bar: float
    w_tv: float | None
    w_hat: float | None
    prune_count: int
    necessity_saturation: float
    surprisal: float
    alpha_c: float

    def __post_init__(self):
        for name in ("w_bar", "necessity_saturation", "surprisal", "alpha_c"):
            if not np.isfinite(getattr(self, name)):
                raise CredalError(f"{name} must be finite")

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict())


def ewm_report(cloud: SupportCloud, stats: UpdateStats, w_hat_value=None) -> WidthReport:
    """Assemble the width-monitor snapshot for a possibilistic step.

    Surprisal is the smallest gate statistic over the predicted support,
    relative to the gate radius; necessity saturation is passed in from the
    update. ``alpha_c`` maps confidence ``1 - w_bar`` to a Hölder exponent.
    """
    w_bar = aggregate_width_cloud(cloud)
    w_tv = credal_width_exact(cloud) if cloud.size <= ENUMERATION_LIMIT else credal_width(cloud)
    return WidthReport(
        w_bar=w_bar,
        w_tv=w_tv,
        w_hat=w_hat_value,
        prune_count=int(stats.prune_count),
        necessity_saturation=float(stats.necessity_saturation),
        surprisal=float(stats.min_stat / stats.gate_r2),
        alpha_c=alpha_of_confidence(min(max(1.0 - w_bar, 0.0), 1.0), 0.01),
    )
