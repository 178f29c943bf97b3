"""Non-additive integration against possibility capacities, plus the Hölder mean family."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CredalError, EnumerationLimitError
from .possibility import SupportCloud, TrapezoidPossibility

EXACT_EXPECTATION_LIMIT = 12
_GEOMETRIC_GUARD = 1e-8


@dataclass(frozen=True, eq=False)
class BoundedFunctionSamples:
    """Values of a bounded function at the cloud points, with a certified sup-norm bound."""

    values: np.ndarray
    bound_M: float | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise CredalError("function samples must be finite")
        bound = float(np.abs(values).max()) if self.bound_M is None else float(self.bound_M)
        if bound <= 0:
            bound = 1.0 if self.bound_M is None else bound
        if bound <= 0:
            raise CredalError("bound_M must be positive")
        if np.any(np.abs(values) > bound * (1 + 1e-12)):
            raise CredalError("sample exceeds the certified bound_M")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "bound_M", bound)


def _samples(cloud, f):
    values = f.values if isinstance(f, BoundedFunctionSamples) else np.asarray(f, dtype=float).reshape(-1)
    if values.shape[0] != cloud.size:
        raise CredalError("f must be sampled at every cloud point")
    return values


def _layers(cloud, values):
    """Descending sort (ties by index) and Pi of each top-i level set."""
    order = np.argsort(-values, kind="stable")
    return values[order], np.maximum.accumulate(cloud.grades[order])


def choquet_discrete(cloud: SupportCloud, f) -> float:
    """Discrete Choquet integral of ``f`` with respect to the cloud's possibility measure.

    Uses the signed layer-cake form, so negative values are integrated
    without shifting ``f`` (shifting changes the value for non-additive
    capacities). Negative samples need a normalized cloud; otherwise the
    lower layer integral diverges.
    """
    values = _samples(cloud, f)
    if values.min() < 0 and not cloud.is_normalized:
        raise CredalError("negative integrands need a normalized capacity")
    fs, caps = _layers(cloud, values)
    return float(np.dot(fs[:-1] - fs[1:], caps[:-1]) + fs[-1] * caps[-1])


def upper_lower_expectation(cloud: SupportCloud, f) -> tuple[float, float]:
    """(lower, upper) expectation of ``f`` over the credal set of the cloud.

    The upper bound is the Choquet integral against Pi, the lower one the
    conjugate integral against N, i.e. ``-Ch(-f)``.
    """
    if cloud.size > EXACT_EXPECTATION_LIMIT:
        raise EnumerationLimitError(f"enumeration limit: {cloud.size} > {EXACT_EXPECTATION_LIMIT}")
    if not cloud.is_normalized:
        raise CredalError("credal set is empty for a subnormal cloud")
    values = _samples(cloud, f)
    upper = choquet_discrete(cloud, values)
    lower = -choquet_discrete(cloud, -values)
    return lower, upper


def sugeno_discrete(cloud: SupportCloud, f) -> float:
    """sup over alpha of min(alpha, Pi{f >= alpha}), for ``f`` valued in [0, 1]."""
    values = _samples(cloud, f)
    if values.min() < 0 or values.max() > 1:
        raise CredalError("Sugeno integral needs f valued in [0, 1]")
    fs, caps = _layers(cloud, values)
    return float(np.max(np.minimum(fs, caps)))


def choquet_trapezoid_identity(dist: TrapezoidPossibility) -> float:
    """Choquet expectation of f(x) = x, i.e. the integral over t >= 0 of Pi{x >= t}.

    On a nonnegative domain the level-set possibility is 1 up to the plateau's
    right edge and falls linearly over the ramp, giving ``b + delta / 2``.
    """
    if dist.domain_lo < 0:
        raise CredalError("identity needs a domain inside [0, inf); integrate numerically instead")
    return dist.b + dist.delta / 2.0


def lebesgue_expectation_trapezoid(dist: TrapezoidPossibility) -> float:
    """Mean of x under the trapezoid shape renormalized to unit area."""
    ell, delta = dist.plateau_width, dist.delta
    area = ell + delta
    if area <= 0:
        raise CredalError("zero-area support has no normalized density")
    moment = ell * (dist.a + dist.b) / 2 + (delta / 2) * (dist.a - delta / 3) + (delta / 2) * (dist.b + delta / 3)
    return moment / area


def holder_mean(alpha: float, a: float, b: float) -> float:
    """Power mean ((a^alpha + b^alpha) / 2)^(1/alpha) with its limiting branches."""
    if a < 0 or b < 0:
        raise CredalError("power mean needs nonnegative arguments")
    if alpha == np.inf:
        return float(max(a, b))
    if alpha == -np.inf:
        return float(min(a, b))
    if abs(alpha) < _GEOMETRIC_GUARD:
        return float(np.sqrt(a * b))
    if alpha < 0 and min(a, b) == 0:
        return 0.0
    # factor out the dominant term so a**alpha stays representable
    ref = max(a, b) if alpha > 0 else min(a, b)
    if ref == 0:
        return 0.0
    inner = ((a / ref) ** alpha + (b / ref) ** alpha) / 2.0
    return float(ref * inner ** (1.0 / alpha))


def alpha_of_confidence(C: float, epsilon: float = 0.01) -> float:
    """Heuristic Hölder exponent 1 + 1/(epsilon + 1 - C) for confidence C in [0, 1]."""
    if not 0 <= C <= 1:
        raise CredalError("confidence must lie in [0, 1]")
    if epsilon <= 0:
        raise CredalError("epsilon must be positive")
    return 1.0 + 1.0 / (epsilon + (1.0 - C))
