"""Consonant possibility distributions: analytic trapezoids and discrete support clouds.

Two representations share one event-level API (``possibility_of``,
``necessity_of``, ``alpha_cut``). Events on a trapezoid are finite unions of
closed intervals; events on a cloud are sets of point indices, with the cloud
treated as the whole (discrete) space.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

from .errors import CredalError, EmptyEventError, EnumerationLimitError, TotalIncompatibilityError

MERGE_TOL = 1e-9
ENUMERATION_LIMIT = 20


# --------------------------------------------------------------------------- events


@dataclass(frozen=True)
class IntervalEvent:
    """Finite union of closed intervals ``[lo, hi]`` on the real line."""

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        cleaned = []
        for lo, hi in self.intervals:
            lo, hi = float(lo), float(hi)
            if hi < lo:
                raise CredalError(f"interval [{lo}, {hi}] has hi < lo")
            cleaned.append((lo, hi))
        object.__setattr__(self, "intervals", tuple(sorted(cleaned)))

    @classmethod
    def of(cls, lo, hi):
        return cls(((lo, hi),))

    def is_empty(self):
        return len(self.intervals) == 0


@dataclass(frozen=True)
class IndexEvent:
    """Set of point indices into a :class:`SupportCloud`."""

    indices: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "indices", frozenset(int(i) for i in self.indices))

    def is_empty(self):
        return len(self.indices) == 0


DiscreteEvent = Union[IntervalEvent, IndexEvent]


# --------------------------------------------------------------------------- trapezoid


@dataclass(frozen=True)
class TrapezoidPossibility:
    """Plateau ``[a, b]`` at grade 1 with linear ramps of width ``delta``.

    The reference domain ``[domain_lo, domain_hi]`` carries the Lebesgue
    measure used for width normalization and for event complements.
    """

    a: float
    b: float
    delta: float
    domain_lo: float = 0.0
    domain_hi: float = 1.0

    def __post_init__(self):
        for name in ("a", "b", "delta", "domain_lo", "domain_hi"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise CredalError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if self.a > self.b:
            raise CredalError("plateau requires a <= b")
        if self.delta < 0:
            raise CredalError("delta must be >= 0")
        if self.domain_hi <= self.domain_lo:
            raise CredalError("domain must have positive length")
        slack = 1e-12 * max(1.0, abs(self.domain_lo), abs(self.domain_hi))
        if self.a - self.delta < self.domain_lo - slack or self.b + self.delta > self.domain_hi + slack:
            raise CredalError("support [a-delta, b+delta] must lie inside the domain")

    @classmethod
    def ignorance(cls, lo=0.0, hi=1.0):
        """pi = 1 everywhere on the domain."""
        return cls(lo, hi, 0.0, lo, hi)

    @property
    def plateau_width(self):
        return self.b - self.a

    @property
    def support(self):
        return (self.a - self.delta, self.b + self.delta)

    @property
    def domain_measure(self):
        return self.domain_hi - self.domain_lo

    @property
    def is_ignorance(self):
        return self.a <= self.domain_lo and self.b >= self.domain_hi

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where((x >= self.a) & (x <= self.b), 1.0, 0.0)
        if self.delta > 0:
            with np.errstate(over="ignore"):  # subnormal ramps overflow to +-inf, which the clip absorbs
                left = (x - (self.a - self.delta)) / self.delta
                right = ((self.b + self.delta) - x) / self.delta
            ramp = np.clip(np.minimum(left, right), 0.0, 1.0)
            out = np.maximum(out, ramp)
        out = np.where((x < self.domain_lo) | (x > self.domain_hi), 0.0, out)
        return out if out.ndim else float(out)

    def sup_on(self, lo, hi):
        """Supremum of pi over the closed interval ``[lo, hi]`` clipped to the domain."""
        lo, hi = max(lo, self.domain_lo), min(hi, self.domain_hi)
        if hi < lo:
            return 0.0
        if hi < self.a:
            return float(self(hi))
        if lo > self.b:
            return float(self(lo))
        return 1.0

    def complement(self, event: IntervalEvent) -> IntervalEvent:
        """Closure of the domain minus the event."""
        pieces = []
        cursor = self.domain_lo
        for lo, hi in event.intervals:
            lo, hi = max(lo, self.domain_lo), min(hi, self.domain_hi)
            if hi < lo:
                continue
            if lo > cursor:
                pieces.append((cursor, lo))
            cursor = max(cursor, hi)
        if cursor < self.domain_hi:
            pieces.append((cursor, self.domain_hi))
        return IntervalEvent(tuple(pieces))

    def to_dict(self):
        return {"kind": "trapezoid", "a": self.a, "b": self.b, "delta": self.delta,
                "domain": [self.domain_lo, self.domain_hi]}


# --------------------------------------------------------------------------- cloud


def _readonly(arr):
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SupportCloud:
    """Finite set of support points with possibility grades.

    ``grades`` are stored as given; normalization is the explicit
    :meth:`normalized` step. When a cloud comes out of conditioning,
    ``raw_grades`` keeps the pre-normalization values.
    """

    points: np.ndarray
    grades: np.ndarray
    raw_grades: np.ndarray | None = field(default=None)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        grades = np.asarray(self.grades, dtype=float).reshape(-1)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise CredalError("cloud needs at least one point")
        if pts.shape[0] != grades.shape[0]:
            raise CredalError("points and grades must have equal length")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(grades))):
            raise CredalError("cloud values must be finite")
        if np.any(grades < 0) or np.any(grades > 1 + 1e-12):
            raise CredalError("grades must lie in [0, 1]")
        object.__setattr__(self, "points", _readonly(pts))
        object.__setattr__(self, "grades", _readonly(np.minimum(grades, 1.0)))
        if self.raw_grades is not None:
            object.__setattr__(self, "raw_grades", _readonly(self.raw_grades))

    @classmethod
    def build(cls, points, grades, merge_tol=MERGE_TOL):
        """Construct a cloud, merging near-duplicate points (keeping the max grade)."""
        pts, gr = merge_duplicates(points, grades, merge_tol)
        return cls(pts, gr)

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def is_normalized(self):
        return bool(np.isclose(self.grades.max(), 1.0, rtol=0, atol=1e-12))

    @property
    def prunable(self):
        return self.grades <= 0.0

    @property
    def argmax(self):
        return int(np.argmax(self.grades))

    def normalized(self):
        top = self.grades.max()
        if top <= 0:
            raise TotalIncompatibilityError("total incompatibility: every grade is zero")
        return SupportCloud(self.points, self.grades / top, raw_grades=self.grades)

    def with_grades(self, grades):
        return SupportCloud(self.points, grades)

    def subset(self, mask):
        mask = np.asarray(mask)
        return SupportCloud(self.points[mask], self.grades[mask])

    def pruned(self):
        """Drop zero-grade points."""
        keep = ~self.prunable
        if not keep.any():
            raise TotalIncompatibilityError("total incompatibility: every grade is zero")
        return self.subset(keep)

    def to_dict(self):
        return {"kind": "cloud", "dim": self.dim, "points": self.points.tolist(),
                "grades": self.grades.tolist()}


def merge_duplicates(points, grades, tol=MERGE_TOL):
    """Merge points closer than ``tol`` (relative to the coordinate scale), keeping max grade."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    grades = np.asarray(grades, dtype=float).reshape(-1)
    if pts.shape[0] < 2:
        return pts, grades
    scale = max(1.0, float(np.abs(pts).max()))
    pairs = cKDTree(pts).query_pairs(tol * scale, output_type="ndarray")
    if len(pairs) == 0:
        return pts, grades
    parent = np.arange(pts.shape[0])

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(pts.shape[0])])
    keep = np.unique(roots)
    merged = np.full(keep.shape[0], -np.inf)
    slot = np.searchsorted(keep, roots)
    np.maximum.at(merged, slot, grades)
    return pts[keep], merged


Distribution = Union[TrapezoidPossibility, SupportCloud]


# --------------------------------------------------------------------------- event plumbing


def as_event(dist: Distribution, event) -> DiscreteEvent:
    """Coerce user input into the event type matching ``dist``.

    Trapezoids accept ``(lo, hi)``, a list of such pairs, or an
    :class:`IntervalEvent`; clouds accept any iterable of indices.
    """
    if isinstance(dist, TrapezoidPossibility):
        if isinstance(event, IntervalEvent):
            return event
        if isinstance(event, IndexEvent):
            raise CredalError("index events apply to clouds only")
        event = list(event)
        if len(event) == 2 and np.isscalar(event[0]):
            event = [tuple(event)]
        return IntervalEvent(tuple(tuple(iv) for iv in event))
    if isinstance(event, IntervalEvent):
        raise CredalError("interval events apply to trapezoids only")
    ev = event if isinstance(event, IndexEvent) else IndexEvent(frozenset(event))
    bad = [i for i in ev.indices if i < 0 or i >= dist.size]
    if bad:
        raise CredalError(f"event indices out of range: {sorted(bad)}")
    return ev


def full_event(dist: Distribution) -> DiscreteEvent:
    if isinstance(dist, TrapezoidPossibility):
        return IntervalEvent.of(dist.domain_lo, dist.domain_hi)
    return IndexEvent(frozenset(range(dist.size)))


def complement(dist: Distribution, event: DiscreteEvent) -> DiscreteEvent:
    if isinstance(dist, TrapezoidPossibility):
        return dist.complement(event)
    return IndexEvent(frozenset(range(dist.size)) - event.indices)


def _sup(dist: Distribution, event: DiscreteEvent) -> float:
    if isinstance(dist, TrapezoidPossibility):
        return max((dist.sup_on(lo, hi) for lo, hi in event.intervals), default=0.0)
    if not event.indices:
        return 0.0
    return float(dist.grades[list(event.indices)].max())


# --------------------------------------------------------------------------- measures


def possibility_of(dist: Distribution, event, allow_empty=False) -> float:
    """Pi(A): supremum of the distribution over the event."""
    ev = as_event(dist, event)
    if ev.is_empty() and not allow_empty:
        raise EmptyEventError("empty event")
    return _sup(dist, ev)


def necessity_of(dist: Distribution, event, allow_empty=False) -> float:
    """N(A) = 1 - Pi(complement of A)."""
    ev = as_event(dist, event)
    if ev.is_empty() and not allow_empty:
        raise EmptyEventError("empty event")
    return 1.0 - _sup(dist, complement(dist, ev))


def necessity_kernel_trapezoid(dist: TrapezoidPossibility, x):
    """n(x) = max(0, pi(x) - 2 delta / (l + 2 delta))."""
    ell, delta = dist.plateau_width, dist.delta
    offset = 0.0 if ell + 2 * delta == 0 else 2 * delta / (ell + 2 * delta)
    return np.maximum(0.0, dist(x) - offset)


def alpha_cut(dist: Distribution, alpha: float) -> DiscreteEvent:
    """{x : pi(x) >= alpha}; an interval for trapezoids, an index set for clouds."""
    if not 0 < alpha <= 1:
        raise CredalError("alpha must lie in (0, 1]")
    if isinstance(dist, TrapezoidPossibility):
        spread = (1.0 - alpha) * dist.delta
        return IntervalEvent.of(dist.a - spread, dist.b + spread)
    return IndexEvent(frozenset(np.flatnonzero(dist.grades >= alpha).tolist()))


def min_condition(prior: SupportCloud, kappa: Sequence[float]) -> SupportCloud:
    """Possibilistic conditioning: grade-wise min with the compatibility field, then max-normalize.

    Zero-grade points stay in the cloud and show up in ``prunable``.
    """
    kappa = np.asarray(kappa, dtype=float).reshape(-1)
    if kappa.shape[0] != prior.size:
        raise CredalError("kappa must have one entry per support point")
    if np.any(kappa < 0) or np.any(kappa > 1):
        raise CredalError("kappa must lie in [0, 1]")
    return prior.with_grades(np.minimum(prior.grades, kappa)).normalized()


# --------------------------------------------------------------------------- enumeration


def event_possibilities(grades) -> np.ndarray:
    """Pi(A) for every subset A of the points, indexed by bitmask (Pi(empty) = 0)."""
    grades = np.asarray(grades, dtype=float)
    m = grades.shape[0]
    if m > ENUMERATION_LIMIT:
        raise EnumerationLimitError(f"enumeration limit: {m} points > {ENUMERATION_LIMIT}")
    table = np.zeros(1 << m)
    for k in range(m):
        lo = 1 << k
        table[lo:2 * lo] = np.maximum(table[:lo], grades[k])
    return table


def credal_width_exact(cloud: SupportCloud) -> float:
    """sup over nonempty proper events of Pi(A) - N(A), by enumeration."""
    m = cloud.size
    if m == 1:
        return 0.0
    table = event_possibilities(cloud.grades)
    full = (1 << m) - 1
    masks = np.arange(1, full)
    gaps = table[masks] - (1.0 - table[full ^ masks])
    return float(max(gaps.max(), 0.0))


def credal_width(cloud: SupportCloud) -> float:
    """Closed form of :func:`credal_width_exact`: largest plus second-largest grade, minus one.

    For a normalized cloud this is the second-largest grade.
    """
    if cloud.size == 1:
        return 0.0
    top2 = np.partition(cloud.grades, -2)[-2:]
    return float(max(top2.sum() - 1.0, 0.0))


# --------------------------------------------------------------------------- serialization


def to_json(dist: Distribution) -> str:
    return json.dumps(dist.to_dict())


def from_dict(doc: dict) -> Distribution:
    kind = doc.get("kind")
    if kind == "trapezoid":
        lo, hi = doc["domain"]
        return TrapezoidPossibility(doc["a"], doc["b"], doc["delta"], lo, hi)
    if kind == "cloud":
        pts = np.asarray(doc["points"], dtype=float).reshape(len(doc["grades"]), int(doc["dim"]))
        return SupportCloud(pts, doc["grades"])
    raise CredalError(f"unknown distribution kind: {kind!r}")


def from_json(text: str) -> Distribution:
    return from_dict(json.loads(text))


def index_events(m: int) -> Iterable[IndexEvent]:
    """All nonempty subsets of ``range(m)``."""
    for mask in range(1, 1 << m):
        yield IndexEvent(frozenset(i for i in range(m) if mask >> i & 1))
