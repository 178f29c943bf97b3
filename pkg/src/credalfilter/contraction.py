"""Evidence-driven contraction of a support cloud.

Order of operations per evidence epoch: prior -> compatibility field ->
posterior (grade-wise min) -> Choquet benchmark against the prior capacity
-> explicit-Euler integration of the credibility-directed flow.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CredalError
from .integrals import choquet_discrete
from .linalg import apply_map, mahalanobis_sq, require_pd
from .possibility import SupportCloud, min_condition
from .width import aggregate_width_cloud

HARD = "hard"
SMOOTH = "smooth"


@dataclass(frozen=True)
class FlowConfig:
    lam: float = 1.0
    dt: float = 0.1
    max_steps: int = 50
    floor: float = 0.0

    def __post_init__(self):
        if self.lam <= 0 or self.dt <= 0:
            raise CredalError("lam and dt must be positive")
        if self.lam * self.dt >= 1:
            raise CredalError("explicit stepping needs lam * dt < 1")
        if self.max_steps < 0 or self.floor < 0:
            raise CredalError("max_steps and floor must be nonnegative")


def compatibility_field(cloud: SupportCloud, y, h, Pi_e, r2: float, mode: str = HARD, batched=False):
    """Per-point compatibility with measurement ``y``.

    ``hard`` is the 0/1 gate d^2 <= r2; ``smooth`` is exp(-d^2 / (2 r2)).
    """
    Pi_e = require_pd(Pi_e, "Pi_e")
    if r2 <= 0:
        raise CredalError("r2 must be positive")
    residuals = np.asarray(y, dtype=float)[None, :] - apply_map(h, cloud.points, batched)
    d2 = mahalanobis_sq(residuals, Pi_e)
    if mode == HARD:
        return (d2 <= r2).astype(float)
    if mode == SMOOTH:
        return np.exp(-0.5 * d2 / r2)
    raise CredalError(f"unknown compatibility mode {mode!r}")


def choquet_benchmark(prior: SupportCloud, posterior_grades) -> float:
    """Choquet aggregate of the posterior grades against the prior capacity."""
    return choquet_discrete(prior, np.asarray(posterior_grades, dtype=float))


def flow_step(cloud: SupportCloud, posterior_grades, benchmark: float, cfg: FlowConfig) -> SupportCloud:
    """One explicit-Euler step of d(pi)/dt = -lam * pi * (benchmark - pi_plus)_+."""
    posterior_grades = np.asarray(posterior_grades, dtype=float)
    pressure = np.maximum(benchmark - posterior_grades, 0.0)
    grades = cloud.grades * (1.0 - cfg.lam * cfg.dt * pressure)
    # clamp at the floor without lifting grades already below it
    grades = np.maximum(grades, np.minimum(cloud.grades, cfg.floor))
    return cloud.with_grades(np.minimum(grades, 1.0))


def run_contraction(cloud: SupportCloud, kappa, cfg: FlowConfig):
    """Condition on ``kappa``, then integrate the flow with a benchmark fixed for the epoch.

    Returns the contracted (unnormalized) cloud and the width trace, whose
    first entry is the width right after conditioning.
    """
    posterior = min_condition(cloud, kappa)
    pi_plus = posterior.raw_grades
    benchmark = choquet_benchmark(cloud, pi_plus)
    state = cloud.with_grades(pi_plus)
    trace = [aggregate_width_cloud(state)]
    for _ in range(cfg.max_steps):
        nxt = flow_step(state, pi_plus, benchmark, cfg)
        if np.array_equal(nxt.grades, state.grades):
            break
        state = nxt
        trace.append(aggregate_width_cloud(state))
    return state, np.array(trace)
