"""Regime controller that moves between the UKF and the ESPF.

While the UKF runs, the signal is the innovation-based proxy Ŵ over a
sliding window. While the ESPF runs, it is the cloud's aggregate width W̄.
A hysteresis band around ``w_crit`` decides when to hand the state over.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ColdStartError, CredalError, FilterFailure
from .espf import EspfConfig, espf_step, gaussian_limit_extract, grid_spread_factor, smolyak_grid
from .possibility import SupportCloud
from .ukf import GaussianBelief, SystemModel, UkfConfig, log_det_cov, ukf_predict, ukf_update
from .width import NeesWindow, SwitchThresholds, aggregate_width_cloud, ewm_report, w_hat

PROBABILISTIC = "probabilistic"
POSSIBILISTIC = "possibilistic"
HOLD = "hold"
K_SIGMA = 3.0


def switch_decision(current_mode: str, w_signal: float, thresholds: SwitchThresholds) -> str:
    """Return the mode to switch to, or ``hold``.

    Only the threshold on the far side of the band from the current mode
    can fire, so a signal that stays inside the band never switches.
    """
    if not 0.0 <= w_signal <= 1.0:
        raise CredalError("width signal must lie in [0, 1]")
    if current_mode == PROBABILISTIC:
        return POSSIBILISTIC if w_signal > thresholds.upper else HOLD
    if current_mode == POSSIBILISTIC:
        return PROBABILISTIC if w_signal < thresholds.lower else HOLD
    raise CredalError(f"unknown mode {current_mode!r}")


def shell_scale(n: int, level: int, inflation: float = 1.0) -> float:
    """Covariance ratio between a handed-over cloud's scatter and the belief it came from."""
    return K_SIGMA ** 2 * inflation ** 2 * grid_spread_factor(n, level)


def ukf_to_espf_handoff(belief: GaussianBelief, cfg: EspfConfig, inflation: float = 1.0) -> SupportCloud:
    """Seed a support grid on the inflated 3-sigma shell of the Gaussian belief."""
    if inflation < 1:
        raise CredalError("handoff inflation must be >= 1")
    shape = inflation ** 2 * K_SIGMA ** 2 * belief.cov
    return smolyak_grid(belief.mean, shape, cfg.smolyak_level)


def espf_to_ukf_handoff(cloud: SupportCloud, cov_scale: float = 1.0) -> GaussianBelief:
    """Wrap the cloud's grade-weighted moments as a Gaussian belief.

    ``cov_scale`` undoes the shell sizing applied on the way in (see
    :func:`shell_scale`); leave it at 1 for a cloud of unknown origin.
    """
    if cov_scale <= 0:
        raise CredalError("cov_scale must be positive")
    ex = gaussian_limit_extract(cloud)
    return GaussianBelief(ex.mean, ex.cov / cov_scale)


@dataclass
class SwitchEvent:
    step: int
    direction: str
    signal: float


@dataclass
class FilterRegime:
    mode: str
    gaussian: GaussianBelief | None = None
    cloud: SupportCloud | None = None
    switches: list = field(default_factory=list)
    window: NeesWindow | None = None
    cov_scale: float = 1.0
    step: int = 0
    floor: np.ndarray | None = None

    def __post_init__(self):
        self.check()

    def check(self):
        if self.mode == PROBABILISTIC:
            ok = self.gaussian is not None and self.cloud is None
        elif self.mode == POSSIBILISTIC:
            ok = self.cloud is not None and self.gaussian is None
        else:
            raise CredalError(f"unknown mode {self.mode!r}")
        if not ok:
            raise CredalError("exactly one of gaussian / cloud must match the mode")
        steps = [ev.step for ev in self.switches]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise CredalError("switch log must be strictly increasing in step")

    @classmethod
    def probabilistic(cls, belief: GaussianBelief, window_len=20, meas_dim=1):
        return cls(PROBABILISTIC, gaussian=belief, window=NeesWindow(window_len, meas_dim))

    def estimate(self):
        if self.mode == PROBABILISTIC:
            return self.gaussian.mean
        return gaussian_limit_extract(self.cloud).mean


@dataclass(frozen=True)
class AdaptiveConfig:
    ukf: UkfConfig
    espf: EspfConfig
    thresholds: SwitchThresholds = SwitchThresholds()
    window_len: int = 20
    inflation: float = 1.0

    def __post_init__(self):
        if self.window_len < 1:
            raise CredalError("window_len must be positive")
        if self.inflation < 1:
            raise CredalError("inflation must be >= 1")


def current_signal(regime: FilterRegime, thresholds: SwitchThresholds):
    """Ŵ in probabilistic mode (None during cold start), W̄ in possibilistic mode."""
    if regime.mode == POSSIBILISTIC:
        return aggregate_width_cloud(regime.cloud)
    try:
        return w_hat(regime.window, thresholds)
    except ColdStartError:
        return None


def _switch(regime: FilterRegime, target: str, cfg: AdaptiveConfig, signal: float):
    if target == POSSIBILISTIC:
        regime.cloud = ukf_to_espf_handoff(regime.gaussian, cfg.espf, cfg.inflation)
        regime.cov_scale = shell_scale(regime.gaussian.dim, cfg.espf.smolyak_level, cfg.inflation)
        regime.gaussian = None
        regime.floor = None
        direction = "prob->poss"
    else:
        regime.gaussian = espf_to_ukf_handoff(regime.cloud, regime.cov_scale)
        regime.cloud = None
        regime.floor = None
        regime.cov_scale = 1.0
        # innovations gathered before the excursion describe a different model
        regime.window.clear()
        direction = "poss->prob"
    regime.mode = target
    regime.switches.append(SwitchEvent(regime.step, direction, float(signal)))
    return direction


def adaptive_step(regime: FilterRegime, model: SystemModel, y, cfg: AdaptiveConfig):
    """Decide, hand over if needed, then run one predict/update of the active filter.

    Mutates ``regime`` and returns it with a flat step record.
    """
    regime.step += 1
    signal = current_signal(regime, cfg.thresholds)
    switched = ""
    if signal is not None:
        decision = switch_decision(regime.mode, signal, cfg.thresholds)
        if decision != HOLD:
            switched = _switch(regime, decision, cfg, signal)
    record = {"step": regime.step, "regime": regime.mode, "signal": np.nan if signal is None else signal,
              "switched": switched}
    try:
        if regime.mode == PROBABILISTIC:
            prior = ukf_predict(regime.gaussian, model, cfg.ukf)
            res = ukf_update(prior, model, cfg.ukf, y)
            regime.gaussian = res.belief
            regime.window.push(res.nis)
            record.update(nis=res.nis, log_det_cov=log_det_cov(res.belief),
                          w_hat=current_signal(regime, cfg.thresholds))
        else:
            st = espf_step(regime.cloud, model, y, cfg.espf, regime.floor)
            regime.cloud, regime.floor = st.cloud, st.floor
            rep = ewm_report(st.cloud, st.stats)
            record.update(w_bar=rep.w_bar, log_det_mvee=st.log_det_mvee, prune_count=rep.prune_count,
                          necessity_saturation=rep.necessity_saturation, surprisal=rep.surprisal,
                          alpha_c=rep.alpha_c, cloud_size=st.cloud.size, expansions=st.expansions)
    except CredalError as exc:
        raise FilterFailure(f"{regime.mode} step {regime.step} failed: {exc}", regime.step, regime.mode) from exc
    record["estimate"] = regime.estimate()
    return regime, record


# --------------------------------------------------------------------------- serialization


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, list):
        return [_jsonable(v) for v in value]
    return value


def step_record_jsonl(records) -> str:
    return "".join(json.dumps({k: _jsonable(v) for k, v in r.items()}, sort_keys=True) + "\n" for r in records)


def write_switch_log(path, switches):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "direction", "signal"])
        for ev in switches:
            w.writerow([ev.step, ev.direction, repr(float(ev.signal))])
