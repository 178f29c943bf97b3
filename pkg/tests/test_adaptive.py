import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from credalfilter.adaptive import (
    HOLD,
    POSSIBILISTIC,
    PROBABILISTIC,
    AdaptiveConfig,
    FilterRegime,
    adaptive_step,
    espf_to_ukf_handoff,
    shell_scale,
    step_record_jsonl,
    switch_decision,
    ukf_to_espf_handoff,
    write_switch_log,
)
from credalfilter.errors import CredalError
from credalfilter.espf import EspfConfig, gaussian_limit_extract
from credalfilter.ukf import GaussianBelief, SystemModel, UkfConfig
from credalfilter.width import NeesWindow, SwitchThresholds, w_hat

TH = SwitchThresholds(w_crit=0.5, hysteresis=0.1, kappa_w=0.5)


def test_switch_decision_examples():
    assert switch_decision(PROBABILISTIC, 0.61, TH) == POSSIBILISTIC
    assert switch_decision(PROBABILISTIC, 0.6, TH) == HOLD
    assert switch_decision(POSSIBILISTIC, 0.39, TH) == PROBABILISTIC
    assert switch_decision(POSSIBILISTIC, 0.4, TH) == HOLD
    assert switch_decision(POSSIBILISTIC, 0.9, TH) == HOLD
    assert switch_decision(PROBABILISTIC, 0.0, TH) == HOLD
    with pytest.raises(CredalError):
        switch_decision(PROBABILISTIC, 1.5, TH)
    with pytest.raises(CredalError):
        switch_decision("mixed", 0.5, TH)


@given(st.lists(st.floats(0.4, 0.6), min_size=1, max_size=200), st.sampled_from([PROBABILISTIC, POSSIBILISTIC]))
def test_in_band_never_switches(signals, start):
    mode, switches = start, 0
    for s in signals:
        d = switch_decision(mode, s, TH)
        if d != HOLD:
            mode, switches = d, switches + 1
    assert switches == 0


@pytest.mark.parametrize("L", [5, 20, 50])
def test_nees_ramp_switches_once_within_window(L):
    # per-step statistic ramps linearly from 0.5 to 4; after the switch the
    # possibilistic side reports a width comfortably above the lower threshold
    window = NeesWindow(L, meas_dim=1)
    ramp = np.linspace(0.5, 4.0, 300)
    target = -math.log(1 - TH.upper) / TH.kappa_w
    crossing = int(np.argmax(ramp > target))
    mode, events = PROBABILISTIC, []
    for k, v in enumerate(ramp):
        signal = w_hat(window, TH) if len(window) else None
        if mode == POSSIBILISTIC:
            signal = 0.8
        if signal is not None:
            d = switch_decision(mode, signal, TH)
            if d != HOLD:
                mode = d
                events.append((k, d))
        window.push(v)
    assert [d for _, d in events] == [POSSIBILISTIC]
    assert crossing <= events[0][0] <= crossing + L


def test_shell_scale():
    # level 2, n = 4: centre at grade 1 plus 8 axis points at e^-1/2
    e = math.exp(-0.5)
    assert shell_scale(4, 2) == pytest.approx(9 * 2 * e / (1 + 8 * e))
    assert shell_scale(4, 2, 2.0) == pytest.approx(4 * shell_scale(4, 2))


@pytest.mark.parametrize("level", [2, 3])
@pytest.mark.parametrize("inflation", [1.0, 1.5])
def test_handoff_round_trip(level, inflation, rng):
    A = rng.normal(size=(4, 4))
    b = GaussianBelief(rng.normal(size=4) * 10, A @ A.T + np.eye(4))
    cfg = EspfConfig(sensor_spread=np.eye(2), smolyak_level=level)
    cloud = ukf_to_espf_handoff(b, cfg, inflation)
    assert cloud.size == (9 if level == 2 else 33)
    ex = gaussian_limit_extract(cloud)
    np.testing.assert_allclose(ex.mean, b.mean, atol=1e-9)
    back = espf_to_ukf_handoff(cloud, shell_scale(4, level, inflation))
    np.testing.assert_allclose(back.mean, b.mean, atol=1e-9)
    np.testing.assert_allclose(back.cov, b.cov, rtol=1e-9, atol=1e-9)


def test_handoff_points_on_three_sigma_shell():
    b = GaussianBelief([1.0, 2.0], np.diag([4.0, 1.0]))
    cloud = ukf_to_espf_handoff(b, EspfConfig(sensor_spread=np.eye(1), smolyak_level=2))
    d = cloud.points - b.mean
    m2 = np.einsum("ij,ij->i", d, np.linalg.solve(b.cov, d.T).T)
    np.testing.assert_allclose(np.sort(m2), [0, 9, 9, 9, 9], atol=1e-9)
    with pytest.raises(CredalError):
        ukf_to_espf_handoff(b, EspfConfig(sensor_spread=np.eye(1)), inflation=0.5)
    with pytest.raises(CredalError):
        espf_to_ukf_handoff(cloud, 0.0)


def test_regime_invariants():
    b = GaussianBelief([0.0], [[1.0]])
    with pytest.raises(CredalError):
        FilterRegime(POSSIBILISTIC, gaussian=b)
    with pytest.raises(CredalError):
        FilterRegime("other", gaussian=b)
    with pytest.raises(CredalError):
        AdaptiveConfig(UkfConfig(), EspfConfig(sensor_spread=np.eye(1)), window_len=0)


def linear_setup(meas_dim=2):
    F = np.array([[1, 1.0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 1], [0, 0, 0, 1.0]])
    H = np.eye(4)[[0, 2]][:meas_dim]
    Q = 0.01 * np.eye(4)
    R = 0.25 * np.eye(meas_dim)
    model = SystemModel(lambda X: X @ F.T, lambda X: X @ H.T, Q, R, batched=True)
    cfg = AdaptiveConfig(UkfConfig(), EspfConfig(sensor_spread=9 * R, gate_r2=1.0, scatter_floor=0.01),
                         TH, window_len=20)
    return model, cfg, F, H, Q, R


def simulate(rng, F, H, Q, R, steps, bias_from=None, bias=0.0):
    x = np.zeros(4)
    ys = []
    for k in range(1, steps + 1):
        x = F @ x + rng.multivariate_normal(np.zeros(4), Q)
        y = H @ x + rng.multivariate_normal(np.zeros(len(R)), R)
        if bias_from is not None and k >= bias_from:
            y = y + bias
        ys.append(y)
    return ys


def test_consistent_stream_never_switches():
    model, cfg, F, H, Q, R = linear_setup()
    rng = np.random.default_rng(5)
    regime = FilterRegime.probabilistic(GaussianBelief(np.zeros(4), np.eye(4)), cfg.window_len, 2)
    for y in simulate(rng, F, H, Q, R, 300):
        regime, rec = adaptive_step(regime, model, y, cfg)
    assert regime.switches == [] and regime.mode == PROBABILISTIC


def test_biased_stream_hands_over_and_logs(tmp_path):
    model, cfg, F, H, Q, R = linear_setup()
    rng = np.random.default_rng(5)
    regime = FilterRegime.probabilistic(GaussianBelief(np.zeros(4), np.eye(4)), cfg.window_len, 2)
    records = []
    for y in simulate(rng, F, H, Q, R, 80, bias_from=50, bias=5.0):
        regime, rec = adaptive_step(regime, model, y, cfg)
        records.append(rec)
    first = regime.switches[0]
    assert first.direction == "prob->poss"
    assert 50 < first.step <= 50 + cfg.window_len
    assert first.signal > TH.upper
    assert any(r["switched"] == "prob->poss" for r in records)
    lines = step_record_jsonl(records).splitlines()
    assert len(lines) == 80
    write_switch_log(tmp_path / "switches.csv", regime.switches)
    text = (tmp_path / "switches.csv").read_text().splitlines()
    assert text[0] == "step,direction,signal" and len(text) == 1 + len(regime.switches)
