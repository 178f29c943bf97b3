"""Runnable scenarios: the scalar width demo and a 2-D tracking run with a stress variant.

The tracking scenario is a nearly-constant-velocity target seen by a fixed
station that reports range, range-rate and (optionally) bearing. The
stress variant adds a short acceleration pulse and a constant range bias
from ``stress_onset_step`` on. Truth, process noise and measurement noise
all come from one seeded generator, drawn the same way for every filter
and variant, so runs sharing a seed see the same noise.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .adaptive import (
    POSSIBILISTIC,
    PROBABILISTIC,
    AdaptiveConfig,
    FilterRegime,
    adaptive_step,
    ukf_to_espf_handoff,
    write_switch_log,
)
from .errors import ConfigError, CredalError, FilterFailure
from .espf import EspfConfig, espf_step
from .integrals import choquet_trapezoid_identity, lebesgue_expectation_trapezoid
from .possibility import TrapezoidPossibility
from .ukf import GaussianBelief, SystemModel, UkfConfig, log_det_cov, nees, ukf_predict, ukf_update
from .width import CLOSED_FORM, SwitchThresholds, aggregate_width_trapezoid, ewm_report

log = logging.getLogger(__name__)

FILTERS = ("ukf", "espf", "adaptive")
VARIANTS = ("nominal", "stress")

# --------------------------------------------------------------------------- scalar demo

CONTRACTION_TRAPEZOIDS = (
    TrapezoidPossibility.ignorance(),
    TrapezoidPossibility(0.14, 0.50, 0.14),
    TrapezoidPossibility(0.22, 0.42, 0.10),
    TrapezoidPossibility(0.26, 0.36, 0.05),
)
SCALAR_COLUMNS = ("step", "a", "b", "delta", "w_bar", "choquet", "lebesgue", "gap")


def scalar_demo():
    """Width, Choquet value, Lebesgue mean and their gap for the four-step sequence."""
    rows = []
    for k, dist in enumerate(CONTRACTION_TRAPEZOIDS):
        ch = choquet_trapezoid_identity(dist)
        leb = lebesgue_expectation_trapezoid(dist)
        rows.append({"step": k, "a": dist.a, "b": dist.b, "delta": dist.delta,
                     "w_bar": aggregate_width_trapezoid(dist, CLOSED_FORM),
                     "choquet": ch, "lebesgue": leb, "gap": ch - leb})
    return rows


def write_scalar_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SCALAR_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})


def format_scalar_table(rows) -> str:
    lines = ["step   W_bar   C_hat   Leb     gap"]
    lines += [f"{r['step']:>4}   {r['w_bar']:.3f}   {r['choquet']:.3f}   {r['lebesgue']:.3f}   {r['gap']:.3f}"
              for r in rows]
    return "\n".join(lines)


# --------------------------------------------------------------------------- configuration


@dataclass(frozen=True)
class EspfSettings:
    smolyak_level: int = 2
    gate_r2: float = 1.0
    noise_scale: float = 3.0
    sensor_sigma_scale: float = 3.0
    mvee_tol: float = 1e-3
    soft_compatibility: bool = False
    scatter_floor: float = 0.01

    def __post_init__(self):
        if self.smolyak_level not in (2, 3):
            raise ConfigError("espf.smolyak_level must be 2 or 3")
        if not (self.gate_r2 > 0 and self.noise_scale > 0 and self.sensor_sigma_scale > 0):
            raise ConfigError("espf gate_r2, noise_scale and sensor_sigma_scale must be positive")
        if not 0 < self.mvee_tol < 0.1 or not 0 <= self.scatter_floor <= 1:
            raise ConfigError("espf.mvee_tol must lie in (0, 0.1) and scatter_floor in [0, 1]")


@dataclass(frozen=True)
class AdaptiveSettings:
    w_crit: float = 0.5
    hysteresis: float = 0.1
    kappa_w: float = 0.5
    window_len: int = 20
    inflation: float = 1.0

    def __post_init__(self):
        try:
            SwitchThresholds(self.w_crit, self.hysteresis, self.kappa_w)
        except CredalError as exc:
            raise ConfigError(f"adaptive: {exc}") from None
        if self.window_len < 1 or self.inflation < 1:
            raise ConfigError("adaptive.window_len must be >= 1 and inflation >= 1")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a tracking run needs. Stress fields are ignored for ``nominal``."""

    scenario: str = "track2d"
    variant: str = "nominal"
    filter: str = "ukf"
    seed: int = 7
    steps: int = 200
    dt: float = 1.0
    stress_onset_step: int = 100
    stress_duration: int = 5
    maneuver_accel: tuple = (-1.34, 1.49)
    sensor_bias: float = 20.0
    process_noise_q: float = 1e-4
    sigma_range: float = 0.25
    sigma_range_rate: float = 0.01
    sigma_bearing: float | None = 1e-3
    station: tuple = (0.0, 0.0)
    initial_state: tuple = (4000.0, 3000.0, -2.0, 4.0)
    initial_sigma: tuple = (5.0, 5.0, 0.2, 0.2)
    saturation_threshold: float = 0.99
    recovery_lag: int = 15
    post_window: int = 20
    burn_in: int = 10
    espf: EspfSettings = EspfSettings()
    adaptive: AdaptiveSettings = AdaptiveSettings()
    output_dir: str = "runs/track2d"

    def __post_init__(self):
        if self.scenario != "track2d":
            raise ConfigError("only the track2d scenario is configurable; scalar-demo takes no config")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
        if self.filter not in FILTERS:
            raise ConfigError(f"filter must be one of {FILTERS}")
        if self.steps <= 0 or self.dt <= 0:
            raise ConfigError("steps and dt must be positive")
        if self.variant == "stress" and not 0 < self.stress_onset_step <= self.steps:
            raise ConfigError("stress_onset_step must fall inside the run")
        for name in ("process_noise_q", "sigma_range", "sigma_range_rate"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.sigma_bearing is not None and not self.sigma_bearing > 0:
            raise ConfigError("sigma_bearing must be positive or null")
        if len(self.maneuver_accel) != 2 or len(self.station) != 2:
            raise ConfigError("maneuver_accel and station are 2-vectors")
        if len(self.initial_state) != 4 or len(self.initial_sigma) != 4:
            raise ConfigError("initial_state and initial_sigma are 4-vectors")
        if min(self.initial_sigma) <= 0:
            raise ConfigError("initial_sigma entries must be positive")
        if not 0 < self.saturation_threshold <= 1:
            raise ConfigError("saturation_threshold must lie in (0, 1]")
        if self.burn_in < 0 or self.recovery_lag < 0 or self.post_window <= 0:
            raise ConfigError("burn_in and recovery_lag must be >= 0, post_window > 0")

    @classmethod
    def from_dict(cls, doc: dict, **overrides):
        doc = {**doc, **{k: v for k, v in overrides.items() if v is not None}}
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            nested = {"espf": EspfSettings(**doc.get("espf", {})),
                      "adaptive": AdaptiveSettings(**doc.get("adaptive", {}))}
            tuples = {k: tuple(doc[k]) for k in ("maneuver_accel", "station", "initial_state", "initial_sigma")
                      if k in doc}
            return cls(**{**doc, **tuples, **nested})
        except TypeError as exc:
            raise ConfigError(f"bad config: {exc}") from None

    @classmethod
    def load(cls, path, **overrides):
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(doc, **overrides)

    def to_dict(self):
        return dataclasses.asdict(self)

    @property
    def stressed(self):
        return self.variant == "stress"

    @property
    def post_start(self):
        """First step of the post-recovery window."""
        return self.stress_onset_step + self.stress_duration + self.recovery_lag


# --------------------------------------------------------------------------- model and truth


def cv_matrices(dt: float, q: float):
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    block = np.array([[dt ** 3 / 3, dt ** 2 / 2], [dt ** 2 / 2, dt]])
    Q = np.zeros((4, 4))
    Q[np.ix_([0, 2], [0, 2])] = q * block
    Q[np.ix_([1, 3], [1, 3])] = q * block
    return F, Q


def build_model(cfg: ScenarioConfig) -> SystemModel:
    F, Q = cv_matrices(cfg.dt, cfg.process_noise_q)
    station = np.asarray(cfg.station, dtype=float)
    with_bearing = cfg.sigma_bearing is not None

    def f(X):
        return X @ F.T

    def h(X):
        X = np.atleast_2d(X)
        rel = X[:, :2] - station
        rng = np.hypot(rel[:, 0], rel[:, 1])
        cols = [rng, np.einsum("ij,ij->i", rel, X[:, 2:]) / rng]
        if with_bearing:
            cols.append(np.arctan2(rel[:, 1], rel[:, 0]))
        return np.column_stack(cols)

    sig = [cfg.sigma_range, cfg.sigma_range_rate] + ([cfg.sigma_bearing] if with_bearing else [])
    return SystemModel(f, h, Q, np.diag(np.square(sig)), batched=True)


@dataclass
class TruthStream:
    truth: np.ndarray          # (steps + 1, 4), row 0 is the initial state
    measurements: np.ndarray   # (steps + 1, m), row 0 unused
    prior_mean: np.ndarray
    prior_cov: np.ndarray


def simulate(cfg: ScenarioConfig, model: SystemModel) -> TruthStream:
    rng = np.random.default_rng(cfg.seed)
    n, m = 4, model.meas_dim
    sigma0 = np.asarray(cfg.initial_sigma, dtype=float)
    x = np.asarray(cfg.initial_state, dtype=float)
    prior_mean = x + sigma0 * rng.standard_normal(n)
    w = rng.multivariate_normal(np.zeros(n), model.Q, size=cfg.steps, method="cholesky")
    v = rng.standard_normal((cfg.steps, m)) * np.sqrt(np.diag(model.R))
    accel = np.asarray(cfg.maneuver_accel, dtype=float)
    truth = [x.copy()]
    meas = [np.full(m, np.nan)]
    for k in range(1, cfg.steps + 1):
        x = model.f(x[None, :])[0] + w[k - 1]
        if cfg.stressed and cfg.stress_onset_step <= k < cfg.stress_onset_step + cfg.stress_duration:
            x[:2] += 0.5 * accel * cfg.dt ** 2
            x[2:] += accel * cfg.dt
        y = model.h(x[None, :])[0] + v[k - 1]
        if cfg.stressed and k >= cfg.stress_onset_step:
            y[0] += cfg.sensor_bias
        truth.append(x.copy())
        meas.append(y)
    return TruthStream(np.array(truth), np.array(meas), prior_mean, np.diag(sigma0 ** 2))


# --------------------------------------------------------------------------- runs

DIAG_COLUMNS = ("nis", "log_det_cov", "nees_true", "w_hat", "w_bar", "log_det_mvee", "prune_count",
                "necessity_saturation", "surprisal", "alpha_c", "cloud_size", "expansions")
STATE_NAMES = ("x", "y", "vx", "vy")


def step_columns():
    return (["step", "time"] + [f"truth_{s}" for s in STATE_NAMES] + [f"est_{s}" for s in STATE_NAMES]
            + ["pos_err", "regime", "signal", "switched"] + list(DIAG_COLUMNS))


def espf_config(cfg: ScenarioConfig, model: SystemModel) -> EspfConfig:
    s = cfg.espf
    return EspfConfig(sensor_spread=s.sensor_sigma_scale ** 2 * model.R, smolyak_level=s.smolyak_level,
                      gate_r2=s.gate_r2, noise_scale=s.noise_scale, mvee_tol=s.mvee_tol,
                      soft_compatibility=s.soft_compatibility, scatter_floor=s.scatter_floor)


def adaptive_config(cfg: ScenarioConfig, model: SystemModel) -> AdaptiveConfig:
    a = cfg.adaptive
    return AdaptiveConfig(ukf=UkfConfig(), espf=espf_config(cfg, model),
                          thresholds=SwitchThresholds(a.w_crit, a.hysteresis, a.kappa_w),
                          window_len=a.window_len, inflation=a.inflation)


def _ukf_stepper(cfg, model, stream):
    belief = GaussianBelief(stream.prior_mean, stream.prior_cov)
    ucfg = UkfConfig()

    def step(k, y):
        nonlocal belief
        try:
            res = ukf_update(ukf_predict(belief, model, ucfg), model, ucfg, y)
        except CredalError as exc:
            raise FilterFailure(f"ukf step {k} failed: {exc}", k, PROBABILISTIC) from exc
        belief = res.belief
        return belief.mean, {"regime": PROBABILISTIC, "nis": res.nis, "log_det_cov": log_det_cov(belief),
                             "nees_true": nees(belief, stream.truth[k])}
    return step


def _espf_stepper(cfg, model, stream):
    ecfg = espf_config(cfg, model)
    cloud = ukf_to_espf_handoff(GaussianBelief(stream.prior_mean, stream.prior_cov), ecfg)

    floor = None

    def step(k, y):
        nonlocal cloud, floor
        try:
            st = espf_step(cloud, model, y, ecfg, floor)
        except CredalError as exc:
            raise FilterFailure(f"espf step {k} failed: {exc}", k, POSSIBILISTIC) from exc
        cloud, floor = st.cloud, st.floor
        rep = ewm_report(st.cloud, st.stats)
        return st.extract.mean, {"regime": POSSIBILISTIC, "w_bar": rep.w_bar, "log_det_mvee": st.log_det_mvee,
                                 "prune_count": rep.prune_count, "necessity_saturation": rep.necessity_saturation,
                                 "surprisal": rep.surprisal, "alpha_c": rep.alpha_c, "cloud_size": st.cloud.size,
                                 "expansions": st.expansions}
    return step


def _adaptive_stepper(cfg, model, stream, switches):
    acfg = adaptive_config(cfg, model)
    regime = FilterRegime.probabilistic(GaussianBelief(stream.prior_mean, stream.prior_cov),
                                        acfg.window_len, model.meas_dim)

    def step(k, y):
        _, rec = adaptive_step(regime, model, y, acfg)
        switches[:] = regime.switches
        est = rec.pop("estimate")
        rec.pop("step")
        if regime.mode == PROBABILISTIC:
            rec["nees_true"] = nees(regime.gaussian, stream.truth[k])
        return est, rec
    return step


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


@dataclass
class RunResult:
    records: list
    switches: list
    summary: dict
    failure: FilterFailure | None = None


def track2d_run(cfg: ScenarioConfig, write: bool = True) -> RunResult:
    """Simulate, filter, and (optionally) write steps.csv, summary.json and switches.csv."""
    started = time.perf_counter()
    model = build_model(cfg)
    stream = simulate(cfg, model)
    switches: list = []
    if cfg.filter == "ukf":
        stepper = _ukf_stepper(cfg, model, stream)
    elif cfg.filter == "espf":
        stepper = _espf_stepper(cfg, model, stream)
    else:
        stepper = _adaptive_stepper(cfg, model, stream, switches)
    records, failure = [], None
    for k in range(1, cfg.steps + 1):
        try:
            est, diag = stepper(k, stream.measurements[k])
        except FilterFailure as exc:
            failure = exc
            log.error("filter failure at step %d: %s", k, exc)
            break
        truth = stream.truth[k]
        rec = {"step": k, "time": k * cfg.dt}
        rec.update({f"truth_{s}": truth[i] for i, s in enumerate(STATE_NAMES)})
        rec.update({f"est_{s}": est[i] for i, s in enumerate(STATE_NAMES)})
        rec["pos_err"] = float(np.hypot(*(est[:2] - truth[:2])))
        rec.update({"signal": np.nan, "switched": ""})
        rec.update({c: np.nan for c in DIAG_COLUMNS})
        rec.update(diag)
        records.append(rec)
    summary = summarize(cfg, records, switches, model.meas_dim, failure)
    summary["runtime_s"] = time.perf_counter() - started
    result = RunResult(records, switches, summary, failure)
    if write:
        write_run(cfg, result)
    return result


def write_run(cfg: ScenarioConfig, result: RunResult):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cols = step_columns()
    with open(out / "steps.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in result.records:
            w.writerow([_fmt(r[c]) for c in cols])
    write_switch_log(out / "switches.csv", result.switches)
    (out / "summary.json").write_text(json.dumps(result.summary, indent=2, sort_keys=True, default=_json_default))


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    raise TypeError(type(obj))


# --------------------------------------------------------------------------- summary


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _column(records, name):
    return np.array([r[name] for r in records], dtype=float)


def longest_run(mask) -> int:
    best = cur = 0
    for v in mask:
        cur = cur + 1 if v else 0
        best = max(best, cur)
    return best


def summarize(cfg: ScenarioConfig, records, switches, meas_dim, failure=None) -> dict:
    steps = np.array([r["step"] for r in records], dtype=int)
    onset = cfg.stress_onset_step
    pre = steps < onset
    post = (steps >= cfg.post_start) & (steps < cfg.post_start + cfg.post_window)
    after_onset = steps >= onset
    nis = _column(records, "nis") if records else np.array([])
    sat = _column(records, "necessity_saturation") if records else np.array([])
    surprisal = _column(records, "surprisal") if records else np.array([])
    w_bar = _column(records, "w_bar") if records else np.array([])
    logdet = _column(records, "log_det_cov") if records else np.array([])
    bound95 = float(stats.chi2.ppf(0.95, meas_dim))

    def first(mask):
        idx = np.flatnonzero(mask)
        return int(steps[idx[0]]) if idx.size else None

    def nanstat(fn, x):
        x = x[np.isfinite(x)]
        return _finite(fn(x)) if x.size else None

    s = {
        "scenario": cfg.scenario, "variant": cfg.variant, "filter": cfg.filter, "seed": cfg.seed,
        "status": "failed" if failure else "ok",
        "failure": None if failure is None else {"step": failure.step, "mode": failure.mode, "message": str(failure)},
        "steps_completed": len(records), "meas_dim": meas_dim,
        "final_pos_error": _finite(records[-1]["pos_err"]) if records else None,
        "mean_pos_error": nanstat(np.mean, _column(records, "pos_err")) if records else None,
        "nis_per_dim_mean_pre": None if not records else nanstat(np.mean, nis[pre] / meas_dim),
        "nis_per_dim_mean": None if not records else nanstat(np.mean, nis / meas_dim),
        "nees_mean": None if not records else nanstat(np.mean, _column(records, "nees_true")),
        "nis_bound95": bound95,
        "first_nis_exceedance_after_onset": first(after_onset & (nis > bound95)) if records else None,
        "first_saturation_after_onset":
            first(after_onset & (sat >= cfg.saturation_threshold)) if records else None,
        "saturation_threshold": cfg.saturation_threshold,
        "surprisal_max": None if not records else nanstat(np.max, surprisal),
        "surprisal_max_pre": None if not records else nanstat(np.max, surprisal[pre]),
        # largest value once the initial transient is over
        "surprisal_ceiling": None if not records else nanstat(np.max, surprisal[steps > cfg.burn_in]),
        "surprisal_max_post_onset": None if not records else nanstat(np.max, surprisal[after_onset]),
        "log_det_cov_pre": None, "log_det_cov_post": None,
        "w_bar_post_longest_above_crit": None,
        "prune_count_mean": None if not records else nanstat(np.mean, _column(records, "prune_count")),
        "post_window": [cfg.post_start, cfg.post_start + cfg.post_window],
        "stress_onset_step": onset,
        "switch_count": len(switches),
        "switches": [dataclasses.asdict(ev) for ev in switches],
        "config": cfg.to_dict(),
    }
    if records:
        pre_idx = np.flatnonzero(steps == onset - 1)
        if pre_idx.size:
            s["log_det_cov_pre"] = _finite(logdet[pre_idx[0]]) if np.isfinite(logdet[pre_idx[0]]) else None
        s["log_det_cov_post"] = nanstat(np.mean, logdet[post])
        tail = w_bar[steps >= cfg.post_start]
        if np.isfinite(tail).any():
            s["w_bar_post_longest_above_crit"] = longest_run(tail > cfg.adaptive.w_crit)
    return s


# --------------------------------------------------------------------------- comparison


def load_summary(run_dir) -> dict:
    path = Path(run_dir) / "summary.json"
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def _rel_change(a, b):
    if a is None or b is None or a == 0:
        return None
    return abs(b - a) / abs(a)


def comparison_rows(a: dict, b: dict):
    """Six diagnostic rows per run; numeric ``diff`` is b - a where both exist."""

    def timing(s):
        return s["first_saturation_after_onset"] if s["filter"] != "ukf" else s["first_nis_exceedance_after_onset"]

    def presence(s):
        return s["w_bar_post_longest_above_crit"]

    def memory(s):
        return _rel_change(s["log_det_cov_pre"], s["log_det_cov_post"])

    def audit(s):
        return int(s["prune_count_mean"] is not None)

    rows = [
        ("final position error [m]", lambda s: s["final_pos_error"]),
        ("stress-onset signal step", timing),
        ("post-recovery W_bar run above w_crit", presence),
        ("nominal NIS per dim (pre-onset)", lambda s: s["nis_per_dim_mean_pre"]),
        ("log det P relative change pre->post", memory),
        ("audit trail (prune/saturation logged)", audit),
    ]
    out = []
    for label, fn in rows:
        va, vb = fn(a), fn(b)
        diff = vb - va if isinstance(va, (int, float)) and isinstance(vb, (int, float)) else None
        out.append({"row": label, "a": va, "b": vb, "diff": diff})
    return out


def compare_report(run_a, run_b) -> dict:
    a, b = load_summary(run_a), load_summary(run_b)
    if a["seed"] != b["seed"]:
        raise ConfigError(f"seed mismatch: {a['seed']} vs {b['seed']}")
    return {"run_a": str(run_a), "run_b": str(run_b), "seed": a["seed"],
            "labels": [f"{a['filter']}/{a['variant']}", f"{b['filter']}/{b['variant']}"],
            "rows": comparison_rows(a, b)}


def format_report(report) -> str:
    la, lb = report["labels"]

    def cell(v):
        if v is None:
            return "n/a"
        return f"{v:.4g}" if isinstance(v, float) else str(v)

    lines = [f"| diagnostic | {la} | {lb} | diff |", "|---|---|---|---|"]
    lines += [f"| {r['row']} | {cell(r['a'])} | {cell(r['b'])} | {cell(r['diff'])} |" for r in report["rows"]]
    return "\n".join(lines)
