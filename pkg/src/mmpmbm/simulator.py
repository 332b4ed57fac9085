"""Ground truth, measurement generation and the Monte Carlo harness.

Randomness is split per run and per purpose (truth, detection, measurement
noise, clutter, ordering) so that cells of a parameter sweep see common
random numbers: the same run index gives the same trajectories, the same
detection uniforms and the same standardised noise draws in every cell.
"""
from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .density import ModelConditionedDensity, birth_intensity
from .errors import ConfigurationError
from .metrics import OspaParams, ospa, positions
from .models import JmsConfig, MeasurementModel, cv_model, ct_model, position_sensor, validate_jms
from .pmbm import FilterParams, MMPMBMFilter

log = logging.getLogger(__name__)

WORKERS_ENV = "MMPMBM_WORKERS"
_PURPOSES = {"truth": 0, "detection": 1, "noise": 2, "clutter": 3, "order": 4}


@dataclass(frozen=True)
class TargetSpec:
    birth: int
    death: int | None  # first step without the target; None keeps it to the horizon
    initial_state: tuple
    schedule: tuple = ((1, 0),)  # (first step, model index) pairs
    random_switch: tuple | None = None  # (model index, earliest step, latest step)

    def alive(self, k: int, horizon: int) -> bool:
        end = self.death if self.death is not None else horizon + 1
        return self.birth <= k < end


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    jms: JmsConfig
    meas: MeasurementModel
    targets: tuple
    birth_means: np.ndarray
    birth_cov: np.ndarray
    birth_weight: float = 0.1
    horizon: int = 60
    T: float = 1.0
    p_detect: float = 0.95
    sigma_eps: float = 10.0
    pd_values: tuple = (0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95)
    sigma_values: tuple = (5.0, 10.0, 15.0, 20.0, 25.0)
    noise_sweep_pds: tuple = (0.60, 0.95)
    num_runs: int = 100
    rng_seed: int = 0
    position_jitter: float = 0.0

    @property
    def region(self) -> np.ndarray:
        return self.meas.region

    def birth(self) -> ModelConditionedDensity:
        return birth_intensity(self.birth_means, self.birth_cov, self.birth_weight, self.jms.birth_model_dist)

    def cell(self, p_detect: float, sigma_eps: float) -> tuple[JmsConfig, MeasurementModel]:
        return self.jms.with_detection(p_detect), self.meas.with_noise(sigma_eps)


def validate_scenario(cfg: ScenarioConfig) -> ScenarioConfig:
    validate_jms(cfg.jms)
    M = cfg.jms.num_models
    if cfg.horizon < 1 or cfg.T <= 0:
        raise ConfigurationError("horizon must be >= 1 and T > 0")
    for i, t in enumerate(cfg.targets):
        end = t.death if t.death is not None else cfg.horizon + 1
        if not 1 <= t.birth < end <= cfg.horizon + 1:
            raise ConfigurationError(f"targets[{i}]: need 1 <= birth < death <= horizon + 1")
        if len(t.initial_state) != cfg.jms.models[0].F.shape[0]:
            raise ConfigurationError(f"targets[{i}]: initial_state has wrong length")
        models = [mdl for _, mdl in t.schedule]
        if t.random_switch is not None:
            models.append(t.random_switch[0])
            lo, hi = t.random_switch[1:]
            if lo > hi:
                raise ConfigurationError(f"targets[{i}]: random_switch window is empty")
        if any(not 0 <= mdl < M for mdl in models):
            raise ConfigurationError(f"targets[{i}]: schedule references an unknown model")
    for name in ("pd_values", "sigma_values", "noise_sweep_pds"):
        if not getattr(cfg, name):
            raise ConfigurationError(f"{name} must not be empty")
    if any(not 0 <= p <= 1 for p in (*cfg.pd_values, *cfg.noise_sweep_pds, cfg.p_detect)):
        raise ConfigurationError("detection probabilities must lie in [0, 1]")
    if any(s < 0 for s in (*cfg.sigma_values, cfg.sigma_eps)):
        raise ConfigurationError("measurement noise must be >= 0")
    if cfg.num_runs < 1:
        raise ConfigurationError("num_runs must be >= 1")
    return cfg


def default_targets() -> tuple:
    # Start positions are the birth-intensity means; the velocities keep
    # all three tracks inside the region.
    switch = (2, 15, 30)
    schedule = ((1, 0), (15, 1))
    return (
        TargetSpec(1, 40, (0.0, 60.0, 1500.0, 0.0), schedule, switch),
        TargetSpec(1, 50, (3000.0, -10.0, 1000.0, 25.0), schedule, switch),
        TargetSpec(10, None, (2500.0, 15.0, 3000.0, -20.0), schedule, switch),
    )


def default_scenario(**overrides) -> ScenarioConfig:
    T = 1.0
    sigma = 5.0
    rate = np.deg2rad(10.0)
    models = (cv_model(T, sigma, 0), ct_model(T, sigma, rate, 1), ct_model(T, sigma, -rate, 2))
    tpm = np.array([[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]])
    jms = JmsConfig.uniform(models, tpm, [0.5, 0.25, 0.25], p_detect=0.95, p_survive=0.99)
    cfg = ScenarioConfig(
        jms=jms,
        meas=position_sensor(10.0, 10.0),
        targets=default_targets(),
        birth_means=np.array([[0.0, 0.0, 1500.0, 0.0], [3000.0, 0.0, 1000.0, 0.0], [2500.0, 0.0, 3000.0, 0.0]]),
        birth_cov=np.diag([500.0, 100.0, 500.0, 100.0]) ** 2,
    )
    return replace(cfg, **overrides)


# --------------------------------------------------------------------- truth

@dataclass(frozen=True, eq=False)
class TruthRecord:
    """Per-step target ids, states ``(n, d)`` and active model indices (step k at index k-1)."""

    ids: list
    states: list
    models: list

    @property
    def horizon(self) -> int:
        return len(self.states)

    def cardinality(self) -> np.ndarray:
        return np.array([len(s) for s in self.states])


def _noise_factor(Q: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(Q)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _model_schedule(t: TargetSpec, horizon: int, rng: np.random.Generator) -> dict:
    switch_at = None
    if t.random_switch is not None:
        _, lo, hi = t.random_switch
        switch_at = int(rng.integers(lo, hi + 1))
    out = {}
    for k in range(1, horizon + 1):
        model = 0
        for start, mdl in t.schedule:
            if start <= k:
                model = mdl
        if switch_at is not None and k >= switch_at:
            model = t.random_switch[0]
        out[k] = model
    return out


def generate_truth(cfg: ScenarioConfig, seed=None) -> TruthRecord:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    models = cfg.jms.models
    factors = [_noise_factor(m.Q) for m in models]
    d = models[0].F.shape[0]
    ids = [[] for _ in range(cfg.horizon)]
    states = [[] for _ in range(cfg.horizon)]
    active = [[] for _ in range(cfg.horizon)]
    for tid, t in enumerate(cfg.targets):
        schedule = _model_schedule(t, cfg.horizon, rng)
        x = np.asarray(t.initial_state, dtype=float)
        for k in range(1, cfg.horizon + 1):
            if k < t.birth:
                continue
            if not t.alive(k, cfg.horizon):
                break
            mdl = schedule[k]
            if k > t.birth:
                x = models[mdl].F @ x + factors[mdl] @ rng.standard_normal(d)
            ids[k - 1].append(tid)
            states[k - 1].append(x.copy())
            active[k - 1].append(mdl)
    jitter = cfg.position_jitter
    out_states = []
    for k in range(cfg.horizon):
        s = np.array(states[k]).reshape(-1, d)
        if jitter > 0 and len(s):
            s = s.copy()
            s[:, [0, 2]] += jitter * rng.standard_normal((len(s), 2))
        out_states.append(s)
    return TruthRecord(
        [np.array(i, dtype=int) for i in ids],
        out_states,
        [np.array(a, dtype=int) for a in active],
    )


# -------------------------------------------------------------- measurements

@dataclass
class RandomStreams:
    detection: np.random.Generator
    noise: np.random.Generator
    clutter: np.random.Generator
    order: np.random.Generator

    @classmethod
    def from_seed(cls, seed) -> "RandomStreams":
        return cls(*(np.random.default_rng([int(seed), _PURPOSES[p]]) for p in ("detection", "noise", "clutter", "order")))

    @classmethod
    def shared(cls, rng: np.random.Generator) -> "RandomStreams":
        return cls(rng, rng, rng, rng)


def generate_measurements(states, meas: MeasurementModel, p_detect: float, rng=None) -> np.ndarray:
    """One scan: independent detections plus Poisson clutter, shuffled.

    Detections falling outside the surveillance region are discarded.
    """
    if isinstance(rng, RandomStreams):
        streams = rng
    elif isinstance(rng, np.random.Generator):
        streams = RandomStreams.shared(rng)
    else:
        streams = RandomStreams.from_seed(0 if rng is None else rng)
    states = np.asarray(states, dtype=float).reshape(-1, meas.H.shape[1])
    p = meas.H.shape[0]
    n = len(states)
    detected = streams.detection.random(n) < p_detect
    noise = streams.noise.standard_normal((n, p)) @ _noise_factor(meas.R).T
    Z = (states @ meas.H.T + noise)[detected]
    Z = Z[meas.contains(Z)] if len(Z) else Z.reshape(0, p)
    count = streams.clutter.poisson(meas.clutter_rate)
    lo, hi = meas.region[:, 0], meas.region[:, 1]
    clutter = lo + (hi - lo) * streams.clutter.random((count, p))
    Z = np.vstack([Z, clutter])
    return Z[streams.order.permutation(len(Z))]


# ---------------------------------------------------------------- campaigns

def _make_mmpmbm(jms, meas, birth, params):
    return MMPMBMFilter(jms, meas, birth, params)


# Other filters (e.g. an MM-MB baseline) register a factory with the same
# signature; the campaign and the CLI tables pick them up by name.
FILTERS = {"mm-pmbm": _make_mmpmbm}


def make_filter(name: str, jms, meas, birth, params):
    try:
        factory = FILTERS[name]
    except KeyError:
        raise ConfigurationError(f"unknown filter {name!r}; available: {sorted(FILTERS)}") from None
    return factory(jms, meas, birth, params)


def run_seed(master_seed: int, run: int) -> int:
    return int(np.random.SeedSequence([int(master_seed), int(run)]).generate_state(1)[0])


@dataclass
class RunResult:
    run: int
    p_detect: float
    sigma_eps: float
    seed: int
    ospa: np.ndarray
    card_est: np.ndarray
    card_true: np.ndarray
    elapsed: float
    error: str | None = None


def run_single(cfg: ScenarioConfig, p_detect: float, sigma_eps: float, seed: int,
               params: FilterParams = FilterParams(), ospa_params: OspaParams = OspaParams(),
               filter_name: str = "mm-pmbm", truth: TruthRecord | None = None, run: int = 0,
               observer=None) -> RunResult:
    """One filter pass over freshly simulated data.

    ``observer(k, predicted, posterior)`` is called after every step when
    given; the acceptance suite uses it to inspect intermediate states.
    """
    start = time.perf_counter()
    if truth is None:
        truth = generate_truth(cfg, np.random.default_rng([seed, _PURPOSES["truth"]]))
    jms, meas = cfg.cell(p_detect, sigma_eps)
    streams = RandomStreams.from_seed(seed)
    horizon = truth.horizon
    ospa_trace = np.full(horizon, np.nan)
    card_est = np.full(horizon, -1)
    card_true = truth.cardinality()
    try:
        filt = make_filter(filter_name, jms, meas, cfg.birth(), params)
        state = filt.initial_state()
        for k in range(horizon):
            Z = generate_measurements(truth.states[k], meas, p_detect, streams)
            predicted = filt.predict(state)
            state = filt.update(predicted, Z)
            if observer is not None:
                observer(k + 1, predicted, state)
            est = filt.estimate(state)
            X = positions([e.mean for e in est])
            ospa_trace[k] = ospa(X, positions(truth.states[k]), ospa_params)
            card_est[k] = len(est)
        error = None
    except Exception as exc:  # recorded per run; the campaign carries on
        log.warning("run %d (seed %d, pd=%g, sigma=%g) failed: %s", run, seed, p_detect, sigma_eps, exc)
        error = f"{type(exc).__name__}: {exc}"
    return RunResult(run, p_detect, sigma_eps, seed, ospa_trace, card_est, card_true,
                     time.perf_counter() - start, error)


def _run_cells(args):
    cfg, cells, run, params, ospa_params, filter_name = args
    seed = run_seed(cfg.rng_seed, run)
    truth = generate_truth(cfg, np.random.default_rng([seed, _PURPOSES["truth"]]))
    return [
        run_single(cfg, pd, sigma, seed, params, ospa_params, filter_name, truth, run)
        for pd, sigma in cells
    ]


@dataclass
class CellSummary:
    p_detect: float
    sigma_eps: float
    mean_ospa: float
    ospa_per_step: np.ndarray
    card_est_per_step: np.ndarray
    card_true_per_step: np.ndarray
    runs_ok: int
    runs_failed: int


@dataclass
class CampaignResult:
    results: list
    cells: list
    wall_time: float = 0.0
    filter_name: str = "mm-pmbm"
    meta: dict = field(default_factory=dict)

    def failures(self) -> list:
        return [
            {"run": r.run, "seed": r.seed, "p_detect": r.p_detect, "sigma_eps": r.sigma_eps, "error": r.error}
            for r in self.results if r.error is not None
        ]

    def summary(self, p_detect: float, sigma_eps: float) -> CellSummary:
        runs = [r for r in self.results if r.p_detect == p_detect and r.sigma_eps == sigma_eps]
        ok = [r for r in runs if r.error is None]
        if not ok:
            nan = np.full(0, np.nan)
            return CellSummary(p_detect, sigma_eps, math.nan, nan, nan, nan, 0, len(runs))
        ospa_mat = np.array([r.ospa for r in ok])
        return CellSummary(
            p_detect, sigma_eps, float(ospa_mat.mean()), ospa_mat.mean(axis=0),
            np.array([r.card_est for r in ok], dtype=float).mean(axis=0),
            np.array([r.card_true for r in ok], dtype=float).mean(axis=0),
            len(ok), len(runs) - len(ok),
        )

    def summaries(self) -> list[CellSummary]:
        return [self.summary(pd, s) for pd, s in self.cells]

    def timing(self) -> dict:
        el = np.array([r.elapsed for r in self.results]) if self.results else np.zeros(1)
        return {"wall_time_s": self.wall_time, "run_mean_s": float(el.mean()),
                "run_max_s": float(el.max()), "run_total_s": float(el.sum())}


def worker_count(default: int | None = None) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return default or os.cpu_count() or 1


def run_monte_carlo(cfg: ScenarioConfig, cells=None, params: FilterParams = FilterParams(),
                    ospa_params: OspaParams = OspaParams(), num_runs: int | None = None,
                    filter_name: str = "mm-pmbm", workers: int | None = None,
                    progress=None) -> CampaignResult:
    """Run every ``(p_detect, sigma_eps)`` cell for each Monte Carlo run.

    Results come back ordered by run index, then cell, whatever the worker
    count.
    """
    validate_scenario(cfg)
    if filter_name not in FILTERS:
        raise ConfigurationError(f"unknown filter {filter_name!r}; available: {sorted(FILTERS)}")
    cells = [(float(p), float(s)) for p, s in (cells or [(cfg.p_detect, cfg.sigma_eps)])]
    runs = cfg.num_runs if num_runs is None else num_runs
    jobs = [(cfg, cells, r, params, ospa_params, filter_name) for r in range(runs)]
    n_workers = min(worker_count(workers), runs)
    start = time.perf_counter()
    results = []
    if n_workers <= 1:
        for i, job in enumerate(jobs):
            results.extend(_run_cells(job))
            if progress:
                progress(i + 1, runs)
    else:
        with ProcessPoolExecutor(n_workers) as pool:
            for i, batch in enumerate(pool.map(_run_cells, jobs)):
                results.extend(batch)
                if progress:
                    progress(i + 1, runs)
    return CampaignResult(results, cells, time.perf_counter() - start, filter_name)


def sweep_cells(cfg: ScenarioConfig, mode: str) -> list[tuple[float, float]]:
    if mode == "single":
        return [(cfg.p_detect, cfg.sigma_eps)]
    if mode == "sweep-pd":
        return [(pd, cfg.sigma_eps) for pd in cfg.pd_values]
    if mode == "sweep-noise":
        return [(pd, s) for pd in cfg.noise_sweep_pds for s in cfg.sigma_values]
    raise ConfigurationError(f"unknown campaign mode {mode!r}")
