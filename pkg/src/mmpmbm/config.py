"""YAML run configuration.

The file has four sections (``run``, ``scenario``, ``filter``, ``output``);
see ``configs/default.yaml`` for a fully commented example. Every problem is
reported with the dotted path of the offending field, e.g.
``scenario.targets[1].death: must be an integer``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigurationError
from .metrics import OspaParams
from .models import JmsConfig, make_model, position_sensor
from .pmbm import FilterParams
from .simulator import FILTERS, ScenarioConfig, TargetSpec, validate_scenario

MODES = ("single", "sweep-pd", "sweep-noise", "validate-config")
FORMATS = ("csv", "json", "svg")


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "results"
    formats: tuple = FORMATS


@dataclass(frozen=True, eq=False)
class RunConfig:
    scenario: ScenarioConfig
    filter: FilterParams = FilterParams()
    ospa: OspaParams = OspaParams()
    output: OutputConfig = OutputConfig()
    mode: str = "single"
    filter_name: str = "mm-pmbm"
    workers: int | None = None
    source: str | None = field(default=None, compare=False)


def bundled_config_path() -> Path:
    return Path(str(resources.files("mmpmbm") / "configs" / "default.yaml"))


class _Section:
    """Dict wrapper that remembers where it sits in the file and which keys were read."""

    def __init__(self, data, path: str):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path or 'config'}: expected a mapping")
        self.data, self.path, self.used = data, path, set()

    def _name(self, key):
        return f"{self.path}.{key}" if self.path else key

    def has(self, key) -> bool:
        return key in self.data

    def raw(self, key, default=None):
        self.used.add(key)
        return self.data.get(key, default)

    def section(self, key) -> "_Section":
        return _Section(self.raw(key), self._name(key))

    def number(self, key, default, lo=None, hi=None, integer=False, lo_open=False):
        value = self.raw(key, default)
        name = self._name(key)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{name}: must be {'an integer' if integer else 'a number'}, got {value!r}")
        if integer and value != int(value):
            raise ConfigurationError(f"{name}: must be an integer, got {value!r}")
        if lo is not None and (value <= lo if lo_open else value < lo):
            raise ConfigurationError(f"{name}: must be {'>' if lo_open else '>='} {lo}, got {value!r}")
        if hi is not None and value > hi:
            raise ConfigurationError(f"{name}: must be <= {hi}, got {value!r}")
        return int(value) if integer else float(value)

    def numbers(self, key, default, lo=None, hi=None, nonempty=True):
        value = self.raw(key, default)
        name = self._name(key)
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError(f"{name}: must be a list of numbers")
        if nonempty and not value:
            raise ConfigurationError(f"{name}: must not be empty")
        out = []
        for i, v in enumerate(value):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigurationError(f"{name}[{i}]: must be a number, got {v!r}")
            if (lo is not None and v < lo) or (hi is not None and v > hi):
                raise ConfigurationError(f"{name}[{i}]: must lie in [{lo}, {hi}], got {v!r}")
            out.append(float(v))
        return tuple(out)

    def matrix(self, key, default, shape=None):
        value = self.raw(key, default)
        name = self._name(key)
        try:
            arr = np.array(value, dtype=float)
        except (TypeError, ValueError):
            raise ConfigurationError(f"{name}: must be a numeric matrix") from None
        if shape is not None and arr.shape != shape:
            raise ConfigurationError(f"{name}: expected shape {shape}, got {arr.shape}")
        return arr

    def choice(self, key, default, options):
        value = self.raw(key, default)
        if value not in options:
            raise ConfigurationError(f"{self._name(key)}: must be one of {list(options)}, got {value!r}")
        return value

    def finish(self):
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ConfigurationError(f"{self._name(extra[0])}: unknown key")


def _parse_target(sec: _Section, dim: int, M: int) -> TargetSpec:
    birth = sec.number("birth", None, lo=1, integer=True)
    death = sec.raw("death")
    if death is not None:
        death = sec.number("death", None, lo=birth + 1, integer=True)
    state = sec.numbers("initial_state", None)
    if len(state) != dim:
        raise ConfigurationError(f"{sec._name('initial_state')}: expected {dim} values, got {len(state)}")
    schedule = sec.raw("schedule", [[1, 0]])
    if not isinstance(schedule, list) or not schedule:
        raise ConfigurationError(f"{sec._name('schedule')}: must be a nonempty list of [step, model] pairs")
    pairs = []
    for i, item in enumerate(schedule):
        if not (isinstance(item, list) and len(item) == 2 and all(isinstance(v, int) for v in item)):
            raise ConfigurationError(f"{sec._name('schedule')}[{i}]: must be [step, model] integers")
        if not 0 <= item[1] < M:
            raise ConfigurationError(f"{sec._name('schedule')}[{i}]: model {item[1]} does not exist")
        pairs.append(tuple(item))
    switch = sec.raw("random_switch")
    if switch is not None:
        if not (isinstance(switch, list) and len(switch) == 3 and all(isinstance(v, int) for v in switch)):
            raise ConfigurationError(f"{sec._name('random_switch')}: must be [model, earliest, latest] integers")
        if not 0 <= switch[0] < M:
            raise ConfigurationError(f"{sec._name('random_switch')}: model {switch[0]} does not exist")
        if switch[1] > switch[2]:
            raise ConfigurationError(f"{sec._name('random_switch')}: earliest step after latest step")
        switch = tuple(switch)
    sec.finish()
    return TargetSpec(birth, death, state, tuple(pairs), switch)


def _parse_scenario(sec: _Section) -> ScenarioConfig:
    T = sec.number("T", 1.0, lo=0, lo_open=True)
    horizon = sec.number("horizon", 60, lo=1, integer=True)
    process_sigma = sec.number("process_noise_sigma", 5.0, lo=0)

    model_specs = sec.raw("models")
    if not isinstance(model_specs, list) or not model_specs:
        raise ConfigurationError(f"{sec._name('models')}: must be a nonempty list")
    models = []
    for i, spec in enumerate(model_specs):
        msec = _Section(spec, f"{sec._name('models')}[{i}]")
        kind = msec.choice("kind", "cv", ("cv", "ct"))
        item = {"kind": kind, "sigma": msec.number("sigma", process_sigma, lo=0)}
        if kind == "ct":
            item["turn_rate_deg"] = msec.number("turn_rate_deg", None)
        msec.finish()
        models.append(make_model(item, T, i))
    M = len(models)

    tpm = sec.matrix("tpm", None, (M, M))
    if (tpm < 0).any() or not np.allclose(tpm.sum(axis=1), 1.0, atol=1e-9):
        raise ConfigurationError(f"{sec._name('tpm')}: rows must be nonnegative and sum to 1")
    fb = np.array(sec.numbers("birth_model_dist", None, lo=0))
    if len(fb) != M or abs(fb.sum() - 1.0) > 1e-9:
        raise ConfigurationError(f"{sec._name('birth_model_dist')}: need {M} values summing to 1")
    p_detect = sec.number("p_detect", 0.95, lo=0, hi=1)
    p_survive = sec.number("p_survive", 0.99, lo=0, hi=1)
    jms = JmsConfig.uniform(models, tpm, fb, p_detect, p_survive)

    sigma_eps = sec.number("sigma_eps", 10.0, lo=0)
    clutter = sec.number("clutter_rate", 10.0, lo=0)
    region = sec.matrix("region", [[0.0, 5000.0], [0.0, 5000.0]], (2, 2))
    if (region[:, 1] <= region[:, 0]).any():
        raise ConfigurationError(f"{sec._name('region')}: each row must be [low, high] with low < high")
    meas = position_sensor(sigma_eps, clutter, region)

    dim = models[0].F.shape[0]
    bsec = sec.section("birth")
    b_weight = bsec.number("weight", 0.1, lo=0)
    b_means = bsec.matrix("means", None)
    if b_means.ndim != 2 or b_means.shape[1] != dim:
        raise ConfigurationError(f"{bsec._name('means')}: expected rows of length {dim}")
    b_std = np.array(bsec.numbers("std", None, lo=0))
    if len(b_std) != dim:
        raise ConfigurationError(f"{bsec._name('std')}: expected {dim} values")
    bsec.finish()

    raw_targets = sec.raw("targets")
    if not isinstance(raw_targets, list) or not raw_targets:
        raise ConfigurationError(f"{sec._name('targets')}: must be a nonempty list")
    targets = tuple(
        _parse_target(_Section(t, f"{sec._name('targets')}[{i}]"), dim, M) for i, t in enumerate(raw_targets)
    )
    for i, t in enumerate(targets):
        if t.birth > horizon or (t.death is not None and t.death > horizon + 1):
            raise ConfigurationError(f"{sec._name('targets')}[{i}]: lifetime exceeds the horizon")

    ssec = sec.section("sweeps")
    pd_values = ssec.numbers("pd_values", (0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95), lo=0, hi=1)
    sigma_values = ssec.numbers("sigma_values", (5.0, 10.0, 15.0, 20.0, 25.0), lo=0)
    noise_pds = ssec.numbers("noise_sweep_pds", (0.60, 0.95), lo=0, hi=1)
    ssec.finish()
    jitter = sec.number("position_jitter", 0.0, lo=0)
    sec.finish()

    cfg = ScenarioConfig(
        jms=jms, meas=meas, targets=targets, birth_means=b_means, birth_cov=np.diag(b_std**2),
        birth_weight=b_weight, horizon=horizon, T=T, p_detect=p_detect, sigma_eps=sigma_eps,
        pd_values=pd_values, sigma_values=sigma_values, noise_sweep_pds=noise_pds,
        position_jitter=jitter,
    )
    return validate_scenario(cfg)


def _parse_filter(sec: _Section) -> tuple[str, FilterParams, OspaParams]:
    name = sec.choice("name", "mm-pmbm", tuple(FILTERS))
    d = FilterParams()
    gap = sec.raw("murty_gap")
    if gap is not None:
        gap = sec.number("murty_gap", None, lo=0)
    params = FilterParams(
        gm_prune=sec.number("gm_prune", d.gm_prune, lo=0),
        gm_merge=sec.number("gm_merge", d.gm_merge, lo=0),
        gm_cap=sec.number("gm_cap", d.gm_cap, lo=1, integer=True),
        reduce_components=bool(sec.choice("reduce_components", d.reduce_components, (True, False))),
        hyp_prune=sec.number("hyp_prune", d.hyp_prune, lo=0, hi=1),
        hyp_cap=sec.number("hyp_cap", d.hyp_cap, lo=1, integer=True),
        r_prune=sec.number("r_prune", d.r_prune, lo=0, hi=1),
        k_total=sec.number("k_total", d.k_total, lo=1, integer=True),
        gate_chi2=sec.number("gate_chi2", d.gate_chi2, lo=0, lo_open=True),
        r_threshold=sec.number("r_threshold", d.r_threshold, lo=0, hi=1),
        clutter_rel_tol=sec.number("clutter_rel_tol", d.clutter_rel_tol, lo=0),
        murty_gap=gap,
    )
    osec = sec.section("ospa")
    ospa_params = OspaParams(
        osec.number("cutoff", 100.0, lo=0, lo_open=True),
        osec.number("order", 1.0, lo=1),
    )
    osec.finish()
    sec.finish()
    return name, params, ospa_params


def parse_config(data, source: str | None = None) -> RunConfig:
    root = _Section(data, "")
    run = root.section("run")
    mode = run.choice("mode", "single", MODES)
    seed = run.number("seed", 0, lo=0, integer=True)
    runs = run.number("runs", 100, lo=1, integer=True)
    workers = run.raw("workers")
    if workers is not None:
        workers = run.number("workers", None, lo=1, integer=True)
    run.finish()

    scenario = replace(_parse_scenario(root.section("scenario")), num_runs=runs, rng_seed=seed)
    name, params, ospa_params = _parse_filter(root.section("filter"))

    out = root.section("output")
    directory = out.raw("directory", "results")
    if not isinstance(directory, str) or not directory:
        raise ConfigurationError("output.directory: must be a nonempty path")
    formats = out.raw("formats", list(FORMATS))
    if not isinstance(formats, list) or not formats or any(f not in FORMATS for f in formats):
        raise ConfigurationError(f"output.formats: must be a nonempty subset of {list(FORMATS)}")
    out.finish()
    root.finish()
    return RunConfig(scenario, params, ospa_params, OutputConfig(directory, tuple(formats)),
                     mode, name, workers, source)


def load_config(path=None) -> RunConfig:
    """Read and validate a YAML run configuration (the bundled one by default)."""
    path = Path(path) if path is not None else bundled_config_path()
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: not valid YAML ({exc})") from None
    return parse_config(data, str(path))


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    """Apply command-line overrides (``mode``, ``seed``, ``runs``, ``out``)."""
    mode, seed, runs, out = (changes.get(k) for k in ("mode", "seed", "runs", "out"))
    scenario = cfg.scenario
    if seed is not None:
        if seed < 0:
            raise ConfigurationError(f"--seed: must be >= 0, got {seed}")
        scenario = replace(scenario, rng_seed=seed)
    if runs is not None:
        if runs < 1:
            raise ConfigurationError(f"--runs: must be >= 1, got {runs}")
        scenario = replace(scenario, num_runs=runs)
    if mode is not None and mode not in MODES:
        raise ConfigurationError(f"--mode: must be one of {list(MODES)}")
    output = replace(cfg.output, directory=out) if out is not None else cfg.output
    kw = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    kw.update(scenario=scenario, output=output, mode=mode or cfg.mode)
    return RunConfig(**kw)
