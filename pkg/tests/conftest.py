import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE_KEY = pytest.StashKey[dict]()
CRITERIA = {
    1: "Kalman oracle equivalence",
    2: "single-model reduction",
    3: "assignment oracle",
    4: "OSPA oracle",
    5: "Gaussian identities vs integration",
    6: "normalization",
    7: "component accounting",
    8: "detection sweep trend",
    9: "noise sweep trend",
    10: "steady-state cardinality",
    11: "byte-identical CSV",
}

from mmpmbm.density import BernoulliComponent, ModelConditionedDensity  # noqa: E402
from mmpmbm.gaussian import GaussianMixture  # noqa: E402
from mmpmbm.models import JmsConfig, cv_model, ct_model, position_sensor  # noqa: E402
from mmpmbm.simulator import default_scenario  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def scenario():
    return default_scenario()


def random_spd(rng, d, scale=1.0):
    A = rng.normal(size=(d, d))
    return scale * (A @ A.T + 0.5 * np.eye(d))


def random_mixture(rng, n, d=4, total=1.0, spread=50.0):
    w = rng.random(n) + 0.05
    return GaussianMixture(
        total * w / w.sum(), rng.normal(scale=spread, size=(n, d)),
        np.stack([random_spd(rng, d, 20.0) for _ in range(n)]),
    )


def random_density(rng, M, per_model=2, d=4, normalized=True, spread=50.0):
    mixtures = [random_mixture(rng, per_model, d, 1.0, spread) for _ in range(M)]
    probs = rng.random(M) + 0.1
    probs = probs / probs.sum() if normalized else probs
    return ModelConditionedDensity(tuple(g.scaled(p) for g, p in zip(mixtures, probs)))


def three_model_jms(p_detect=0.9, p_survive=0.99):
    rate = np.deg2rad(10.0)
    models = (cv_model(1.0, 5.0, 0), ct_model(1.0, 5.0, rate, 1), ct_model(1.0, 5.0, -rate, 2))
    tpm = np.array([[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]])
    return JmsConfig.uniform(models, tpm, [0.5, 0.25, 0.25], p_detect, p_survive)


def single_model_jms(p_detect=0.9, p_survive=0.99, sigma=5.0):
    return JmsConfig.uniform((cv_model(1.0, sigma, 0),), np.eye(1), [1.0], p_detect, p_survive)


def random_bernoulli(rng, M, per_model=2, r=None):
    return BernoulliComponent(rng.uniform(0.05, 1.0) if r is None else r, random_density(rng, M, per_model),
                              float(rng.normal()))


def sensor(sigma=10.0, clutter=10.0):
    return position_sensor(sigma, clutter, ((-5000.0, 5000.0), (-5000.0, 5000.0)))


def short_scenario(horizon, **overrides):
    """Default scenario cut to ``horizon`` steps, target lifetimes clipped to fit."""
    from dataclasses import replace

    cfg = default_scenario(**overrides)
    targets = tuple(
        replace(t, birth=min(t.birth, horizon), death=None if t.death is None or t.death > horizon else t.death)
        for t in cfg.targets
    )
    return replace(cfg, horizon=horizon, targets=targets)


@pytest.fixture
def acceptance(request):
    """``record(criterion, passed, detail)`` for the end-of-session summary."""
    store = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    def record(number, passed, detail=""):
        store[number] = (bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(ACCEPTANCE_KEY, None)
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number, name in CRITERIA.items():
        if number in store:
            passed, detail = store[number]
            status = "PASS" if passed else "FAIL"
        else:
            status, detail = "NOT RUN", ""
        terminalreporter.write_line(f"[{status:7}] {number:2d}. {name}: {detail}")
