"""Motion models, the linear position sensor and the jump-Markov configuration.

State ordering is ``[x, vx, y, vy]`` throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

SMALL_TURN_RATE = 1e-9


@dataclass(frozen=True, eq=False)
class MotionModel:
    label: int
    F: np.ndarray
    Q: np.ndarray
    kind: str = "cv"
    sigma: float = 0.0
    turn_rate: float = 0.0

    def describe(self) -> dict:
        return {"kind": self.kind, "sigma": self.sigma, "turn_rate": self.turn_rate}


def _white_accel_noise(T: float, sigma: float) -> np.ndarray:
    block = np.array([[T**4 / 4, T**3 / 2], [T**3 / 2, T**2]])
    Q = np.zeros((4, 4))
    Q[:2, :2] = block
    Q[2:, 2:] = block
    return sigma**2 * Q


def _cv_transition(T: float) -> np.ndarray:
    F = np.eye(4)
    F[0, 1] = T
    F[2, 3] = T
    return F


def cv_model(T: float, sigma: float, label: int = 0) -> MotionModel:
    """Nearly-constant-velocity model with white acceleration noise ``sigma``."""
    if T <= 0 or sigma < 0:
        raise ConfigurationError(f"cv_model needs T > 0 and sigma >= 0, got {T}, {sigma}")
    return MotionModel(label, _cv_transition(T), _white_accel_noise(T, sigma), "cv", sigma, 0.0)


def ct_model(T: float, sigma: float, turn_rate: float, label: int = 0) -> MotionModel:
    """Constant-turn model with known turn rate (rad/s, positive = counterclockwise)."""
    if T <= 0 or sigma < 0:
        raise ConfigurationError(f"ct_model needs T > 0 and sigma >= 0, got {T}, {sigma}")
    w = turn_rate
    if abs(w) < SMALL_TURN_RATE:
        F = _cv_transition(T)
    else:
        s, c = np.sin(w * T), np.cos(w * T)
        F = np.array(
            [
                [1.0, s / w, 0.0, -(1.0 - c) / w],
                [0.0, c, 0.0, -s],
                [0.0, (1.0 - c) / w, 1.0, s / w],
                [0.0, s, 0.0, c],
            ]
        )
    return MotionModel(label, F, _white_accel_noise(T, sigma), "ct", sigma, turn_rate)


def make_model(spec: dict, T: float, label: int) -> MotionModel:
    kind = spec.get("kind", "cv").lower()
    sigma = float(spec.get("sigma", 0.0))
    if kind == "cv":
        return cv_model(T, sigma, label)
    if kind == "ct":
        if "turn_rate_deg" in spec:
            rate = np.deg2rad(float(spec["turn_rate_deg"]))
        else:
            rate = float(spec.get("turn_rate", 0.0))
        return ct_model(T, sigma, rate, label)
    raise ConfigurationError(f"unknown motion model kind {kind!r}")


@dataclass(frozen=True, eq=False)
class JmsConfig:
    models: tuple
    tpm: np.ndarray
    birth_model_dist: np.ndarray
    p_detect: np.ndarray
    p_survive: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        for name in ("tpm", "birth_model_dist", "p_detect", "p_survive"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def num_models(self) -> int:
        return len(self.models)

    @classmethod
    def uniform(cls, models, tpm, birth_model_dist, p_detect: float, p_survive: float):
        M = len(models)
        return cls(models, tpm, birth_model_dist, np.full(M, p_detect), np.full(M, p_survive))

    def with_detection(self, p_detect: float) -> "JmsConfig":
        return JmsConfig(
            self.models, self.tpm, self.birth_model_dist,
            np.full(self.num_models, float(p_detect)), self.p_survive,
        )


def validate_jms(config: JmsConfig, tol: float = 1e-9) -> JmsConfig:
    """Return ``config`` unchanged if it is a consistent jump-Markov system."""
    M = config.num_models
    if M == 0:
        raise ConfigurationError("at least one motion model is required")
    d = config.models[0].F.shape[0]
    for i, mdl in enumerate(config.models):
        if mdl.F.shape != (d, d) or mdl.Q.shape != (d, d):
            raise ConfigurationError(f"models[{i}]: F/Q must be {d}x{d}")
        if not np.allclose(mdl.Q, mdl.Q.T, atol=tol, rtol=0):
            raise ConfigurationError(f"models[{i}]: Q is not symmetric")
        if np.linalg.eigvalsh(mdl.Q).min() < -tol * max(1.0, np.trace(mdl.Q)):
            raise ConfigurationError(f"models[{i}]: Q is not positive semi-definite")
    tpm = config.tpm
    if tpm.shape != (M, M):
        raise ConfigurationError(f"tpm has shape {tpm.shape}, expected {(M, M)}")
    for i, row in enumerate(tpm):
        if np.any(row < 0) or np.any(row > 1):
            raise ConfigurationError(f"tpm row {i} has entries outside [0, 1]: {row.tolist()}")
        if abs(row.sum() - 1.0) > tol:
            raise ConfigurationError(f"tpm row {i} sums to {row.sum():.12g}, not 1")
    for name in ("birth_model_dist", "p_detect", "p_survive"):
        v = getattr(config, name)
        if v.shape != (M,):
            raise ConfigurationError(f"{name} has shape {v.shape}, expected {(M,)}")
        if np.any(v < 0) or np.any(v > 1):
            raise ConfigurationError(f"{name} has entries outside [0, 1]: {v.tolist()}")
    if abs(config.birth_model_dist.sum() - 1.0) > tol:
        raise ConfigurationError(
            f"birth_model_dist sums to {config.birth_model_dist.sum():.12g}, not 1"
        )
    return config


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    H: np.ndarray
    R: np.ndarray
    clutter_rate: float
    region: np.ndarray = field(default_factory=lambda: np.array([[0.0, 5000.0], [0.0, 5000.0]]))

    def __post_init__(self):
        object.__setattr__(self, "H", np.atleast_2d(np.asarray(self.H, dtype=float)))
        object.__setattr__(self, "R", np.atleast_2d(np.asarray(self.R, dtype=float)))
        object.__setattr__(self, "region", np.asarray(self.region, dtype=float))
        if self.clutter_rate < 0:
            raise ConfigurationError("clutter_rate must be >= 0")
        if self.region.shape != (self.H.shape[0], 2) or np.any(self.region[:, 1] <= self.region[:, 0]):
            raise ConfigurationError(f"region must be {self.H.shape[0]} increasing [lo, hi] rows")

    @property
    def area(self) -> float:
        return float(np.prod(self.region[:, 1] - self.region[:, 0]))

    @property
    def clutter_density(self) -> float:
        """Clutter intensity per unit area inside the region."""
        return self.clutter_rate / self.area

    def contains(self, Z) -> np.ndarray:
        Z = np.atleast_2d(Z)
        return np.all((Z >= self.region[:, 0]) & (Z <= self.region[:, 1]), axis=1)

    def with_noise(self, sigma: float) -> "MeasurementModel":
        return MeasurementModel(self.H, sigma**2 * np.eye(self.H.shape[0]), self.clutter_rate, self.region)


def position_sensor(sigma: float, clutter_rate: float, region=((0.0, 5000.0), (0.0, 5000.0))) -> MeasurementModel:
    H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
    return MeasurementModel(H, sigma**2 * np.eye(2), clutter_rate, np.asarray(region, dtype=float))
