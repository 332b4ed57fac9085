"""OSPA distance and cardinality statistics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import best_assignment
from .errors import ConfigurationError

POSITION_INDEX = (0, 2)


@dataclass(frozen=True)
class OspaParams:
    cutoff: float = 100.0
    order: float = 1.0

    def __post_init__(self):
        if self.cutoff <= 0 or self.order < 1:
            raise ConfigurationError(f"OSPA needs c > 0 and p >= 1, got {self.cutoff}, {self.order}")


def _as_points(X, dim=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return X.reshape(0, dim or (X.shape[-1] if X.ndim == 2 else 0))
    return np.atleast_2d(X)


def ospa(X, Y, params: OspaParams = OspaParams()) -> float:
    """OSPA distance between two point sets given as ``(n, dim)`` arrays."""
    X, Y = _as_points(X), _as_points(Y)
    m, n = len(X), len(Y)
    if m == 0 and n == 0:
        return 0.0
    c, p = params.cutoff, params.order
    if m == 0 or n == 0:
        return float(c)
    if X.shape[1] != Y.shape[1]:
        raise ConfigurationError(f"point dimensions differ: {X.shape[1]} vs {Y.shape[1]}")
    if m > n:
        X, Y, m, n = Y, X, n, m
    d = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=2)
    cost = np.minimum(d, c) ** p
    a = best_assignment(cost)
    total = a.total_cost + c**p * (n - m)
    return float((total / n) ** (1.0 / p))


def positions(states) -> np.ndarray:
    states = np.asarray(states, dtype=float)
    if states.size == 0:
        return np.zeros((0, len(POSITION_INDEX)))
    return np.atleast_2d(states)[:, POSITION_INDEX]


@dataclass(frozen=True)
class CardinalityStats:
    mean_estimated: np.ndarray
    mean_true: np.ndarray

    @property
    def error(self) -> np.ndarray:
        return self.mean_estimated - self.mean_true


def cardinality_error(estimated, truth) -> CardinalityStats:
    """Per-step Monte Carlo means of estimated and true cardinality.

    ``estimated`` is ``(runs, steps)``; ``truth`` is ``(steps,)`` or
    ``(runs, steps)``.
    """
    est = np.atleast_2d(np.asarray(estimated, dtype=float))
    tru = np.asarray(truth, dtype=float)
    tru = np.atleast_2d(tru)
    if est.shape[1] != tru.shape[1]:
        raise ConfigurationError(f"horizon mismatch: {est.shape[1]} vs {tru.shape[1]} steps")
    return CardinalityStats(est.mean(axis=0), tru.mean(axis=0))
