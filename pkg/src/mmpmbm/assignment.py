"""Optimal and k-best rectangular assignment, plus ellipsoidal gating.

Every row must be assigned to a distinct column. ``inf`` marks an impossible
pairing. The single-solution core is scipy's shortest-augmenting-path solver;
the k-best enumeration is Murty's partitioning on top of it.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigurationError
from .gaussian import innovation

DEFAULT_GATE_CHI2 = 13.82


class InfeasibleAssignment(ValueError):
    pass


@dataclass(frozen=True)
class Assignment:
    row_to_col: tuple
    total_cost: float


@dataclass(frozen=True, eq=False)
class AssignmentProblem:
    costs: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.costs, dtype=float)
        if C.ndim != 2:
            raise ConfigurationError(f"cost matrix must be 2-D, got shape {C.shape}")
        if np.isnan(C).any() or (C == -np.inf).any():
            raise ConfigurationError("cost matrix may hold finite values or +inf only")
        object.__setattr__(self, "costs", C)


def _as_costs(p) -> np.ndarray:
    if isinstance(p, AssignmentProblem):
        return p.costs
    return AssignmentProblem(p).costs


def _solve(C: np.ndarray):
    """Raw LAP solve; ``None`` when no complete assignment exists."""
    m, n = C.shape
    if m > n:
        return None
    if m == 0:
        return np.zeros(0, dtype=int)
    try:
        rows, cols = linear_sum_assignment(C)
    except ValueError:
        return None
    out = np.empty(m, dtype=int)
    out[rows] = cols
    if not np.all(np.isfinite(C[np.arange(m), out])):
        return None
    return out


def _total(C, cols) -> float:
    return float(C[np.arange(len(cols)), cols].sum())


def _tie_tol(cost: float) -> float:
    return 1e-9 * max(1.0, abs(cost))


def _canonical(C: np.ndarray, cols: np.ndarray, cost: float) -> np.ndarray:
    """Lexicographically smallest assignment among those tying with ``cost``."""
    m = len(cols)
    cur = cols.copy()
    work = C.copy()
    tol = _tie_tol(cost)
    for i in range(m):
        candidates = [j for j in np.flatnonzero(np.isfinite(work[i])) if j < cur[i]]
        for j in candidates:
            trial = work.copy()
            keep = trial[i, j]
            trial[i, :] = np.inf
            trial[:, j] = np.inf
            trial[i, j] = keep
            sol = _solve(trial)
            if sol is not None and _total(C, sol) <= cost + tol:
                cur = sol
                break
        keep = work[i, cur[i]]
        work[i, :] = np.inf
        work[:, cur[i]] = np.inf
        work[i, cur[i]] = keep
    return cur


def best_assignment(p) -> Assignment:
    """Minimum-cost assignment; ties resolve to the lexicographically smallest mapping."""
    C = _as_costs(p)
    cols = _solve(C)
    if cols is None:
        raise InfeasibleAssignment(f"no feasible assignment for a {C.shape} cost matrix")
    cost = _total(C, cols)
    cols = _canonical(C, cols, cost)
    return Assignment(tuple(int(c) for c in cols), _total(C, cols))


def k_best_assignments(p, k: int, max_cost_gap: float = np.inf, canonical: bool = True) -> list[Assignment]:
    """The ``k`` cheapest distinct assignments in nondecreasing cost order.

    Enumeration stops early once the next solution costs more than the best
    plus ``max_cost_gap``. With ``canonical=False`` the first solution is
    whatever the solver returns among ties, which is much cheaper.
    """
    if k < 1:
        raise ConfigurationError("k must be >= 1")
    C = _as_costs(p)
    m = C.shape[0]
    if canonical:
        first = best_assignment(C)
    else:
        cols = _solve(C)
        if cols is None:
            raise InfeasibleAssignment(f"no feasible assignment for a {C.shape} cost matrix")
        first = Assignment(tuple(int(c) for c in cols), _total(C, cols))
    if m == 0:
        return [first]
    counter = itertools.count()
    heap = [(first.total_cost, first.row_to_col, next(counter), C, frozenset())]
    out: list[Assignment] = []
    limit = first.total_cost + max_cost_gap + _tie_tol(first.total_cost)
    while heap and len(out) < k:
        cost, cols, _, node, forced = heapq.heappop(heap)
        if cost > limit:
            break
        out.append(Assignment(cols, cost))
        if len(out) == k:
            break
        work = node.copy()
        fixed = set(forced)
        for i in range(m):
            if i in fixed:
                continue
            j = cols[i]
            child = work.copy()
            child[i, j] = np.inf
            sol = _solve(child)
            if sol is not None:
                heapq.heappush(
                    heap,
                    (_total(C, sol), tuple(int(c) for c in sol), next(counter), child, frozenset(fixed)),
                )
            keep = work[i, j]
            work[i, :] = np.inf
            work[:, j] = np.inf
            work[i, j] = keep
            fixed.add(i)
    return out


def gate_measurements(b, measurements, meas, gate_chi2: float = DEFAULT_GATE_CHI2) -> set[int]:
    """Indices of measurements within ``gate_chi2`` of any component of ``b``."""
    if gate_chi2 <= 0:
        raise ConfigurationError("gate_chi2 must be positive")
    Z = np.atleast_2d(np.asarray(measurements, dtype=float))
    if Z.size == 0:
        return set()
    if np.isinf(gate_chi2):
        return set(range(len(Z)))
    best = np.full(len(Z), np.inf)
    for gm in b.density.per_model:
        if len(gm):
            d2 = innovation(meas.H, meas.R, gm).mahalanobis(Z)
            best = np.minimum(best, d2.min(axis=0))
    return {int(i) for i in np.flatnonzero(best <= gate_chi2)}
