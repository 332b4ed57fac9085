"""Multiple-model PMBM prediction, update and state extraction.

Weights of global hypotheses and single-target hypotheses are kept as natural
logarithms. Bernoulli objects are immutable and shared between global
hypotheses, so per-track work is done once per distinct object and reused.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .assignment import DEFAULT_GATE_CHI2, InfeasibleAssignment, k_best_assignments
from .density import (
    BernoulliComponent,
    GlobalHypothesis,
    ModelConditionedDensity,
    PmbmState,
    flatten_densities,
    owner_totals,
    reduce_densities,
    unflatten_densities,
)
from .errors import NumericalError, RejectedMeasurementError
from .gaussian import GaussianMixture, innovation, reduce_segments, symmetrize
from .models import JmsConfig, MeasurementModel

# stands in for ln(0) of a misdetection weight inside the cost matrix
LOG_RHO_FLOOR = -1000.0


@dataclass(frozen=True)
class FilterParams:
    gm_prune: float = 1e-5
    gm_merge: float = 4.0
    gm_cap: int = 100
    reduce_components: bool = True
    hyp_prune: float = 1e-4
    hyp_cap: int = 200
    r_prune: float = 1e-4
    k_total: int = 100
    gate_chi2: float = DEFAULT_GATE_CHI2
    r_threshold: float = 0.5
    clutter_rel_tol: float = 1e-6
    # None: stop Murty once a solution is e^-gap less likely than the best,
    # with gap = -ln(hyp_prune); such children are always pruned anyway.
    murty_gap: float | None = None

    @classmethod
    def unreduced(cls, **overrides) -> "FilterParams":
        """Everything that discards components or hypotheses switched off."""
        base = cls(
            reduce_components=False, hyp_prune=0.0, hyp_cap=10**9, r_prune=0.0,
            clutter_rel_tol=0.0, murty_gap=np.inf,
        )
        return replace(base, **overrides)

    def effective_gap(self) -> float:
        if self.murty_gap is not None:
            return self.murty_gap
        return -math.log(self.hyp_prune) if self.hyp_prune > 0 else np.inf


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


# ---------------------------------------------------------------- prediction

def _predict_packed(densities, jms: JmsConfig):
    """Model-switching prediction of many densities at once.

    Returns packed arrays (see :func:`flatten_densities`) holding the weights
    ``w * p_S(src) * tpm[src, dst]`` and, separately, ``w * tpm[src, dst]``
    (the shape used when nothing survives).
    """
    M, n = jms.num_models, len(densities)
    dim = densities[0].dim
    w, mu, P, counts = flatten_densities(densities, M, dim)
    src = np.tile(np.arange(M), n)
    src = np.repeat(src, counts.ravel())
    owner = np.repeat(np.arange(n), counts.sum(axis=1))
    keys, ws, shapes, means, covs = [], [], [], [], []
    for dst, model in enumerate(jms.models):
        F = model.F
        means.append(mu @ F.T)
        covs.append(symmetrize(model.Q + F @ P @ F.T))
        shape = w * jms.tpm[src, dst]
        shapes.append(shape)
        ws.append(shape * jms.p_survive[src])
        keys.append(owner * M + dst)
    order = np.argsort(np.concatenate(keys), kind="stable")
    new_counts = np.bincount(np.concatenate(keys), minlength=n * M).reshape(n, M)
    return (
        np.concatenate(ws)[order],
        np.concatenate(shapes)[order],
        np.concatenate(means)[order],
        np.concatenate(covs)[order],
        new_counts,
    )


def _predict_density(density: ModelConditionedDensity, jms: JmsConfig) -> ModelConditionedDensity:
    """Unnormalised model-switching prediction, weights w * p_S(src) * tpm[src, dst]."""
    w, _, mu, P, counts = _predict_packed([density], jms)
    return unflatten_densities(w, mu, P, counts)[0]


def predict_ppp(ppp: ModelConditionedDensity, jms: JmsConfig, birth: ModelConditionedDensity) -> ModelConditionedDensity:
    """Predicted Poisson intensity: birth components first, then survivors."""
    return birth.union(_predict_density(ppp, jms))


def _predict_bernoullis(bernoullis, jms: JmsConfig, params: FilterParams | None) -> list:
    """Predict many Bernoullis; reduce their densities when ``params`` asks for it."""
    if not bernoullis:
        return []
    w, shape, mu, P, counts = _predict_packed([b.density for b in bernoullis], jms)
    mass = owner_totals(w, counts)
    dead = mass <= 0
    if dead.any():
        # nothing survives: keep the transition shape so the density stays proper
        per = np.repeat(dead, counts.sum(axis=1))
        w = np.where(per, shape, w)
    norm = owner_totals(w, counts)
    norm = np.where(norm > 0, norm, 1.0)
    w = w / np.repeat(norm, counts.sum(axis=1))
    if params is not None and params.reduce_components:
        w, mu, P, reduced = reduce_segments(
            w, mu, P, counts.ravel(), params.gm_prune, params.gm_merge, params.gm_cap
        )
        counts = reduced.reshape(counts.shape)
        norm = owner_totals(w, counts)
        norm = np.where(norm > 0, norm, 1.0)
        w = w / np.repeat(norm, counts.sum(axis=1))
    densities = unflatten_densities(w, mu, P, counts)
    return [
        BernoulliComponent(0.0 if d else b.r * m, dens, b.log_weight)
        for b, m, d, dens in zip(bernoullis, mass, dead, densities)
    ]


def predict_bernoulli(b: BernoulliComponent, jms: JmsConfig) -> BernoulliComponent:
    return _predict_bernoullis([b], jms, None)[0]


# -------------------------------------------------------------------- update

def update_undetected(ppp: ModelConditionedDensity, jms: JmsConfig) -> ModelConditionedDensity:
    return ppp.scaled_per_model(1.0 - jms.p_detect)


class _Detections:
    """Likelihood terms of many densities against one measurement batch.

    For density ``i`` and measurement ``j``: ``log_sum[i, j]`` is the log of
    ``sum p_D(model) w N(z_j; H m, S)``, ``min_maha[i, j]`` is the smallest
    squared innovation distance and ``miss_mass[i]`` is ``sum (1 - p_D) w``.
    """

    def __init__(self, densities, Z, meas: MeasurementModel, jms: JmsConfig):
        M = jms.num_models
        n, m = len(densities), len(Z)
        dim = densities[0].dim if densities else meas.H.shape[1]
        self.Z, self.M, self.dim = Z, M, dim
        w, mu, P, counts = flatten_densities(densities, M, dim)
        self.counts = counts
        per_owner = counts.sum(axis=1)
        self.bounds = np.concatenate([[0], np.cumsum(per_owner)])
        model = np.repeat(np.tile(np.arange(M), n), counts.ravel())
        self.inn = innovation(meas.H, meas.R, GaussianMixture(w, mu, P))
        self.miss_mass = np.bincount(
            np.repeat(np.arange(n), per_owner), weights=w * (1.0 - jms.p_detect[model]), minlength=n
        )
        self.min_maha = np.full((n, m), np.inf)
        self.log_sum = np.full((n, m), -np.inf)
        self.log_terms = np.zeros((len(w), m))
        nonempty = np.flatnonzero(per_owner)
        if m == 0 or len(nonempty) == 0:
            return
        maha = self.inn.mahalanobis(Z)
        terms = (_log(jms.p_detect)[model] + _log(w))[:, None] + self.inn.log_likelihood(Z, maha)
        self.log_terms = terms
        starts = self.bounds[nonempty]
        self.min_maha[nonempty] = np.minimum.reduceat(maha, starts, axis=0)
        peak = np.maximum.reduceat(terms, starts, axis=0)
        safe = np.where(np.isfinite(peak), peak, 0.0)
        seg_of = np.repeat(np.arange(len(nonempty)), per_owner[nonempty])
        with np.errstate(under="ignore"):
            total = np.add.reduceat(np.exp(terms - safe[seg_of]), starts, axis=0)
        self.log_sum[nonempty] = _log(total) + safe

    def posterior(self, i: int, j: int) -> ModelConditionedDensity:
        """Density ``i`` updated with measurement ``j`` (normalised)."""
        a, b = self.bounds[i], self.bounds[i + 1]
        w = np.exp(self.log_terms[a:b, j] - self.log_sum[i, j])
        nu = self.Z[j][None, :] - self.inn.predicted[a:b]
        mu = self.inn.prior_means[a:b] + np.einsum("nij,nj->ni", self.inn.gain[a:b], nu)
        return unflatten_densities(w, mu, self.inn.post_covs[a:b], self.counts[i:i + 1])[0]


def _check_inside(Z, meas):
    if len(Z) and not np.all(meas.contains(Z)):
        bad = np.flatnonzero(~meas.contains(Z)).tolist()
        raise RejectedMeasurementError(f"measurements {bad} lie outside the surveillance region")


def _first_detections(ppp, Z, meas, jms):
    det = _Detections([ppp], Z, meas, jms)
    log_rho_p = np.logaddexp(det.log_sum[0], _log(meas.clutter_density))
    return det, log_rho_p


def update_first_detection(ppp: ModelConditionedDensity, z, meas: MeasurementModel, jms: JmsConfig):
    """New Bernoulli seeded by ``z`` from the undetected intensity.

    Returns ``(rho_p, bernoulli)`` with ``rho_p = e(z) + c(z)`` and existence
    probability ``e(z) / rho_p``.
    """
    Z = np.atleast_2d(np.asarray(z, dtype=float))
    _check_inside(Z, meas)
    det, log_rho_p = _first_detections(ppp, Z, meas, jms)
    rho_p = float(np.exp(log_rho_p[0]))
    if not np.isfinite(det.log_sum[0, 0]):
        return rho_p, BernoulliComponent(0.0, ModelConditionedDensity.empty(ppp.num_models, ppp.dim), log_rho_p[0])
    r = float(np.exp(det.log_sum[0, 0] - log_rho_p[0]))
    return rho_p, BernoulliComponent(r, det.posterior(0, 0), float(log_rho_p[0]))


def _misdetection_terms(r, miss_mass):
    """Vectorised ``(log rho_miss, r_miss)`` from existence and missed mass."""
    r = np.asarray(r, dtype=float)
    rho = 1.0 - r + r * miss_mass
    ok = rho > 0
    log_rho = np.where(ok, _log(np.where(ok, rho, 1.0)), -np.inf)
    r_new = np.where(ok, r * miss_mass / np.where(ok, rho, 1.0), 0.0)
    return log_rho, r_new


def _missed_bernoulli(b, log_rho, r_new, miss_mass, jms):
    miss = 1.0 - jms.p_detect
    density = b.density.scaled_per_model(miss / miss_mass) if miss_mass > 0 else b.density
    return BernoulliComponent(float(r_new), density, b.log_weight + float(log_rho))


def _misdetection(b: BernoulliComponent, jms: JmsConfig):
    if not np.any(jms.p_detect):
        return 0.0, b
    miss_mass = float((1.0 - jms.p_detect) @ b.density.model_weights())
    log_rho, r_new = _misdetection_terms(b.r, miss_mass)
    return float(log_rho), _missed_bernoulli(b, log_rho, r_new, miss_mass, jms)


def update_misdetection(b: BernoulliComponent, jms: JmsConfig) -> BernoulliComponent:
    return _misdetection(b, jms)[1]


def update_with_measurement(b: BernoulliComponent, z, meas: MeasurementModel, jms: JmsConfig):
    """Returns ``(rho_z, bernoulli)``; ``rho_z = r * sum p_D w N(z; Hm, S)``."""
    Z = np.atleast_2d(np.asarray(z, dtype=float))
    det = _Detections([b.density], Z, meas, jms)
    log_sum = det.log_sum[0, 0]
    if not np.isfinite(log_sum) or b.r <= 0:
        return 0.0, BernoulliComponent(1.0, b.density, -np.inf)
    log_rho = float(_log(b.r) + log_sum)
    return float(np.exp(log_rho)), BernoulliComponent(1.0, det.posterior(0, 0), b.log_weight + log_rho)


def build_cost_matrix(log_rho_z, log_rho_miss, log_rho_p) -> np.ndarray:
    """Assignment costs for one global hypothesis, shape ``m x (n + m)``.

    Column ``t < n`` pairs a measurement with prior track ``t`` at cost
    ``-ln(rho_z / rho_miss)``; column ``n + i`` is measurement ``i``'s own
    new-target slot at cost ``-ln rho_p``. Other new-target slots are
    infeasible (``inf``), as are gated-out pairs (``log_rho_z = -inf``).
    """
    log_rho_z = np.asarray(log_rho_z, dtype=float)
    m, n = log_rho_z.shape
    lm = np.asarray(log_rho_miss, dtype=float)
    lm = np.where(np.isfinite(lm), lm, LOG_RHO_FLOOR)
    C = np.full((m, n + m), np.inf)
    with np.errstate(invalid="ignore"):
        C[:, :n] = lm[None, :] - log_rho_z
    C[:, :n][~np.isfinite(log_rho_z)] = np.inf
    C[np.arange(m), n + np.arange(m)] = -np.asarray(log_rho_p, dtype=float)
    return C


def _k_best_decomposed(C, n, k, gap):
    """k-best on the part of ``C`` that is actually ambiguous.

    Rows with no feasible track column must take their own new-target slot;
    they are fixed up front and the rest goes to Murty.
    """
    m = C.shape[0]
    finite_tracks = np.isfinite(C[:, :n])
    has_track = finite_tracks.any(axis=1)
    free = np.flatnonzero(has_track).tolist()
    fixed = np.flatnonzero(~has_track)
    fixed_cost = float(C[fixed, n + fixed].sum())
    if not np.isfinite(fixed_cost):
        return []
    base = [n + i for i in range(m)]
    if not free:
        return [(tuple(base), fixed_cost)]
    cols = np.flatnonzero(finite_tracks[free].any(axis=0)).tolist() + [n + i for i in free]
    sub = C[np.ix_(free, cols)]
    try:
        sols = k_best_assignments(sub, k, gap, canonical=False)
    except InfeasibleAssignment:
        return []
    out = []
    for a in sols:
        full = list(base)
        for row, c in zip(free, a.row_to_col):
            full[row] = cols[c]
        out.append((tuple(full), a.total_cost + fixed_cost))
    return out


class _TrackBatch:
    """Miss and detection outcomes of every distinct prior Bernoulli.

    The outcome Bernoullis are built on first use, since most never appear
    in a surviving hypothesis.
    """

    def __init__(self, bernoullis, Z, meas, jms, gate_chi2):
        self.bernoullis, self.jms = bernoullis, jms
        self.det = _Detections([b.density for b in bernoullis], Z, meas, jms)
        r = np.array([b.r for b in bernoullis], dtype=float)
        with np.errstate(divide="ignore"):
            log_rho_z = _log(r)[:, None] + self.det.log_sum
        log_rho_z[self.det.min_maha > gate_chi2] = -np.inf
        self.log_rho_z = log_rho_z
        self.detects = np.any(jms.p_detect)
        if self.detects:
            self.log_miss, self.r_miss = _misdetection_terms(r, self.det.miss_mass)
        else:
            self.log_miss, self.r_miss = np.zeros(len(r)), r
        self._missed, self._detected = {}, {}

    def missed(self, i: int) -> BernoulliComponent:
        if i not in self._missed:
            b = self.bernoullis[i]
            self._missed[i] = (
                _missed_bernoulli(b, self.log_miss[i], self.r_miss[i], self.det.miss_mass[i], self.jms)
                if self.detects else b
            )
        return self._missed[i]

    def detected(self, i: int, j: int) -> BernoulliComponent:
        key = (i, j)
        if key not in self._detected:
            b = self.bernoullis[i]
            self._detected[key] = BernoulliComponent(
                1.0, self.det.posterior(i, j), b.log_weight + float(self.log_rho_z[i, j])
            )
        return self._detected[key]


def _normalize_log(logw: np.ndarray) -> np.ndarray:
    return logw - logsumexp(logw)


def _reduce_hypotheses(children, params: FilterParams):
    merged: dict = {}
    for logw, bers in children:
        bers = tuple(b for b in bers if b.r >= params.r_prune)
        key = tuple(id(b) for b in bers)
        if key in merged:
            merged[key] = (np.logaddexp(merged[key][0], logw), bers)
        else:
            merged[key] = (logw, bers)
    items = list(merged.values())
    logw = _normalize_log(np.array([w for w, _ in items]))
    order = np.argsort(-logw, kind="stable")
    keep = [i for i in order if logw[i] >= _log(params.hyp_prune)] or [order[0]]
    keep = keep[: params.hyp_cap]
    final = _normalize_log(logw[keep])
    return tuple(GlobalHypothesis(float(w), items[i][1]) for w, i in zip(final, keep))


def _new_bernoullis(det, log_rho_p, log_c, params: FilterParams) -> list:
    out, densities = [], []
    for j in range(len(log_rho_p)):
        log_e = det.log_sum[0, j]
        if not np.isfinite(log_e) or (np.isfinite(log_c) and np.exp(log_e - log_c) < params.clutter_rel_tol):
            out.append(None)
            continue
        out.append(j)
        densities.append(det.posterior(0, j))
    if params.reduce_components:
        densities = reduce_densities(densities, params.gm_prune, params.gm_merge, params.gm_cap, True)
    it = iter(densities)
    return [
        None if j is None
        else BernoulliComponent(float(np.exp(det.log_sum[0, j] - log_rho_p[j])), next(it), float(log_rho_p[j]))
        for j in out
    ]


def update_step(
    state: PmbmState,
    measurements,
    meas: MeasurementModel,
    jms: JmsConfig,
    params: FilterParams = FilterParams(),
) -> PmbmState:
    """Full update of a predicted PMBM state with one measurement scan."""
    p = meas.H.shape[0]
    Z = np.asarray(measurements, dtype=float).reshape(-1, p)
    _check_inside(Z, meas)
    m = len(Z)

    det, log_rho_p = _first_detections(state.ppp, Z, meas, jms)
    new_bernoullis = _new_bernoullis(det, log_rho_p, _log(meas.clutter_density), params)

    unique = state.unique_bernoullis()
    index = {id(b): i for i, b in enumerate(unique)}
    tracks = _TrackBatch(unique, Z, meas, jms, params.gate_chi2)
    log_miss_all = np.where(np.isfinite(tracks.log_miss), tracks.log_miss, LOG_RHO_FLOOR)

    gap = params.effective_gap()
    children = []
    for hyp in state.hypotheses:
        idx = np.array([index[id(b)] for b in hyp.bernoullis], dtype=np.int64)
        n = len(idx)
        C = build_cost_matrix(tracks.log_rho_z[idx].T.reshape(m, n), tracks.log_miss[idx], log_rho_p)
        k = max(1, math.ceil(params.k_total * math.exp(hyp.log_weight)))
        base = hyp.log_weight + float(log_miss_all[idx].sum())
        for cols, cost in _k_best_decomposed(C, n, k, gap):
            measurement_of = {c: i for i, c in enumerate(cols) if c < n}
            bers = [
                tracks.detected(int(i), measurement_of[t]) if t in measurement_of else tracks.missed(int(i))
                for t, i in enumerate(idx)
            ]
            bers.extend(new_bernoullis[i] for i, c in enumerate(cols) if c >= n and new_bernoullis[i] is not None)
            children.append((base - cost, bers))
    if not children:
        raise NumericalError("no global hypothesis can explain the measurement scan")

    ppp = update_undetected(state.ppp, jms)
    if params.reduce_components:
        ppp = ppp.reduced(params.gm_prune, params.gm_merge, params.gm_cap, renormalize=False)
    return PmbmState(ppp, _reduce_hypotheses(children, params), state.step)


def predict_step(
    state: PmbmState,
    jms: JmsConfig,
    birth: ModelConditionedDensity,
    params: FilterParams = FilterParams(),
) -> PmbmState:
    ppp = predict_ppp(state.ppp, jms, birth)
    if params.reduce_components:
        ppp = ppp.reduced(params.gm_prune, params.gm_merge, params.gm_cap, renormalize=False)
    unique = state.unique_bernoullis()
    predicted = dict(zip((id(b) for b in unique), _predict_bernoullis(unique, jms, params)))
    hyps = tuple(
        GlobalHypothesis(h.log_weight, tuple(predicted[id(b)] for b in h.bernoullis))
        for h in state.hypotheses
    )
    return PmbmState(ppp, hyps, state.step + 1)


@dataclass(frozen=True, eq=False)
class Estimate:
    mean: np.ndarray
    model_probs: np.ndarray
    r: float


def extract_estimates(state: PmbmState, r_threshold: float = 0.5) -> list[Estimate]:
    """Targets of the most likely global hypothesis with ``r > r_threshold``."""
    best = state.best_hypothesis()
    out = []
    for b in best.bernoullis:
        if b.r > r_threshold:
            probs = b.density.model_weights()
            total = probs.sum()
            out.append(Estimate(b.density.mean(), probs / total if total > 0 else probs, b.r))
    return out


@dataclass
class MMPMBMFilter:
    """Convenience wrapper binding models, birth intensity and parameters."""

    jms: JmsConfig
    meas: MeasurementModel
    birth: ModelConditionedDensity
    params: FilterParams = FilterParams()

    def initial_state(self) -> PmbmState:
        return PmbmState.initial(self.jms.num_models, self.birth.dim)

    def predict(self, state: PmbmState) -> PmbmState:
        return predict_step(state, self.jms, self.birth, self.params)

    def update(self, state: PmbmState, measurements) -> PmbmState:
        return update_step(state, measurements, self.meas, self.jms, self.params)

    def estimate(self, state: PmbmState) -> list[Estimate]:
        return extract_estimates(state, self.params.r_threshold)

    def run(self, scans):
        """Yield ``(posterior, estimates)`` for each measurement scan."""
        state = self.initial_state()
        for Z in scans:
            state = self.update(self.predict(state), Z)
            yield state, self.estimate(state)
