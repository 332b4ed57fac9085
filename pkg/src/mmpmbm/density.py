"""Value types of the multiple-model PMBM posterior and their JSON snapshots."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .gaussian import GaussianMixture, reduce_segments


@dataclass(frozen=True, eq=False)
class ModelConditionedDensity:
    """One Gaussian mixture per motion model.

    For a Bernoulli density the weights over all models sum to one and the
    per-model totals are the model probabilities. For a Poisson intensity the
    weights are intensity mass and carry no normalisation.
    """

    per_model: tuple

    def __post_init__(self):
        per_model = tuple(self.per_model)
        if not per_model:
            raise ConfigurationError("at least one model mixture is required")
        if len({g.dim for g in per_model}) != 1:
            raise ConfigurationError("model mixtures disagree on state dimension")
        object.__setattr__(self, "per_model", per_model)

    @classmethod
    def empty(cls, num_models: int, dim: int) -> "ModelConditionedDensity":
        return cls(tuple(GaussianMixture.empty(dim) for _ in range(num_models)))

    @property
    def num_models(self) -> int:
        return len(self.per_model)

    @property
    def dim(self) -> int:
        return self.per_model[0].dim

    @property
    def num_components(self) -> int:
        return sum(len(g) for g in self.per_model)

    def model_weights(self) -> np.ndarray:
        return np.array([g.total_weight for g in self.per_model])

    @property
    def total_weight(self) -> float:
        return float(self.model_weights().sum())

    def scaled_per_model(self, factors) -> "ModelConditionedDensity":
        return ModelConditionedDensity(
            tuple(g.scaled(f) for g, f in zip(self.per_model, factors))
        )

    def normalized(self) -> "ModelConditionedDensity":
        total = self.total_weight
        if total <= 0:
            return self
        return ModelConditionedDensity(tuple(g.scaled(1.0 / total) for g in self.per_model))

    def is_normalized(self, tol: float = 1e-9) -> bool:
        return abs(self.total_weight - 1.0) <= tol

    def mean(self) -> np.ndarray:
        """Model-marginalised mean (weights renormalised if needed)."""
        num = sum((g.weights @ g.means for g in self.per_model if len(g)), np.zeros(self.dim))
        total = self.total_weight
        return num / total if total > 0 else num

    def union(self, other: "ModelConditionedDensity") -> "ModelConditionedDensity":
        return ModelConditionedDensity(
            tuple(
                GaussianMixture.concat([a, b], self.dim)
                for a, b in zip(self.per_model, other.per_model)
            )
        )

    def reduced(self, prune: float, merge: float, cap: int, renormalize: bool) -> "ModelConditionedDensity":
        return reduce_densities([self], prune, merge, cap, renormalize)[0]


# Many densities can be packed into flat arrays ordered by density, then by
# model. counts[i, model] is the number of components of that mixture.

def flatten_densities(densities, num_models: int, dim: int):
    counts = np.array([[len(g) for g in d.per_model] for d in densities], dtype=np.int64)
    counts = counts.reshape(len(densities), num_models)
    mixtures = [g for d in densities for g in d.per_model if len(g)]
    if not mixtures:
        return np.zeros(0), np.zeros((0, dim)), np.zeros((0, dim, dim)), counts
    return (
        np.concatenate([g.weights for g in mixtures]),
        np.concatenate([g.means for g in mixtures]),
        np.concatenate([g.covs for g in mixtures]),
        counts,
    )


def unflatten_densities(weights, means, covs, counts) -> list:
    counts = np.asarray(counts, dtype=np.int64)
    dim = means.shape[1]
    bounds = np.concatenate([[0], np.cumsum(counts.ravel())])
    out, s = [], 0
    for row in counts:
        mixtures = []
        for n in row:
            a, b = bounds[s], bounds[s + 1]
            s += 1
            mixtures.append(
                GaussianMixture(weights[a:b], means[a:b], covs[a:b]) if n else GaussianMixture.empty(dim)
            )
        out.append(ModelConditionedDensity(tuple(mixtures)))
    return out


def owner_totals(weights, counts) -> np.ndarray:
    """Total weight of each packed density."""
    owner = np.repeat(np.arange(len(counts)), np.asarray(counts).sum(axis=1))
    return np.bincount(owner, weights=weights, minlength=len(counts))


def reduce_densities(densities, prune: float, merge: float, cap: int, renormalize: bool) -> list:
    """Reduce every model mixture of every density in one batched pass."""
    densities = list(densities)
    if not densities:
        return []
    M, dim = densities[0].num_models, densities[0].dim
    w, m, P, counts = flatten_densities(densities, M, dim)
    w, m, P, new_counts = reduce_segments(w, m, P, counts.ravel(), prune, merge, cap)
    new_counts = new_counts.reshape(counts.shape)
    if renormalize and len(w):
        totals = owner_totals(w, new_counts)
        scale = np.where(totals > 0, 1.0 / np.where(totals > 0, totals, 1.0), 1.0)
        w = w * np.repeat(scale, new_counts.sum(axis=1))
    return unflatten_densities(w, m, P, new_counts)


@dataclass(frozen=True, eq=False)
class BernoulliComponent:
    r: float
    density: ModelConditionedDensity
    log_weight: float = 0.0

    def __post_init__(self):
        r = float(self.r)
        if not -1e-12 <= r <= 1 + 1e-12:
            raise ConfigurationError(f"existence probability {r} outside [0, 1]")
        object.__setattr__(self, "r", min(max(r, 0.0), 1.0))


@dataclass(frozen=True, eq=False)
class GlobalHypothesis:
    log_weight: float
    bernoullis: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "bernoullis", tuple(self.bernoullis))


@dataclass(frozen=True, eq=False)
class PmbmState:
    ppp: ModelConditionedDensity
    hypotheses: tuple
    step: int = 0

    def __post_init__(self):
        hyps = tuple(self.hypotheses)
        if not hyps:
            raise ConfigurationError("a PMBM state needs at least one global hypothesis")
        M = self.ppp.num_models
        for h in hyps:
            for b in h.bernoullis:
                if b.density.num_models != M:
                    raise ConfigurationError("Bernoulli density does not match the model set")
        object.__setattr__(self, "hypotheses", hyps)

    @classmethod
    def initial(cls, num_models: int, dim: int) -> "PmbmState":
        return cls(ModelConditionedDensity.empty(num_models, dim), (GlobalHypothesis(0.0),), 0)

    def hypothesis_weights(self) -> np.ndarray:
        return np.exp([h.log_weight for h in self.hypotheses])

    def best_hypothesis(self) -> GlobalHypothesis:
        return max(self.hypotheses, key=lambda h: h.log_weight)

    def unique_bernoullis(self) -> list:
        seen = {}
        for h in self.hypotheses:
            for b in h.bernoullis:
                seen.setdefault(id(b), b)
        return list(seen.values())


def birth_intensity(means, cov, weight: float, model_dist) -> ModelConditionedDensity:
    """Poisson birth intensity: each mean carries ``weight * f_b(model)`` per model."""
    means = np.atleast_2d(np.asarray(means, dtype=float))
    cov = np.asarray(cov, dtype=float)
    covs = np.broadcast_to(cov, (len(means),) + cov.shape).copy()
    return ModelConditionedDensity(
        tuple(
            GaussianMixture(np.full(len(means), weight * f), means.copy(), covs.copy())
            for f in np.asarray(model_dist, dtype=float)
        )
    )


# JSON snapshot shape:
# {"step": k,
#  "ppp": [[{"w": .., "m": [..], "P": [[..]]}, ...] per model],
#  "hypotheses": [{"log_weight": .., "bernoullis":
#       [{"r": .., "log_weight": .., "density": <same shape as "ppp">}]}]}
# Bernoullis shared by several hypotheses are written once per hypothesis.

def _density_to_list(d: ModelConditionedDensity) -> list:
    return [
        [{"w": float(w), "m": m.tolist(), "P": P.tolist()} for w, m, P in zip(g.weights, g.means, g.covs)]
        for g in d.per_model
    ]


def _density_from_list(data: list, dim: int) -> ModelConditionedDensity:
    mixtures = []
    for comps in data:
        if comps:
            mixtures.append(GaussianMixture(
                np.array([c["w"] for c in comps]),
                np.array([c["m"] for c in comps]),
                np.array([c["P"] for c in comps]),
            ))
        else:
            mixtures.append(GaussianMixture.empty(dim))
    return ModelConditionedDensity(tuple(mixtures))


def state_to_dict(state: PmbmState) -> dict:
    return {
        "step": state.step,
        "dim": state.ppp.dim,
        "ppp": _density_to_list(state.ppp),
        "hypotheses": [
            {
                "log_weight": float(h.log_weight),
                "bernoullis": [
                    {"r": b.r, "log_weight": float(b.log_weight), "density": _density_to_list(b.density)}
                    for b in h.bernoullis
                ],
            }
            for h in state.hypotheses
        ],
    }


def state_from_dict(data: dict) -> PmbmState:
    dim = int(data["dim"])
    hyps = [
        GlobalHypothesis(
            h["log_weight"],
            tuple(
                BernoulliComponent(b["r"], _density_from_list(b["density"], dim), b["log_weight"])
                for b in h["bernoullis"]
            ),
        )
        for h in data["hypotheses"]
    ]
    return PmbmState(_density_from_list(data["ppp"], dim), tuple(hyps), int(data["step"]))


def dump_state(state: PmbmState, path) -> None:
    with open(path, "w") as fh:
        json.dump(state_to_dict(state), fh, indent=1)


def load_state(path) -> PmbmState:
    with open(path) as fh:
        return state_from_dict(json.load(fh))
