"""Gaussian and Gaussian-mixture primitives.

Mixtures are stored as stacked arrays (weights ``(n,)``, means ``(n, d)``,
covariances ``(n, d, d)``) so that prediction and update run vectorised over
components. :class:`GaussianComponent` is the per-component view used at API
boundaries and in tests.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalError

try:
    import numba
except ImportError:  # pragma: no cover - the pure numpy path is used instead
    numba = None

LOG_2PI = np.log(2.0 * np.pi)
MAX_CONDITION = 1e12

DEFAULT_PRUNE = 1e-5
DEFAULT_MERGE = 4.0
DEFAULT_CAP = 100


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "weight", float(self.weight))
        if self.weight < 0:
            raise ConfigurationError(f"negative component weight {self.weight}")
        if cov.shape != (mean.size, mean.size):
            raise ConfigurationError(
                f"covariance shape {cov.shape} does not match mean length {mean.size}"
            )
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-9):
            raise ConfigurationError("covariance is not symmetric")
        tol = 1e-9 * max(np.trace(cov), 1.0)
        if np.linalg.eigvalsh(cov).min() < -tol:
            raise ConfigurationError("covariance is not positive semi-definite")

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        m = np.asarray(self.means, dtype=float)
        P = np.asarray(self.covs, dtype=float)
        if m.ndim != 2 or P.ndim != 3 or len(w) != len(m) or len(m) != len(P):
            raise ConfigurationError(
                f"inconsistent mixture shapes {w.shape}, {m.shape}, {P.shape}"
            )
        if P.shape[1:] != (m.shape[1], m.shape[1]):
            raise ConfigurationError("covariance shape does not match mean length")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covs", P)

    @classmethod
    def empty(cls, dim: int) -> "GaussianMixture":
        return cls(np.zeros(0), np.zeros((0, dim)), np.zeros((0, dim, dim)))

    @classmethod
    def from_components(cls, components, dim: int | None = None) -> "GaussianMixture":
        components = list(components)
        if not components:
            if dim is None:
                raise ConfigurationError("dimension required for an empty mixture")
            return cls.empty(dim)
        dims = {c.dim for c in components}
        if len(dims) != 1:
            raise ConfigurationError(f"components disagree on dimension: {sorted(dims)}")
        return cls(
            np.array([c.weight for c in components]),
            np.stack([c.mean for c in components]),
            np.stack([c.cov for c in components]),
        )

    @classmethod
    def concat(cls, mixtures, dim: int) -> "GaussianMixture":
        mixtures = [g for g in mixtures if len(g)]
        if not mixtures:
            return cls.empty(dim)
        if len(mixtures) == 1:
            return mixtures[0]
        return cls(
            np.concatenate([g.weights for g in mixtures]),
            np.concatenate([g.means for g in mixtures]),
            np.concatenate([g.covs for g in mixtures]),
        )

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    @property
    def components(self) -> list[GaussianComponent]:
        return [
            GaussianComponent(w, m, P)
            for w, m, P in zip(self.weights, self.means, self.covs)
        ]

    def with_weights(self, weights) -> "GaussianMixture":
        return GaussianMixture(weights, self.means, self.covs)

    def scaled(self, factor: float) -> "GaussianMixture":
        return GaussianMixture(self.weights * factor, self.means, self.covs)

    def is_normalized(self, tol: float = 1e-9) -> bool:
        return abs(self.total_weight - 1.0) <= tol


def _check_square(name, a, d):
    if a.shape != (d, d):
        raise ConfigurationError(f"{name} has shape {a.shape}, expected {(d, d)}")


def propagate_gaussian(F, Q, g: GaussianComponent) -> GaussianComponent:
    """Push one component through ``x' = F x + v``, ``v ~ N(0, Q)``."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    _check_square("F", F, g.dim)
    _check_square("Q", Q, g.dim)
    return GaussianComponent(g.weight, F @ g.mean, symmetrize(Q + F @ g.cov @ F.T))


def propagate_mixture(F, Q, gm: GaussianMixture, weight_factor: float = 1.0) -> GaussianMixture:
    """Vectorised :func:`propagate_gaussian` over every component of ``gm``."""
    F = np.asarray(F, dtype=float)
    _check_square("F", F, gm.dim)
    _check_square("Q", np.asarray(Q), gm.dim)
    means = gm.means @ F.T
    covs = symmetrize(Q + F @ gm.covs @ F.T)
    return GaussianMixture(gm.weights * weight_factor, means, covs)


@dataclass(frozen=True, eq=False)
class Innovation:
    """Per-component innovation terms of a linear-Gaussian measurement update."""

    predicted: np.ndarray  # (n, p) H m
    S_inv: np.ndarray  # (n, p, p)
    log_norm: np.ndarray  # (n,) -0.5 (p log 2pi + log det S)
    gain: np.ndarray  # (n, d, p)
    post_covs: np.ndarray  # (n, d, d)
    prior_means: np.ndarray

    def mahalanobis(self, Z: np.ndarray) -> np.ndarray:
        """Squared innovation distances, shape ``(n, m)``."""
        nu = Z[None, :, :] - self.predicted[:, None, :]
        return np.einsum("nmi,nij,nmj->nm", nu, self.S_inv, nu)

    def log_likelihood(self, Z: np.ndarray, maha: np.ndarray | None = None) -> np.ndarray:
        if maha is None:
            maha = self.mahalanobis(Z)
        return self.log_norm[:, None] - 0.5 * maha

    def posterior_means(self, z: np.ndarray) -> np.ndarray:
        nu = z[None, :] - self.predicted
        return self.prior_means + np.einsum("nij,nj->ni", self.gain, nu)


def innovation(H, R, gm: GaussianMixture) -> Innovation:
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    p, d = H.shape
    if d != gm.dim:
        raise ConfigurationError(f"H has {d} columns, state dimension is {gm.dim}")
    _check_square("R", R, p)
    PHt = gm.covs @ H.T
    S = symmetrize(H @ PHt + R)
    cond = np.linalg.cond(S) if len(gm) else np.zeros(0)
    bad = ~np.isfinite(cond) | (cond >= MAX_CONDITION)
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        comp = GaussianComponent(gm.weights[idx], gm.means[idx], gm.covs[idx])
        raise NumericalError(f"singular innovation covariance (component {idx})", comp)
    S_inv = symmetrize(np.linalg.inv(S))
    _, logdet = np.linalg.slogdet(S)
    gain = PHt @ S_inv
    eye = np.eye(d)
    post = symmetrize((eye - gain @ H) @ gm.covs)
    return Innovation(
        predicted=gm.means @ H.T,
        S_inv=S_inv,
        log_norm=-0.5 * (p * LOG_2PI + logdet),
        gain=gain,
        post_covs=post,
        prior_means=gm.means,
    )


def bayes_update_gaussian(H, R, z, g: GaussianComponent) -> tuple[float, GaussianComponent]:
    """Condition one component on measurement ``z``.

    Returns the predictive likelihood ``N(z; H m, H P H' + R)`` and the
    posterior component; the posterior keeps the input weight.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    gm = GaussianMixture(np.array([g.weight]), g.mean[None], g.cov[None])
    inn = innovation(H, R, gm)
    if z.shape != inn.predicted.shape[1:]:
        raise ConfigurationError(f"measurement shape {z.shape} does not match H")
    loglik = inn.log_likelihood(z[None])[0, 0]
    mean = inn.posterior_means(z)[0]
    return float(np.exp(loglik)), GaussianComponent(g.weight, mean, inn.post_covs[0])


def moment_match(weights, means, covs) -> tuple[float, np.ndarray, np.ndarray]:
    """Single Gaussian with the same total weight, mean and covariance."""
    w = float(np.sum(weights))
    if w <= 0:
        alpha = np.full(len(weights), 1.0 / len(weights))
    else:
        alpha = np.asarray(weights) / w
    mean = alpha @ means
    diff = means - mean
    cov = np.einsum("n,nij->ij", alpha, covs) + np.einsum("n,ni,nj->ij", alpha, diff, diff)
    return w, mean, symmetrize(cov)


def _inverse(P):
    try:
        return np.linalg.inv(P)
    except np.linalg.LinAlgError:
        return np.linalg.pinv(P)


def _check_reduction_args(prune_threshold, merge_threshold, max_components):
    if prune_threshold < 0 or merge_threshold < 0 or max_components < 1:
        raise ConfigurationError("reduction thresholds must be >= 0 and cap >= 1")


def reduce_mixture_reference(gm, prune_threshold=DEFAULT_PRUNE, merge_threshold=DEFAULT_MERGE,
                             max_components=DEFAULT_CAP):
    """Plain numpy version of :func:`reduce_mixture`; slow but easy to audit."""
    _check_reduction_args(prune_threshold, merge_threshold, max_components)
    if len(gm) <= 1:
        return gm
    total = gm.total_weight
    keep = gm.weights >= prune_threshold
    if not keep.any():
        return GaussianMixture.empty(gm.dim)
    w, m, P = gm.weights[keep], gm.means[keep], gm.covs[keep]

    order = np.argsort(-w, kind="stable")
    w, m, P = w[order], m[order], P[order]
    alive = np.ones(len(w), dtype=bool)
    out_w, out_m, out_P = [], [], []
    for j in range(len(w)):
        if not alive[j]:
            continue
        group = np.zeros(len(w), dtype=bool)
        group[j] = True
        if merge_threshold > 0:
            rest = np.flatnonzero(alive)
            diff = m[rest] - m[j]
            d2 = np.einsum("ni,ij,nj->n", diff, _inverse(P[j]), diff)
            group[rest[d2 < merge_threshold]] = True
        alive[group] = False
        if group.sum() == 1:
            out_w.append(w[j])
            out_m.append(m[j])
            out_P.append(P[j])
        else:
            wj, mj, Pj = moment_match(w[group], m[group], P[group])
            out_w.append(wj)
            out_m.append(mj)
            out_P.append(Pj)

    out_w = np.array(out_w)
    if len(out_w) > max_components:
        top = np.argsort(-out_w, kind="stable")[:max_components]
        top.sort()
        out_w = out_w[top]
        out_m = [out_m[i] for i in top]
        out_P = [out_P[i] for i in top]
    kept = out_w.sum()
    if kept > 0 and kept != total:
        out_w = out_w * (total / kept)
    return GaussianMixture(out_w, np.stack(out_m), np.stack(out_P))


def _reduce_segments_kernel(w, mu, P, counts, prune, merge, cap):
    N, d = mu.shape
    out_w = np.empty(N)
    out_mu = np.empty((N, d))
    out_P = np.empty((N, d, d))
    out_counts = np.zeros(len(counts), dtype=np.int64)
    pos = 0
    a = 0
    for s in range(len(counts)):
        n = counts[s]
        if n == 0:
            continue
        if n == 1:
            out_w[pos] = w[a]
            out_mu[pos] = mu[a]
            out_P[pos] = P[a]
            out_counts[s] = 1
            pos += 1
            a += n
            continue
        total = 0.0
        nk = 0
        for i in range(a, a + n):
            total += w[i]
            if w[i] >= prune:
                nk += 1
        if nk == 0:
            a += n
            continue
        idx = np.empty(nk, dtype=np.int64)
        c = 0
        for i in range(a, a + n):
            if w[i] >= prune:
                idx[c] = i
                c += 1
        idx = idx[np.argsort(-w[idx], kind="mergesort")]
        alive = np.ones(nk, dtype=np.bool_)
        seg = pos
        for jj in range(nk):
            if not alive[jj]:
                continue
            j = idx[jj]
            member = np.zeros(nk, dtype=np.bool_)
            member[jj] = True
            if merge > 0:
                try:
                    Pinv = np.linalg.inv(P[j])
                except Exception:
                    Pinv = np.linalg.pinv(P[j])
                for ii in range(jj, nk):
                    if alive[ii]:
                        k = idx[ii]
                        q = 0.0
                        for r in range(d):
                            t = 0.0
                            for c in range(d):
                                t += Pinv[r, c] * (mu[k, c] - mu[j, c])
                            q += (mu[k, r] - mu[j, r]) * t
                        if q < merge:
                            member[ii] = True
            size = 0
            wsum = 0.0
            for ii in range(nk):
                if member[ii]:
                    alive[ii] = False
                    size += 1
                    wsum += w[idx[ii]]
            if size == 1:
                out_w[pos] = w[j]
                out_mu[pos] = mu[j]
                out_P[pos] = P[j]
            else:
                mean = np.zeros(d)
                for ii in range(nk):
                    if member[ii]:
                        alpha = w[idx[ii]] / wsum if wsum > 0 else 1.0 / size
                        mean += alpha * mu[idx[ii]]
                cov = np.zeros((d, d))
                for ii in range(nk):
                    if member[ii]:
                        alpha = w[idx[ii]] / wsum if wsum > 0 else 1.0 / size
                        diff = mu[idx[ii]] - mean
                        cov += alpha * (P[idx[ii]] + np.outer(diff, diff))
                out_w[pos] = wsum
                out_mu[pos] = mean
                out_P[pos] = 0.5 * (cov + cov.T)
            pos += 1
        made = pos - seg
        if made > cap:
            top = np.sort(np.argsort(-out_w[seg:pos], kind="mergesort")[:cap])
            tw = out_w[seg:pos][top].copy()
            tm = out_mu[seg:pos][top].copy()
            tP = out_P[seg:pos][top].copy()
            out_w[seg:seg + cap] = tw
            out_mu[seg:seg + cap] = tm
            out_P[seg:seg + cap] = tP
            pos = seg + cap
            made = cap
        kept = 0.0
        for i in range(seg, pos):
            kept += out_w[i]
        if kept > 0 and kept != total:
            for i in range(seg, pos):
                out_w[i] *= total / kept
        out_counts[s] = made
        a += n
    return out_w[:pos], out_mu[:pos], out_P[:pos], out_counts


if numba is not None:
    _reduce_segments_kernel = numba.njit(cache=True)(_reduce_segments_kernel)


def reduce_segments(weights, means, covs, counts, prune_threshold=DEFAULT_PRUNE,
                    merge_threshold=DEFAULT_MERGE, max_components=DEFAULT_CAP):
    """Reduce many mixtures stored back to back in one call.

    ``counts[s]`` is the number of components of segment ``s``. Returns the
    reduced arrays and the new per-segment counts.
    """
    _check_reduction_args(prune_threshold, merge_threshold, max_components)
    counts = np.asarray(counts, dtype=np.int64)
    weights = np.ascontiguousarray(weights, dtype=float)
    means = np.ascontiguousarray(means, dtype=float)
    covs = np.ascontiguousarray(covs, dtype=float)
    if numba is not None and len(weights):
        return _reduce_segments_kernel(
            weights, means, covs, counts, float(prune_threshold),
            float(merge_threshold), int(max_components),
        )
    out, new_counts, a = [], np.zeros(len(counts), dtype=np.int64), 0
    for s, n in enumerate(counts):
        g = reduce_mixture_reference(
            GaussianMixture(weights[a:a + n], means[a:a + n], covs[a:a + n]),
            prune_threshold, merge_threshold, max_components,
        )
        out.append(g)
        new_counts[s] = len(g)
        a += n
    d = means.shape[1]
    g = GaussianMixture.concat(out, d)
    return g.weights, g.means, g.covs, new_counts


def reduce_mixture(
    gm: GaussianMixture,
    prune_threshold: float = DEFAULT_PRUNE,
    merge_threshold: float = DEFAULT_MERGE,
    max_components: int = DEFAULT_CAP,
) -> GaussianMixture:
    """Prune, merge and cap a mixture, keeping its total weight.

    Components lighter than ``prune_threshold`` are dropped. The heaviest
    remaining component absorbs every component whose squared Mahalanobis
    distance (under the heavy component's covariance) is below
    ``merge_threshold``; this repeats until none remain. The heaviest
    ``max_components`` survive and are rescaled to the original total. If
    every component is pruned the result is empty.
    """
    _check_reduction_args(prune_threshold, merge_threshold, max_components)
    if len(gm) <= 1:
        return gm
    w, m, P, _ = reduce_segments(gm.weights, gm.means, gm.covs, [len(gm)],
                                 prune_threshold, merge_threshold, max_components)
    return GaussianMixture(w, m, P)
