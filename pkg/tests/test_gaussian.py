import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_mixture, random_spd
from oracles import grid_likelihood_1d, grid_likelihood_2d, grid_prediction_1d, kalman_update
from mmpmbm.errors import ConfigurationError, NumericalError
from mmpmbm.gaussian import (
    GaussianComponent,
    GaussianMixture,
    bayes_update_gaussian,
    moment_match,
    propagate_gaussian,
    propagate_mixture,
    reduce_mixture,
    reduce_mixture_reference,
    reduce_segments,
)
from mmpmbm.models import cv_model


class TestComponent:
    def test_rejects_negative_weight(self):
        with pytest.raises(ConfigurationError):
            GaussianComponent(-0.1, [0.0], [[1.0]])

    def test_rejects_asymmetric_cov(self):
        with pytest.raises(ConfigurationError, match="symmetric"):
            GaussianComponent(1.0, [0, 0], [[1.0, 0.1], [0.0, 1.0]])

    def test_rejects_indefinite_cov(self):
        with pytest.raises(ConfigurationError, match="semi-definite"):
            GaussianComponent(1.0, [0, 0], [[1.0, 0.0], [0.0, -1.0]])

    def test_tolerates_tiny_negative_eigenvalue(self):
        GaussianComponent(1.0, [0, 0], [[1.0, 0.0], [0.0, -1e-12]])

    def test_mixture_shape_check(self):
        with pytest.raises(ConfigurationError):
            GaussianMixture(np.ones(2), np.zeros((3, 2)), np.zeros((3, 2, 2)))

    def test_mixture_dimension_disagreement(self):
        comps = [GaussianComponent(1, [0], [[1]]), GaussianComponent(1, [0, 0], np.eye(2))]
        with pytest.raises(ConfigurationError, match="dimension"):
            GaussianMixture.from_components(comps)


class TestPropagate:
    def test_identity(self):
        g = propagate_gaussian(np.eye(2), np.zeros((2, 2)), GaussianComponent(1, [1, 2], np.eye(2)))
        assert g.weight == 1 and np.array_equal(g.mean, [1, 2]) and np.array_equal(g.cov, np.eye(2))

    def test_scalar(self):
        g = propagate_gaussian([[2.0]], [[0.0]], GaussianComponent(1, [1], [[1]]))
        assert g.mean[0] == 2 and g.cov[0, 0] == 4

    def test_unit_velocity(self):
        F = cv_model(1.0, 0.0).F
        g = propagate_gaussian(F, np.zeros((4, 4)), GaussianComponent(1, [0, 1, 0, 0], np.zeros((4, 4))))
        assert np.array_equal(g.mean, [1, 1, 0, 0])

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigurationError):
            propagate_gaussian(np.eye(3), np.zeros((3, 3)), GaussianComponent(1, [0, 0], np.eye(2)))

    def test_mixture_matches_single(self, rng):
        gm = random_mixture(rng, 5)
        F, Q = rng.normal(size=(4, 4)), random_spd(rng, 4)
        out = propagate_mixture(F, Q, gm, 0.5)
        for g, c in zip(out.components, gm.components):
            ref = propagate_gaussian(F, Q, c)
            assert g.weight == pytest.approx(0.5 * c.weight)
            assert np.allclose(g.mean, ref.mean) and np.allclose(g.cov, ref.cov)

    @given(st.integers(0, 10_000))
    def test_weight_exact_and_cov_psd(self, seed):
        rng = np.random.default_rng(seed)
        g = GaussianComponent(rng.random(), rng.normal(size=3), random_spd(rng, 3))
        out = propagate_gaussian(rng.normal(size=(3, 3)), random_spd(rng, 3), g)
        assert out.weight == g.weight
        assert np.array_equal(out.cov, out.cov.T)
        assert np.linalg.eigvalsh(out.cov).min() > -1e-9

    def test_predicted_density_matches_integration(self):
        # N(x'; F m, Q + F P F') against the convolution integral
        m, P, F, Q = 0.3, 0.8, 1.4, 0.5
        g = propagate_gaussian([[F]], [[Q]], GaussianComponent(1, [m], [[P]]))
        for x_new in (-1.0, 0.0, 0.42, 2.0):
            closed = np.exp(-0.5 * (x_new - g.mean[0]) ** 2 / g.cov[0, 0]) / np.sqrt(2 * np.pi * g.cov[0, 0])
            assert closed == pytest.approx(grid_prediction_1d(x_new, m, P, F, Q), abs=1e-6)


class TestBayesUpdate:
    def test_scalar_example(self):
        q, post = bayes_update_gaussian([[1.0]], [[1.0]], [0.0], GaussianComponent(1, [0], [[1]]))
        q_int, mean_int, var_int = grid_likelihood_1d(0.0, 0.0, 1.0, 1.0, 1.0)
        # N(0; 0, 2) = 1 / sqrt(4 pi); 0.1995 would be the density at variance 4
        assert q == pytest.approx(1.0 / np.sqrt(4.0 * np.pi), abs=1e-12)
        assert q == pytest.approx(q_int, abs=1e-6)
        assert post.mean[0] == pytest.approx(0.0, abs=1e-12) and post.cov[0, 0] == pytest.approx(0.5)
        assert var_int == pytest.approx(0.5, abs=1e-6)

    def test_weight_kept(self):
        _, post = bayes_update_gaussian([[1.0]], [[1.0]], [0.3], GaussianComponent(0.25, [0], [[1]]))
        assert post.weight == 0.25

    def test_zero_prior_uncertainty(self):
        _, post = bayes_update_gaussian(np.eye(2), np.eye(2), [3.0, 4.0],
                                        GaussianComponent(1, [1.0, 2.0], 1e-12 * np.eye(2)))
        assert np.allclose(post.mean, [1.0, 2.0], atol=1e-6)

    def test_uninformative_measurement(self):
        g = GaussianComponent(1, [1.0, 2.0], np.diag([4.0, 9.0]))
        _, post = bayes_update_gaussian(np.eye(2), 1e12 * np.eye(2), [100.0, -50.0], g)
        assert np.allclose(post.mean, g.mean, rtol=1e-4, atol=1e-6)
        assert np.allclose(post.cov, g.cov, rtol=1e-4)

    def test_singular_innovation(self):
        g = GaussianComponent(1, [0.0, 0.0], np.zeros((2, 2)))
        with pytest.raises(NumericalError) as info:
            bayes_update_gaussian(np.eye(2), np.zeros((2, 2)), [0.0, 0.0], g)
        assert info.value.component is not None
        assert np.array_equal(info.value.component.mean, g.mean)

    def test_matches_kalman_oracle(self, rng):
        for _ in range(20):
            m, P = rng.normal(size=4), random_spd(rng, 4)
            H = rng.normal(size=(2, 4))
            R, z = random_spd(rng, 2), rng.normal(size=2)
            q, post = bayes_update_gaussian(H, R, z, GaussianComponent(1, m, P))
            m_ref, P_ref, q_ref = kalman_update(m, P, z, H, R)
            assert q == pytest.approx(q_ref, rel=1e-10)
            assert np.allclose(post.mean, m_ref, atol=1e-10) and np.allclose(post.cov, P_ref, atol=1e-9)

    def test_2d_matches_integration(self, rng):
        for _ in range(3):
            m, P = rng.normal(size=2), random_spd(rng, 2)
            H, R = np.eye(2), random_spd(rng, 2)
            z = m + rng.normal(size=2)
            q, post = bayes_update_gaussian(H, R, z, GaussianComponent(1, m, P))
            q_int, mean_int = grid_likelihood_2d(z, m, P, H, R)
            assert q == pytest.approx(q_int, abs=1e-6)
            assert np.allclose(post.mean, mean_int, atol=1e-5)


class TestMomentMatch:
    def test_preserves_mixture_moments(self, rng):
        gm = random_mixture(rng, 4, d=3)
        w, m, P = moment_match(gm.weights, gm.means, gm.covs)
        a = gm.weights / gm.weights.sum()
        mean = a @ gm.means
        second = sum(ai * (Pi + np.outer(mi, mi)) for ai, mi, Pi in zip(a, gm.means, gm.covs))
        assert w == pytest.approx(gm.weights.sum(), abs=1e-15)
        assert np.allclose(m, mean, rtol=0, atol=1e-12)
        assert np.allclose(P, second - np.outer(mean, mean), atol=1e-9 * np.abs(second).max())


class TestReduce:
    def test_single_component_unchanged(self):
        gm = GaussianMixture(np.array([1e-9]), np.zeros((1, 2)), np.eye(2)[None])
        assert reduce_mixture(gm, 1e-5, 4.0, 1) is gm

    def test_identical_pair_merges(self):
        gm = GaussianMixture(np.array([0.5, 0.5]), np.ones((2, 2)), np.stack([np.eye(2)] * 2))
        out = reduce_mixture(gm, 1e-5, 4.0, 100)
        assert len(out) == 1 and out.weights[0] == pytest.approx(1.0)
        assert np.allclose(out.means[0], [1, 1]) and np.allclose(out.covs[0], np.eye(2))

    def test_prune_rescales(self):
        gm = GaussianMixture(np.array([0.9, 1e-8]), np.array([[0.0, 0], [100.0, 100]]), np.stack([np.eye(2)] * 2))
        out = reduce_mixture(gm, 1e-5, 4.0, 100)
        assert len(out) == 1 and out.weights[0] == pytest.approx(0.9 + 1e-8, abs=1e-15)

    def test_everything_pruned_gives_empty(self):
        gm = GaussianMixture(np.array([1e-7, 1e-8]), np.array([[0.0, 0], [100.0, 100]]), np.stack([np.eye(2)] * 2))
        assert len(reduce_mixture(gm, 1e-5, 4.0, 100)) == 0

    def test_empty_passes_through(self):
        assert len(reduce_mixture(GaussianMixture.empty(3))) == 0

    def test_cap_keeps_heaviest(self):
        means = np.arange(5)[:, None] * np.array([[1000.0, 0.0]])
        gm = GaussianMixture(np.array([0.1, 0.3, 0.2, 0.25, 0.15]), means, np.stack([np.eye(2)] * 5))
        out = reduce_mixture(gm, 0.0, 4.0, 2)
        assert np.allclose(out.means, means[[1, 3]])
        assert out.total_weight == pytest.approx(1.0)

    def test_merge_uses_heavier_covariance(self):
        # distance^2 is 3 under the heavy component's unit covariance but only
        # 0.03 under the light one's, so the pair merges either way; swap the
        # roles to check the light covariance is not used
        means = np.array([[0.0, 0.0], [np.sqrt(5.0), 0.0]])
        covs = np.stack([np.eye(2), 100 * np.eye(2)])
        out = reduce_mixture(GaussianMixture(np.array([0.6, 0.4]), means, covs), 0.0, 4.0, 10)
        assert len(out) == 2

    def test_invalid_thresholds(self):
        with pytest.raises(ConfigurationError):
            reduce_mixture(GaussianMixture.empty(1), -1.0)
        with pytest.raises(ConfigurationError):
            reduce_mixture(GaussianMixture.empty(1), 1e-5, 4.0, 0)

    @given(st.integers(0, 100_000), st.integers(1, 30), st.integers(1, 12))
    def test_weight_preserved_and_count_not_increased(self, seed, n, cap):
        rng = np.random.default_rng(seed)
        gm = random_mixture(rng, n, d=2, spread=rng.choice([0.1, 5.0, 100.0]))
        out = reduce_mixture(gm, 1e-5, 4.0, cap)
        assert len(out) <= min(len(gm), max(cap, 1)) or len(gm) == 1
        if len(out):
            assert out.total_weight == pytest.approx(gm.total_weight, rel=1e-12)

    @given(st.integers(0, 100_000), st.integers(1, 25), st.integers(1, 8),
           st.sampled_from([0.0, 1e-5, 1e-2]), st.sampled_from([0.0, 1.0, 4.0, 50.0]))
    def test_compiled_matches_reference(self, seed, n, cap, prune, merge):
        rng = np.random.default_rng(seed)
        gm = random_mixture(rng, n, d=4, spread=rng.choice([0.5, 5.0, 50.0]))
        gm = gm.with_weights(gm.weights * rng.choice([1e-4, 1.0], size=n))
        a = reduce_mixture(gm, prune, merge, cap)
        b = reduce_mixture_reference(gm, prune, merge, cap)
        assert len(a) == len(b)
        assert np.allclose(a.weights, b.weights, rtol=1e-12, atol=0)
        assert np.allclose(a.means, b.means, rtol=1e-12, atol=1e-12)
        assert np.allclose(a.covs, b.covs, rtol=1e-10, atol=1e-10)

    def test_segments_match_one_by_one(self, rng):
        mixtures = [GaussianMixture.empty(4)] + [random_mixture(rng, n, d=4, spread=3.0) for n in (1, 5, 9, 3)]
        counts = [len(g) for g in mixtures]
        w, m, P, new_counts = reduce_segments(
            np.concatenate([g.weights for g in mixtures]), np.concatenate([g.means for g in mixtures]),
            np.concatenate([g.covs for g in mixtures]), counts, 1e-5, 4.0, 2,
        )
        start = 0
        for g, c in zip(mixtures, new_counts):
            ref = reduce_mixture(g, 1e-5, 4.0, 2)
            assert c == len(ref)
            assert np.allclose(w[start:start + c], ref.weights)
            start += c
