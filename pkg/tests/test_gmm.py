import numpy as np
import pytest
from scipy.stats import multivariate_normal

from cipherpipe.gmm import (EmMonotonicityError, check_monotone, GmmModel,
                            Transcription, gaussian_log_density, gmm_fit,
                            gmm_assign, model_selection, FIXED_COV_OPTIONS,
                            VARIANCE_FLOOR)


def two_clouds(rng, n=60, sep=10.0, d=3):
    a = rng.normal(size=(n, d)) * 0.3
    b = rng.normal(size=(n, d)) * 0.3 + sep
    return np.vstack([a, b])


class TestCheckMonotone:
    def test_increase_passes(self):
        check_monotone(-10.0, -9.0, "t")

    def test_tiny_decrease_within_tolerance_passes(self):
        check_monotone(-100.0, -100.0 - 1e-10, "t")

    def test_real_decrease_raises(self):
        with pytest.raises(EmMonotonicityError):
            check_monotone(-10.0, -10.1, "t")

    def test_first_iteration_passes(self):
        check_monotone(None, -1e9, "t")

    def test_is_an_assertion_error(self):
        assert issubclass(EmMonotonicityError, AssertionError)


class TestGaussianLogDensity:
    def test_diag_matches_scipy(self, rng):
        X = rng.normal(size=(10, 4))
        means = rng.normal(size=(3, 4))
        var = rng.uniform(0.5, 2.0, size=(3, 4))
        got = gaussian_log_density(X, means, "diag", var)
        for k in range(3):
            expect = multivariate_normal(means[k], np.diag(var[k])).logpdf(X)
            assert np.allclose(got[:, k], expect)

    def test_spherical_matches_scipy(self, rng):
        X = rng.normal(size=(8, 3))
        means = rng.normal(size=(2, 3))
        var = np.array([0.7, 1.3])
        got = gaussian_log_density(X, means, "spherical", var)
        for k in range(2):
            expect = multivariate_normal(means[k], var[k] * np.eye(3)).logpdf(X)
            assert np.allclose(got[:, k], expect)

    def test_fixed_uses_scalar_variance(self, rng):
        X = rng.normal(size=(5, 2))
        means = rng.normal(size=(2, 2))
        got = gaussian_log_density(X, means, "fixed", 0.1)
        expect = gaussian_log_density(X, means, "spherical", np.array([0.1, 0.1]))
        assert np.allclose(got, expect)


class TestGmmFit:
    def test_separated_clouds_cluster_perfectly(self, rng):
        X = two_clouds(rng)
        model = gmm_fit(X, K=2, cov_mode="diag", seed=0, restarts=4)
        ids = np.asarray(gmm_assign(model, X).ids)
        first, second = ids[:60], ids[60:]
        assert len(set(first.tolist())) == 1 and len(set(second.tolist())) == 1
        assert first[0] != second[0]

    def test_loglik_matches_direct_evaluation(self, rng):
        X = two_clouds(rng, n=25)
        model = gmm_fit(X, K=2, cov_mode="spherical", seed=1, restarts=2)
        joint = model.log_density(X) + np.log(model.weights)[None]
        direct = float(np.log(np.exp(joint - joint.max(axis=1, keepdims=True)).sum(axis=1)).sum()
                       + joint.max(axis=1).sum())
        assert model.loglik == pytest.approx(direct, rel=1e-6)

    def test_deterministic_for_fixed_seed(self, rng):
        X = two_clouds(rng, n=20)
        a = gmm_fit(X, K=2, seed=42, restarts=3)
        b = gmm_fit(X, K=2, seed=42, restarts=3)
        assert np.array_equal(a.means, b.means) and a.loglik == b.loglik

    def test_more_points_than_K_required(self, rng):
        with pytest.raises(ValueError):
            gmm_fit(rng.normal(size=(3, 2)), K=4)

    def test_identical_points_warn_but_fit(self):
        X = np.ones((10, 2))
        with pytest.warns(UserWarning):
            model = gmm_fit(X, K=2, restarts=1, seed=0)
        assert np.all(np.asarray(model.covariances) >= VARIANCE_FLOOR)

    def test_fixed_covariance_never_reestimated(self, rng):
        X = two_clouds(rng, n=15)
        model = gmm_fit(X, K=2, cov_mode="fixed", fixed_var=0.5, seed=0, restarts=2)
        assert float(np.asarray(model.covariances)) == 0.5

    def test_zero_variance_dimension_hits_floor(self, rng):
        X = rng.normal(size=(20, 3))
        X[:, 2] = 7.0  # constant dimension
        model = gmm_fit(X, K=2, cov_mode="diag", seed=3, restarts=2)
        assert np.all(model.covariances[:, 2] >= VARIANCE_FLOOR)


class TestGmmAssign:
    def test_ties_break_to_lowest_component_index(self):
        means = np.array([[0.0, 0.0], [2.0, 0.0]])
        model = GmmModel(np.array([0.5, 0.5]), means, "fixed", np.asarray(1.0))
        tr = gmm_assign(model, np.array([[1.0, 0.0]]))  # equidistant
        assert tr.ids == (0,)

    def test_dimension_mismatch_rejected(self):
        model = GmmModel(np.array([1.0]), np.zeros((1, 3)), "fixed", np.asarray(1.0))
        with pytest.raises(ValueError):
            gmm_assign(model, np.zeros((2, 2)))


class TestModelSelection:
    def test_picks_best_loglik_among_options(self, rng, caplog):
        X = two_clouds(rng, n=30)
        import logging
        with caplog.at_level(logging.INFO, logger="cipherpipe.gmm"):
            best = model_selection(X, K=2, seed=0, restarts=2)
        logged = [r for r in caplog.records if "model_selection" in r.message]
        assert len(logged) == 2 + len(FIXED_COV_OPTIONS)
        candidates = [gmm_fit(X, K=2, cov_mode="diag", seed=0, restarts=2),
                      gmm_fit(X, K=2, cov_mode="spherical", seed=0, restarts=2)]
        candidates += [gmm_fit(X, K=2, cov_mode="fixed", fixed_var=v, seed=0, restarts=2)
                       for v in FIXED_COV_OPTIONS]
        assert best.loglik == pytest.approx(max(c.loglik for c in candidates))


class TestSerialization:
    def test_model_roundtrip(self, rng, tmp_path):
        model = gmm_fit(two_clouds(rng, n=15), K=2, cov_mode="diag", seed=0, restarts=1)
        path = tmp_path / "gmm.json"
        model.to_json(path)
        loaded = GmmModel.from_json(path)
        assert np.allclose(loaded.means, model.means)
        assert np.allclose(loaded.weights, model.weights)
        assert loaded.cov_mode == model.cov_mode
        assert loaded.loglik == pytest.approx(model.loglik)

    def test_transcription_roundtrip(self, tmp_path):
        tr = Transcription((0, 2, 1, 1), 3)
        path = tmp_path / "tr.json"
        tr.to_json(path)
        assert Transcription.from_json(path) == tr

    def test_transcription_validates_range(self):
        with pytest.raises(ValueError):
            Transcription((0, 3), 3)

    def test_model_weights_must_normalize(self):
        with pytest.raises(ValueError):
            GmmModel(np.array([0.5, 0.2]), np.zeros((2, 2)), "diag", np.ones((2, 2)))
