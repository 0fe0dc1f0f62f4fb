import numpy as np
import pytest

from lasir import (SemConfig, SimConfig, fit_sem, kmeans, kmlr_fit, nmi,
                   simulate_cube, svcm_fit)
from lasir.baselines import _kmeanspp_seed, _lloyd


class TestKmeans:
    def test_one_cluster_per_point(self):
        rng = np.random.default_rng(0)
        points = rng.standard_normal((6, 3)) * 10.0
        labels = kmeans(points, 6, seed=1)
        assert sorted(labels.tolist()) == [1, 2, 3, 4, 5, 6]

    def test_two_blobs_recovered(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((40, 2)) + [10.0, 0.0]
        b = rng.standard_normal((40, 2)) - [10.0, 0.0]
        points = np.vstack([a, b])
        truth = np.repeat([1, 2], 40)
        labels = kmeans(points, 2, seed=0)
        assert nmi(labels, truth) == 1.0

    def test_inertia_non_increasing(self):
        rng = np.random.default_rng(2)
        points = rng.standard_normal((100, 4))
        centroids = _kmeanspp_seed(points, 5, np.random.default_rng(3))
        _, trace = _lloyd(points, centroids.copy(), 100)
        assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        points = rng.standard_normal((60, 3))
        assert np.array_equal(kmeans(points, 4, seed=9), kmeans(points, 4, seed=9))

    def test_too_many_clusters(self):
        with pytest.raises(ValueError, match="exceeds"):
            kmeans(np.zeros((3, 2)), 4, seed=0)


class TestKmlr:
    def test_single_group_reduces_to_svcm(self):
        cfg = SimConfig(dims=(5, 5, 5), n=60, n_groups=1, sigma=1.0, seed=0, n_sites=3)
        dataset, truth, lattice, basis = simulate_cube(cfg)
        fit = kmlr_fit(dataset, basis, 1, SemConfig(seed=1))
        direct = svcm_fit(dataset, basis)
        assert np.array_equal(fit.params.theta_alpha, direct.theta_alpha)
        assert np.array_equal(fit.params.lam, direct.lam)

    def test_deterministic(self):
        cfg = SimConfig(dims=(5, 5, 5), n=90, n_groups=2, sigma=1.0, seed=2, n_sites=4)
        dataset, truth, lattice, basis = simulate_cube(cfg)
        f1 = kmlr_fit(dataset, basis, 2, SemConfig(seed=5))
        f2 = kmlr_fit(dataset, basis, 2, SemConfig(seed=5))
        assert np.array_equal(f1.labels, f2.labels)
        assert np.array_equal(f1.params.theta_alpha, f2.params.theta_alpha)

    def test_hard_responsibilities(self):
        cfg = SimConfig(dims=(5, 5, 5), n=90, n_groups=2, sigma=1.0, seed=2, n_sites=4)
        dataset, truth, lattice, basis = simulate_cube(cfg)
        fit = kmlr_fit(dataset, basis, 2, SemConfig(seed=5))
        assert set(np.unique(fit.responsibilities)) <= {0.0, 1.0}
        assert np.array_equal(fit.responsibilities.argmax(axis=1) + 1, fit.labels)

    def test_misses_slope_only_structure(self):
        # groups that differ only in exposure slope: outcome clustering fails
        # where the likelihood-based fit does markedly better
        cfg = SimConfig(dims=(7, 7, 7), n=250, n_groups=3, sigma=1.0, seed=6,
                        n_sites=6, shared_intercept=True)
        dataset, truth, lattice, basis = simulate_cube(cfg)
        km = kmlr_fit(dataset, basis, 3, SemConfig(seed=3))
        la = fit_sem(dataset, basis, 3, SemConfig(restarts=5, seed=3))
        assert nmi(km.labels, truth.labels) < 0.5
        assert nmi(la.labels, truth.labels) > nmi(km.labels, truth.labels) + 0.15


class TestSvcm:
    def test_equals_single_group_sem(self):
        cfg = SimConfig(dims=(5, 5, 5), n=70, n_groups=1, sigma=1.0, seed=3, n_sites=4)
        dataset, truth, lattice, basis = simulate_cube(cfg)
        params = svcm_fit(dataset, basis)
        fit = fit_sem(dataset, basis, 1, SemConfig(seed=0))
        assert np.array_equal(params.theta_alpha, fit.params.theta_alpha)
        assert np.array_equal(params.theta_eta, fit.params.theta_eta)
        assert np.array_equal(params.theta_gamma, fit.params.theta_gamma)
        assert np.array_equal(params.lam, fit.params.lam)

    def test_noiseless_exact_recovery(self):
        # truth constructed inside the two-stage estimator's range: single
        # site, no controls, zero true intercept, exposures centered per site
        rng = np.random.default_rng(7)
        from lasir import Dataset
        from lasir.sem import m_step
        n, L = 24, 5
        x = np.tile([-1.5, 1.5], n // 2)
        exposures = np.column_stack([np.ones(n), x])
        theta_gamma = rng.standard_normal((1, L))
        slope = rng.standard_normal(L)
        ytilde = np.ones((n, 1)) @ theta_gamma + np.outer(x, slope)
        dataset = Dataset(images=np.zeros((n, L), dtype=np.float32),
                          exposures=exposures, controls=np.zeros((n, 0)),
                          sites=np.ones((n, 1)))
        params = m_step(ytilde, dataset, np.ones(n, dtype=int), 1)
        assert np.allclose(params.theta_gamma, theta_gamma, atol=1e-8)
        assert np.allclose(params.theta_alpha[0, 0], 0.0, atol=1e-8)
        assert np.allclose(params.theta_alpha[0, 1], slope, atol=1e-8)
        assert np.all(params.lam == 1e-10)
