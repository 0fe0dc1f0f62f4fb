import numpy as np
import pytest

from lasir import augment, gating_probs, mnlogit_fit, mvls_fit
from lasir.linmodel import _mnlogit_newton


class TestMvls:
    def test_exact_linear_data(self):
        rng = np.random.default_rng(0)
        design = np.column_stack([np.ones(20), rng.standard_normal(20)])
        coef = rng.standard_normal((2, 5))
        fit = mvls_fit(design, design @ coef)
        assert np.allclose(fit.coef, coef, atol=1e-10)
        assert np.all(fit.lam == 1e-10)  # residuals are zero, variances floored

    def test_intercept_only_gives_column_means(self):
        rng = np.random.default_rng(1)
        targets = rng.standard_normal((15, 4))
        fit = mvls_fit(np.ones((15, 1)), targets)
        assert np.allclose(fit.coef[0], targets.mean(axis=0), atol=1e-12)

    def test_three_point_slope(self):
        fit = mvls_fit(np.array([[0.0], [1.0], [2.0]]), np.array([[0.0], [1.0], [2.0]]))
        assert fit.coef[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_residuals_orthogonal_to_design(self):
        rng = np.random.default_rng(2)
        design = rng.standard_normal((40, 3))
        targets = rng.standard_normal((40, 6))
        fit = mvls_fit(design, targets)
        resid = targets - design @ fit.coef
        assert np.abs(design.T @ resid).max() < 1e-8

    def test_rank_deficient_names_singular_value(self):
        design = np.column_stack([np.ones(10), np.ones(10)])
        with pytest.raises(ValueError, match="singular value"):
            mvls_fit(design, np.zeros((10, 2)))

    def test_under_determined(self):
        with pytest.raises(ValueError, match="under-determined"):
            mvls_fit(np.ones((2, 3)), np.zeros((2, 1)))

    def test_variance_is_mean_squared_residual(self):
        rng = np.random.default_rng(3)
        design = np.ones((30, 1))
        targets = rng.standard_normal((30, 2))
        fit = mvls_fit(design, targets)
        resid = targets - targets.mean(axis=0)
        assert np.allclose(fit.lam, np.mean(resid ** 2, axis=0), rtol=1e-12)


class TestGatingProbs:
    def test_zero_weights_uniform(self):
        w = np.zeros((4, 3))
        probs = gating_probs(w, np.array([1.0, 0.3, -0.2]))
        assert np.allclose(probs, 0.25, atol=1e-14)

    def test_known_logits(self):
        # logits (-0.6, 0.5, 0) at z = 0
        w = np.array([[-0.6, 1.0], [0.5, 1.0], [0.0, 0.0]])
        probs = gating_probs(w, np.array([1.0, 0.0]))
        assert np.allclose(probs, [0.17163596187795446, 0.5156229251611161,
                                   0.31274111296092955], atol=1e-12)

    def test_shift_invariance(self):
        w = np.array([[0.4, -1.2], [-0.3, 0.7], [0.0, 0.0]])
        shifted = w + np.array([[5.0, 0.0]] * 3)  # adds 5 to every logit
        z = augment(np.random.default_rng(4).standard_normal((6, 1)))
        assert np.allclose(gating_probs(w, z), gating_probs(shifted, z), atol=1e-12)

    def test_rows_normalized_and_interior(self):
        rng = np.random.default_rng(5)
        w = rng.standard_normal((3, 4))
        w[-1] = 0.0
        z = augment(rng.standard_normal((50, 3)))
        probs = gating_probs(w, z)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)
        assert np.all((probs > 0) & (probs < 1))


class TestMnlogit:
    def test_single_class_is_zero(self):
        w = mnlogit_fit(np.ones((5, 2)), np.ones(5, dtype=int), 1)
        assert np.array_equal(w, np.zeros((1, 2)))

    def test_degenerate_all_reference_class(self):
        rng = np.random.default_rng(6)
        feats = augment(rng.standard_normal((40, 1)))
        w = mnlogit_fit(feats, np.full(40, 3), 3)
        assert np.all(np.isfinite(w))
        probs = gating_probs(w, feats)
        assert np.all(probs.argmax(axis=1) == 2)

    def test_balanced_symmetric_two_class(self):
        labels = np.array([1, 2] * 30)
        w = mnlogit_fit(np.ones((60, 1)), labels, 2)
        assert abs(w[0, 0]) < 1e-6
        probs = gating_probs(w, np.ones((1, 1)))
        assert np.allclose(probs, 0.5, atol=1e-6)

    def test_recovery_and_likelihood_dominance(self):
        # draws from the gating model itself; the fitted weights must be close
        # and cannot have lower likelihood than the truth
        rng = np.random.default_rng(7)
        w_true = np.array([[-0.6, 1.0], [0.5, 1.0], [0.0, 0.0]])
        z = rng.normal(0.0, 2.0, size=(200, 1))
        feats = augment(z)
        probs = gating_probs(w_true, feats)
        u = rng.random(200)
        labels = 1 + (u[:, None] > probs.cumsum(axis=1)).sum(axis=1)
        labels = np.minimum(labels, 3)
        w_hat = mnlogit_fit(feats, labels, 3)

        def loglik(w):
            return float(np.log(gating_probs(w, feats)[np.arange(200), labels - 1]).sum())

        assert loglik(w_hat) >= loglik(w_true)
        assert np.abs(w_hat - w_true).max() < 0.6

    def test_newton_objective_monotone(self):
        rng = np.random.default_rng(8)
        feats = augment(rng.standard_normal((80, 2)))
        labels = rng.integers(1, 4, size=80)
        onehot = np.zeros((80, 3))
        onehot[np.arange(80), labels - 1] = 1.0
        _, trace = _mnlogit_newton(feats, onehot, 3, 1e-6, 50, 1e-8)
        assert all(b >= a for a, b in zip(trace, trace[1:]))

    def test_bad_labels_rejected(self):
        with pytest.raises(ValueError, match="labels"):
            mnlogit_fit(np.ones((3, 1)), np.array([0, 1, 2]), 2)
