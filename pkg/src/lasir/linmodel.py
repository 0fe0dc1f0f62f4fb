"""Regression primitives used by the EM engine and the baselines.

Two fitting routines cover every M-step sub-problem:

* `mvls_fit` -- multivariate least squares with a shared design and many
  target columns, plus per-column residual variances (a diagonal Gaussian
  model).
* `mnlogit_fit` -- maximum-likelihood multinomial logit with the last class
  pinned to zero weights for identification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

LAMBDA_FLOOR = 1e-10
RANK_TOL = 1e-10
MNLOGIT_RIDGE = 1e-6


@dataclass
class DiagGaussianFit:
    """Least-squares coefficients (c, L) and per-column noise variances (L,)."""

    coef: np.ndarray
    lam: np.ndarray


def mvls_fit(design: np.ndarray, targets: np.ndarray,
             lambda_floor: float = LAMBDA_FLOOR) -> DiagGaussianFit:
    """Column-wise least squares of targets (n, L) on design (n, c).

    Solved through a thin QR factorization. Variances are the mean squared
    residuals per column (maximum likelihood), floored at `lambda_floor` so
    exact fits cannot produce zero-variance coordinates.

    Raises
    ------
    ValueError
        If n < c or the design is numerically rank deficient (relative
        singular value below 1e-10); the message reports the smallest
        singular value rather than falling back to a pseudo-inverse.
    """
    design = np.atleast_2d(np.asarray(design, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    n, c = design.shape
    if n < c:
        raise ValueError(f"under-determined least squares: n={n} < c={c}")
    s = np.linalg.svd(design, compute_uv=False)
    if s[-1] <= RANK_TOL * s[0]:
        raise ValueError(f"rank-deficient design: smallest singular value {s[-1]:.3e}")
    Q, R = np.linalg.qr(design)
    coef = solve_triangular(R, Q.T @ targets, lower=False)
    resid = targets - design @ coef
    lam = np.maximum(np.mean(resid ** 2, axis=0), lambda_floor)
    return DiagGaussianFit(coef=coef, lam=lam)


def augment(z: np.ndarray) -> np.ndarray:
    """Prepend an all-ones intercept column to the control matrix (n, q)."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    return np.hstack([np.ones((z.shape[0], 1)), z])


def gating_probs(w: np.ndarray, z_aug: np.ndarray) -> np.ndarray:
    """Class probabilities of the multinomial-logit gating model.

    Parameters
    ----------
    w : ndarray, shape (K, q+1)
        Gating weights; the last row is the pinned reference class.
    z_aug : ndarray, shape (n, q+1) or (q+1,)
        Control covariates with a leading 1.

    Returns
    -------
    ndarray, shape (n, K) or (K,)
        Softmax over logits ``w @ z``, computed with max subtraction; rows
        are positive and sum to 1.
    """
    single = np.ndim(z_aug) == 1
    logits = np.atleast_2d(z_aug) @ np.asarray(w, dtype=np.float64).T
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    return probs[0] if single else probs


def _mnlogit_newton(features, onehot, n_classes, ridge, max_iter, tol):
    """Newton iterations on the (K-1)(q+1) free weights of the penalized
    multinomial-logit likelihood. Returns (w, objective trace)."""
    n, m = features.shape
    free = n_classes - 1
    W = np.zeros((free, m))

    def objective(Wf):
        logits = np.hstack([features @ Wf.T, np.zeros((n, 1))])
        lse = logsumexp(logits, axis=1)
        ll = logits[np.arange(n), labels0] - lse
        return ll.sum() - 0.5 * ridge * np.sum(Wf ** 2)

    labels0 = onehot.argmax(axis=1)
    trace = [objective(W)]
    for _ in range(max_iter):
        logits = np.hstack([features @ W.T, np.zeros((n, 1))])
        logits -= logits.max(axis=1, keepdims=True)
        P = np.exp(logits)
        P /= P.sum(axis=1, keepdims=True)
        resid = onehot[:, :free] - P[:, :free]
        grad = (resid.T @ features).ravel() - ridge * W.ravel()
        if not np.all(np.isfinite(grad)):
            raise ValueError("separation or bad scaling")
        if np.max(np.abs(grad)) < tol:
            break
        # Negative Hessian blocks: sum_i p_ik (delta_kc - p_ic) f_i f_i^T.
        H = np.zeros((free * m, free * m))
        for k in range(free):
            for c in range(k, free):
                wts = P[:, k] * ((1.0 if k == c else 0.0) - P[:, c])
                block = (features * wts[:, None]).T @ features
                H[k * m:(k + 1) * m, c * m:(c + 1) * m] = block
                if c != k:
                    H[c * m:(c + 1) * m, k * m:(k + 1) * m] = block
        H[np.diag_indices_from(H)] += ridge
        step = np.linalg.solve(H, grad).reshape(free, m)
        scale = 1.0
        current = trace[-1]
        for _ in range(30):
            cand = W + scale * step
            val = objective(cand)
            if np.isfinite(val) and val >= current:
                break
            scale *= 0.5
        else:
            break
        W = cand
        trace.append(val)
    if not np.isfinite(trace[-1]):
        raise ValueError("separation or bad scaling")
    return W, trace


def mnlogit_fit(features: np.ndarray, labels: np.ndarray, n_classes: int,
                ridge: float = MNLOGIT_RIDGE, max_iter: int = 50,
                tol: float = 1e-8) -> np.ndarray:
    """Fit gating weights by penalized maximum likelihood.

    Parameters
    ----------
    features : ndarray, shape (n, q+1)
        Control covariates with a leading all-ones column.
    labels : ndarray of int, shape (n,)
        Class labels in {1..n_classes}.
    n_classes : int
        Number of classes K; class K is the pinned reference.
    ridge : float
        L2 penalty added to the objective and the Hessian diagonal; keeps
        the optimum finite under separation.

    Returns
    -------
    ndarray, shape (K, q+1)
        Gating weights with the last row identically zero. The penalized
        objective is non-decreasing across Newton steps (step halving on
        decrease); iteration stops when the gradient infinity-norm falls
        below `tol` or after `max_iter` steps.
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels, dtype=int)
    n, m = features.shape
    if labels.shape[0] != n:
        raise ValueError(f"label count {labels.shape[0]} does not match n={n}")
    if labels.min() < 1 or labels.max() > n_classes:
        raise ValueError(f"labels must lie in 1..{n_classes}")
    if n_classes == 1:
        return np.zeros((1, m))
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), labels - 1] = 1.0
    W, _ = _mnlogit_newton(features, onehot, n_classes, ridge, max_iter, tol)
    return np.vstack([W, np.zeros((1, m))])
