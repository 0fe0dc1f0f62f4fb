"""Orthonormal spatial basis from a modified squared-exponential kernel.

The kernel on R^3 is

    kappa(v1, v2) = exp{-a(|v1|^2 + |v2|^2) - b|v1 - v2|^2},   a > 0, b > 0,

where `a` controls the variance decay away from the origin and `b` the
roughness (larger b = rougher). Its eigen-system factorizes over axes. In
one dimension, with

    c = sqrt(a^2 + 2ab),   A = a + b + c,   B = b / A,

the eigenvalue of degree k is ``sqrt(2a/A) * B**k`` and the eigenfunction is
``exp(-(c - a) x^2) * H_k(sqrt(2c) x)`` up to a normalization constant,
with H_k the k-th physicists' Hermite polynomial. Normalization constants
are dropped deliberately: the basis is re-orthonormalized on the discrete
lattice by an SVD, so only the span and the eigenvalue ratios matter.

Three-dimensional basis terms are tensor products with total Hermite degree
k1 + k2 + k3 <= h, ordered by ascending total degree and lexicographically
within a degree; there are C(h+3, 3) of them. The 3-D eigenvalue of a term
is the product of its 1-D eigenvalues, so every term of total degree n has
a strictly larger eigenvalue than any term of degree n+1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .lattice import VoxelLattice

RANK_TOL = 1e-10


@dataclass
class KernelParams:
    """Kernel hyperparameters: decay rate `a` and smoothness `b`, both > 0."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"kernel parameters must be positive, got a={self.a}, b={self.b}")

    @property
    def derived(self):
        """(c, A, B) of the 1-D eigen-system."""
        c = math.sqrt(self.a ** 2 + 2.0 * self.a * self.b)
        A = self.a + self.b + c
        return c, A, self.b / A


@dataclass
class BasisSystem:
    """An orthonormal spatial basis evaluated on a lattice.

    Attributes
    ----------
    psi : ndarray, shape (d, L)
        Orthonormal columns (psi.T @ psi = I to 1e-8).
    eigvals : ndarray, shape (L,)
        Analytic 3-D eigenvalues in the pre-SVD tensor-product order
        (ascending total degree, lexicographic within degree); they are
        non-increasing because the decay is geometric in total degree.
    h : int
        Maximum total Hermite degree.
    params : KernelParams
    """

    psi: np.ndarray
    eigvals: np.ndarray
    h: int
    params: KernelParams

    @property
    def L(self) -> int:
        return self.psi.shape[1]

    @property
    def d(self) -> int:
        return self.psi.shape[0]


def kernel_eval(v1, v2, params: KernelParams) -> float:
    """Evaluate the modified squared-exponential kernel at a pair of points."""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    return float(np.exp(-params.a * (v1 @ v1 + v2 @ v2) - params.b * ((v1 - v2) @ (v1 - v2))))


def basis_size(h: int) -> int:
    """Number of 3-D tensor-product terms with total degree <= h: C(h+3, 3)."""
    if h < 0:
        raise ValueError(f"degree must be non-negative, got {h}")
    return math.comb(h + 3, 3)


def tensor_degrees(h: int) -> np.ndarray:
    """All (k1, k2, k3) with k1+k2+k3 <= h, ascending total degree then lexicographic."""
    out = [(k1, k2, n - k1 - k2)
           for n in range(h + 1)
           for k1 in range(n + 1)
           for k2 in range(n - k1 + 1)]
    return np.array(out, dtype=int)


def _hermite_all(t: np.ndarray, kmax: int) -> np.ndarray:
    """Physicists' Hermite polynomials H_0..H_kmax at points t, by the
    three-term recurrence H_{k+1} = 2t H_k - 2k H_{k-1} (stable for k <= 20
    with the bounded arguments arising on [-1, 1]^3 lattices)."""
    H = np.empty((t.size, kmax + 1))
    H[:, 0] = 1.0
    if kmax >= 1:
        H[:, 1] = 2.0 * t
    for k in range(1, kmax):
        H[:, k + 1] = 2.0 * t * H[:, k] - 2.0 * k * H[:, k - 1]
    return H


def eigen_system_1d(params: KernelParams, max_degree: int):
    """1-D eigenvalues and an eigenfunction evaluator for the kernel.

    Returns
    -------
    eigvals : ndarray, shape (max_degree+1,)
        ``sqrt(2a/A) * B**k`` for k = 0..max_degree (geometric decay).
    evaluate : callable
        ``evaluate(x)`` maps points (m,) to an (m, max_degree+1) matrix of
        unnormalized eigenfunction values
        ``exp(-(c-a) x^2) * H_k(sqrt(2c) x)``.
    """
    c, A, B = params.derived
    eigvals = math.sqrt(2.0 * params.a / A) * B ** np.arange(max_degree + 1)

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        env = np.exp(-(c - params.a) * x ** 2)
        return _hermite_all(math.sqrt(2.0 * c) * x, max_degree) * env[:, None]

    return eigvals, evaluate


def variance_contribution(params: KernelParams, h: int, h_ref: int) -> float:
    """Fraction of the reference basis eigenvalue mass captured by degree <= h.

    Equals ``sum_{n<=h} C(n+2,2) B**n / sum_{n<=h_ref} C(n+2,2) B**n``; the
    common factor (2a/A)^{3/2} of the 3-D eigenvalues cancels.
    """
    if h > h_ref:
        raise ValueError(f"h={h} must not exceed h_ref={h_ref}")
    _, _, B = params.derived
    n = np.arange(h_ref + 1)
    terms = (n + 1) * (n + 2) / 2.0 * B ** n
    return float(terms[: h + 1].sum() / terms.sum())


def select_h(params: KernelParams, h_ref: int, r0: float) -> int:
    """Smallest degree h with variance_contribution(params, h, h_ref) >= r0."""
    if not (0.0 < r0 <= 1.0):
        raise ValueError(f"r0 must lie in (0, 1], got {r0}")
    for h in range(h_ref + 1):
        if variance_contribution(params, h, h_ref) >= r0:
            return h
    return h_ref


def build_basis(lattice: VoxelLattice, params: KernelParams, h: int) -> BasisSystem:
    """Evaluate the tensor eigenfunctions on the lattice and orthonormalize.

    The 1-D factors are orthonormalized per axis first -- a triangular
    change of basis that absorbs the dropped normalization constants and
    preserves the nested total-degree span. On a full grid their tensor
    products are orthonormal by construction and keep the tensor-degree
    column order; on a masked lattice the columns go through the thin SVD,
    computed via the L x L Gram matrix so cost scales as d*L^2, with one
    Cholesky refinement pass to hold orthonormality at machine precision.
    Column signs are fixed so the largest-magnitude entry of each column is
    non-negative, for reproducibility; downstream results are invariant to
    column sign flips.

    Raises
    ------
    ValueError
        "basis exceeds lattice rank" when C(h+3,3) > d; "degenerate basis"
        when the evaluation matrix is numerically rank-deficient (relative
        singular value below 1e-10), e.g. when the per-axis degree exceeds
        the number of distinct grid planes.
    """
    L = basis_size(h)
    if L > lattice.d:
        raise ValueError(f"basis exceeds lattice rank: L={L} > d={lattice.d}")
    eig1, evaluate = eigen_system_1d(params, h)

    # Orthonormalize the 1-D factors on each axis's distinct grid values
    # before forming tensor products. The QR change of basis is triangular
    # in degree, so the total-degree-<=h span is untouched, while the raw
    # matrix becomes well conditioned (exactly orthonormal columns on a
    # full grid). A per-axis degree that the grid cannot resolve shows up
    # as a collapsed QR diagonal.
    per_axis = []
    for ax in range(3):
        values, index = np.unique(lattice.coords[:, ax], return_inverse=True)
        fam = evaluate(values)
        if values.size < h + 1:
            raise ValueError("degenerate basis")
        Q, R = np.linalg.qr(fam)
        diag = np.abs(np.diag(R))
        if diag.min() <= RANK_TOL * diag.max():
            raise ValueError("degenerate basis")
        per_axis.append(Q[index])

    degrees = tensor_degrees(h)
    raw = per_axis[0][:, degrees[:, 0]] * per_axis[1][:, degrees[:, 1]] \
        * per_axis[2][:, degrees[:, 2]]

    if lattice.mask.all():
        # On a full grid the products of per-axis orthonormal factors are
        # orthonormal already (the grid inner product factorizes), and they
        # keep the tensor-degree column order, which aligns psi with the
        # stored eigenvalues.
        psi = raw
    else:
        gram = raw.T @ raw
        w, V = np.linalg.eigh(gram)
        w = w[::-1]
        V = V[:, ::-1]
        if w[0] <= 0 or w[-1] <= (RANK_TOL ** 2) * w[0]:
            raise ValueError("degenerate basis")
        psi = (raw @ V) / np.sqrt(w)
        # One refinement pass: the Gram route loses accuracy when cond(raw)^2
        # approaches 1/eps; psi.T @ psi is then I + E with small E, and a
        # Cholesky correction removes E.
        corr = np.linalg.cholesky(psi.T @ psi)
        psi = solve_triangular(corr, psi.T, lower=True).T

    flip = psi[np.abs(psi).argmax(axis=0), np.arange(L)] < 0
    psi[:, flip] *= -1.0

    eigvals = eig1[degrees[:, 0]] * eig1[degrees[:, 1]] * eig1[degrees[:, 2]]
    return BasisSystem(psi=psi, eigvals=eigvals, h=h, params=params)
