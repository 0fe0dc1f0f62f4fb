"""Synthetic data generation on a cube (or any masked) lattice.

The default three-group design draws an independent random-field intercept
per group and pairs it with per-group slope maps: a random-field shape
(group 1), a trigonometric shape (group 2), and a smoothed compact bump at
the lattice center (group 3). Random fields are calibrated so their average
pointwise variance matches the kernel's diagonal; at that amplitude the
intercept patterns separate the groups for likelihood-based methods while
staying well below the noise-ball diameter that distance-based clustering
needs. Setting ``shared_intercept=True`` collapses the intercepts to a
single common field, leaving the slopes as the only group signal. Group
membership follows the multinomial-logit gating model on the control
covariate, site and control effects are independent normals per voxel, and
the noise is independent across voxels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSystem, KernelParams, basis_size, build_basis
from .lattice import Dataset, GroundTruth, VoxelLattice, build_lattice
from .linmodel import augment, gating_probs
from .sem import s_step

DEFAULT_GATING = {
    1: np.array([[0.0, 0.0]]),
    2: np.array([[-0.6, 1.0], [0.0, 0.0]]),
    3: np.array([[-0.6, 1.0], [0.5, 1.0], [0.0, 0.0]]),
}


@dataclass
class SimConfig:
    """Cube-simulation settings.

    dims / mask : lattice geometry (mask "full" or an explicit boolean volume).
    n, n_groups, sigma : sample size, group count K in {1,2,3}, noise sd.
    kernel_a, kernel_b, basis_degree : random-field kernel for the intercept
        (and the group-1 slope) and the truncation degree of its expansion;
        `basis_degree` defaults to min(12, smallest axis - 1) so the
        expansion stays full rank on the grid.
    gating : (K, 2) multinomial-logit weights on (1, z), last row zero.
    n_sites, site_sd, control_sd : site count and effect scales.
    null_exposure : zero out every slope map (for calibration studies).
    """

    dims: tuple = (15, 15, 15)
    n: int = 500
    n_groups: int = 3
    sigma: float = 1.0
    kernel_a: float = 0.01
    kernel_b: float = 2.0
    basis_degree: int = None
    gating: np.ndarray = None
    n_sites: int = 21
    site_sd: float = 0.2
    control_sd: float = 0.2
    seed: int = 0
    null_exposure: bool = False
    shared_intercept: bool = False
    mask: object = "full"

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.n_groups not in (1, 2, 3):
            raise ValueError(f"the cube design supports 1-3 groups, got {self.n_groups}")
        if self.gating is None:
            self.gating = DEFAULT_GATING[self.n_groups].copy()
        self.gating = np.asarray(self.gating, dtype=float)
        if self.gating.shape != (self.n_groups, 2):
            raise ValueError(f"gating must be ({self.n_groups}, 2), "
                             f"got {self.gating.shape}")
        if not np.allclose(self.gating[-1], 0.0):
            raise ValueError("gating row for the reference group must be zero")
        if self.basis_degree is None:
            self.basis_degree = min(12, min(self.dims) - 1)


def gp_from_coeffs(basis: BasisSystem, xi: np.ndarray) -> np.ndarray:
    """Field sum_l sqrt(e_l) xi_l psi_l for given expansion coefficients."""
    return basis.psi @ (np.sqrt(basis.eigvals) * xi)


def sample_gp(lattice: VoxelLattice, basis: BasisSystem,
              rng: np.random.Generator) -> np.ndarray:
    """Draw a truncated Karhunen-Loeve sample of the kernel's random field.

    Independent standard normal coefficients are scaled by the square roots
    of the analytic eigenvalues and combined over the basis columns, so the
    field's pointwise variance is ``sum_l e_l psi_l(v)^2``.
    """
    if basis.d != lattice.d:
        raise ValueError("basis was built for a different lattice")
    return gp_from_coeffs(basis, rng.standard_normal(basis.L))


def smoothed_center_cube(lattice: VoxelLattice, half_width: float = 0.4,
                         taper_sd: float = 0.1) -> np.ndarray:
    """Indicator of the centered cube {max|v_axis| <= half_width} convolved
    with an isotropic Gaussian (sd `taper_sd` in normalized units), truncated
    to exactly zero beyond three taper widths from the cube."""
    from scipy.stats import norm
    per_axis = [norm.cdf((half_width - lattice.coords[:, ax]) / taper_sd)
                - norm.cdf((-half_width - lattice.coords[:, ax]) / taper_sd)
                for ax in range(3)]
    out = per_axis[0] * per_axis[1] * per_axis[2]
    out[np.abs(lattice.coords).max(axis=1) > half_width + 3.0 * taper_sd] = 0.0
    return out


def trig_map(lattice: VoxelLattice) -> np.ndarray:
    """sin(4 v_x) + cos(4 v_y) - sin(4 v_z) on the normalized coordinates."""
    v = lattice.coords
    return np.sin(4.0 * v[:, 0]) + np.cos(4.0 * v[:, 1]) - np.sin(4.0 * v[:, 2])


def make_group_svcs(lattice: VoxelLattice, rng: np.random.Generator,
                    basis: BasisSystem = None) -> np.ndarray:
    """The three cube-design slope maps, shape (3, d).

    Group 1 is a random-field draw, group 2 the trigonometric map, group 3
    the smoothed center cube.
    """
    if basis is None:
        basis = build_basis(lattice, KernelParams(0.01, 2.0),
                            min(12, min(lattice.dims) - 1))
    return np.stack([sample_gp(lattice, basis, rng),
                     trig_map(lattice),
                     smoothed_center_cube(lattice)])


def draw_labels(gating: np.ndarray, controls: np.ndarray,
                rng: np.random.Generator) -> np.ndarray:
    """Draw group labels (1..K) from the gating model given controls (n, q)."""
    probs = gating_probs(gating, augment(controls))
    return s_step(probs, rng)


def field_scale(lattice: VoxelLattice, basis: BasisSystem, a: float) -> float:
    """Amplitude making the truncated expansion's average pointwise variance
    match the kernel diagonal ``exp(-2a|v|^2)`` on the lattice."""
    kernel_diag = np.exp(-2.0 * a * (lattice.coords ** 2).sum(axis=1)).mean()
    return float(np.sqrt(kernel_diag * lattice.d / basis.eigvals.sum()))


def simulate_cube(config: SimConfig):
    """Generate one synthetic dataset plus its ground truth.

    Draw order is fixed, so a seed reproduces the dataset bit-exactly:
    group-1 slope field, group intercept fields, site effects, control
    effects, exposures, controls, sites, labels, noise.

    Returns
    -------
    (dataset, truth, lattice, basis) : the basis is the expansion used for
        the random fields (same kernel the fit typically uses).
    """
    lattice = build_lattice(config.dims, config.mask)
    params = KernelParams(config.kernel_a, config.kernel_b)
    if basis_size(config.basis_degree) > lattice.d:
        raise ValueError("basis exceeds lattice rank; lower basis_degree")
    basis = build_basis(lattice, params, config.basis_degree)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    K, n, d = config.n_groups, config.n, lattice.d
    amp = field_scale(lattice, basis, config.kernel_a)

    maps = make_group_svcs(lattice, rng, basis)
    if K == 1:
        slopes = maps[1][None, :]  # single-group datasets use the trig slope
    else:
        slopes = maps[:K].copy()
        slopes[0] *= amp
    if config.null_exposure:
        slopes = np.zeros_like(slopes)
    if config.shared_intercept:
        intercepts = np.repeat(amp * sample_gp(lattice, basis, rng)[None, :], K, axis=0)
    else:
        intercepts = np.stack([amp * sample_gp(lattice, basis, rng) for _ in range(K)])
    alpha = np.stack([np.vstack([intercepts[k], slopes[k]]) for k in range(K)])

    gamma = rng.normal(0.0, config.site_sd, size=(config.n_sites, d))
    eta = rng.normal(0.0, config.control_sd, size=(1, d))

    x = rng.standard_normal(n)
    z = rng.normal(0.0, 2.0, size=(n, 1))
    site_idx = rng.integers(config.n_sites, size=n)
    sites = np.zeros((n, config.n_sites))
    sites[np.arange(n), site_idx] = 1.0
    labels = draw_labels(config.gating, z, rng)

    mu = (intercepts[labels - 1] + x[:, None] * slopes[labels - 1]
          + sites @ gamma + z @ eta)
    images = (mu + rng.normal(0.0, config.sigma, size=(n, d))).astype(np.float32)

    exposures = np.column_stack([np.ones(n), x])
    dataset = Dataset(images=images, exposures=exposures, controls=z, sites=sites)
    truth = GroundTruth(labels=labels, alpha=alpha, gamma=gamma, eta=eta,
                        gating=config.gating.copy())
    return dataset, truth, lattice, basis
