"""Mapping between voxel space and basis-coefficient space.

With an orthonormal basis Psi (d x L), an image row y maps to the
coefficient row ``y @ Psi`` and a coefficient row theta back to the map
``theta @ Psi.T``. Back-then-forward projection is the identity on
coefficient space; forward projection contracts norms (Parseval), with
equality exactly for images in the basis span.
"""

from __future__ import annotations

import numpy as np

from .basis import BasisSystem


def project(images: np.ndarray, basis: BasisSystem) -> np.ndarray:
    """Project images (n, d) onto the basis, returning coefficients (n, L)."""
    images = np.atleast_2d(images)
    if images.shape[1] != basis.d:
        raise ValueError(f"image column count {images.shape[1]} does not match "
                         f"basis d={basis.d}")
    return np.asarray(images, dtype=np.float64) @ basis.psi


def backproject(coefs: np.ndarray, basis: BasisSystem) -> np.ndarray:
    """Reconstruct voxel maps (m, d) from basis coefficients (m, L)."""
    coefs = np.atleast_2d(coefs)
    if coefs.shape[1] != basis.L:
        raise ValueError(f"coefficient column count {coefs.shape[1]} does not match "
                         f"basis L={basis.L}")
    return np.asarray(coefs, dtype=np.float64) @ basis.psi.T
