"""Matrix-bundle serialization of basis systems, fits, and simulation truth."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .basis import BasisSystem, KernelParams
from .io import read_matrix_bundle, write_matrix_bundle
from .lattice import GroundTruth
from .sem import FitResult, ModelParams


def save_basis(basis: BasisSystem, prefix) -> None:
    write_matrix_bundle(prefix, OrderedDict(psi=basis.psi, eigvals=basis.eigvals),
                        meta={"kind": "basis", "a": basis.params.a, "b": basis.params.b,
                              "h": basis.h, "L": basis.L, "d": basis.d})


def load_basis(prefix) -> BasisSystem:
    mats, meta = read_matrix_bundle(prefix)
    if meta.get("kind") != "basis":
        raise ValueError(f"{prefix}: not a basis bundle")
    params = KernelParams(float(meta["a"]), float(meta["b"]))
    return BasisSystem(psi=mats["psi"], eigvals=mats["eigvals"].ravel(),
                       h=int(meta["h"]), params=params)


def save_fit(fit: FitResult, prefix) -> None:
    p = fit.params
    K, p1, L = p.theta_alpha.shape
    mats = OrderedDict(
        theta_alpha=p.theta_alpha.reshape(K * p1, L),
        theta_eta=p.theta_eta,
        theta_gamma=p.theta_gamma,
        lam=p.lam,
        w=p.w,
        responsibilities=fit.responsibilities,
        labels=fit.labels.astype(float),
        q_trace=np.asarray(fit.q_trace, dtype=float),
    )
    write_matrix_bundle(prefix, mats, meta={
        "kind": "fit", "K": K, "p1": p1, "L": L,
        "seed": fit.seed, "converged": int(fit.converged),
        "iterations": fit.iterations, "method": fit.method,
        "replicate": fit.replicate,
    })


def load_fit(prefix) -> FitResult:
    mats, meta = read_matrix_bundle(prefix)
    if meta.get("kind") != "fit":
        raise ValueError(f"{prefix}: not a fit bundle")
    K, p1, L = int(meta["K"]), int(meta["p1"]), int(meta["L"])
    params = ModelParams(
        theta_alpha=mats["theta_alpha"].reshape(K, p1, L),
        theta_eta=mats["theta_eta"],
        theta_gamma=mats["theta_gamma"],
        lam=mats["lam"].ravel(),
        w=mats["w"],
    )
    return FitResult(params=params,
                     responsibilities=mats["responsibilities"],
                     labels=mats["labels"].ravel().astype(int),
                     q_trace=mats["q_trace"].ravel(),
                     converged=bool(int(meta["converged"])),
                     seed=int(meta["seed"]),
                     iterations=int(meta["iterations"]),
                     method=meta.get("method", "lasir"),
                     replicate=int(meta.get("replicate", 0)))


def save_truth(truth: GroundTruth, prefix) -> None:
    K, p1, d = truth.alpha.shape
    mats = OrderedDict(
        labels=truth.labels.astype(float),
        alpha=truth.alpha.reshape(K * p1, d),
        gamma=truth.gamma,
        eta=truth.eta,
        gating=truth.gating,
    )
    write_matrix_bundle(prefix, mats, meta={"kind": "truth", "K": K, "p1": p1})


def load_truth(prefix) -> GroundTruth:
    mats, meta = read_matrix_bundle(prefix)
    if meta.get("kind") != "truth":
        raise ValueError(f"{prefix}: not a truth bundle")
    K, p1 = int(meta["K"]), int(meta["p1"])
    return GroundTruth(labels=mats["labels"].ravel().astype(int),
                       alpha=mats["alpha"].reshape(K, p1, -1),
                       gamma=mats["gamma"], eta=mats["eta"], gating=mats["gating"])
