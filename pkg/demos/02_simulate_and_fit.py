"""
Simulating grouped image data and fitting by stochastic EM
==========================================================

Three latent subgroups share site and control effects but differ in their
intercept fields and in how the image responds to the exposure: a smooth
random-field slope, a trigonometric slope, and a compact central bump.
Group membership depends on the control covariate through a
multinomial-logit gating model.

The stochastic-EM fit alternates posterior responsibilities (E), a random
label draw (S), and closed-form regression updates (M), restarted from
several random initializations. We compare it against the k-means baseline
and the no-subgroup fit.
"""

import numpy as np

from lasir import (SemConfig, SimConfig, fit_sem, kmlr_fit, nmi, simulate_cube,
                   svcm_fit)

config = SimConfig(dims=(10, 10, 10), n=400, n_groups=3, sigma=1.0, seed=7)
dataset, truth, lattice, basis = simulate_cube(config)
print(f"simulated n={dataset.n} individuals, d={lattice.d} voxels, "
      f"L={basis.L} basis functions")
print(f"true group sizes: {np.bincount(truth.labels)[1:]}")

sem_config = SemConfig(restarts=6, seed=11)
fit = fit_sem(dataset, basis, n_groups=3, config=sem_config)
print(f"\nstochastic EM: {fit.iterations} iterations, converged={fit.converged}, "
      f"winning replicate {fit.replicate}")
print("objective trace (last 5):", np.round(fit.q_trace[-5:], 1))
print(f"fitted group sizes: {np.bincount(fit.labels, minlength=4)[1:]}")
print(f"NMI vs truth: {nmi(fit.labels, truth.labels):.3f}")

kmlr = kmlr_fit(dataset, basis, n_groups=3, config=sem_config)
print(f"\nk-means baseline NMI vs truth: {nmi(kmlr.labels, truth.labels):.3f}")
print("(outcome clustering struggles because the slope spread inside each "
      "group dwarfs the between-group intercept separation)")

svcm = svcm_fit(dataset, basis)
print(f"\nno-subgroup fit: single coefficient set, noise variance mean "
      f"{svcm.lam.mean():.3f} (inflated by unmodeled heterogeneity)")
print(f"shared-variance mean under the subgroup fit: {fit.params.lam.mean():.3f}")
