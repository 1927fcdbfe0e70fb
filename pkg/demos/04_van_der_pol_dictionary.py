"""
Van der Pol oscillator with a cubic dictionary
==============================================

A sparse regression (SINDy) fit initializes an unscented-Kalman posterior
over the ten cubic-dictionary coefficients per state and three variances.
The MAP coefficients are compared with the generating ones, and the
identified model is run long enough to settle onto its limit cycle.

The chain here is short so the script finishes in a few minutes; the
coefficient estimates come from the MAP point.
"""

import numpy as np

from bayesid.experiments import fit_bayes, vdp_problem
from bayesid.prediction import rollout_batch, theta_estimators
from bayesid.models import DictionaryLibrary, simulate_truth, uniform_grid

p = vdp_problem(n=2000, sigma=1e-3, seed=0)
labels = DictionaryLibrary.polynomial(2, 3).labels
dyn = p.model.partition.dyn

# %% the sparse-regression initial guess next to the truth
print("term       SINDy x1'  SINDy x2'   true x1'   true x2'")
n_terms = (dyn.stop - dyn.start) // 2
init = p.theta_init[dyn].reshape(2, n_terms).T
true = p.theta_true[dyn].reshape(2, n_terms).T
for i in range(n_terms):
    print(f"{labels[i]:9s} {init[i, 0]:10.4f} {init[i, 1]:10.4f} "
          f"{true[i, 0]:10.4f} {true[i, 1]:10.4f}")

# %% MAP search and a short chain
fit = fit_bayes(p.handle, p.theta_init, n_samples=2000, seed=9, max_evals=3000)
theta = theta_estimators(fit.chain)["theta_map"]
coef = theta[dyn].reshape(2, n_terms).T
nz = true != 0
print("MAP coefficients on the true support:", coef[nz].round(3))
print("relative error:", np.abs(coef[nz] / true[nz] - 1).round(4))

# %% limit cycle of the identified model
times = uniform_grid(int(round(100 / p.model.dt)) + 1, p.model.dt)
est = rollout_batch(p.model, theta[dyn][None, :], p.truth_spec.x0, times, 0.0)[0]
ref = simulate_truth(p.truth_spec, times).states
tail = times >= 50
print("limit-cycle amplitude, identified:", np.abs(est[tail]).max(axis=0).round(3))
print("limit-cycle amplitude, truth:     ", np.abs(ref[tail]).max(axis=0).round(3))
