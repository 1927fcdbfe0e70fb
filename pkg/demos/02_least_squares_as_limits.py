"""
Least-squares identification as a noiseless limit
=================================================

Dropping measurement noise from the state-space model turns the marginal
likelihood into a product of one-step transition densities.  For a linear
model its maximizer is the DMD operator; for an Euler-stepped dictionary
model with a Laplace prior the negative log posterior is, up to scale and
an additive constant, the SINDy lasso objective.
"""

import numpy as np
from scipy.optimize import minimize

from bayesid.baselines import SnapshotPair, dmd_fit, sindy_objective
from bayesid.filters import noiseless_loglik
from bayesid.models import DictionaryLibrary, ObservationSet, make_model, uniform_grid
from bayesid.posterior import Laplace, PosteriorHandle, PriorSpec

rng = np.random.default_rng(0)

# %% DMD maximizes the noiseless likelihood
d, n = 3, 50
A = rng.normal(size=(d, d))
A *= 0.95 / np.max(np.abs(np.linalg.eigvals(A)))
X = np.empty((n, d))
X[0] = rng.normal(size=d)
for k in range(1, n):
    X[k] = A @ X[k - 1] + 0.05 * rng.normal(size=d)

model = make_model("LinearMatrix", {"d": d, "dt": 1.0})
data = ObservationSet(np.arange(float(n)), X)
negll = lambda a: -noiseless_loglik(model, np.concatenate([a, [1.0, 1.0]]), data)  # noqa
A_opt = minimize(negll, np.zeros(d * d), method="BFGS",
                 options={"gtol": 1e-10}).x.reshape(d, d)
A_dmd = dmd_fit(SnapshotPair.from_states(X))
print("max |argmax noiseless likelihood - DMD| =", np.abs(A_opt - A_dmd).max())

# %% the SINDy objective is a rescaled log posterior
dt, lam = 0.05, 0.3
lib = DictionaryLibrary.polynomial(1, 2)
t = uniform_grid(20, dt)
x = 1.0 / (1.0 + 9.0 * np.exp(-3.0 * t)) + 1e-3 * rng.normal(size=20)
euler = make_model("EulerDictionary", {
    "d": 1, "dt": dt, "library": lib,
    # process covariance dt I gives the dt/2 scale between the two objectives
    "proc_cov": {"kind": "fixed", "value": dt}, "meas_cov": {"kind": "fixed", "value": 1.0}})
handle = PosteriorHandle(euler, ObservationSet(t, x[:, None]),
                         PriorSpec([Laplace(lam * dt / 2)] * lib.n_terms), kind="Noiseless")

gaps = [-(2 / dt) * handle(th) - sindy_objective(th, x[:, None], dt, lib, lam)
        for th in rng.normal(size=(10, lib.n_terms))]
print("(2/dt)(-log posterior) - J_SINDy over 10 random theta:", np.round(gaps, 8))
print("spread:", np.ptp(gaps))
