"""
Objective landscapes for the pendulum frequency
===============================================

The pendulum generator [[0, theta1], [theta2, 0]] is identified on a grid.
Three objectives are compared as the amount of data grows: the one-step
least-squares residual (no measurement noise), the full-trajectory residual
(no process noise) and the Kalman log posterior.  The truth is (1, -9.81).

First, the cost of fitting a frequency to a cosine over a long window
shows why trajectory fits become rugged.
"""

import numpy as np

from bayesid.experiments import (LandscapeConfig, landscape_optimum, ls_frequency_cost,
                                 objective_landscape, pendulum_data)

# %% least squares in the frequency: nearby and distant guesses
for T in (10, 1000):
    print(f"T={T:5d}: J(2.01)={ls_frequency_cost(2.01, T):9.2f}   "
          f"J(4.00)={ls_frequency_cost(4.00, T):9.2f}")

# %% landscapes on a coarse grid
t1 = np.linspace(0, 3, 61)
t2 = np.linspace(-15, 0, 61)
cfg = LandscapeConfig()
for n in (20, 40, 80):
    data, _ = pendulum_data(n, cfg.dt, sigma=0.1, seed=0)
    line = [f"n={n:3d}"]
    for obj, maximize in [("NoMeasurementNoise", False), ("NoProcessNoise", False),
                          ("LogPosterior", True)]:
        vals = objective_landscape(obj, t1, t2, data, cfg)
        a, b = landscape_optimum(vals, t1, t2, maximize)
        line.append(f"{obj}: ({a:.2f}, {b:.2f})")
    print("   ".join(line))
