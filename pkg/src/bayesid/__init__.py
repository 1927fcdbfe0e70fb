"""Bayesian identification of dynamical systems.

Filter-based marginal likelihoods (Kalman and unscented) are combined with a
delayed-rejection adaptive Metropolis sampler and compared against
least-squares baselines (DMD, TLS-DMD, SINDy).
"""

__version__ = "0.1.0"
