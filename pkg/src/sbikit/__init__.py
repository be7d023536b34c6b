"""Simulation-based inference engine.

Workflow: simulate training data, train a neural density or ratio
estimator, sample the posterior (directly or via MCMC), validate with
calibration diagnostics, and analyze the result.
"""

__version__ = "0.1.0"
