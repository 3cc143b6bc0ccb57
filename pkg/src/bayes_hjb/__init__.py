"""Bayesian bandits through their continuous-time HJB limit.

Modules:
    bandit_core  environments, rewards, conjugate posteriors
    exact_dp     Bayes-optimal backward induction (ground truth)
    hjb_model    limiting drift/diffusion and state rescaling
    hjb_solver   finite-difference HJB solvers
    policies     closed-form, grid, Thompson and UCB arm selection
    harness      episode simulation, regret sweeps, convergence studies
"""
__version__ = "0.1.0"
