"""Numerical laboratory for the stochastic heat equation on the torus [-1, 1].

Modules
-------
fields        grid, grid functions, norms and the log-oscillation
torus_kernel  periodic heat kernel, semigroup and the kernel lemma checks
noise         counter-based space-time white noise with exact time shifts
solver        log-mass renormalised time stepping and pathwise checks
lyapunov      closed-form exponent by quadrature, slope/subadditive/CLT estimators
harness       configuration, ensembles, experiments, records and the CLI
"""

__version__ = "0.1.0"
