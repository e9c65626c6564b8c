"""Excitation transfer between emitter ensembles in a waveguide: full
master-equation, permutation-symmetric and analytic dark-state solvers."""

__version__ = "0.1.0"
