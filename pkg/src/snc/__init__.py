"""Stochastic network calculus: min-plus curves, tail bounds, models,
bound calculus, sigma-rho traffic characterization and a Monte-Carlo
validator."""

__version__ = "0.1.0"
