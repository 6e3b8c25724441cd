"""Numerical engine: spectral basis, delay terms, time stepping and diagnostics."""
