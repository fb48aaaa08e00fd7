"""Dyson-term engineering with Van Loan block propagation."""

__version__ = "0.1.0"
