"""Convergence certificates for distributed gradient tracking via dissipativity LMIs."""

__version__ = "0.1.0"
