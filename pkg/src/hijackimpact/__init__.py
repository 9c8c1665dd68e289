"""Simulation and estimation of BGP prefix-hijack impact."""

__version__ = "0.1.0"
