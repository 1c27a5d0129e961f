"""Simulators for adiabatic and non-adiabatic metadynamics."""

__version__ = "0.1.0"
