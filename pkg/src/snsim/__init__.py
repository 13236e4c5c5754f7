"""Simulation and analysis of squeezed-light-enhanced spin noise spectroscopy."""

__version__ = "0.1.0"
