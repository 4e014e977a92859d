"""Vapour/solid interface simulator and droplet phase-diagram solver."""

__version__ = "0.1.0"
