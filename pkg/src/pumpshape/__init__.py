"""Simulation of turbulence compensation for photon pairs by shaping their pump beam."""

__version__ = "0.1.0"
