"""Simulation of a qubit-array single-photon wave-front detector."""

__version__ = "0.1.0"
