"""Impedance-control simulator and port-Hamiltonian benchmark metrics."""

__version__ = "0.1.0"
