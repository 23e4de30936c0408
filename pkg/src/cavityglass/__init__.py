"""Quantum-trajectory and mean-field simulation of spin glasses in a confocal cavity."""

__version__ = "0.1.0"
