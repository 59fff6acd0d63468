"""Pressure-based soft agents: simulation, control, tasks, and optimization."""

__version__ = "0.1.0"
