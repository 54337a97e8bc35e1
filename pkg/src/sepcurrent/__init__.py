"""Simple exclusion process with current reservoirs: particle simulation and
macroscopic solvers for its stationary profile."""

from ._accel import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
