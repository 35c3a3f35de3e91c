"""Exact and Monte Carlo tools for block dynamics of lattice spin systems."""

from ._accel import BACKEND
from .lattice import build_cube, build_tilings, even_odd_partition
from .measures import SpinSystem, gibbs_distribution
from .models import BoundaryCondition, coloring, hardcore, ising, potts

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BoundaryCondition", "SpinSystem", "build_cube", "build_tilings", "coloring",
    "even_odd_partition", "gibbs_distribution", "hardcore", "ising", "potts",
]
