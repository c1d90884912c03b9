"""Distributed majorization-minimization for sensor network localization."""

from .cost import StateZ, cost_original, cost_z, grad_z, reduce_to_x
from .graph import (ConnectivityError, Measurements, Network, NetworkFileError,
                    degree_stats, generate_geometric_network, generate_measurements,
                    load_network, save_network)
from .mm import RunTrace, SolverConfig, lipschitz_bound, mm_step, solve
from .projections import project_sphere

__version__ = "0.1.0"
