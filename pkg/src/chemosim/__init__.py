"""Finite-volume simulation and estimate checking for a doubly degenerate
chemotaxis-consumption system on a rectangle."""
from .grid import Grid, build_grid, integrate, neumann_laplacian, sup_norm
from .model import ClassificationError, FLaw, InitialData, ModelParams, classify, f_eval, regularize_initial
from .solver import Schedule, SimState, SolverAbort, StopRule, Trajectory, advance, stable_dt, step_u, step_v

__version__ = "0.1.0"
