"""Shared scenario definitions for the scripts and the acceptance suite."""
import numpy as np

from chemosim.grid import build_grid
from chemosim.model import InitialData, ModelParams


def standard(n=64, ell=0.0, center=(0.5, 0.5), width=0.1):
    """Gaussian population with floor 0.1 on a uniform nutrient."""
    g = build_grid(n, n)
    X, Y = g.centers()
    u0 = 0.1 + np.exp(-((X - center[0]) ** 2 + (Y - center[1]) ** 2) / (2 * width ** 2))
    return g, InitialData(u0, np.ones(g.shape)), ModelParams(m=2.0, alpha=1.5, ell=ell)


def constant(n=32, u=1.0, v=1.0, ell=0.0, epsilon=1e-3):
    g = build_grid(n, n)
    return g, InitialData(np.full(g.shape, u), np.full(g.shape, v)), ModelParams(m=2.0, alpha=1.5, ell=ell,
                                                                                  epsilon=epsilon)


def nutrient_patch(n=32, ell=0.0):
    """Off-center population next to a nutrient patch: taxis is active from t=0."""
    g = build_grid(n, n)
    X, Y = g.centers()
    u0 = 0.1 + np.exp(-((X - 0.35) ** 2 + (Y - 0.4) ** 2) / (2 * 0.1 ** 2))
    v0 = 0.5 + np.exp(-((X - 0.7) ** 2 + (Y - 0.6) ** 2) / (2 * 0.15 ** 2))
    return g, InitialData(u0, v0), ModelParams(m=2.0, alpha=1.5, ell=ell)
