"""Uniform cell-centered rectangular mesh and the discrete calculus on it.

Fields are numpy arrays of shape ``(ny, nx)``; flattening in C order gives the
row-major index ``i + nx*j`` used by the snapshot files.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    Lx: float
    Ly: float

    def __post_init__(self):
        if not all(isinstance(n, (int, np.integer)) for n in (self.nx, self.ny)):
            raise ValueError("cell counts must be integers")
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"need nx, ny >= 4, got ({self.nx}, {self.ny})")
        if not (self.Lx > 0 and self.Ly > 0) or not np.isfinite([self.Lx, self.Ly]).all():
            raise ValueError(f"extents must be positive, got ({self.Lx}, {self.Ly})")

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.Lx * self.Ly

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates as two ``(ny, nx)`` arrays."""
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y)

    def x_faces(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates of x-face centers, shape ``(ny, nx+1)``."""
        x = np.arange(self.nx + 1) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y)

    def y_faces(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates of y-face centers, shape ``(ny+1, nx)``."""
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = np.arange(self.ny + 1) * self.hy
        return np.meshgrid(x, y)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise ValueError(f"field shape {f.shape} does not match grid {self.shape}")
        return f


@dataclass(frozen=True)
class FaceField:
    """Values on x-faces ``(ny, nx+1)`` and y-faces ``(ny+1, nx)``.

    Boundary faces hold zero, which is how the no-flux condition is encoded.
    """

    x: np.ndarray
    y: np.ndarray


def build_grid(nx: int, ny: int, Lx: float = 1.0, Ly: float = 1.0) -> Grid:
    return Grid(nx, ny, float(Lx), float(Ly))


def integrate(f: np.ndarray, grid: Grid) -> float:
    """Midpoint rule; exact for cellwise-constant fields."""
    return float(np.sum(grid.check(f)) * grid.cell_area)


def sup_norm(f: np.ndarray) -> float:
    return float(np.max(np.abs(f)))


def face_gradient(f: np.ndarray, grid: Grid) -> FaceField:
    f = grid.check(f)
    gx = np.zeros((grid.ny, grid.nx + 1))
    gy = np.zeros((grid.ny + 1, grid.nx))
    gx[:, 1:-1] = (f[:, 1:] - f[:, :-1]) / grid.hx
    gy[1:-1, :] = (f[1:, :] - f[:-1, :]) / grid.hy
    return FaceField(gx, gy)


def divergence(flux: FaceField, grid: Grid) -> np.ndarray:
    return (flux.x[:, 1:] - flux.x[:, :-1]) / grid.hx + (flux.y[1:, :] - flux.y[:-1, :]) / grid.hy


def neumann_laplacian(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Five-point Laplacian with zero normal flux on every boundary face."""
    return divergence(face_gradient(f, grid), grid)


def cell_gradient_sq(f: np.ndarray, grid: Grid) -> np.ndarray:
    """|grad f|^2 at cell centers, averaging the squared gradients of the two
    faces bounding the cell in each direction."""
    g = face_gradient(f, grid)
    return 0.5 * (g.x[:, 1:] ** 2 + g.x[:, :-1] ** 2) + 0.5 * (g.y[1:, :] ** 2 + g.y[:-1, :] ** 2)


# snapshot files -------------------------------------------------------------

def write_snapshot(path: str | Path, f: np.ndarray, grid: Grid, t: float) -> None:
    """CSV: one header line ``# nx,ny,Lx,Ly,t`` (values), then one row per j."""
    f = grid.check(f)
    lines = [f"# {grid.nx},{grid.ny},{grid.Lx!r},{grid.Ly!r},{float(t)!r}"]
    for row in f:
        lines.append(",".join(format(x, ".17g") for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_snapshot(path: str | Path) -> tuple[np.ndarray, Grid, float]:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise ValueError(f"{path}: missing snapshot header")
    nx, ny, Lx, Ly, t = text[0][1:].split(",")
    grid = Grid(int(nx), int(ny), float(Lx), float(Ly))
    values = np.array([[float(x) for x in line.split(",")] for line in text[1:] if line.strip()])
    return grid.check(values), grid, float(t)
