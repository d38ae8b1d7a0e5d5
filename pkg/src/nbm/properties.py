"""Fluid and rock properties shared by the NBM and finite-volume solvers."""

from dataclasses import dataclass

import numpy as np

from .geometry import Grid2D


@dataclass(frozen=True)
class FluidProps:
    """mu [Pa s], c_f [1/Pa], rho0 [kg/m^3] at p0 [Pa], porosity eps."""
    mu: float
    c_f: float
    rho0: float
    p0: float
    eps: float

    def __post_init__(self):
        if self.mu <= 0 or self.rho0 <= 0 or self.c_f < 0:
            raise ValueError("viscosity and reference density must be positive, c_f >= 0")
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"porosity {self.eps} outside (0, 1)")

    def density(self, p):
        return self.rho0 * (1.0 + self.c_f * (np.asarray(p) - self.p0))


class PermeabilityField:
    """Cellwise constant permeability (m^2) on a grid, values stored (ny, nx)."""

    def __init__(self, grid: Grid2D, values):
        v = np.asarray(values, dtype=float)
        if v.shape != (grid.ny, grid.nx):
            v = np.broadcast_to(v, (grid.ny, grid.nx)).copy()
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("permeability must be positive and finite")
        self.grid = grid
        self.values = v

    @property
    def mean(self):
        return float(self.values.mean())

    @property
    def geometric_mean(self):
        return float(np.exp(np.log(self.values).mean()))

    @property
    def contrast(self):
        return float(self.values.max() / self.values.min())

    def sample(self, pts):
        """Value of the cell containing each point (edges clip inward)."""
        g = self.grid
        pts = np.atleast_2d(pts)
        i = np.clip(np.floor((pts[:, 0] - g.x0) / g.hx).astype(int), 0, g.nx - 1)
        j = np.clip(np.floor((pts[:, 1] - g.y0) / g.hy).astype(int), 0, g.ny - 1)
        return self.values[j, i]

    def resample(self, grid: Grid2D):
        """Piecewise-constant transfer onto another grid over the same box."""
        return PermeabilityField(grid, self.sample(grid.centers()).reshape(grid.ny, grid.nx))
