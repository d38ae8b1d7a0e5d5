"""Uniform rectangular grids, collocation points and boundary conditions.

Cell arrays are stored as (ny, nx); flattening is row-major by y then x.
"""

from dataclasses import dataclass, field

import numpy as np

EDGES = ("left", "right", "bottom", "top")
_NORMALS = {"left": (-1.0, 0.0), "right": (1.0, 0.0), "bottom": (0.0, -1.0), "top": (0.0, 1.0)}


@dataclass(frozen=True)
class Grid2D:
    x0: float
    x1: float
    y0: float
    y1: float
    nx: int
    ny: int

    @property
    def hx(self):
        return (self.x1 - self.x0) / self.nx

    @property
    def hy(self):
        return (self.y1 - self.y0) / self.ny

    @property
    def n_cells(self):
        return self.nx * self.ny

    @property
    def cell_area(self):
        return self.hx * self.hy

    @property
    def box(self):
        return [[self.x0, self.x1], [self.y0, self.y1]]

    @property
    def edge_length(self):
        # characteristic length used by the energy weights
        return max(self.x1 - self.x0, self.y1 - self.y0)

    def xc(self):
        return self.x0 + (np.arange(self.nx) + 0.5) * self.hx

    def yc(self):
        return self.y0 + (np.arange(self.ny) + 0.5) * self.hy

    def centers(self):
        """Cell centers, (ny*nx) x 2, row-major by y then x."""
        X, Y = np.meshgrid(self.xc(), self.yc())
        return np.column_stack([X.ravel(), Y.ravel()])

    def edge_points(self, edge):
        """Face midpoints along one boundary edge."""
        if edge == "left":
            return np.column_stack([np.full(self.ny, self.x0), self.yc()])
        if edge == "right":
            return np.column_stack([np.full(self.ny, self.x1), self.yc()])
        if edge == "bottom":
            return np.column_stack([self.xc(), np.full(self.nx, self.y0)])
        if edge == "top":
            return np.column_stack([self.xc(), np.full(self.nx, self.y1)])
        raise ValueError(f"unknown edge {edge!r}")

    def edge_face_length(self, edge):
        return self.hy if edge in ("left", "right") else self.hx

    def refine(self, factor):
        return Grid2D(self.x0, self.x1, self.y0, self.y1, self.nx * factor, self.ny * factor)


def edge_normal(edge):
    return np.array(_NORMALS[edge])


@dataclass
class EdgeBC:
    """Boundary data on one edge.

    kind 'pressure' prescribes p (Pa); kind 'flux' prescribes the outward mass
    flux q.n (kg m^-2 s^-1). ``value`` is a number or a callable f(x, y, t).
    """
    kind: str
    value: object = 0.0

    def __post_init__(self):
        if self.kind not in ("pressure", "flux"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")

    def evaluate(self, pts, t):
        if callable(self.value):
            return np.asarray(self.value(pts[:, 0], pts[:, 1], t), dtype=float) * np.ones(len(pts))
        return np.full(len(pts), float(self.value))


@dataclass
class InflowSchedule:
    """Tracer concentration entering through one edge during [start, end]."""
    value: float
    start: float = 0.0
    end: float = np.inf

    def at(self, t):
        return self.value if self.start <= t <= self.end * (1 + 1e-12) else 0.0

    def mean(self, t0, t1):
        """Average concentration over [t0, t1]; implicit steps inject this."""
        if t1 <= t0:
            return self.at(t1)
        overlap = max(0.0, min(t1, self.end) - max(t0, self.start))
        return self.value * overlap / (t1 - t0)


@dataclass
class BoundaryConditions:
    edges: dict
    inflow: dict = field(default_factory=dict)

    def __post_init__(self):
        missing = [e for e in EDGES if e not in self.edges]
        if missing:
            raise ValueError(f"no boundary condition on edge(s) {missing}")

    def tracer(self, edge, t0, t1=None):
        """Inflow concentration on an edge, averaged over [t0, t1] when given,
        or None if the edge has no inflow schedule."""
        sched = self.inflow.get(edge)
        if sched is None:
            return None
        return sched.at(t0) if t1 is None else sched.mean(t0, t1)


@dataclass
class CollocationSet:
    """Interior points at cell centers plus boundary points at face midpoints."""
    grid: Grid2D
    interior: np.ndarray
    interior_measure: np.ndarray
    boundary: np.ndarray
    boundary_normal: np.ndarray
    boundary_measure: np.ndarray
    boundary_edge: np.ndarray        # edge index into EDGES

    @property
    def n_interior(self):
        return self.interior.shape[0]

    @property
    def n_boundary(self):
        return self.boundary.shape[0]

    @property
    def spacing(self):
        return min(self.grid.hx, self.grid.hy)

    def edge_mask(self, edge):
        return self.boundary_edge == EDGES.index(edge)


def collocation_points(grid: Grid2D):
    pts, nrm, meas, tag = [], [], [], []
    for k, e in enumerate(EDGES):
        p = grid.edge_points(e)
        pts.append(p)
        nrm.append(np.tile(edge_normal(e), (len(p), 1)))
        meas.append(np.full(len(p), grid.edge_face_length(e)))
        tag.append(np.full(len(p), k))
    return CollocationSet(grid, grid.centers(), np.full(grid.n_cells, grid.cell_area),
                          np.vstack(pts), np.vstack(nrm), np.concatenate(meas),
                          np.concatenate(tag))
