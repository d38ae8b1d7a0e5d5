"""Implicit first-order upwind control-volume operator on a uniform grid.

Face velocities are stored as ``ux`` (ny, nx+1), the velocity along +x on
x-faces, and ``uy`` (ny+1, nx) along +y on y-faces.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import Grid2D


@dataclass
class UpwindOperator:
    matrix: sp.csr_matrix      # M with M c^{m+1} = acc * c^m + inflow(c_in)
    acc: float                 # eps |K| / dt
    inflow_rate: np.ndarray    # per cell, sum of |u.n| |f| over inflow boundary faces
    inflow_edges: dict         # edge -> (cells, rates)

    def rhs(self, c_prev, c_in):
        """Right-hand side for previous cell values and edge inflow values."""
        b = self.acc * np.asarray(c_prev, dtype=float).copy()
        for edge, (cells, rates) in self.inflow_edges.items():
            val = c_in.get(edge) if isinstance(c_in, dict) else c_in(edge)
            if val is None:
                if np.any(rates > 0):
                    raise ValueError(f"missing inflow concentration on inflow faces of edge {edge!r}")
                continue
            np.add.at(b, cells, rates * val)
        return b


def boundary_cells(grid: Grid2D, edge):
    nx, ny = grid.nx, grid.ny
    if edge == "left":
        return np.arange(ny) * nx
    if edge == "right":
        return np.arange(ny) * nx + nx - 1
    if edge == "bottom":
        return np.arange(nx)
    if edge == "top":
        return (ny - 1) * nx + np.arange(nx)
    raise ValueError(edge)


def boundary_outward_velocity(grid, ux, uy, edge):
    if edge == "left":
        return -ux[:, 0]
    if edge == "right":
        return ux[:, -1]
    if edge == "bottom":
        return -uy[0, :]
    return uy[-1, :]


def build_upwind_operator(grid: Grid2D, ux, uy, eps, dt):
    nx, ny = grid.nx, grid.ny
    n = grid.n_cells
    acc = eps * grid.cell_area / dt
    idx = np.arange(n).reshape(ny, nx)
    fx, fy = grid.hy, grid.hx
    diag = np.full(n, acc)
    rows, cols, vals = [], [], []

    # interior x-faces between (j, i-1) and (j, i)
    u = ux[:, 1:-1]
    L, R = idx[:, :-1].ravel(), idx[:, 1:].ravel()
    pos = np.maximum(u.ravel(), 0.0) * fx
    neg = np.minimum(u.ravel(), 0.0) * fx
    np.add.at(diag, L, pos)
    np.add.at(diag, R, -neg)
    rows += [R, L]
    cols += [L, R]
    vals += [-pos, neg]

    v = uy[1:-1, :]
    B, T = idx[:-1, :].ravel(), idx[1:, :].ravel()
    pos = np.maximum(v.ravel(), 0.0) * fy
    neg = np.minimum(v.ravel(), 0.0) * fy
    np.add.at(diag, B, pos)
    np.add.at(diag, T, -neg)
    rows += [T, B]
    cols += [B, T]
    vals += [-pos, neg]

    inflow = {}
    for edge in ("left", "right", "bottom", "top"):
        un = boundary_outward_velocity(grid, ux, uy, edge)
        flen = grid.edge_face_length(edge)
        cells = boundary_cells(grid, edge)
        np.add.at(diag, cells, np.maximum(un, 0.0) * flen)
        inflow[edge] = (cells, -np.minimum(un, 0.0) * flen)

    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    M = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    rate = np.zeros(n)
    for cells, r in inflow.values():
        np.add.at(rate, cells, r)
    return UpwindOperator(M, acc, rate, inflow)

