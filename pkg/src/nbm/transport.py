"""Implicit upwind control-volume transport projected onto a frozen
concentration basis.

Each substep solves the least-squares problem

    min || M Phi_c theta - (eps |K| / dt) c_prev - inflow ||

where M is the first-order upwind operator on the cell mesh (see
``upwind.build_upwind_operator``). Within one Darcy step the face velocities
are frozen, so A_up = M Phi_c is factorized once and reused by all substeps.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisConfig, BasisParams, evaluate_basis, init_basis
from .geometry import EDGES, BoundaryConditions, Grid2D, edge_normal
from .linalg import FactoredLsq
from .upwind import UpwindOperator, boundary_cells, boundary_outward_velocity, build_upwind_operator

log = logging.getLogger(__name__)


@dataclass
class TransportMesh:
    """Uniform cell mesh; cell centers coincide with the interior collocation points."""
    grid: Grid2D

    @property
    def n_cells(self):
        return self.grid.n_cells

    @property
    def cell_area(self):
        return self.grid.cell_area

    def faces(self):
        """All faces as (owner, neighbor, normal, measure); neighbor is -1 on
        the boundary and the normal points from owner to neighbor (outward
        on the boundary)."""
        g = self.grid
        idx = np.arange(g.n_cells).reshape(g.ny, g.nx)
        own, nbr, nrm, meas = [], [], [], []
        L, R = idx[:, :-1].ravel(), idx[:, 1:].ravel()
        own.append(L); nbr.append(R)
        nrm.append(np.tile([1.0, 0.0], (L.size, 1))); meas.append(np.full(L.size, g.hy))
        B, T = idx[:-1, :].ravel(), idx[1:, :].ravel()
        own.append(B); nbr.append(T)
        nrm.append(np.tile([0.0, 1.0], (B.size, 1))); meas.append(np.full(B.size, g.hx))
        for e in EDGES:
            cells = boundary_cells(g, e)
            own.append(cells); nbr.append(np.full(cells.size, -1))
            nrm.append(np.tile(edge_normal(e), (cells.size, 1)))
            meas.append(np.full(cells.size, g.edge_face_length(e)))
        return (np.concatenate(own), np.concatenate(nbr), np.vstack(nrm), np.concatenate(meas))

    def normal_sums(self):
        """Per-cell sum of |f| n over its faces (zero for closed cells)."""
        own, nbr, nrm, meas = self.faces()
        out = np.zeros((self.n_cells, 2))
        np.add.at(out, own, nrm * meas[:, None])
        inner = nbr >= 0
        np.add.at(out, nbr[inner], -nrm[inner] * meas[inner, None])
        return out


def _as_cell_array(u, grid):
    u = np.asarray(u, dtype=float)
    if u.shape == (grid.n_cells, 2):
        u = u.reshape(grid.ny, grid.nx, 2)
    if u.shape != (grid.ny, grid.nx, 2):
        raise ValueError(f"cell velocity must be ({grid.n_cells}, 2) or ({grid.ny}, {grid.nx}, 2), got {u.shape}")
    return u


def freeze_face_velocities(u_cells, mesh: TransportMesh, boundary=None):
    """Face normal velocities from cell-center velocities.

    Interior faces take the two-point average. Boundary faces take the
    adjacent cell value unless ``boundary`` maps an edge name to prescribed
    outward normal velocities on that edge's faces.

    Returns ``ux`` (ny, nx+1) and ``uy`` (ny+1, nx), signed along +x / +y.
    """
    g = mesh.grid
    u = _as_cell_array(u_cells, g)
    ux = np.empty((g.ny, g.nx + 1))
    uy = np.empty((g.ny + 1, g.nx))
    ux[:, 1:-1] = 0.5 * (u[:, :-1, 0] + u[:, 1:, 0])
    uy[1:-1, :] = 0.5 * (u[:-1, :, 1] + u[1:, :, 1])
    ux[:, 0], ux[:, -1] = u[:, 0, 0], u[:, -1, 0]
    uy[0, :], uy[-1, :] = u[0, :, 1], u[-1, :, 1]
    for e, un in (boundary or {}).items():
        un = np.asarray(un, dtype=float)
        if e == "left":
            ux[:, 0] = -un
        elif e == "right":
            ux[:, -1] = un
        elif e == "bottom":
            uy[0, :] = -un
        elif e == "top":
            uy[-1, :] = un
        else:
            raise ValueError(f"unknown edge {e!r}")
    return ux, uy


def flux_bc_velocities(grid: Grid2D, bcs: BoundaryConditions, rho_cells, t):
    """Outward normal velocity g / rho on every flux edge, with rho from the
    adjacent cells."""
    rho = np.asarray(rho_cells, dtype=float).ravel()
    out = {}
    for e in EDGES:
        bc = bcs.edges[e]
        if bc.kind == "flux":
            out[e] = bc.evaluate(grid.edge_points(e), t) / rho[boundary_cells(grid, e)]
    return out


@dataclass
class UpwindSystem:
    A_up: np.ndarray
    b_up: np.ndarray
    ux: np.ndarray
    uy: np.ndarray
    op: UpwindOperator


def assemble_upwind_system(Phi_c, mesh: TransportMesh, ux, uy, eps, dt, c_prev, c_in) -> UpwindSystem:
    """Upwind rows projected onto the concentration basis.

    ``c_prev`` holds previous cell values; ``c_in`` maps edge -> inflow
    concentration (dict or callable). Missing data on an edge with inflow
    faces raises ``ValueError``.
    """
    op = build_upwind_operator(mesh.grid, ux, uy, eps, dt)
    A = np.asarray(op.matrix @ Phi_c)
    b = op.rhs(np.asarray(c_prev, dtype=float).ravel(), c_in)
    return UpwindSystem(A, b, ux, uy, op)


@dataclass
class ConcentrationState:
    theta: np.ndarray
    time: float
    c: np.ndarray                       # cell values Phi_c theta
    e_rel: list = field(default_factory=list)
    history: list = field(default_factory=list)    # coefficients after each substep


@dataclass
class NbmTransportConfig:
    nb: int = 1000
    n_layers: int = 2
    seed: int = 37
    deep_shape_factor: float = 0.3
    face_velocity: str = "bc"           # "bc": flux edges use g / rho; "average": adjacent cell value
    basis_kwargs: dict = field(default_factory=dict)

    def basis_config(self, box):
        kw = dict(self.basis_kwargs)
        kw.setdefault("shape_factors", [1.0] + [self.deep_shape_factor] * (self.n_layers - 1))
        return BasisConfig(2, [self.nb] * self.n_layers, box, seed=self.seed,
                           include_constant=True, **kw)


class NbmTransport:
    def __init__(self, grid: Grid2D, config: NbmTransportConfig = None, basis: BasisParams = None):
        self.cfg = cfg = config or NbmTransportConfig()
        self.mesh = TransportMesh(grid)
        self.basis = basis if basis is not None else init_basis(cfg.basis_config(grid.box))
        self.Phi = evaluate_basis(self.basis, grid.centers(), "values").values
        self._proj = None

    def project(self, c_cells, t0=0.0):
        """L2 projection of cell values onto the basis."""
        c = np.broadcast_to(np.asarray(c_cells, dtype=float), (self.mesh.n_cells,)) \
            if np.ndim(c_cells) == 0 else np.asarray(c_cells, dtype=float).ravel()
        if self._proj is None:
            self._proj = FactoredLsq(self.Phi)
        theta = self._proj.solve(c)
        return ConcentrationState(theta, t0, self.Phi @ theta)

    def face_velocities(self, u_cells, bcs=None, rho_cells=None, t=None):
        boundary = None
        if self.cfg.face_velocity == "bc":
            if bcs is None or rho_cells is None:
                raise ValueError("face_velocity='bc' needs boundary conditions and cell densities")
            boundary = flux_bc_velocities(self.mesh.grid, bcs, rho_cells, t)
        return freeze_face_velocities(u_cells, self.mesh, boundary)

    def advance(self, state: ConcentrationState, u_cells, dT, n_sub, bcs: BoundaryConditions, eps,
                rho_cells=None):
        """Substeps over one Darcy step with the velocity frozen."""
        if n_sub < 1:
            raise ValueError("n_sub must be at least 1")
        dt = dT / n_sub
        ux, uy = self.face_velocities(u_cells, bcs, rho_cells, state.time + dT)
        op = build_upwind_operator(self.mesh.grid, ux, uy, eps, dt)
        A = np.asarray(op.matrix @ self.Phi)
        lsq = FactoredLsq(A)
        theta, c = state.theta, state.c
        series, hist = [], []
        for m in range(n_sub):
            ta, tb = state.time + m * dt, state.time + (m + 1) * dt
            b = op.rhs(c, lambda e: bcs.tracer(e, ta, tb))
            try:
                theta = lsq.solve(b)
            except (np.linalg.LinAlgError, ValueError) as exc:
                raise np.linalg.LinAlgError(f"transport substep {m} failed: {exc}") from exc
            series.append(lsq.e_rel(theta, b))
            hist.append(theta)
            c = self.Phi @ theta
        self.last_operator = op
        return ConcentrationState(theta, state.time + dT, c, series, hist)


def advance_transport(solver: NbmTransport, state, u_cells, n_sub, dT, bcs, eps, rho_cells=None):
    return solver.advance(state, u_cells, dT, n_sub, bcs, eps, rho_cells)


def boundary_budget(op: UpwindOperator, grid: Grid2D, ux, uy, c_new, c_in):
    """Net inflow minus outflow of tracer over one substep, per unit time."""
    inflow = 0.0
    for e, (cells, rates) in op.inflow_edges.items():
        val = c_in(e) if callable(c_in) else c_in.get(e)
        if val is not None:
            inflow += float(np.sum(rates * val))
    out = 0.0
    c = np.asarray(c_new).ravel()
    for e in EDGES:
        un = boundary_outward_velocity(grid, ux, uy, e)
        out += float(np.sum(np.maximum(un, 0.0) * grid.edge_face_length(e) * c[boundary_cells(grid, e)]))
    return inflow - out

