"""Two-point flux finite volumes for compressible Darcy flow and implicit
upwind transport. Serves as baseline and as an oracle for the NBM solvers."""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import EDGES, BoundaryConditions, Grid2D
from .properties import FluidProps, PermeabilityField
from .upwind import boundary_cells, build_upwind_operator

log = logging.getLogger(__name__)

DIRECT_LIMIT = 250_000


@dataclass
class FvmFlowState:
    """Converged flow state at one time level.

    ``Fx`` (ny, nx+1) and ``Fy`` (ny+1, nx) are face mass fluxes [kg/s] along
    +x and +y; ``rho_x``/``rho_y`` the face densities used to form them.
    """
    time: float
    p: np.ndarray
    Fx: np.ndarray
    Fy: np.ndarray
    rho_x: np.ndarray
    rho_y: np.ndarray
    picard_iterations: int = 0
    converged: bool = True

    def face_velocity(self, grid):
        ux = self.Fx / (self.rho_x * grid.hy)
        uy = self.Fy / (self.rho_y * grid.hx)
        return ux, uy


@dataclass
class FvmGrid:
    grid: Grid2D
    perm: PermeabilityField
    props: FluidProps
    bcs: BoundaryConditions
    solver: str = "direct"
    picard_tol: float = 1e-8
    picard_max: int = 50
    linear_tol: float = 1e-10
    _amg: object = field(default=None, repr=False)

    def __post_init__(self):
        g, k = self.grid, self.perm.values
        mu = self.props.mu
        kh_x = 2.0 * k[:, :-1] * k[:, 1:] / (k[:, :-1] + k[:, 1:])
        kh_y = 2.0 * k[:-1, :] * k[1:, :] / (k[:-1, :] + k[1:, :])
        # transmissibilities without density, |f| kappa_h / (mu d)
        self.Tx = kh_x * g.hy / (mu * g.hx)
        self.Ty = kh_y * g.hx / (mu * g.hy)
        self.Tb = {}
        for e in EDGES:
            cells = boundary_cells(g, e)
            kc = k.ravel()[cells]
            d = 0.5 * (g.hx if e in ("left", "right") else g.hy)
            self.Tb[e] = kc * g.edge_face_length(e) / (mu * d)

    # ---------------------------------------------------------------- flow
    def _boundary_data(self, t):
        out = {}
        for e in EDGES:
            bc = self.bcs.edges[e]
            out[e] = (bc.kind, bc.evaluate(self.grid.edge_points(e), t))
        return out

    def _face_densities(self, p, bdata):
        rho = self.props.density(p)
        rx = np.empty((self.grid.ny, self.grid.nx + 1))
        ry = np.empty((self.grid.ny + 1, self.grid.nx))
        rx[:, 1:-1] = 0.5 * (rho[:, :-1] + rho[:, 1:])
        ry[1:-1, :] = 0.5 * (rho[:-1, :] + rho[1:, :])
        for e, (kind, val) in bdata.items():
            rc = rho.ravel()[boundary_cells(self.grid, e)]
            rf = 0.5 * (rc + self.props.density(val)) if kind == "pressure" else rc
            if e == "left":
                rx[:, 0] = rf
            elif e == "right":
                rx[:, -1] = rf
            elif e == "bottom":
                ry[0, :] = rf
            else:
                ry[-1, :] = rf
        return rx, ry

    def _assemble(self, rx, ry, p_prev, dt, bdata):
        g = self.grid
        nx, ny, n = g.nx, g.ny, g.n_cells
        idx = np.arange(n).reshape(ny, nx)
        acc = 0.0 if not np.isfinite(dt) else self.props.eps * g.cell_area * self.props.rho0 * self.props.c_f / dt
        diag = np.full(n, acc)
        rhs = acc * p_prev.ravel().copy()
        rows, cols, vals = [], [], []
        cx = (self.Tx * rx[:, 1:-1]).ravel()
        L, R = idx[:, :-1].ravel(), idx[:, 1:].ravel()
        np.add.at(diag, L, cx)
        np.add.at(diag, R, cx)
        rows += [L, R]
        cols += [R, L]
        vals += [-cx, -cx]
        cy = (self.Ty * ry[1:-1, :]).ravel()
        B, T = idx[:-1, :].ravel(), idx[1:, :].ravel()
        np.add.at(diag, B, cy)
        np.add.at(diag, T, cy)
        rows += [B, T]
        cols += [T, B]
        vals += [-cy, -cy]
        for e, (kind, val) in bdata.items():
            cells = boundary_cells(g, e)
            rf = self._edge_rho(rx, ry, e)
            if kind == "pressure":
                c = self.Tb[e] * rf
                np.add.at(diag, cells, c)
                np.add.at(rhs, cells, c * val)
            else:
                np.add.at(rhs, cells, -val * g.edge_face_length(e))
        rows.append(np.arange(n))
        cols.append(np.arange(n))
        vals.append(diag)
        A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
        return A, rhs

    @staticmethod
    def _edge_rho(rx, ry, e):
        return {"left": rx[:, 0], "right": rx[:, -1], "bottom": ry[0, :], "top": ry[-1, :]}[e]

    def _linear_solve(self, A, rhs, x0):
        n = A.shape[0]
        if self.solver == "bicgstab":
            M = spla.LinearOperator(A.shape, matvec=lambda v: v / A.diagonal())
            x, info = spla.bicgstab(A, rhs, x0=x0, rtol=self.linear_tol, maxiter=20 * n, M=M)
            if info != 0:
                raise np.linalg.LinAlgError(f"BiCGSTAB failed (info={info})")
            return x
        if n <= DIRECT_LIMIT or self.solver == "direct-only":
            return spla.spsolve(A.tocsc(), rhs)
        import pyamg
        if self._amg is None:
            self._amg = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric")
        x, info = spla.cg(A, rhs, x0=x0, rtol=self.linear_tol, maxiter=500,
                          M=self._amg.aspreconditioner(cycle="V"))
        if info != 0:
            raise np.linalg.LinAlgError(f"AMG-preconditioned CG failed (info={info})")
        return x

    def fluxes(self, p, rx, ry, bdata):
        g = self.grid
        Fx = np.zeros((g.ny, g.nx + 1))
        Fy = np.zeros((g.ny + 1, g.nx))
        Fx[:, 1:-1] = self.Tx * rx[:, 1:-1] * (p[:, :-1] - p[:, 1:])
        Fy[1:-1, :] = self.Ty * ry[1:-1, :] * (p[:-1, :] - p[1:, :])
        for e, (kind, val) in bdata.items():
            pc = p.ravel()[boundary_cells(g, e)]
            rf = self._edge_rho(rx, ry, e)
            if kind == "pressure":
                out = self.Tb[e] * rf * (pc - val)
            else:
                out = val * g.edge_face_length(e)
            sign = 1.0 if e in ("right", "top") else -1.0
            if e == "left":
                Fx[:, 0] = sign * out
            elif e == "right":
                Fx[:, -1] = sign * out
            elif e == "bottom":
                Fy[0, :] = sign * out
            else:
                Fy[-1, :] = sign * out
        return Fx, Fy

    def step(self, p_prev, dt, t_new):
        """One backward-Euler step with Picard iteration on the face densities."""
        bdata = self._boundary_data(t_new)
        p = np.array(p_prev, dtype=float)
        converged = False
        for k in range(1, self.picard_max + 1):
            rx, ry = self._face_densities(p, bdata)
            A, rhs = self._assemble(rx, ry, p_prev, dt, bdata)
            p_new = self._linear_solve(A, rhs, p.ravel()).reshape(p.shape)
            change = np.linalg.norm(p_new - p) / max(np.linalg.norm(p_new), 1e-300)
            p = p_new
            if change < self.picard_tol or self.props.c_f == 0.0:
                converged = True
                break
        if not converged:
            log.warning("FVM Picard did not converge at t=%g (change %.2e)", t_new, change)
        # fluxes consistent with the last linear solve
        Fx, Fy = self.fluxes(p, rx, ry, bdata)
        return FvmFlowState(t_new, p, Fx, Fy, rx, ry, k, converged)

    def mass_balance_residual(self, state, p_prev, dt):
        """Per-cell accumulation plus net outflow, kg/s."""
        g = self.grid
        acc = 0.0 if not np.isfinite(dt) else self.props.eps * g.cell_area * self.props.rho0 * self.props.c_f / dt
        div = (state.Fx[:, 1:] - state.Fx[:, :-1]) + (state.Fy[1:, :] - state.Fy[:-1, :])
        return acc * (state.p - p_prev) + div


def fvm_darcy_solve(fg: FvmGrid, p_init, dt, n_steps, t0=0.0):
    """Backward-Euler history; returns the list of states after each step."""
    p = np.broadcast_to(np.asarray(p_init, dtype=float), (fg.grid.ny, fg.grid.nx)).copy()
    out = []
    for k in range(n_steps):
        st = fg.step(p, dt, t0 + (k + 1) * dt)
        out.append(st)
        p = st.p
    return out


def reconstruct_cell_velocity(grid: Grid2D, state: FvmFlowState):
    """Cell-center Darcy velocity from the averaged opposite face velocities."""
    ux_f, uy_f = state.face_velocity(grid)
    ux = 0.5 * (ux_f[:, :-1] + ux_f[:, 1:])
    uy = 0.5 * (uy_f[:-1, :] + uy_f[1:, :])
    return ux, uy


def solve_upwind_system(M, b, order=None):
    """Solve the upwind system, as a triangular sweep if a topological order is known."""
    if order is None:
        return spla.spsolve(M.tocsc(), b)
    Mp = M[order][:, order].tocsr()
    x = spla.spsolve_triangular(Mp, b[order], lower=True)
    out = np.empty_like(x)
    out[order] = x
    return out


def fvm_transport_solve(grid: Grid2D, ux, uy, c_init, bcs: BoundaryConditions, eps, dt, n_sub,
                        t0=0.0, order=None):
    """Implicit upwind substeps with frozen face velocities; returns the history.

    ``order`` optionally lists cells from upstream to downstream, which turns
    every solve into a triangular sweep.
    """
    op = build_upwind_operator(grid, ux, uy, eps, dt)
    M = op.matrix
    c = np.asarray(c_init, dtype=float).ravel().copy()
    hist = []
    solver = None
    if order is None:
        solver = spla.splu(M.tocsc())
    for m in range(n_sub):
        ta, tb = t0 + m * dt, t0 + (m + 1) * dt
        b = op.rhs(c, lambda e: bcs.tracer(e, ta, tb))
        if solver is not None:
            c = solver.solve(b)
        else:
            c = solve_upwind_system(M, b, order)
        hist.append(c.reshape(grid.ny, grid.nx).copy())
    return hist


def pressure_order(p):
    """Cells sorted from high to low pressure; a topological order for TPFA fluxes."""
    return np.argsort(-np.asarray(p).ravel(), kind="stable")
