"""Coupled flow and transport drivers for the FVM and NBM solvers."""

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .fvm import FvmGrid, fvm_transport_solve, pressure_order, reconstruct_cell_velocity
from .darcy import NbmDarcy, NbmDarcyConfig
from .linalg import condition_number
from .problems import Scenario
from .transport import NbmTransport, NbmTransportConfig

log = logging.getLogger(__name__)


@dataclass
class Snapshot:
    """Cell-center fields at one Darcy time level (arrays shaped (ny, nx))."""
    time: float
    p: np.ndarray
    ux: np.ndarray
    uy: np.ndarray
    qx: np.ndarray
    qy: np.ndarray
    c: np.ndarray = None
    info: dict = field(default_factory=dict)


def run_fvm(scn: Scenario, transport=True, solver="direct", triangular=None, n_steps=None):
    """Backward-Euler TPFA flow with frozen-velocity implicit upwind substeps."""
    g = scn.grid
    fg = FvmGrid(g, scn.perm, scn.props, scn.bcs, solver=solver)
    p = np.full((g.ny, g.nx), scn.p_init)
    c = np.full((g.ny, g.nx), scn.c_init)
    if triangular is None:
        triangular = g.n_cells > 40_000
    n_steps = scn.n_steps if n_steps is None else n_steps
    out = []
    t = 0.0
    for n in range(n_steps):
        t0 = time.perf_counter()
        st = fg.step(p, scn.darcy_dt, t + scn.darcy_dt)
        ux_c, uy_c = reconstruct_cell_velocity(g, st)
        rho = scn.props.density(st.p)
        if transport:
            uxf, uyf = st.face_velocity(g)
            dt = scn.darcy_dt / scn.n_sub
            order = pressure_order(st.p) if triangular else None
            c = fvm_transport_solve(g, uxf, uyf, c, scn.bcs, scn.props.eps, dt, scn.n_sub,
                                    t0=t, order=order)[-1]
        t += scn.darcy_dt
        p = st.p
        out.append(Snapshot(t, st.p.copy(), ux_c, uy_c, ux_c * rho, uy_c * rho,
                            c.copy() if transport else None,
                            {"picard_iterations": st.picard_iterations, "converged": st.converged,
                             "seconds": time.perf_counter() - t0}))
        log.info("FVM step %d/%d t=%.3g s picard=%d", n + 1, n_steps, t, st.picard_iterations)
    return out


def run_nbm(scn: Scenario, darcy_cfg: NbmDarcyConfig = None, transport_cfg: NbmTransportConfig = None,
            transport=True, n_steps=None, darcy=None, tracer=None):
    """Coupled NBM run: mixed Darcy step, then frozen-velocity transport substeps.

    Fields are returned at the collocation points, which are the cell centers
    of ``scn.grid``. Prebuilt solvers can be passed to reuse basis evaluations.
    """
    g = scn.grid
    t_setup = time.perf_counter()
    darcy = darcy or NbmDarcy(g, scn.perm, scn.props, scn.bcs, darcy_cfg)
    if transport:
        tracer = tracer or NbmTransport(g, transport_cfg)
        cst = tracer.project(scn.c_init)
    setup = time.perf_counter() - t_setup
    st = darcy.initial_state(scn.p_init)
    n_steps = scn.n_steps if n_steps is None else n_steps
    shape = (g.ny, g.nx)
    out = []
    for n in range(n_steps):
        t0 = time.perf_counter()
        st = darcy.advance(st, scn.darcy_dt)
        u = st.u
        info = {"e_rel": st.e_rel, "picard_iterations": st.picard_iterations,
                "converged": st.converged, "cond_estimate": st.cond_estimate}
        c = None
        if transport:
            cst = tracer.advance(cst, u, scn.darcy_dt, scn.n_sub, scn.bcs, scn.props.eps, st.rho)
            c = cst.c.reshape(shape).copy()
            info["transport_e_rel"] = list(cst.e_rel)
        info["seconds"] = time.perf_counter() - t0
        if n == 0:
            info["setup_seconds"] = setup
        out.append(Snapshot(st.time, st.p.reshape(shape).copy(), u[:, 0].reshape(shape).copy(),
                            u[:, 1].reshape(shape).copy(), st.q[:, 0].reshape(shape).copy(),
                            st.q[:, 1].reshape(shape).copy(), c, info))
        log.info("NBM step %d/%d t=%.3g s picard=%d E_rel=%.2e", n + 1, n_steps, st.time,
                 st.picard_iterations, st.e_rel)
    return out


def restrict_to_coarse(fine, factor):
    """Average fine cells onto a coarser grid that shares its box (ratio ``factor``)."""
    ny, nx = fine.shape
    return fine.reshape(ny // factor, factor, nx // factor, factor).mean(axis=(1, 3))


def sample_at_coarse_centers(fine, factor):
    """Value at coarse cell centers from the 2x2 fine cells surrounding each one.

    For even ``factor`` the coarse center is a fine-grid node, so this is the
    bilinear interpolant there.
    """
    if factor % 2:
        ny, nx = fine.shape
        h = factor // 2
        return fine[h::factor, h::factor]
    h = factor // 2
    return 0.25 * (fine[h - 1::factor, h - 1::factor] + fine[h::factor, h - 1::factor]
                   + fine[h - 1::factor, h::factor] + fine[h::factor, h::factor])


def darcy_condition_number(scn: Scenario, cfg: NbmDarcyConfig):
    """2-norm condition number of the first weighted Picard system."""
    solver = NbmDarcy(scn.grid, scn.perm, scn.props, scn.bcs, cfg)
    st = solver.initial_state(scn.p_init)
    sys = solver.assemble(st.p, st.rho, scn.darcy_dt, scn.darcy_dt)
    return condition_number(sys.A * sys.w[:, None])


def conditioning_sweep(scn: Scenario, nbs=(200, 400, 600, 800, 1000), layers=(1, 2), seeds=(0,),
                       base: NbmDarcyConfig = None):
    """Rows of (nb, n_layers, seed, cond) over the requested grid of settings."""
    base = base or NbmDarcyConfig()
    rows = []
    for L in layers:
        for nb in nbs:
            for s in seeds:
                cfg = replace(base, nb=nb, n_layers=L, seed_p=base.seed_p + 1000 * s,
                              seed_q=base.seed_q + 1000 * s)
                c = darcy_condition_number(scn, cfg)
                log.info("cond nb=%d layers=%d seed=%d: %.3e", nb, L, s, c)
                rows.append({"nb": nb, "n_layers": L, "seed": s, "cond": c})
    return rows
