"""Energy-weighted mixed least-squares Darcy solver on frozen neural bases.

Unknowns are theta = (theta_p, theta_div, theta_curl): pressure coefficients
and the two families of the Helmholtz-conforming mass-flux basis. Row blocks
per implicit step are

    constitutive  q + (rho^k kappa / mu) grad p = 0         (2 rows per point)
    continuity    eps rho0 c_f / dT p + div q = eps rho0 c_f / dT p^n
    Dirichlet     p = p_D
    Neumann       q.n = g

with density lagged at the Picard iterate.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisConfig, BasisParams, evaluate_basis, init_basis
from .geometry import EDGES, CollocationSet, collocation_points
from .linalg import ReusableLsq, WeightedSystem, solve_weighted_lsq
from .properties import FluidProps, PermeabilityField
from .vector_basis import build_vector_basis_2d

log = logging.getLogger(__name__)


@dataclass
class DarcyWeights:
    w_m: np.ndarray
    w_c: np.ndarray
    w_D: np.ndarray
    w_N: np.ndarray
    ell: float
    h: float


def compute_energy_weights(props: FluidProps, perm: PermeabilityField, col: CollocationSet,
                           rho=None, kappa_mean="arithmetic", ell=None, unweighted=False):
    """Row weights placing all residuals on the Darcy dissipation scale.

    ``rho`` is the lagged density at the interior points (defaults to rho0).
    Returned w_D and w_N are per boundary point; callers pick the one matching
    each point's condition.
    """
    M, B = col.n_interior, col.n_boundary
    if unweighted:
        return DarcyWeights(np.ones(M), np.ones(M), np.ones(B), np.ones(B), 1.0, col.spacing)
    kap = perm.sample(col.interior)
    if np.any(kap <= 0):
        raise ValueError("permeability must be positive at every collocation point")
    km = perm.mean if kappa_mean == "arithmetic" else perm.geometric_mean
    rho = np.full(M, props.rho0) if rho is None else np.asarray(rho, dtype=float)
    ell = col.grid.edge_length if ell is None else ell
    h = col.spacing
    mu = props.mu
    sq_om = np.sqrt(col.interior_measure)
    sq_b = np.sqrt(col.boundary_measure)
    w_m = (1.0 / rho) * np.sqrt(mu / kap) * sq_om
    w_c = (ell / rho) * np.sqrt(mu / km) * sq_om
    w_D = np.sqrt(1.0 / h) * np.sqrt(km / mu) * sq_b
    w_N = (ell / props.rho0) * np.sqrt(1.0 / h) * np.sqrt(mu / km) * sq_b
    return DarcyWeights(w_m, w_c, w_D, w_N, ell, h)


@dataclass
class DarcyState:
    theta_p: np.ndarray
    theta_div: np.ndarray
    theta_curl: np.ndarray
    time: float
    p: np.ndarray = None        # interior pressure
    rho: np.ndarray = None
    q: np.ndarray = None        # interior mass flux, M x 2
    e_rel: float = np.nan
    picard_iterations: int = 0
    converged: bool = True
    cond_estimate: float = np.nan

    @property
    def theta(self):
        return np.concatenate([self.theta_p, self.theta_div, self.theta_curl])

    @property
    def u(self):
        return self.q / self.rho[:, None]


@dataclass
class NbmDarcyConfig:
    nb: int = 1000
    n_layers: int = 2
    seed_p: int = 11
    seed_q: int = 23
    flux_parts: tuple = ("div", "curl")
    weighting: str = "energy"            # or "none"
    kappa_mean: str = "arithmetic"
    picard_tol: float = 1e-8
    picard_max: int = 50
    reuse_factorization: bool = True
    # alpha for layers >= 2 unless basis_kwargs sets shape_factors; with
    # N(0,1) weights the layer-2 pre-activation grows like sqrt(nb) and
    # alpha = 1 saturates most units
    deep_shape_factor: float = 0.3
    basis_kwargs: dict = field(default_factory=dict)

    def basis_config(self, box, seed, include_constant):
        kw = dict(self.basis_kwargs)
        kw.setdefault("shape_factors", [1.0] + [self.deep_shape_factor] * (self.n_layers - 1))
        return BasisConfig(2, [self.nb] * self.n_layers, box, seed=seed,
                           include_constant=include_constant, **kw)


class NbmDarcy:
    """Evaluates the frozen bases once and assembles/solves each Picard step."""

    def __init__(self, grid, perm, props, bcs, config: NbmDarcyConfig = None,
                 basis_p: BasisParams = None, basis_q: BasisParams = None, ell=None):
        self.cfg = cfg = config or NbmDarcyConfig()
        self.grid, self.perm, self.props, self.bcs = grid, perm, props, bcs
        self.col = col = collocation_points(grid)
        self.ell = ell
        box = grid.box
        if basis_p is None:
            basis_p = init_basis(cfg.basis_config(box, cfg.seed_p, True))
        if basis_q is None:
            # constant columns generate zero vector fields, so the flux basis omits them
            basis_q = init_basis(cfg.basis_config(box, cfg.seed_q, False))
        self.basis_p, self.basis_q = basis_p, basis_q
        self.parts = tuple(cfg.flux_parts)
        if not set(self.parts) <= {"div", "curl"} or not self.parts:
            raise ValueError(f"flux_parts must be drawn from ('div', 'curl'), got {self.parts}")

        self.kinds = np.array([bcs.edges[e].kind for e in EDGES])[col.boundary_edge]
        # interior evaluations
        ep = evaluate_basis(basis_p, col.interior, "grad")
        need_h = "curl" in self.parts
        eq = evaluate_basis(basis_q, col.interior, "hess" if need_h else "grad")
        self.Phi_p = ep.values
        self.Gp = (ep.dx(0).copy(), ep.dx(1).copy())
        vb = build_vector_basis_2d(eq)
        self.vb = vb
        self.lap_q = eq.laplacian() if need_h else None
        # boundary evaluations
        self.Phi_p_b = evaluate_basis(basis_p, col.boundary, "values").values
        eqb = evaluate_basis(basis_q, col.boundary, "grad")
        vbb = build_vector_basis_2d(eqb)
        self.Qn_b = {part: vbb.normal(part, col.boundary_normal) for part in self.parts}
        self.kappa_int = perm.sample(col.interior)
        self.n_p = self.Phi_p.shape[1]
        self.n_q = vb.n_div
        self.solver = ReusableLsq() if cfg.reuse_factorization else None

    def update(self, perm=None, bcs=None):
        """Swap permeability and/or boundary data, keeping the basis evaluations."""
        if bcs is not None:
            kinds = np.array([bcs.edges[e].kind for e in EDGES])[self.col.boundary_edge]
            if not np.array_equal(kinds, self.kinds):
                raise ValueError("boundary condition types must match the assembled layout")
            self.bcs = bcs
        if perm is not None:
            self.perm = perm
            self.kappa_int = perm.sample(self.col.interior)
        return self

    # ----------------------------------------------------------- helpers
    @property
    def n_theta(self):
        return self.n_p + self.n_q * len(self.parts)

    def split(self, theta):
        tp = theta[: self.n_p]
        rest = theta[self.n_p:]
        td = rest[: self.n_q] if "div" in self.parts else np.zeros(self.n_q)
        tc = rest[-self.n_q:] if "curl" in self.parts else np.zeros(self.n_q)
        return tp, td, tc

    def pressure(self, theta_p):
        return self.Phi_p @ theta_p

    def flux(self, theta_div, theta_curl):
        q = np.zeros((self.col.n_interior, 2))
        for a in range(2):
            if "div" in self.parts:
                q[:, a] += self.vb.component("div", a) @ theta_div
            if "curl" in self.parts:
                q[:, a] += self.vb.component("curl", a) @ theta_curl
        return q

    def _boundary_values(self, t):
        col = self.col
        vals = np.empty(col.n_boundary)
        for k, e in enumerate(EDGES):
            m = col.boundary_edge == k
            vals[m] = self.bcs.edges[e].evaluate(col.boundary[m], t)
        return vals

    def weights(self, rho):
        return compute_energy_weights(self.props, self.perm, self.col, rho,
                                      kappa_mean=self.cfg.kappa_mean, ell=self.ell,
                                      unweighted=self.cfg.weighting == "none")

    # ---------------------------------------------------------- assembly
    def assemble(self, p_prev, rho_lag, dt, t_new):
        """Weighted system for one Picard iterate.

        ``p_prev`` is the pressure at the interior points at the old time
        level, ``rho_lag`` the lagged density there.
        """
        col, props = self.col, self.props
        M, B = col.n_interior, col.n_boundary
        nP, nQ = self.n_p, self.n_q
        parts = self.parts
        n = self.n_theta
        transient = np.isfinite(dt) and props.c_f > 0
        with_cont = transient or "curl" in parts
        n_rows = 2 * M + (M if with_cont else 0) + B
        A = np.zeros((n_rows, n))
        b = np.zeros(n_rows)
        w = np.empty(n_rows)
        W = self.weights(rho_lag)
        coef = rho_lag * self.kappa_int / props.mu
        off = {part: nP + i * nQ for i, part in enumerate(parts)}
        for a in range(2):
            r = slice(a * M, (a + 1) * M)
            A[r, :nP] = coef[:, None] * self.Gp[a]
            for part in parts:
                A[r, off[part]:off[part] + nQ] = self.vb.component(part, a)
            w[r] = W.w_m
        row = 2 * M
        if with_cont:
            r = slice(row, row + M)
            if transient:
                beta = props.eps * props.rho0 * props.c_f / dt
                A[r, :nP] = beta * self.Phi_p
                b[r] = beta * p_prev
            if "curl" in parts:
                A[r, off["curl"]:off["curl"] + nQ] = self.lap_q
            # the divergence-free block is identically zero here
            w[r] = W.w_c
            row += M
        bv = self._boundary_values(t_new)
        r = slice(row, row + B)
        dmask = self.kinds == "pressure"
        Ab = A[r]
        Ab[dmask, :nP] = self.Phi_p_b[dmask]
        for part in parts:
            Ab[~dmask, off[part]:off[part] + nQ] = self.Qn_b[part][~dmask]
        b[r] = bv
        w[r] = np.where(dmask, W.w_D, W.w_N)
        return WeightedSystem(A, b, w)

    def _solve(self, sys):
        if self.solver is not None:
            return self.solver.solve(sys)
        return solve_weighted_lsq(sys)

    # ----------------------------------------------------------- stepping
    def initial_state(self, p_init, t0=0.0):
        """Project a uniform (or callable) initial pressure; zero flux."""
        pts = self.col.interior
        p = np.full(len(pts), float(p_init)) if np.isscalar(p_init) else np.asarray(p_init(pts))
        tp = np.linalg.lstsq(self.Phi_p, p, rcond=None)[0]
        st = DarcyState(tp, np.zeros(self.n_q), np.zeros(self.n_q), t0)
        return self._fill(st)

    def _fill(self, st):
        st.p = self.pressure(st.theta_p)
        st.rho = self.props.density(st.p)
        st.q = self.flux(st.theta_div, st.theta_curl)
        return st

    def advance(self, state: DarcyState, dt):
        """One backward-Euler step with Picard iteration on the density."""
        cfg = self.cfg
        t_new = state.time + dt
        p_prev = state.p
        theta = np.concatenate([state.theta_p] + [getattr(state, f"theta_{part}") for part in self.parts])
        rho = state.rho
        converged = False
        history = []
        linear = self.props.c_f == 0.0
        for k in range(1, cfg.picard_max + 1):
            sys = self.assemble(p_prev, rho, dt, t_new)
            res = self._solve(sys)
            new = res.theta
            change = _block_change(new, theta, self._blocks())
            theta = new
            history.append(res.e_rel)
            rho = self.props.density(self.Phi_p @ theta[: self.n_p])
            if linear or change < cfg.picard_tol:
                converged = True
                break
        if not converged:
            log.warning("Picard did not converge in %d iterations (change %.2e)", cfg.picard_max, change)
        tp, td, tc = self.split(theta)
        st = DarcyState(tp, td, tc, t_new, e_rel=res.e_rel, picard_iterations=k,
                        converged=converged, cond_estimate=res.cond_estimate)
        self.last_system = sys
        return self._fill(st)

    def _blocks(self):
        edges = [0, self.n_p] + [self.n_p + (i + 1) * self.n_q for i in range(len(self.parts))]
        return list(zip(edges[:-1], edges[1:]))


def _block_change(new, old, blocks):
    worst = 0.0
    for lo, hi in blocks:
        den = np.linalg.norm(new[lo:hi])
        if den == 0.0:
            continue
        worst = max(worst, np.linalg.norm(new[lo:hi] - old[lo:hi]) / den)
    return worst


def assemble_mixed_system(solver: NbmDarcy, state_prev: DarcyState, dt, rho_lag=None):
    rho = state_prev.rho if rho_lag is None else rho_lag
    return solver.assemble(state_prev.p, rho, dt, state_prev.time + dt)


def advance_darcy(solver: NbmDarcy, state: DarcyState, dt):
    return solver.advance(state, dt)
