import numpy as np
import pytest

from nbm.darcy import NbmDarcy, NbmDarcyConfig, compute_energy_weights
from nbm.geometry import BoundaryConditions, EdgeBC, Grid2D, collocation_points
from nbm.problems import build_co2_case
from nbm.properties import FluidProps, PermeabilityField


@pytest.fixture(scope="module")
def small_co2():
    scn = build_co2_case("homogeneous", n=5)
    s = NbmDarcy(scn.grid, scn.perm, scn.props, scn.bcs, NbmDarcyConfig(nb=30, picard_tol=1e-13, picard_max=200))
    st0 = s.initial_state(scn.p_init)
    return scn, s, st0


def _damped_newton(H, x0, scale, tol=1e-9, max_iter=30):
    """Newton on H(x) = 0 with a central-difference Jacobian and backtracking."""
    x = x0.copy()
    for _ in range(max_iter):
        r = H(x)
        if np.abs(r).max() < tol:
            break
        J = np.empty((x.size, x.size))
        for j in range(x.size):
            e = np.zeros(x.size)
            e[j] = 1e-6 * scale
            J[:, j] = (H(x + e) - H(x - e)) / (2e-6 * scale)
        dx = np.linalg.solve(J, -r)
        lam = 1.0
        while np.linalg.norm(H(x + lam * dx)) > (1 - 1e-4 * lam) * np.linalg.norm(r) and lam > 1e-4:
            lam *= 0.5
        x = x + lam * dx
    return x


def test_picard_matches_damped_newton_fixed_point(small_co2):
    scn, s, st0 = small_co2
    dt = scn.darcy_dt
    st1 = s.advance(st0, dt)
    assert st1.converged

    def G(p):
        # one weighted solve at lagged density rho(p), via plain numpy lstsq
        sys = s.assemble(st0.p, scn.props.density(p), dt, dt)
        return np.linalg.lstsq(sys.A * sys.w[:, None], sys.b * sys.w, rcond=None)[0]

    def H(p):
        return (p - s.Phi_p @ G(p)[: s.n_p]) / scn.p_init

    p_star = _damped_newton(H, st0.p, scn.p_init)
    _, td, tc = s.split(G(p_star))
    q_star = s.flux(td, tc)
    assert np.linalg.norm(st1.p - p_star) / np.linalg.norm(p_star) < 1e-8
    # the weighted system has cond ~ 5e9, so two lstsq routes agree on q only to ~1e-8
    assert np.linalg.norm(st1.q - q_star) / np.linalg.norm(q_star) < 1e-6


def test_incompressible_step_is_one_linear_solve():
    g = Grid2D(0.0, 100.0, 0.0, 50.0, 20, 10)
    props = FluidProps(mu=1e-3, c_f=0.0, rho0=1000.0, p0=1e6, eps=0.2)
    bcs = BoundaryConditions({"left": EdgeBC("pressure", 2e6), "right": EdgeBC("pressure", 1e6),
                              "bottom": EdgeBC("flux", 0.0), "top": EdgeBC("flux", 0.0)})
    s = NbmDarcy(g, PermeabilityField(g, 1e-12), props, bcs, NbmDarcyConfig(nb=60, seed_p=1, seed_q=2))
    st1 = s.advance(s.initial_state(1.5e6), np.inf)
    assert st1.picard_iterations == 1
    x = s.col.interior[:, 0]
    assert np.linalg.norm(st1.p - (2e6 - 1e6 * x / 100.0)) / np.linalg.norm(st1.p) < 1e-3
    u_exact = 1e-12 / 1e-3 * 1e6 / 100.0
    assert np.abs(st1.u[:, 0] - u_exact).max() < 0.02 * u_exact


def test_energy_weights_formulas():
    scn = build_co2_case("heterogeneous", n=10)
    col = collocation_points(scn.grid)
    W = compute_energy_weights(scn.props, scn.perm, col)
    k0 = scn.perm.sample(col.interior[:1])[0]
    km, mu, rho0 = scn.perm.mean, scn.props.mu, scn.props.rho0
    om, bm, h, L = col.interior_measure[0], col.boundary_measure[0], col.spacing, scn.grid.edge_length
    assert W.w_m[0] == pytest.approx(np.sqrt(mu / k0 * om) / rho0)
    assert W.w_c[0] == pytest.approx(L / rho0 * np.sqrt(mu / km * om))
    assert W.w_D[0] == pytest.approx(np.sqrt(km / (mu * h) * bm))
    assert W.w_N[0] == pytest.approx(L / rho0 * np.sqrt(mu / (km * h) * bm))
    ones = compute_energy_weights(scn.props, scn.perm, col, unweighted=True)
    assert np.all(ones.w_m == 1.0) and np.all(ones.w_N == 1.0)


def test_update_matches_fresh_solver():
    scn = build_co2_case("homogeneous", n=6)
    cfg = NbmDarcyConfig(nb=25)
    s = NbmDarcy(scn.grid, scn.perm, scn.props, scn.bcs, cfg)
    new_perm = PermeabilityField(scn.grid, np.linspace(0.1, 0.5, 36).reshape(6, 6) * 1e-12)
    s.update(perm=new_perm)
    fresh = NbmDarcy(scn.grid, new_perm, scn.props, scn.bcs, cfg, basis_p=s.basis_p, basis_q=s.basis_q)
    a = s.advance(s.initial_state(scn.p_init), scn.darcy_dt)
    b = fresh.advance(fresh.initial_state(scn.p_init), scn.darcy_dt)
    assert np.allclose(a.p, b.p, rtol=1e-12)
    assert np.allclose(a.q, b.q, rtol=1e-8, atol=1e-12 * np.abs(b.q).max())


def test_update_rejects_changed_boundary_layout():
    scn = build_co2_case("homogeneous", n=5)
    s = NbmDarcy(scn.grid, scn.perm, scn.props, scn.bcs, NbmDarcyConfig(nb=10))
    flipped = BoundaryConditions({e: EdgeBC("flux", 0.0) for e in ("left", "right", "bottom", "top")})
    with pytest.raises(ValueError):
        s.update(bcs=flipped)


def test_split_and_flux_parts():
    scn = build_co2_case("homogeneous", n=5)
    s = NbmDarcy(scn.grid, scn.perm, scn.props, scn.bcs, NbmDarcyConfig(nb=10))
    th = np.arange(s.n_theta, dtype=float)
    tp, td, tc = s.split(th)
    assert np.array_equal(np.concatenate([tp, td, tc]), th)
    only_div = NbmDarcy(scn.grid, scn.perm, scn.props, scn.bcs, NbmDarcyConfig(nb=10, flux_parts=("div",)))
    assert only_div.n_theta == s.n_p + s.n_q
    assert np.all(only_div.split(np.ones(only_div.n_theta))[2] == 0.0)
    with pytest.raises(ValueError):
        NbmDarcy(scn.grid, scn.perm, scn.props, scn.bcs, NbmDarcyConfig(nb=10, flux_parts=("grad",)))


def test_residual_shrinks_as_basis_grows():
    scn = build_co2_case("heterogeneous", n=12)
    errs = []
    for nb in (20, 60, 180):
        s = NbmDarcy(scn.grid, scn.perm, scn.props, scn.bcs, NbmDarcyConfig(nb=nb))
        errs.append(s.advance(s.initial_state(scn.p_init), scn.darcy_dt).e_rel)
    assert errs[0] > errs[1] > errs[2]
