import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nbm.geometry import BoundaryConditions, EdgeBC, Grid2D, InflowSchedule
from nbm.transport import (NbmTransport, NbmTransportConfig, TransportMesh, boundary_budget,
                           flux_bc_velocities, freeze_face_velocities)

from oracles import upwind_1d_explicit_loop


def _closed(inflow=None):
    return BoundaryConditions({e: EdgeBC("flux", 0.0) for e in ("left", "right", "bottom", "top")}, inflow or {})


def _solver(grid, nb, **kw):
    return NbmTransport(grid, NbmTransportConfig(nb=nb, seed=3, face_velocity="average", **kw))


def test_zero_velocity_keeps_projected_concentration():
    g = Grid2D(0.0, 50.0, 0.0, 30.0, 12, 8)
    s = _solver(g, 60)
    rng = np.random.default_rng(0)
    st0 = s.project(rng.random(g.n_cells))
    st1 = s.advance(st0, np.zeros((g.n_cells, 2)), 10.0, 3, _closed(), 0.2)
    assert np.allclose(st1.c, st0.c, atol=1e-9)
    assert st1.time == 10.0 and len(st1.history) == 3 and len(st1.e_rel) == 3


def test_constant_concentration_is_represented_exactly():
    g = Grid2D(0.0, 1.0, 0.0, 1.0, 6, 6)
    st0 = _solver(g, 10).project(0.7)
    assert np.allclose(st0.c, 0.7, atol=1e-12)


def test_underdetermined_basis_reproduces_1d_upwind_row():
    # more functions than cells: the projected system is solved exactly
    nx, L, u, eps, dt = 20, 100.0, 2.0, 0.25, 3.0
    g = Grid2D(0.0, L, 0.0, 5.0, nx, 1)
    s = _solver(g, 80)
    bcs = _closed({"left": InflowSchedule(1.0)})
    uc = np.tile([u, 0.0], (nx, 1))
    state = s.project(np.zeros(nx))
    ref = upwind_1d_explicit_loop(nx, L, u, eps, dt, np.zeros(nx), 1.0, 6)
    state = s.advance(state, uc, 6 * dt, 6, bcs, eps)
    for m, theta in enumerate(state.history):
        assert np.allclose(s.Phi @ theta, ref[m], atol=1e-8)
    assert max(state.e_rel) < 1e-10


def test_hundred_cell_upwind_front_within_one_percent():
    nx, L, u, eps, dt = 100, 100.0, 1.0, 0.25, 5.0
    g = Grid2D(0.0, L, 0.0, 1.0, nx, 1)
    s = _solver(g, 200)
    ref = upwind_1d_explicit_loop(nx, L, u, eps, dt, np.zeros(nx), 1.0, 10)
    state = s.advance(s.project(np.zeros(nx)), np.tile([u, 0.0], (nx, 1)), 10 * dt, 10,
                      _closed({"left": InflowSchedule(1.0)}), eps)
    c = s.Phi @ state.history[-1]
    assert np.linalg.norm(c - ref[-1]) / np.linalg.norm(ref[-1]) < 0.01


def test_step_budget_balances_storage_change():
    g = Grid2D(0.0, 40.0, 0.0, 20.0, 8, 4)
    s = _solver(g, 60)
    rng = np.random.default_rng(1)
    uc = np.column_stack([1.0 + 0.2 * rng.random(g.n_cells), 0.1 * rng.standard_normal(g.n_cells)])
    bcs = _closed({"left": InflowSchedule(1.0), "bottom": InflowSchedule(0.5), "top": InflowSchedule(0.2),
                   "right": InflowSchedule(0.0)})
    st0 = s.project(0.1 * rng.random(g.n_cells))
    dt, eps = 2.0, 0.3
    st1 = s.advance(st0, uc, dt, 1, bcs, eps)
    budget = boundary_budget(s.last_operator, g, *freeze_face_velocities(uc, s.mesh), st1.c,
                             lambda e: bcs.tracer(e, 0.0, dt))
    storage = eps * g.cell_area * (st1.c - st0.c).sum() / dt
    assert storage == pytest.approx(budget, rel=1e-8, abs=1e-10)


def test_face_velocities_average_and_boundary_override():
    g = Grid2D(0.0, 3.0, 0.0, 2.0, 3, 2)
    u = np.arange(12, dtype=float).reshape(6, 2)
    ux, uy = freeze_face_velocities(u, TransportMesh(g), {"left": np.array([5.0, 6.0])})
    cells = u.reshape(2, 3, 2)
    assert np.allclose(ux[:, 1:-1], 0.5 * (cells[:, :-1, 0] + cells[:, 1:, 0]))
    assert np.allclose(uy[1, :], 0.5 * (cells[0, :, 1] + cells[1, :, 1]))
    assert np.allclose(ux[:, 0], [-5.0, -6.0])          # outward 5, 6 means flow toward -x
    assert np.allclose(ux[:, -1], cells[:, -1, 0])
    with pytest.raises(ValueError):
        freeze_face_velocities(np.zeros((5, 2)), TransportMesh(g))


def test_flux_edges_use_mass_flux_over_density():
    g = Grid2D(0.0, 3.0, 0.0, 2.0, 3, 2)
    bcs = BoundaryConditions({"left": EdgeBC("flux", -4.0), "right": EdgeBC("pressure", 1e5),
                              "bottom": EdgeBC("flux", 0.0), "top": EdgeBC("flux", 0.0)})
    out = flux_bc_velocities(g, bcs, np.full(6, 2.0), 0.0)
    assert set(out) == {"left", "bottom", "top"}
    assert np.allclose(out["left"], -2.0)
    s = NbmTransport(g, NbmTransportConfig(nb=8, seed=0))
    with pytest.raises(ValueError):
        s.face_velocities(np.zeros((6, 2)))


def test_invalid_substep_count_and_missing_inflow():
    g = Grid2D(0.0, 1.0, 0.0, 1.0, 4, 4)
    s = _solver(g, 20)
    st0 = s.project(0.0)
    uc = np.tile([1.0, 0.0], (16, 1))
    with pytest.raises(ValueError):
        s.advance(st0, uc, 1.0, 0, _closed(), 0.2)
    with pytest.raises(ValueError):
        s.advance(st0, uc, 1.0, 1, _closed(), 0.2)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.05, 0.5), st.floats(0.1, 20.0))
def test_exactly_fitted_transport_stays_in_unit_interval(u, eps, dt):
    g = Grid2D(0.0, 10.0, 0.0, 2.0, 10, 2)
    s = _solver(g, 50)
    uc = np.tile([u, 0.0], (g.n_cells, 1))
    state = s.advance(s.project(0.0), uc, 3 * dt, 3, _closed({"left": InflowSchedule(1.0)}), eps)
    assert state.c.min() > -1e-8 and state.c.max() < 1 + 1e-8
