import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from nbm import units
from nbm.geometry import Grid2D
from nbm.problems import (GrfParams, block25_multiplier, build_co2_case, build_manufactured_case,
                          contrast_matched_field, dykstra_parsons, gaussian_field, gen_grf_permeability,
                          load_heterogeneous_field, read_perm_csv, write_perm_csv)


@pytest.fixture(scope="module")
def mms():
    return build_manufactured_case(Cx=200.0, Cy=20.0, grid=Grid2D(-1.0, 1.0, -1.0, 1.0, 20, 20))


def test_antiderivative_matches_adaptive_quadrature(mms):
    for x in (-1.0, -0.37, 0.0, 0.512, 1.0):
        ref = integrate.quad(lambda s: 1.0 / mms.a(s), -1.0, x, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        assert mms.I_x(x) == pytest.approx(ref, rel=1e-10, abs=1e-12)
        ref = integrate.quad(lambda s: 1.0 / mms.b(s), -1.0, x, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        assert mms.I_y(x) == pytest.approx(ref, rel=1e-10, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.99, 0.99), st.floats(-0.99, 0.99))
def test_manufactured_velocity_is_darcy_and_divergence_free(x, y):
    c = build_manufactured_case(grid=Grid2D(-1.0, 1.0, -1.0, 1.0, 10, 10))
    h = 1e-5
    dpdx = (c.pressure(x + h, y) - c.pressure(x - h, y)) / (2 * h)
    dpdy = (c.pressure(x, y + h) - c.pressure(x, y - h)) / (2 * h)
    ux, uy = c.velocity(x, y)
    k = c.kappa(x, y)
    assert ux == pytest.approx(-k / c.mu * dpdx, rel=1e-6)
    assert uy == pytest.approx(-k / c.mu * dpdy, rel=1e-6)
    div = (c.velocity(x + h, y)[0] - c.velocity(x - h, y)[0] + c.velocity(x, y + h)[1]
           - c.velocity(x, y - h)[1]) / (2 * h)
    assert abs(div) <= 1e-9 * (abs(ux) + abs(uy)) / h


def test_manufactured_scenario_is_incompressible_dirichlet(mms):
    scn = mms.scenario()
    assert scn.props.c_f == 0.0
    assert all(bc.kind == "pressure" for bc in scn.bcs.edges.values())
    pts = scn.grid.edge_points("top")
    assert np.allclose(scn.bcs.edges["top"].evaluate(pts, 0.0), mms.pressure(pts[:, 0], pts[:, 1]))
    with pytest.raises(ValueError):
        build_manufactured_case(Cx=0.5)


def test_gaussian_field_is_standardized_and_anisotropic():
    g = Grid2D(0.0, 100.0, 0.0, 100.0, 100, 100)
    f = gaussian_field(g, 20.0, 2.0, 0.0, np.random.default_rng(0))
    assert abs(f.mean()) < 1e-12 and f.std() == pytest.approx(1.0)
    lag_x = np.mean(f[:, :-5] * f[:, 5:])
    lag_y = np.mean(f[:-5, :] * f[5:, :])
    assert lag_x > 0.7 and lag_y < 0.1
    rot = gaussian_field(g, 20.0, 2.0, np.pi / 2, np.random.default_rng(0))
    assert np.mean(rot[:-5, :] * rot[5:, :]) > 0.7


def test_dykstra_parsons_of_lognormal_samples():
    rng = np.random.default_rng(1)
    for v in (0.3, 0.6, 0.85):
        k = np.exp(2.0 - np.log(1 - v) * rng.standard_normal(400_000))
        assert dykstra_parsons(k) == pytest.approx(v, abs=5e-3)


def test_grf_permeability_statistics():
    prm = GrfParams(v=0.5, lx=3.0, ly=3.0, k_avg=0.3 * units.DARCY, seed=4)
    perm = gen_grf_permeability(prm, Grid2D(0.0, 500.0, 0.0, 500.0, 250, 250))
    assert dykstra_parsons(perm.values) == pytest.approx(0.5, abs=0.03)
    assert perm.mean == pytest.approx(prm.k_avg, rel=0.05)
    assert np.array_equal(perm.values, gen_grf_permeability(prm, perm.grid).values)
    with pytest.raises(ValueError):
        GrfParams(v=1.2, lx=1.0, ly=1.0)


def test_block25_multiplier_layout():
    g = Grid2D(0.0, 1.0, 0.0, 1.0, 20, 10)
    xi = np.arange(25.0)
    m = block25_multiplier(xi, g)
    assert m.shape == (10, 20)
    assert np.all(m[:2, :4] == 0.0) and np.all(m[-2:, -4:] == 24.0)
    assert np.all(m[2:4, 4:8] == 6.0)
    prm = GrfParams(v=0.4, lx=200.0, ly=200.0, seed=2)
    assert block25_multiplier(prm, Grid2D(0.0, 762.0, 0.0, 762.0, 10, 10)).shape == (10, 10)
    with pytest.raises(ValueError):
        block25_multiplier(xi, Grid2D(0.0, 1.0, 0.0, 1.0, 12, 10))


@pytest.mark.parametrize("contrast", [10.0, 502.0])
def test_contrast_matched_field_hits_contrast_and_mean(contrast):
    perm = contrast_matched_field(Grid2D(0.0, 1.0, 0.0, 1.0, 30, 30), contrast, 2e-13, 0.1, 0.1, seed=3)
    assert perm.contrast == pytest.approx(contrast, rel=1e-10)
    assert perm.mean == pytest.approx(2e-13, rel=1e-12)


def test_permeability_csv_round_trip():
    perm = contrast_matched_field(Grid2D(0.0, 762.0, 0.0, 762.0, 7, 5), 30.0, 1e-13, 100.0, 100.0)
    buf = io.StringIO()
    write_perm_csv(buf, perm)
    buf.seek(0)
    back = read_perm_csv(buf, (0.0, 762.0, 0.0, 762.0))
    assert back.grid == perm.grid
    assert np.allclose(back.values, perm.values, rtol=1e-15, atol=0)


def test_co2_cases():
    hom = build_co2_case("homogeneous", n=10)
    het = build_co2_case("heterogeneous", n=10)
    assert hom.n_steps == 3 and hom.darcy_dt == 30 * units.DAY
    assert hom.perm.contrast == 1.0 and het.perm.contrast > 10.0
    assert load_heterogeneous_field().grid.nx == 50
    assert hom.bcs.tracer("left", 0.0, 30 * units.DAY) == pytest.approx(100.0 / 3.0)
    moved = het.on_grid(Grid2D(0.0, 762.0, 0.0, 762.0, 5, 5))
    assert moved.perm.grid.nx == 5 and moved.props == het.props
    with pytest.raises(ValueError):
        build_co2_case("layered")
