import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nbm.basis import (BasisConfig, BasisParams, FilterCriteria, default_config, evaluate_basis,
                       filter_hyperplanes, init_basis, line_chord_2d)

from oracles import ARCHITECTURES, architecture, chord_by_sampling, fd_derivative_errors, random_points


@pytest.mark.parametrize("name", list(ARCHITECTURES))
def test_analytic_derivatives_match_finite_differences(name):
    params = architecture(name)
    X = random_points(params, 100, seed=1)
    ej, eh = fd_derivative_errors(params, X)
    assert ej < 1e-6
    assert eh < 1e-4


def test_evaluation_is_deterministic_and_chunk_independent():
    p = architecture("dual-2d")
    X = random_points(p, 37, seed=2)
    a = evaluate_basis(p, X, "hess")
    b = evaluate_basis(p, X, "hess", chunk_rows=5)
    # BLAS blocking may change the last bits between chunk sizes
    assert np.allclose(a.values, b.values, rtol=1e-13, atol=1e-13)
    assert np.allclose(a.hess, b.hess, rtol=1e-12, atol=1e-12)
    again = init_basis(BasisConfig(**ARCHITECTURES["dual-2d"]))
    assert np.array_equal(evaluate_basis(again, X).values, a.values)


def test_hessian_symmetric_and_laplacian_is_trace():
    p = architecture("triple-3d-concat")
    ev = evaluate_basis(p, random_points(p, 10, 0), "hess")
    assert np.array_equal(ev.hess, np.swapaxes(ev.hess, 2, 3))
    assert np.allclose(ev.laplacian(), np.trace(ev.hess, axis1=2, axis2=3))


def test_function_count_and_constant_column():
    cfg = default_config(2, 25, [[0, 1], [0, 1]], seed=0)
    p = init_basis(cfg)
    assert p.n_functions == 26
    ev = evaluate_basis(p, np.array([[0.3, 0.4], [0.9, 0.1]]), "grad")
    assert np.all(ev.values[:, -1] == 1.0)
    assert np.all(ev.grad[:, -1, :] == 0.0)
    p3 = architecture("triple-3d-concat")
    assert p3.n_functions == 3 + 30 + 20 + 1


def test_first_layer_uses_normalized_coordinates():
    # a physical box and the unit box give the same values at mapped points
    phys = init_basis(BasisConfig(2, [20], [[0.0, 762.0], [100.0, 300.0]], seed=4))
    unit = init_basis(BasisConfig(2, [20], [[-1.0, 1.0], [-1.0, 1.0]], seed=4))
    xh = np.random.default_rng(0).uniform(-1, 1, (15, 2))
    x = np.column_stack([381.0 + 381.0 * xh[:, 0], 200.0 + 100.0 * xh[:, 1]])
    assert np.allclose(evaluate_basis(phys, x).values, evaluate_basis(unit, xh).values, atol=1e-12)


def test_serialization_round_trip():
    p = architecture("triple-3d-concat")
    q = BasisParams.from_bytes(p.to_bytes())
    X = random_points(p, 8, 3)
    assert np.array_equal(evaluate_basis(p, X, "hess").hess, evaluate_basis(q, X, "hess").hess)


def test_frozen_arrays_are_read_only():
    p = architecture("single-2d")
    with pytest.raises(ValueError):
        p.W[0][0, 0] = 1.0


@pytest.mark.parametrize("bad", [
    dict(input_dim=4, layer_widths=[5], domain_box=[[0, 1]] * 4),
    dict(input_dim=2, layer_widths=[], domain_box=[[0, 1], [0, 1]]),
    dict(input_dim=2, layer_widths=[5], domain_box=[[1, 0], [0, 1]]),
    dict(input_dim=2, layer_widths=[5], domain_box=[[0, 1], [0, 1]], activation="relu"),
    dict(input_dim=2, layer_widths=[5, 5], domain_box=[[0, 1], [0, 1]], concat_layers=(3,)),
])
def test_invalid_configs_rejected(bad):
    with pytest.raises(ValueError):
        init_basis(BasisConfig(**bad))


def test_wrong_point_dimension_rejected():
    with pytest.raises(ValueError):
        evaluate_basis(architecture("single-2d"), np.zeros((3, 3)))


# ------------------------------------------------------------- hyperplanes

@settings(max_examples=60, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(-1.6, 1.6))
def test_chord_matches_sampled_length(phi, b):
    w = np.array([np.cos(phi), np.sin(phi)])
    assert line_chord_2d(w, b) == pytest.approx(chord_by_sampling(w, b), abs=1e-3)


def test_filter_matches_brute_force_rules():
    rng = np.random.default_rng(9)
    ang = rng.uniform(0, 2 * np.pi, 400)
    cands = list(zip(np.column_stack([np.cos(ang), np.sin(ang)]), rng.uniform(-1.5, 1.5, 400)))
    crit = FilterCriteria(min_chord=0.3, min_angle_sep=np.deg2rad(5.0), min_offset_sep=0.1)
    acc, short = filter_hyperplanes(cands, crit)
    assert short == 0

    def too_close(w1, b1, w2, b2):
        for s in (1.0, -1.0):
            cosang = np.clip(s * w1 @ w2, -1, 1)
            if np.arccos(cosang) <= crit.min_angle_sep + 1e-12 and abs(b1 - s * b2) < crit.min_offset_sep:
                return True
        return False

    kept = []
    for w, b in cands:
        ok = chord_by_sampling(w, b) >= crit.min_chord - 1e-3 and not any(too_close(w, b, w2, b2) for w2, b2 in kept)
        # skip the borderline chords where sampling resolution decides
        if abs(chord_by_sampling(w, b) - crit.min_chord) < 2e-3:
            ok = line_chord_2d(w, b) >= crit.min_chord and not any(too_close(w, b, w2, b2) for w2, b2 in kept)
        if ok:
            kept.append((w, b))
    assert len(kept) == len(acc)
    for (w1, b1), (w2, b2) in zip(kept, acc):
        assert np.allclose(w1, w2) and b1 == b2


def test_filtered_init_reports_shortfall():
    cfg = BasisConfig(2, [300], [[-1, 1], [-1, 1]], seed=0, filter_hyperplanes=True,
                      filter_criteria=FilterCriteria(min_chord=2.5, min_angle_sep=0.3, min_offset_sep=0.5))
    p = init_basis(cfg)
    assert p.n_filter_shortfall > 0
    assert p.widths == (300,)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(2, 12), st.integers(0, 2 ** 31))
def test_basis_values_finite_for_random_architectures(n_layers, width, seed):
    p = init_basis(BasisConfig(2, [width] * n_layers, [[-1, 1], [-1, 1]], seed=seed))
    ev = evaluate_basis(p, random_points(p, 20, seed % 1000), "grad")
    assert np.all(np.isfinite(ev.values)) and np.all(np.isfinite(ev.grad))
    assert ev.values.shape == (20, p.n_functions)
