import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from nbm.metrics import (MetricWarning, energy_spectrum, field_metrics, ks_distance, pearson, rel_l2,
                         residual_error_correlation, spectral_error, write_metrics)

from oracles import ks_merge, pearson_cov

samples = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=60)


@settings(max_examples=80, deadline=None)
@given(samples, samples)
def test_ks_matches_merge_oracle(a, b):
    assert ks_distance(a, b) == pytest.approx(ks_merge(a, b), abs=1e-12)


def test_ks_matches_scipy_statistic():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=300), rng.normal(0.3, 1.2, size=170)
    assert ks_distance(a, b) == pytest.approx(stats.ks_2samp(a, b).statistic, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(samples, samples, st.randoms(use_true_random=False))
def test_ks_is_permutation_invariant_and_symmetric(a, b, r):
    a2 = list(a)
    r.shuffle(a2)
    assert ks_distance(a, b) == ks_distance(a2, b) == ks_distance(b, a)


def test_ks_rejects_empty():
    with pytest.raises(ValueError):
        ks_distance([], [1.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=40))
def test_pearson_matches_covariance_oracle(pairs):
    x, y = np.array(pairs).T
    if np.ptp(x) < 1e-6 or np.ptp(y) < 1e-6:
        return
    assert pearson(x, y) == pytest.approx(pearson_cov(x, y), abs=1e-9)


def test_pearson_degenerate_inputs_warn():
    with pytest.warns(MetricWarning):
        assert np.isnan(pearson([1, 2], [3, 4]))
    with pytest.warns(MetricWarning):
        assert np.isnan(pearson([1, 1, 1], [1, 2, 3]))
    with pytest.raises(ValueError):
        pearson([1, 2, 3], [1, 2])
    assert residual_error_correlation([1, 2, 3], [2, 4, 6.5]) > 0.99


def test_rel_l2_basic_and_masked():
    ref = np.array([3.0, 4.0, 100.0])
    pred = np.array([3.0, 5.0, 0.0])
    mask = np.array([True, True, False])
    assert rel_l2(pred, ref, mask) == pytest.approx(1.0 / 5.0)
    assert rel_l2(ref, ref) == 0.0
    with pytest.warns(MetricWarning):
        assert rel_l2(np.array([3.0, 4.0]), np.zeros(2)) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        rel_l2(np.ones(2), np.ones(3))


def test_spectrum_parseval_and_single_mode():
    rng = np.random.default_rng(1)
    ux, uy = rng.standard_normal((16, 20)), rng.standard_normal((16, 20))
    k, E = energy_spectrum(ux, uy)
    assert E.sum() == pytest.approx((ux ** 2 + uy ** 2).sum() / ux.size, rel=1e-12)
    j, i = np.meshgrid(np.arange(16), np.arange(20), indexing="ij")
    wave = np.cos(2 * np.pi * 3 * i / 20)
    k, E = energy_spectrum(wave, np.zeros_like(wave))
    assert np.argmax(E) == 3
    assert E[3] == pytest.approx(0.5, rel=1e-12)
    assert np.allclose(np.delete(E, 3), 0.0, atol=1e-20)


def test_spectrum_rejects_nonuniform_grid():
    u = np.ones((4, 4))
    with pytest.raises(ValueError):
        energy_spectrum(u, u, x=np.array([0, 1, 2, 4.0]))
    energy_spectrum(u, u, x=np.arange(4.0), y=np.arange(4.0) * 0.5)


def test_field_metrics_payload(tmp_path):
    rng = np.random.default_rng(2)
    ref = {k: rng.standard_normal((8, 8)) for k in ("p", "ux", "uy", "c")}
    pred = {k: v * 1.01 for k, v in ref.items()}
    out = field_metrics(pred, ref, e_rel=1e-6)
    assert set(out) == {"rel_l2", "ks", "spectral_error", "spectrum_definition", "e_rel"}
    assert all(v == pytest.approx(0.01) for v in out["rel_l2"].values())
    assert spectral_error((ref["ux"], ref["uy"]), (ref["ux"], ref["uy"])) == 0.0
    write_metrics(tmp_path / "m.json", out)
    assert json.loads((tmp_path / "m.json").read_text())["e_rel"] == 1e-6


def test_metrics_are_deterministic():
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal((10, 10)), rng.standard_normal((10, 10))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert field_metrics({"ux": a, "uy": b}, {"ux": b, "uy": a}) == \
            field_metrics({"ux": a, "uy": b}, {"ux": b, "uy": a})
