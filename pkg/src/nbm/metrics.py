"""Error metrics: relative L2, KS distance, radially binned energy spectra
and residual/error correlation."""

import json
import logging
import warnings
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

SPECTRUM_DEFINITION = ("E(k) = sum over shells |k| in [k-0.5, k+0.5) of (|FFT ux|^2 + |FFT uy|^2) / N^2, "
                       "integer wavenumbers in grid units, no window, mean retained in k=0")


class MetricWarning(UserWarning):
    pass


@dataclass
class FieldPair:
    pred: np.ndarray
    ref: np.ndarray
    mask: np.ndarray = None

    def __post_init__(self):
        self.pred = np.asarray(self.pred, dtype=float)
        self.ref = np.asarray(self.ref, dtype=float)
        if self.pred.shape != self.ref.shape:
            raise ValueError(f"shape mismatch {self.pred.shape} vs {self.ref.shape}")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.ref.shape:
                raise ValueError("mask shape does not match the fields")

    def valid(self):
        if self.mask is None:
            return self.pred.ravel(), self.ref.ravel()
        return self.pred[self.mask], self.ref[self.mask]


def rel_l2(pred, ref, mask=None):
    """||pred - ref|| / ||ref|| over valid entries; the absolute norm (with a
    warning) when ref vanishes."""
    p, r = FieldPair(pred, ref, mask).valid()
    num = np.linalg.norm(p - r)
    den = np.linalg.norm(r)
    if den == 0.0:
        warnings.warn("reference has zero norm; returning the absolute error", MetricWarning)
        return float(num)
    return float(num / den)


def ks_distance(a, b):
    """Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("KS distance needs two nonempty samples")
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def _check_uniform(coords, name):
    if coords is None:
        return
    c = np.asarray(coords, dtype=float)
    d = np.diff(c)
    if c.size > 2 and not np.allclose(d, d[0], rtol=1e-9, atol=0.0):
        raise ValueError(f"energy spectrum needs a uniform grid; {name} spacing varies")


def energy_spectrum(ux, uy, x=None, y=None):
    """Shell-binned 2D power of the velocity components.

    ``ux``/``uy`` are (ny, nx) arrays. Returns (k, E) with k = 0..kmax integer
    shells. Optional coordinate vectors are checked for uniform spacing.
    """
    ux = np.asarray(ux, dtype=float)
    uy = np.asarray(uy, dtype=float)
    if ux.shape != uy.shape or ux.ndim != 2:
        raise ValueError("ux and uy must be 2D arrays of equal shape")
    _check_uniform(x, "x")
    _check_uniform(y, "y")
    ny, nx = ux.shape
    n2 = float(nx * ny) ** 2
    power = (np.abs(np.fft.fft2(ux)) ** 2 + np.abs(np.fft.fft2(uy)) ** 2) / n2
    kx = np.fft.fftfreq(nx) * nx
    ky = np.fft.fftfreq(ny) * ny
    kr = np.sqrt(kx[None, :] ** 2 + ky[:, None] ** 2)
    shell = np.rint(kr).astype(int)
    kmax = int(shell.max())
    E = np.bincount(shell.ravel(), weights=power.ravel(), minlength=kmax + 1)
    return np.arange(kmax + 1), E


def spectral_error(pred_uv, ref_uv):
    """Relative L2 difference of the binned spectra of two velocity fields."""
    _, Ep = energy_spectrum(*pred_uv)
    _, Er = energy_spectrum(*ref_uv)
    return rel_l2(Ep, Er)


def pearson(x, y):
    """Pearson correlation; NaN with a warning for fewer than 3 points or zero variance."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError("series lengths differ")
    if x.size < 3:
        warnings.warn("correlation needs at least 3 points", MetricWarning)
        return float("nan")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(dx @ dx), np.sqrt(dy @ dy)
    if sx == 0.0 or sy == 0.0:
        warnings.warn("zero variance; correlation undefined", MetricWarning)
        return float("nan")
    return float(dx @ dy / (sx * sy))


def residual_error_correlation(sqrt_e_rel, rel_err):
    return pearson(sqrt_e_rel, rel_err)


def field_metrics(pred: dict, ref: dict, keys=("p", "ux", "uy", "c"), e_rel=None):
    """metrics.json payload comparing matching entries of two field dicts."""
    out = {"rel_l2": {}}
    for k in keys:
        if k in pred and k in ref and pred[k] is not None and ref[k] is not None:
            out["rel_l2"][k] = rel_l2(pred[k], ref[k])
    if all(k in pred and k in ref for k in ("ux", "uy")):
        mp = np.hypot(pred["ux"], pred["uy"])
        mr = np.hypot(ref["ux"], ref["uy"])
        out["ks"] = ks_distance(mp, mr)
        out["spectral_error"] = spectral_error((pred["ux"], pred["uy"]), (ref["ux"], ref["uy"]))
        out["spectrum_definition"] = SPECTRUM_DEFINITION
    if e_rel is not None:
        out["e_rel"] = e_rel
    return out


def write_metrics(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
