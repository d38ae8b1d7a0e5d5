"""Independent reference computations shared by unit and acceptance tests."""

import numpy as np

from nbm.basis import BasisConfig, evaluate_basis, init_basis


# three architectures used by the derivative checks
ARCHITECTURES = {
    "single-2d": dict(input_dim=2, layer_widths=[40], domain_box=[[0.0, 762.0], [0.0, 762.0]], seed=3),
    "dual-2d": dict(input_dim=2, layer_widths=[60, 60], domain_box=[[-1.0, 1.0], [-1.0, 1.0]], seed=5,
                    shape_factors=[1.0, 0.3]),
    "triple-3d-concat": dict(input_dim=3, layer_widths=[30, 20, 20], domain_box=[[0, 2], [-1, 1], [0, 0.5]],
                             seed=7, concat_layers=(0, 1, 3), residual_strengths=[1.0, 0.5, 1.0],
                             shape_factors=[1.0, 0.5, 0.3]),
}


def architecture(name):
    return init_basis(BasisConfig(**ARCHITECTURES[name]))


def random_points(params, n, seed):
    rng = np.random.default_rng(seed)
    lo = params.center - params.scale
    return lo + 2.0 * params.scale * rng.random((n, params.input_dim))


def fd_derivative_errors(params, X, step=1e-5):
    """Relative errors of analytic gradients and Hessians against central
    differences (of values for J, of analytic gradients for H)."""
    ev = evaluate_basis(params, X, "hess")
    d = params.input_dim
    J_fd = np.empty_like(ev.grad)
    H_fd = np.empty_like(ev.hess)
    for a in range(d):
        h = step * params.scale[a]
        e = np.zeros(d)
        e[a] = h
        plus = evaluate_basis(params, X + e, "grad")
        minus = evaluate_basis(params, X - e, "grad")
        J_fd[:, :, a] = (plus.values - minus.values) / (2 * h)
        H_fd[:, :, :, a] = (plus.grad - minus.grad) / (2 * h)
    ej = np.linalg.norm(J_fd - ev.grad) / np.linalg.norm(ev.grad)
    eh = np.linalg.norm(H_fd - ev.hess) / np.linalg.norm(ev.hess)
    return float(ej), float(eh)


def chord_by_sampling(w, b, n=200001):
    """Length of {w.x + b = 0} inside [-1,1]^2 by dense sampling along the line."""
    w = np.asarray(w, dtype=float)
    p0 = -b * w
    t = np.linspace(-3.0, 3.0, n)
    pts = p0[None, :] + t[:, None] * np.array([-w[1], w[0]])[None, :]
    inside = np.all(np.abs(pts) <= 1.0, axis=1)
    return inside.sum() * (t[1] - t[0]) if inside.any() else 0.0


def fd_divergence(field_fn, X, h):
    """Central-difference divergence of a vector field callable f(X) -> (M, d)."""
    d = X.shape[1]
    div = 0.0
    for a in range(d):
        e = np.zeros(d)
        e[a] = h
        div = div + (field_fn(X + e)[:, :, a] - field_fn(X - e)[:, :, a]) / (2 * h)
    return div


def ks_merge(a, b):
    """Two-sample KS statistic by merging the sorted samples."""
    a, b = sorted(np.ravel(a)), sorted(np.ravel(b))
    i = j = 0
    best = 0.0
    while i < len(a) and j < len(b):
        v = min(a[i], b[j])
        while i < len(a) and a[i] == v:
            i += 1
        while j < len(b) and b[j] == v:
            j += 1
        best = max(best, abs(i / len(a) - j / len(b)))
    return best


def pearson_cov(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    n = x.size
    mx, my = sum(x) / n, sum(y) / n
    cov = sum((xi - mx) * (yi - my) for xi, yi in zip(x, y))
    vx = sum((xi - mx) ** 2 for xi in x)
    vy = sum((yi - my) ** 2 for yi in y)
    return cov / np.sqrt(vx * vy)


def upwind_1d_explicit_loop(nx, L, u, eps, dt, c0, c_in, n_steps):
    """Implicit upwind for constant u > 0 on a 1D row, solved by forward sweep."""
    h = L / nx
    a = eps * h / dt
    c = np.array(c0, dtype=float)
    out = []
    for _ in range(n_steps):
        new = np.empty(nx)
        up = c_in
        for i in range(nx):
            new[i] = (a * c[i] + u * up) / (a + u)
            up = new[i]
        c = new
        out.append(c.copy())
    return out
