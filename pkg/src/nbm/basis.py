"""Frozen residual tanh network used as a scalar basis, with analytic derivatives.

Layer recursion (rows are points)::

    t_l = A_{l-1} W_l^T + b_l
    z_l = tanh(alpha_l * t_l)
    s_l = beta_l A_{l-1} P_l^T  (+ gamma_1 on the first layer)
    A_l = s_l + z_l

The basis matrix concatenates the layers listed in ``concat_layers`` and,
optionally, a constant column. First-layer parameters are drawn for the
normalized box [-1, 1]^d and then mapped to physical coordinates.
"""

import io
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
_ACTIVATIONS = ("tanh",)


@dataclass
class FilterCriteria:
    min_chord: float = 0.1 * 2.0 * np.sqrt(2.0)
    min_angle_sep: float = np.deg2rad(1.0)
    min_offset_sep: float = 0.02


@dataclass
class BasisConfig:
    input_dim: int
    layer_widths: list
    domain_box: list
    seed: int = 0
    activation: str = "tanh"
    bias_radius: float = 1.5
    residual_strengths: list = None     # beta per layer, default 1
    shape_factors: list = None          # alpha per layer (scalar or array), default 1
    concat_layers: tuple = None         # 1-based layer indices, 0 = input; default (L,)
    include_constant: bool = True
    filter_hyperplanes: bool = False
    filter_criteria: FilterCriteria = field(default_factory=FilterCriteria)

    def validate(self):
        if self.input_dim not in (1, 2, 3):
            raise ValueError(f"input_dim must be 1, 2 or 3, got {self.input_dim}")
        if not self.layer_widths:
            raise ValueError("layer_widths is empty")
        if any(int(p) < 1 for p in self.layer_widths):
            raise ValueError("all layer widths must be >= 1")
        box = np.asarray(self.domain_box, dtype=float)
        if box.shape != (self.input_dim, 2) or not np.all(np.isfinite(box)):
            raise ValueError("domain_box must be finite with one [lo, hi] per axis")
        if np.any(box[:, 0] >= box[:, 1]):
            raise ValueError("domain_box needs lo < hi on every axis")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unsupported activation {self.activation!r}")
        L = len(self.layer_widths)
        for k in self.layers_out():
            if not 0 <= k <= L:
                raise ValueError(f"concat layer {k} outside 0..{L}")
        if self.filter_hyperplanes and self.input_dim != 2:
            raise ValueError("hyperplane filtering is defined for 2D inputs only")

    def layers_out(self):
        if self.concat_layers is None:
            return (len(self.layer_widths),)
        return tuple(sorted(set(int(k) for k in self.concat_layers)))

    def to_dict(self):
        return {
            "input_dim": int(self.input_dim),
            "layer_widths": [int(p) for p in self.layer_widths],
            "domain_box": [[float(a), float(b)] for a, b in self.domain_box],
            "seed": int(self.seed),
            "activation": self.activation,
            "bias_radius": float(self.bias_radius),
            "residual_strengths": None if self.residual_strengths is None
            else [float(v) for v in self.residual_strengths],
            "shape_factors": None if self.shape_factors is None
            else [np.asarray(a, dtype=float).tolist() for a in self.shape_factors],
            "concat_layers": list(self.layers_out()),
            "include_constant": bool(self.include_constant),
            "filter_hyperplanes": bool(self.filter_hyperplanes),
            "filter_criteria": {
                "min_chord": float(self.filter_criteria.min_chord),
                "min_angle_sep": float(self.filter_criteria.min_angle_sep),
                "min_offset_sep": float(self.filter_criteria.min_offset_sep),
            },
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        fc = d.pop("filter_criteria", None)
        cfg = cls(**d)
        if fc is not None:
            cfg.filter_criteria = FilterCriteria(**fc)
        return cfg


@dataclass(frozen=True)
class BasisParams:
    """Frozen network parameters. Arrays are write-protected."""
    W: tuple
    b: tuple
    P: tuple
    alpha: tuple
    beta: tuple
    gamma1: np.ndarray
    scale: np.ndarray       # half lengths s
    center: np.ndarray      # centers c
    identity_skip: tuple    # True where P_l is the identity
    concat_layers: tuple
    include_constant: bool
    activation: str = "tanh"
    n_filter_shortfall: int = 0

    @property
    def input_dim(self):
        return self.scale.size

    @property
    def widths(self):
        return tuple(w.shape[0] for w in self.W)

    @property
    def n_functions(self):
        n = sum(self.input_dim if k == 0 else self.widths[k - 1] for k in self.concat_layers)
        return n + int(self.include_constant)

    def to_bytes(self):
        arrays = {"version": np.array(FORMAT_VERSION),
                  "gamma1": self.gamma1, "scale": self.scale, "center": self.center,
                  "beta": np.array(self.beta, dtype=float),
                  "identity_skip": np.array(self.identity_skip, dtype=bool),
                  "concat_layers": np.array(self.concat_layers, dtype=np.int64),
                  "include_constant": np.array(self.include_constant),
                  "activation": np.array(self.activation),
                  "n_layers": np.array(len(self.W))}
        for i, (W, b, P, a) in enumerate(zip(self.W, self.b, self.P, self.alpha)):
            arrays[f"W{i}"] = W
            arrays[f"b{i}"] = b
            arrays[f"P{i}"] = P
            arrays[f"alpha{i}"] = a
        buf = io.BytesIO()
        np.savez(buf, **arrays)
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, blob):
        z = np.load(io.BytesIO(blob), allow_pickle=False)
        version = int(z["version"])
        if version != FORMAT_VERSION:
            raise ValueError(f"basis blob version {version}, expected {FORMAT_VERSION}")
        n = int(z["n_layers"])
        return _freeze(
            W=[z[f"W{i}"] for i in range(n)], b=[z[f"b{i}"] for i in range(n)],
            P=[z[f"P{i}"] for i in range(n)], alpha=[z[f"alpha{i}"] for i in range(n)],
            beta=[float(v) for v in z["beta"]], gamma1=z["gamma1"],
            scale=z["scale"], center=z["center"],
            identity_skip=[bool(v) for v in z["identity_skip"]],
            concat_layers=tuple(int(k) for k in z["concat_layers"]),
            include_constant=bool(z["include_constant"]),
            activation=str(z["activation"]))


def _freeze(**kw):
    for key in ("W", "b", "P", "alpha"):
        arrs = []
        for a in kw[key]:
            a = np.array(a, dtype=float)
            a.setflags(write=False)
            arrs.append(a)
        kw[key] = tuple(arrs)
    for key in ("gamma1", "scale", "center"):
        a = np.array(kw[key], dtype=float)
        a.setflags(write=False)
        kw[key] = a
    kw["beta"] = tuple(kw["beta"])
    kw["identity_skip"] = tuple(kw["identity_skip"])
    return BasisParams(**kw)


# ---------------------------------------------------------------- hyperplanes

def line_chord_2d(w, b):
    """Length of {x in [-1,1]^2 : w.x + b = 0} for unit w."""
    p0 = -b * np.asarray(w, dtype=float)
    t_dir = np.array([-w[1], w[0]])
    lo, hi = -np.inf, np.inf
    for k in range(2):
        if abs(t_dir[k]) < 1e-15:
            if abs(p0[k]) > 1.0:
                return 0.0
            continue
        t1 = (-1.0 - p0[k]) / t_dir[k]
        t2 = (1.0 - p0[k]) / t_dir[k]
        lo = max(lo, min(t1, t2))
        hi = min(hi, max(t1, t2))
    return max(0.0, hi - lo)


def filter_hyperplanes(candidates, criteria=None, n_wanted=None):
    """Greedy geometric filter for first-layer lines on [-1,1]^2.

    A candidate is rejected if its chord through the box is shorter than
    ``min_chord`` or if an already accepted line is both within
    ``min_angle_sep`` in orientation and within ``min_offset_sep`` in offset.
    Returns (accepted list of (w, b), shortfall); shortfall > 0 means the pool
    ran out before ``n_wanted`` lines were found.
    """
    criteria = criteria or FilterCriteria()
    cos_tol = np.cos(criteria.min_angle_sep)
    acc_w, acc_b, accepted = [], [], []
    for w, b in candidates:
        w = np.asarray(w, dtype=float)
        if line_chord_2d(w, b) < criteria.min_chord:
            continue
        if acc_w:
            W = np.asarray(acc_w)
            dots = W @ w
            sgn = np.where(dots >= 0.0, 1.0, -1.0)
            close = (np.abs(dots) >= cos_tol) & (np.abs(np.asarray(acc_b) - sgn * b) < criteria.min_offset_sep)
            if np.any(close):
                continue
        acc_w.append(w)
        acc_b.append(float(b))
        accepted.append((w, float(b)))
        if n_wanted is not None and len(accepted) == n_wanted:
            break
    shortfall = 0 if n_wanted is None else n_wanted - len(accepted)
    if shortfall > 0:
        log.warning("hyperplane filter: pool exhausted, %d lines short", shortfall)
    return accepted, shortfall


# ---------------------------------------------------------------------- init

def _sphere(rng, n, d):
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def init_basis(config: BasisConfig) -> BasisParams:
    config.validate()
    d = config.input_dim
    widths = [int(p) for p in config.layer_widths]
    L = len(widths)
    r = float(config.bias_radius)
    beta = [1.0] * L if config.residual_strengths is None else [float(v) for v in config.residual_strengths]
    if len(beta) != L:
        raise ValueError("residual_strengths needs one value per layer")
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(int(config.seed)).spawn(L)]

    box = np.asarray(config.domain_box, dtype=float)
    center = 0.5 * (box[:, 0] + box[:, 1])
    scale = 0.5 * (box[:, 1] - box[:, 0])

    W, b, P, alpha, ident = [], [], [], [], []
    shortfall = 0
    prev = d
    for ell, p in enumerate(widths):
        rng = streams[ell]
        if ell == 0:
            if config.filter_hyperplanes:
                pool = 50 * p
                cand = list(zip(_sphere(rng, pool, d), rng.uniform(-r, r, pool)))
                accepted, shortfall = filter_hyperplanes(cand, config.filter_criteria, n_wanted=p)
                if shortfall > 0:
                    # top up with the earliest rejected candidates so the width is honoured
                    taken = {id(c[0]) for c in accepted}
                    extra = [c for c in cand if id(c[0]) not in taken][:shortfall]
                    accepted = accepted + extra
                Wl = np.array([c[0] for c in accepted])
                bl = np.array([c[1] for c in accepted])
            else:
                Wl = _sphere(rng, p, d)
                bl = rng.uniform(-r, r, p)
        else:
            Wl = rng.standard_normal((p, prev))
            bl = rng.uniform(-r, r, p)
        square = p == prev
        if square:
            Pl = np.eye(p)
        else:
            Pl = rng.standard_normal((p, prev)) / np.sqrt(prev)
        W.append(Wl)
        b.append(bl)
        P.append(Pl)
        ident.append(bool(square))
        prev = p

    for ell, p in enumerate(widths):
        a = 1.0 if config.shape_factors is None else config.shape_factors[ell]
        alpha.append(np.broadcast_to(np.asarray(a, dtype=float), (p,)).copy())

    # absorb the affine map x_hat = (x - c) / s into the first layer
    cs = center / scale
    gamma1 = -beta[0] * (P[0] @ cs)
    b[0] = b[0] - W[0] @ cs
    W[0] = W[0] / scale
    P[0] = P[0] / scale
    if ident[0] and not np.allclose(scale, 1.0):
        ident[0] = False

    return _freeze(W=W, b=b, P=P, alpha=alpha, beta=beta, gamma1=gamma1,
                   scale=scale, center=center, identity_skip=ident,
                   concat_layers=config.layers_out(),
                   include_constant=bool(config.include_constant),
                   activation=config.activation, n_filter_shortfall=int(shortfall))


# ---------------------------------------------------------------- evaluation

class BasisEval:
    """Basis values and derivatives at M points.

    ``values`` is M x P; ``grad`` is M x P x d and ``hess`` M x P x d x d
    (views onto derivative-major storage, so ``dx(a)`` is contiguous).
    """

    def __init__(self, values, dstore=None, hstore=None):
        self.values = values
        self._d = dstore        # (M, d, P)
        self._h = hstore        # (M, d, d, P)

    @property
    def n_points(self):
        return self.values.shape[0]

    @property
    def n_functions(self):
        return self.values.shape[1]

    @property
    def has_grad(self):
        return self._d is not None

    @property
    def has_hess(self):
        return self._h is not None

    @property
    def grad(self):
        if self._d is None:
            raise ValueError("basis evaluation has no first derivatives")
        return np.moveaxis(self._d, 1, 2)

    @property
    def hess(self):
        if self._h is None:
            raise ValueError("basis evaluation has no second derivatives")
        return np.moveaxis(self._h, 3, 1)

    def dx(self, a):
        """d/dx_a of every basis function, M x P."""
        if self._d is None:
            raise ValueError("basis evaluation has no first derivatives")
        return self._d[:, a, :]

    def dxx(self, a, b):
        if self._h is None:
            raise ValueError("basis evaluation has no second derivatives")
        return self._h[:, a, b, :]

    def laplacian(self):
        if self._h is None:
            raise ValueError("basis evaluation has no second derivatives")
        d = self._h.shape[1]
        return sum(self._h[:, a, a, :] for a in range(d))


_ORDERS = {"values": 0, "grad": 1, "hess": 2, 0: 0, 1: 1, 2: 2}


def evaluate_basis(params: BasisParams, X, order="values", chunk_rows=None):
    """Evaluate the frozen basis at points X (M x d, physical coordinates)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d = params.input_dim
    if X.shape[1] != d:
        raise ValueError(f"points have {X.shape[1]} coordinates, basis expects {d}")
    k = _ORDERS[order]
    M = X.shape[0]
    P = params.n_functions
    if chunk_rows is None:
        # keep the largest per-layer temporary around ~200 MB
        widest = max(params.widths)
        per_row = widest * (1 + d + (d * d if k == 2 else 0)) * 8 * 4
        chunk_rows = max(1, int(2.0e8 // per_row))
    values = np.empty((M, P))
    dstore = np.empty((M, d, P)) if k >= 1 else None
    hstore = np.empty((M, d, d, P)) if k >= 2 else None
    for lo in range(0, M, chunk_rows):
        hi = min(M, lo + chunk_rows)
        v, g, h = _forward(params, X[lo:hi], k)
        values[lo:hi] = v
        if k >= 1:
            dstore[lo:hi] = g
        if k >= 2:
            hstore[lo:hi] = h
    return BasisEval(values, dstore, hstore)


def _forward(params, X, k):
    M, d = X.shape
    outs = {}
    A = X
    G = np.broadcast_to(np.eye(d)[None, :, :], (M, d, d)) if k >= 1 else None   # (M, d, p)
    Hs = np.zeros((M, d, d, d)) if k >= 2 else None
    if 0 in params.concat_layers:
        outs[0] = (A, G, Hs)
    L = len(params.W)
    for ell in range(L):
        W, bvec, Pm = params.W[ell], params.b[ell], params.P[ell]
        alpha, beta = params.alpha[ell], params.beta[ell]
        p = W.shape[0]
        a = (A @ W.T + bvec) * alpha
        z = np.tanh(a)
        if ell == 0:
            s = beta * (A @ Pm.T) + params.gamma1
        elif params.identity_skip[ell]:
            s = beta * A
        else:
            s = beta * (A @ Pm.T)
        A_new = s + z
        if not np.all(np.isfinite(A_new)):
            raise FloatingPointError(f"non-finite basis values in layer {ell + 1}")
        G_new = H_new = None
        if k >= 1:
            sech2 = 1.0 - z * z                       # sigma'
            # first derivative of the pre-activation, (M, d, p)
            if ell == 0:
                Gt = np.broadcast_to(W.T[None, :, :], (M, d, p))
                Gs = np.broadcast_to(beta * Pm.T[None, :, :], (M, d, p))
            else:
                Gt = (G.reshape(M * d, -1) @ W.T).reshape(M, d, p)
                if params.identity_skip[ell]:
                    Gs = beta * G
                else:
                    Gs = (G.reshape(M * d, -1) @ Pm.T).reshape(M, d, p) * beta
            fac1 = (sech2 * alpha)[:, None, :]
            G_new = Gs + fac1 * Gt
            if not np.all(np.isfinite(G_new)):
                raise FloatingPointError(f"non-finite basis gradient in layer {ell + 1}")
            if k >= 2:
                fac2 = (-2.0 * z * sech2 * alpha * alpha)     # sigma'' alpha^2
                H_new = fac2[:, None, None, :] * (Gt[:, :, None, :] * Gt[:, None, :, :])
                if ell > 0:
                    Ht = (Hs.reshape(M * d * d, -1) @ W.T).reshape(M, d, d, p)
                    H_new += fac1[:, None, :, :] * Ht
                    if params.identity_skip[ell]:
                        H_new += beta * Hs
                    else:
                        H_new += beta * (Hs.reshape(M * d * d, -1) @ Pm.T).reshape(M, d, d, p)
                if not np.all(np.isfinite(H_new)):
                    raise FloatingPointError(f"non-finite basis Hessian in layer {ell + 1}")
        A, G, Hs = A_new, G_new, H_new
        if ell + 1 in params.concat_layers:
            outs[ell + 1] = (A, G, Hs)

    vals = [outs[j][0] for j in params.concat_layers]
    grads = [outs[j][1] for j in params.concat_layers] if k >= 1 else None
    hesss = [outs[j][2] for j in params.concat_layers] if k >= 2 else None
    if params.include_constant:
        vals.append(np.ones((M, 1)))
        if k >= 1:
            grads.append(np.zeros((M, d, 1)))
        if k >= 2:
            hesss.append(np.zeros((M, d, d, 1)))
    v = np.concatenate(vals, axis=1)
    g = np.concatenate(grads, axis=2) if k >= 1 else None
    h = np.concatenate(hesss, axis=3) if k >= 2 else None
    if h is not None:
        # exact symmetry in the spatial indices
        h = 0.5 * (h + np.swapaxes(h, 1, 2))
    return v, g, h


def default_config(input_dim, width, domain_box, seed=0, n_layers=2, **kw):
    """Equal-width architecture with the last layer and a constant column."""
    return BasisConfig(input_dim=input_dim, layer_widths=[int(width)] * n_layers,
                       domain_box=domain_box, seed=seed, **kw)
