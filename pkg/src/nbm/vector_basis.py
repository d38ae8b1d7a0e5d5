"""Helmholtz-conforming vector bases built from a scalar basis, projection
utilities and a discrete Helmholtz decomposition of gridded vector fields."""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import lsmr

from .basis import BasisEval

log = logging.getLogger(__name__)


@dataclass
class VectorBasisEval:
    """``div_free``: M x P x d (2D) or M x 3P x 3 (3D, families x, y, z
    stacked); ``curl_free``: M x P x d."""
    div_free: np.ndarray
    curl_free: np.ndarray

    @property
    def dim(self):
        return self.curl_free.shape[2]

    @property
    def n_div(self):
        return self.div_free.shape[1]

    @property
    def n_curl(self):
        return self.curl_free.shape[1]

    def component(self, part, a):
        """M x P matrix of component ``a`` for part 'div' or 'curl'."""
        arr = self.div_free if part == "div" else self.curl_free
        return arr[:, :, a]

    def normal(self, part, normals):
        arr = self.div_free if part == "div" else self.curl_free
        return np.einsum("mpa,ma->mp", arr, normals)


def build_vector_basis_2d(ev: BasisEval) -> VectorBasisEval:
    if not ev.has_grad:
        raise ValueError("vector basis needs first derivatives of the scalar basis")
    if ev.grad.shape[2] != 2:
        raise ValueError("build_vector_basis_2d needs a 2D scalar basis")
    gx, gy = ev.dx(0), ev.dx(1)
    curl = np.stack([gx, gy], axis=2)
    div = np.stack([gy, -gx], axis=2)
    return VectorBasisEval(div, curl)


def build_vector_basis_3d(ev: BasisEval) -> VectorBasisEval:
    if not ev.has_grad or ev.grad.shape[2] != 3:
        raise ValueError("build_vector_basis_3d needs a 3D scalar basis with gradients")
    gx, gy, gz = ev.dx(0), ev.dx(1), ev.dx(2)
    z = np.zeros_like(gx)
    fam_x = np.stack([z, gz, -gy], axis=2)
    fam_y = np.stack([-gz, z, gx], axis=2)
    fam_z = np.stack([gy, -gx, z], axis=2)
    div = np.concatenate([fam_x, fam_y, fam_z], axis=1)
    curl = np.stack([gx, gy, gz], axis=2)
    return VectorBasisEval(div, curl)


def reconstruct_flux(vb: VectorBasisEval, theta_div, theta_curl):
    theta_div = np.asarray(theta_div, dtype=float)
    theta_curl = np.asarray(theta_curl, dtype=float)
    if theta_div.size != vb.n_div or theta_curl.size != vb.n_curl:
        raise ValueError(f"coefficient lengths ({theta_div.size}, {theta_curl.size}) "
                         f"do not match basis ({vb.n_div}, {vb.n_curl})")
    return (np.einsum("mpa,p->ma", vb.div_free, theta_div)
            + np.einsum("mpa,p->ma", vb.curl_free, theta_curl))


def project_scalar_field(Phi, s_ref):
    """Least-squares projection of sampled values onto span(Phi).

    Returns (theta, err) with err the relative L2 misfit, or the absolute
    misfit when the target is identically zero.
    """
    Phi = np.asarray(Phi, dtype=float)
    s_ref = np.asarray(s_ref, dtype=float).ravel()
    if Phi.shape[0] < Phi.shape[1]:
        log.warning("projection with fewer points (%d) than functions (%d)", *Phi.shape)
    theta = np.linalg.lstsq(Phi, s_ref, rcond=None)[0]
    res = np.linalg.norm(Phi @ theta - s_ref)
    nrm = np.linalg.norm(s_ref)
    return theta, float(res / nrm) if nrm > 0 else float(res)


def vector_expressivity(vb: VectorBasisEval, qx_curl, qy_curl, qx_div, qy_div, Phi=None):
    """Componentwise projection errors with and without a Helmholtz split.

    With the split, each component of the curl-free (div-free) target part is
    projected onto the matching component of the curl-free (div-free) basis
    family and the pieces are summed. Without it, each total component is
    projected onto the scalar basis ``Phi`` (or, if absent, onto both vector
    families' matching component).
    """
    out = {}
    for a, (tc, td) in enumerate(((qx_curl, qx_div), (qy_curl, qy_div))):
        tc, td = np.ravel(tc), np.ravel(td)
        total = tc + td
        th_c, _ = project_scalar_field(vb.component("curl", a), tc)
        th_d, _ = project_scalar_field(vb.component("div", a), td)
        split = vb.component("curl", a) @ th_c + vb.component("div", a) @ th_d
        out[f"split_{a}"] = float(np.linalg.norm(split - total) / np.linalg.norm(total))
        B = Phi if Phi is not None else np.hstack([vb.component("curl", a), vb.component("div", a)])
        _, out[f"nosplit_{a}"] = project_scalar_field(B, total)
    return out


# ------------------------------------------------------------ Helmholtz split

def _sbp_d1(n, h):
    """Second-order summation-by-parts first derivative on n nodes.

    Central differences inside, first-order one-sided rows at the two ends.
    Returns (D, H) with D = H^{-1} Q and H the trapezoidal norm.
    """
    main = np.zeros(n)
    main[0], main[-1] = -1.0 / h, 1.0 / h
    up = np.full(n - 1, 0.5 / h)
    lo = np.full(n - 1, -0.5 / h)
    up[0] = 1.0 / h
    lo[-1] = -1.0 / h
    D = sp.diags([lo, main, up], [-1, 0, 1], format="csr")
    Hd = np.full(n, h)
    Hd[0] = Hd[-1] = 0.5 * h
    return D, Hd


def helmholtz_decompose_grid(q, spacing, tol=1e-14):
    """Split a nodal vector field on a uniform grid into curl-free and
    divergence-free parts.

    ``q`` has shape (Nx, Ny, 2) with nodes at x_i = x0 + i*hx (boundary nodes
    included). The divergence-free part is the discrete-L2 (trapezoidal)
    orthogonal projection of q onto fields with zero discrete divergence and
    zero normal component on the boundary; the curl-free remainder is then a
    discrete gradient of a potential (plus boundary-normal terms), determined
    up to the zero-mean gauge. Divergence uses central differences inside and
    one-sided differences on boundary nodes.
    """
    q = np.asarray(q, dtype=float)
    nx, ny = q.shape[0], q.shape[1]
    hx, hy = (spacing, spacing) if np.isscalar(spacing) else spacing
    Dx1, Hx = _sbp_d1(nx, hx)
    Dy1, Hy = _sbp_d1(ny, hy)
    Ix, Iy = sp.identity(nx), sp.identity(ny)
    # node (i, j) flattened as i*ny + j
    Dx = sp.kron(Dx1, Iy, format="csr")
    Dy = sp.kron(Ix, Dy1, format="csr")
    Hn = np.kron(Hx, Hy)
    N = nx * ny
    div = sp.hstack([Dx, Dy], format="csr")

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    xb = np.flatnonzero((ii == 0) | (ii == nx - 1))
    yb = np.flatnonzero((jj == 0) | (jj == ny - 1))
    nrm = sp.vstack([
        sp.csr_matrix((np.ones(xb.size), (np.arange(xb.size), xb)), shape=(xb.size, 2 * N)),
        sp.csr_matrix((np.ones(yb.size), (np.arange(yb.size), N + yb)), shape=(yb.size, 2 * N)),
    ])
    C = sp.vstack([div, nrm], format="csr")
    Hv = np.concatenate([Hn, Hn])
    qv = np.concatenate([q[:, :, 0].ravel(), q[:, :, 1].ravel()])
    # min_lam || H^{1/2} (q - H^{-1} C^T lam) ||, i.e. H-orthogonal projection
    sh = np.sqrt(Hv)
    Bop = sp.diags(1.0 / sh) @ C.T
    lam = lsmr(Bop, sh * qv, atol=tol, btol=tol, maxiter=20 * (N + 10))[0]
    curl = (C.T @ lam) / Hv
    qc = np.stack([curl[:N].reshape(nx, ny), curl[N:].reshape(nx, ny)], axis=2)
    # normal components on the boundary belong to the curl-free part exactly
    qc[[0, -1], :, 0] = q[[0, -1], :, 0]
    qc[:, [0, -1], 1] = q[:, [0, -1], 1]
    qd = q - qc
    return qc, qd


def grid_divergence(q, spacing):
    """Discrete divergence used by ``helmholtz_decompose_grid``."""
    nx, ny = q.shape[0], q.shape[1]
    hx, hy = (spacing, spacing) if np.isscalar(spacing) else spacing
    Dx1, _ = _sbp_d1(nx, hx)
    Dy1, _ = _sbp_d1(ny, hy)
    return (Dx1 @ q[:, :, 0]) + (Dy1 @ q[:, :, 1].T).T
