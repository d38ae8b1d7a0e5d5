"""Dense weighted least squares, condition numbers and POD."""

import logging
import struct
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, lsqr

log = logging.getLogger(__name__)

COND_SWITCH = 1e12


@dataclass
class WeightedSystem:
    A: np.ndarray
    b: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.w = np.asarray(self.w, dtype=float).ravel()
        if self.A.ndim != 2 or self.A.shape[0] != self.b.size or self.b.size != self.w.size:
            raise ValueError(f"inconsistent system shapes A{self.A.shape} b{self.b.shape} w{self.w.shape}")
        if np.any(self.w <= 0):
            raise ValueError("weights must be strictly positive")

    def weighted(self):
        return self.A * self.w[:, None], self.b * self.w

    def e_rel(self, theta, weighted_denominator=False):
        r = self.w * (self.A @ theta - self.b)
        den = self.b @ self.b if not weighted_denominator else np.sum((self.w * self.b) ** 2)
        return float(r @ r / den) if den > 0 else float(r @ r)


@dataclass
class LsqResult:
    theta: np.ndarray
    e_rel: float
    cond_estimate: float
    rank_deficient: bool = False
    method: str = "qr"


def _check_finite(*arrs):
    for a in arrs:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite entries in least-squares input")


def solve_weighted_lsq(sys: WeightedSystem, weighted_denominator=False, exact_cond=False):
    """Minimise ||diag(w)(A theta - b)||.

    Columns are equilibrated, then factorized by column-pivoted QR. When the
    pivoted diagonal suggests cond > 1e12 the solve falls back to an SVD with
    a relative cutoff, returning the least-norm solution and flagging rank
    deficiency. ``cond_estimate`` is the pivoted-R ratio |r11/rnn| (or the
    singular value ratio on the SVD path) of the equilibrated weighted
    matrix; ``exact_cond`` replaces it by the 2-norm condition number of
    diag(w) A itself.
    """
    _check_finite(sys.A, sys.b, sys.w)
    Aw, bw = sys.weighted()
    m, n = Aw.shape
    cn = np.linalg.norm(Aw, axis=0)
    cn[cn == 0] = 1.0
    As = Aw / cn
    Q, R, piv = sla.qr(As, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    est = diag[0] / diag[-1] if diag[-1] > 0 else np.inf
    rank_def = False
    method = "qr"
    if est > COND_SWITCH or m < n:
        U, s, Vt = np.linalg.svd(As, full_matrices=False)
        cut = s[0] * max(m, n) * np.finfo(float).eps
        keep = s > cut
        rank_def = bool(not np.all(keep)) or m < n
        y = Vt[keep].T @ ((U[:, keep].T @ bw) / s[keep])
        method = "svd"
    else:
        y = np.empty(n)
        y[piv] = sla.solve_triangular(R, Q.T @ bw)
    theta = y / cn
    if method == "svd":
        est = s[0] / s[-1] if s[-1] > 0 else np.inf
    if exact_cond:
        est = condition_number(Aw)
    return LsqResult(theta, sys.e_rel(theta, weighted_denominator), float(est), rank_def, method)


class ReusableLsq:
    """Least-squares solver for a sequence of nearby weighted systems.

    The first system is factorized by Householder QR of the column-equilibrated
    weighted matrix. Later systems with the same shape reuse R as a right
    preconditioner for LSQR; if LSQR needs too many iterations the new matrix
    is refactorized.
    """

    def __init__(self, max_iter=60, tol=1e-15):
        self.max_iter = max_iter
        self.tol = tol
        self._R = None
        self._cn = None
        self.n_factor = 0
        self.n_iterative = 0
        self.last_iterations = 0

    def _factor(self, As):
        qr, tau = sla.qr(As, mode="raw")[0]
        n = As.shape[1]
        self._R = np.triu(qr[:n, :n])
        self._qr = (qr, tau)
        self.n_factor += 1

    def _direct(self, bw):
        qr, tau = self._qr
        n = self._R.shape[0]
        (ormqr,) = sla.get_lapack_funcs(("ormqr",), (qr,))
        lwork = max(1, n * 64)
        qtb, _, info = ormqr("L", "T", qr, tau, bw[:, None].copy(), lwork)
        if info != 0:
            raise np.linalg.LinAlgError(f"ormqr failed with info={info}")
        return sla.solve_triangular(self._R, qtb[:n, 0])

    def solve(self, sys: WeightedSystem, weighted_denominator=False):
        _check_finite(sys.A, sys.b, sys.w)
        Aw, bw = sys.weighted()
        m, n = Aw.shape
        if m < n:
            return solve_weighted_lsq(sys, weighted_denominator)
        fresh = self._R is None or self._R.shape[0] != n
        if fresh:
            cn = np.linalg.norm(Aw, axis=0)
            cn[cn == 0] = 1.0
            self._cn = cn
        As = Aw / self._cn
        if fresh:
            self._factor(As)
            y = self._direct(bw)
            self.last_iterations = 0
        else:
            R = self._R
            op = LinearOperator(
                (m, n),
                matvec=lambda v: As @ sla.solve_triangular(R, v),
                rmatvec=lambda v: sla.solve_triangular(R, As.T @ v, trans="T"),
                dtype=float)
            out = lsqr(op, bw, atol=self.tol, btol=self.tol, iter_lim=self.max_iter)
            itn = out[2]
            self.last_iterations = itn
            if itn >= self.max_iter:
                log.info("preconditioned LSQR stalled after %d iterations; refactorizing", itn)
                self._factor(As)
                y = self._direct(bw)
                self.last_iterations = 0
            else:
                y = sla.solve_triangular(R, out[0])
                self.n_iterative += 1
        theta = y / self._cn
        d = np.abs(np.diag(self._R))
        est = d.max() / d.min() if d.min() > 0 else np.inf
        return LsqResult(theta, sys.e_rel(theta, weighted_denominator), float(est),
                         False, "qr" if self.last_iterations == 0 else "pcg-lsqr")


class FactoredLsq:
    """Least squares with one fixed matrix and many right-hand sides.

    Column-equilibrated pivoted QR, with an SVD fallback when the pivoted
    diagonal suggests cond > 1e12.
    """

    def __init__(self, A):
        A = np.asarray(A, dtype=float)
        _check_finite(A)
        self.A = A
        m, n = A.shape
        cn = np.linalg.norm(A, axis=0)
        cn[cn == 0] = 1.0
        self._cn = cn
        As = A / cn
        Q, R, piv = sla.qr(As, mode="economic", pivoting=True)
        d = np.abs(np.diag(R))
        self.cond_estimate = float(d[0] / d[-1]) if d[-1] > 0 else np.inf
        if self.cond_estimate > COND_SWITCH or m < n:
            U, s, Vt = np.linalg.svd(As, full_matrices=False)
            keep = s > s[0] * max(m, n) * np.finfo(float).eps
            self._svd = (U[:, keep], s[keep], Vt[keep])
            self.cond_estimate = float(s[0] / s[-1]) if s[-1] > 0 else np.inf
            self.method = "svd"
        else:
            self._qr = (Q, R, piv)
            self.method = "qr"

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if self.method == "svd":
            U, s, Vt = self._svd
            y = Vt.T @ ((U.T @ b) / s)
        else:
            Q, R, piv = self._qr
            y = np.empty(R.shape[1])
            y[piv] = sla.solve_triangular(R, Q.T @ b)
        return y / self._cn

    def e_rel(self, theta, b):
        r = self.A @ theta - b
        den = b @ b
        return float(r @ r / den) if den > 0 else float(r @ r)


def condition_number(A):
    """2-norm condition number sigma_max / sigma_min via the SVD."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        raise ValueError("empty matrix")
    _check_finite(A)
    s = sla.svdvals(A)
    if s[-1] == 0.0 or min(A.shape) == 0:
        return np.inf
    return float(s[0] / s[-1])


@dataclass
class PodBasis:
    modes: np.ndarray
    singular_values: np.ndarray
    mean: np.ndarray = None
    label: str = ""

    @property
    def rank(self):
        return self.modes.shape[1]

    def encode(self, x):
        x = np.asarray(x, dtype=float)
        if self.mean is not None:
            x = x - (self.mean if x.ndim == 1 else self.mean[:, None])
        return self.modes.T @ x

    def decode(self, z):
        out = self.modes @ z
        if self.mean is not None:
            out = out + (self.mean if out.ndim == 1 else self.mean[:, None])
        return out


def pod_compress(snapshots, r, center=False, label=""):
    """Leading r left singular vectors of the N x S snapshot matrix."""
    X = np.asarray(snapshots, dtype=float)
    if X.ndim != 2:
        raise ValueError("snapshots must be N x S")
    if r < 1 or r > min(X.shape):
        raise ValueError(f"rank {r} outside 1..{min(X.shape)}")
    mean = X.mean(axis=1) if center else None
    Xc = X - mean[:, None] if center else X
    U, s, _ = np.linalg.svd(Xc, full_matrices=False)
    return PodBasis(U[:, :r].copy(), s[:r].copy(), mean, label)


# ------------------------------------------------------------ binary matrix

_MAGIC = b"NBMMAT1\x00"


def write_matrix(path, A):
    A = np.ascontiguousarray(A, dtype="<f8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<q", A.ndim))
        f.write(struct.pack(f"<{A.ndim}q", *A.shape))
        f.write(A.tobytes(order="C"))


def read_matrix(path):
    with open(path, "rb") as f:
        if f.read(8) != _MAGIC:
            raise ValueError(f"{path} is not a matrix container")
        (ndim,) = struct.unpack("<q", f.read(8))
        shape = struct.unpack(f"<{ndim}q", f.read(8 * ndim))
        data = np.frombuffer(f.read(), dtype="<f8")
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: payload does not match header shape {shape}")
    return data.reshape(shape).astype(float)
