"""Operator learning on neural-basis coefficients (NBM-OL).

Pipeline: sample parameters, solve each instance with the NBM solvers to get
coefficient snapshots, compress each coefficient block with POD, then train
small MLPs mapping (parameters, time) to the latent coordinates by
minimizing the physical least-squares residual of the solver's own system.

Every training sample's residual is exactly quadratic in the latent vector z,

    E(z) = || W (A (Psi z + m) - b) ||^2 / den = e_min + || R (z - z*) ||^2 / den,

so it is reduced once to (R, z*, e_min, den) with R from a QR factorization
of W A Psi. The optimizer never sees the full system again.
"""

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla

from . import units
from .darcy import NbmDarcy, NbmDarcyConfig
from .geometry import BoundaryConditions, EdgeBC, Grid2D, InflowSchedule
from .linalg import PodBasis, pod_compress
from .metrics import rel_l2
from .mlp import Adam, Mlp, MlpConfig
from .problems import (GrfParams, Scenario, block25_multiplier, build_co2_case, co2_props,
                       gen_grf_permeability)
from .properties import PermeabilityField
from .transport import NbmTransport, NbmTransportConfig
from .upwind import build_upwind_operator

log = logging.getLogger(__name__)

MODEL_FORMAT = 1
CASES = ("I", "II", "III")


class TrainingDiverged(RuntimeError):
    pass


# ------------------------------------------------------------------ cases

@dataclass
class OlCase:
    """Problem family and discretization for one operator-learning case."""
    case: str = "II"
    n: int = 100                         # collocation grid n x n
    nb: int = 800
    n_steps: int = 20
    darcy_dt: float = 10.0 * units.DAY
    n_sub: int = 8                       # transport substeps (Case-III)
    g_range: tuple = (488.0, 976.0)      # kg / (day m^2)
    c_range: tuple = (50.0, 100.0)       # ppm
    p_left: float = 103.0 * units.BAR
    ranks: dict = None
    seed_p: int = 11
    seed_q: int = 23
    seed_c: int = 37
    # Case-I template and block25 GRF controls
    case1_p_left: float = 69.0 * units.BAR
    case1_grf: dict = field(default_factory=lambda: {"v": 0.5, "lx": 150.0, "ly": 80.0,
                                                     "theta": 0.3, "seed": 101})
    case1_block_grf: dict = field(default_factory=lambda: {"v": 0.4, "lx": 300.0, "ly": 300.0,
                                                           "theta": 0.0})

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}")
        if self.ranks is None:
            self.ranks = {"I": {"p": 16, "div": 16}, "II": {"div": 8, "curl": 8, "p": 8},
                          "III": {"c": 20}}[self.case]

    @property
    def grid(self):
        return Grid2D(0.0, 762.0, 0.0, 762.0, self.n, self.n)

    @property
    def horizon(self):
        return self.n_steps * self.darcy_dt

    def blocks(self):
        return {"I": ("p", "div"), "II": ("div", "curl", "p"), "III": ("c",)}[self.case]

    def n_inputs(self):
        return {"I": 25, "II": 2, "III": 3}[self.case]

    def darcy_config(self):
        parts = ("div",) if self.case == "I" else ("div", "curl")
        return NbmDarcyConfig(nb=self.nb, seed_p=self.seed_p, seed_q=self.seed_q, flux_parts=parts)

    def to_dict(self):
        return asdict(self)


def case2_scenario(oc: OlCase, g_top, n_steps=None):
    """Heterogeneous CO2 model with outward top flux ``g_top`` (kg/(day m^2))."""
    n_steps = oc.n_steps if n_steps is None else n_steps
    return build_co2_case("heterogeneous", n=oc.n, p_left=oc.p_left, g_top=g_top / units.DAY,
                          c_in=0.0, pulse_end=np.inf, t_end=n_steps * oc.darcy_dt,
                          darcy_dt=oc.darcy_dt, n_sub=oc.n_sub)


def case3_scenario(oc: OlCase, g_top, c_left, n_steps=None):
    scn = case2_scenario(oc, g_top, n_steps)
    scn.bcs.inflow["left"] = InflowSchedule(float(c_left), 0.0, np.inf)
    scn.metadata["c_in_ppm"] = float(c_left)
    return scn


def case1_template(oc: OlCase):
    p = GrfParams(**oc.case1_grf)
    return gen_grf_permeability(p, oc.grid)


def case1_block_params(oc: OlCase, rng):
    """Block25 GRF controls for one sample; returns (multiplier 5x5, log-multiplier features)."""
    d = dict(oc.case1_block_grf)
    d["seed"] = int(rng.integers(2 ** 63))
    coarse = Grid2D(0.0, 762.0, 0.0, 762.0, 5, 5)
    m = gen_grf_permeability(GrfParams(**d), coarse).values / GrfParams(**d).k_avg
    return m, np.log(m).ravel()


def case1_scenario(oc: OlCase, multiplier, template=None):
    g = oc.grid
    template = template if template is not None else case1_template(oc)
    perm = PermeabilityField(g, template.values * block25_multiplier(multiplier, g))
    props = co2_props()
    props = type(props)(mu=props.mu, c_f=0.0, rho0=props.rho0, p0=props.p0, eps=props.eps)
    r0 = props.rho0
    bcs = BoundaryConditions(edges={
        "left": EdgeBC("pressure", oc.case1_p_left),
        "right": EdgeBC("flux", r0 * 0.3 / units.DAY),
        "bottom": EdgeBC("flux", r0 * 1.5 / units.DAY),
        "top": EdgeBC("flux", r0 * 1.5 / units.DAY)})
    return Scenario("ol_case1", g, perm, props, bcs, p_init=oc.case1_p_left,
                    t_end=np.inf, darcy_dt=np.inf, n_sub=1)


# ------------------------------------------------------------ snapshots

@dataclass
class SnapshotStore:
    """Coefficient trajectories, blocks shaped (n_samples, n_times, size)."""
    case: str
    params: np.ndarray                  # (n_samples, n_params) physical units
    times: np.ndarray                   # (n_times,) seconds
    blocks: dict
    excluded: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def n_samples(self):
        return self.params.shape[0]

    def matrix(self, name):
        """Snapshot matrix (size, n_samples * n_times)."""
        a = self.blocks[name]
        return a.reshape(-1, a.shape[-1]).T

    def save(self, path):
        arrays = {f"block_{k}": v for k, v in self.blocks.items()}
        arrays.update({f"extra_{k}": v for k, v in self.extra.items()})
        meta = json.dumps({"case": self.case, "excluded": self.excluded})
        np.savez_compressed(path, params=self.params, times=self.times, meta=np.frombuffer(meta.encode(), np.uint8), **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            meta = json.loads(bytes(z["meta"]).decode())
            blocks = {k[6:]: z[k] for k in z.files if k.startswith("block_")}
            extra = {k[6:]: z[k] for k in z.files if k.startswith("extra_")}
            return cls(meta["case"], z["params"], z["times"], blocks, meta["excluded"], extra)


def sample_params(oc: OlCase, n_samples, seed):
    rng = np.random.default_rng(seed)
    if oc.case == "II":
        return rng.uniform(*oc.g_range, size=(n_samples, 1))
    if oc.case == "III":
        g = rng.uniform(*oc.g_range, size=n_samples)
        c = rng.uniform(*oc.c_range, size=n_samples)
        return np.column_stack([g, c])
    return np.array([case1_block_params(oc, rng)[1] for _ in range(n_samples)])


def darcy_solver(oc: OlCase):
    scn = case2_scenario(oc, oc.g_range[0]) if oc.case != "I" else case1_scenario(oc, np.ones((5, 5)))
    return NbmDarcy(scn.grid, scn.perm, scn.props, scn.bcs, oc.darcy_config())


def darcy_trajectory(solver: NbmDarcy, scn: Scenario, n_steps):
    """NBM states for ``n_steps`` Darcy steps (one steady state when dt is infinite)."""
    solver.update(perm=scn.perm, bcs=scn.bcs)
    st = solver.initial_state(scn.p_init)
    out = []
    for _ in range(n_steps if np.isfinite(scn.darcy_dt) else 1):
        st = solver.advance(st, scn.darcy_dt)
        out.append(st)
    return out


def _case2_worker(args):
    oc, gs = args
    solver = darcy_solver(oc)
    res = []
    for g in gs:
        states = darcy_trajectory(solver, case2_scenario(oc, g), oc.n_steps)
        ok = all(s.converged for s in states)
        res.append((ok, [np.concatenate([s.theta_div, s.theta_curl, s.theta_p]) for s in states]))
    return res, (solver.n_q, solver.n_p)


def generate_snapshots(oc: OlCase, n_samples, seed, jobs=1, case2_model=None):
    """Solve sampled instances and collect coefficient snapshots.

    Samples whose Picard iterations fail to converge are dropped with a log
    entry. Case-III needs ``case2_model`` to supply velocities.
    """
    params = sample_params(oc, n_samples, seed)
    keep, excluded = [], []
    if oc.case == "III":
        if case2_model is None:
            raise ValueError("Case-III snapshots need a trained Case-II model for the velocities")
        return _case3_snapshots(oc, params, case2_model)
    if oc.case == "I":
        solver = darcy_solver(oc)
        template = case1_template(oc)
        th_p, th_d = [], []
        for i, xi in enumerate(params):
            st = darcy_trajectory(solver, case1_scenario(oc, np.exp(xi).reshape(5, 5), template), 1)[0]
            if not st.converged:
                excluded.append({"index": i, "reason": "not converged"})
                log.warning("Case-I sample %d excluded: solver did not converge", i)
                continue
            keep.append(i)
            th_p.append([st.theta_p])
            th_d.append([st.theta_div])
        return SnapshotStore("I", params[keep], np.array([np.inf]),
                             {"p": np.array(th_p), "div": np.array(th_d)}, excluded)

    gs = params[:, 0]
    if jobs > 1:
        chunks = [gs[k::jobs] for k in range(jobs)]
        with ProcessPoolExecutor(jobs) as ex:
            parts = list(ex.map(_case2_worker, [(oc, c) for c in chunks]))
        results = [None] * len(gs)
        for k, (part, sizes) in enumerate(parts):
            for j, r in enumerate(part):
                results[k + j * jobs] = r
    else:
        results, sizes = _case2_worker((oc, gs))
    traj = []
    for i, (ok, th) in enumerate(results):
        if not ok:
            excluded.append({"index": i, "reason": "Picard not converged"})
            log.warning("Case-II sample %d (g_top=%.1f) excluded: Picard did not converge", i, gs[i])
            continue
        keep.append(i)
        traj.append(th)
    arr = np.array(traj)                # (n, steps, nq + nq + np)
    nq, npp = sizes
    blocks = {"div": arr[:, :, :nq], "curl": arr[:, :, nq:2 * nq], "p": arr[:, :, 2 * nq:]}
    if blocks["p"].shape[-1] != npp:
        raise RuntimeError("snapshot layout does not match the solver's block sizes")
    times = (np.arange(oc.n_steps) + 1) * oc.darcy_dt
    return SnapshotStore("II", params[keep], times, blocks, excluded)


def _case3_snapshots(oc: OlCase, params, case2_model):
    tracer = NbmTransport(oc.grid, NbmTransportConfig(nb=oc.nb, seed=oc.seed_c))
    ev = FieldEvaluator(case2_model)
    snaps, vel, dens = [], [], []
    for g, c_left in params:
        scn = case3_scenario(oc, g, c_left)
        fields = ev.trajectory([g], scn_times(oc))
        cst = tracer.project(0.0)
        th, us = [], []
        for n in range(oc.n_steps):
            u = np.column_stack([fields["ux"][n], fields["uy"][n]])
            us.append(u)
            cst = tracer.advance(cst, u, oc.darcy_dt, oc.n_sub, scn.bcs, scn.props.eps, fields["rho"][n])
            th += cst.history
        snaps.append(th)
        vel.append(us)
        dens.append(fields["rho"])
    times = (np.arange(oc.n_steps * oc.n_sub) + 1) * oc.darcy_dt / oc.n_sub
    return SnapshotStore("III", params, times, {"c": np.array(snaps)}, [],
                         {"velocity": np.array(vel), "rho": np.array(dens)})


def scn_times(oc: OlCase, n_steps=None):
    n_steps = oc.n_steps if n_steps is None else n_steps
    return (np.arange(n_steps) + 1) * oc.darcy_dt


# ---------------------------------------------------------------- latent

@dataclass
class LatentSpec:
    names: tuple
    pods: dict                          # name -> PodBasis (centered)
    z_mean: np.ndarray
    z_std: np.ndarray
    out_maps: dict = None               # name -> (shift, M); z_block = shift + M y_block

    def __post_init__(self):
        if self.out_maps is None:
            sl = self.slices
            self.out_maps = {n: (self.z_mean[sl[n]].copy(), np.diag(self.z_std[sl[n]]))
                             for n in self.names}

    def from_outputs(self, Y):
        """Network outputs (batch, dim) to latent z."""
        z = np.empty_like(Y)
        for n, s in self.slices.items():
            a, M = self.out_maps[n]
            z[:, s] = a + Y[:, s] @ M.T
        return z

    def grad_outputs(self, gz):
        """Pull a latent gradient back to the network outputs."""
        gy = np.empty_like(gz)
        for n, s in self.slices.items():
            gy[:, s] = gz[:, s] @ self.out_maps[n][1]
        return gy

    @property
    def sizes(self):
        return [self.pods[n].rank for n in self.names]

    @property
    def slices(self):
        out, k = {}, 0
        for n in self.names:
            r = self.pods[n].rank
            out[n] = slice(k, k + r)
            k += r
        return out

    @property
    def dim(self):
        return int(sum(self.sizes))

    def encode(self, thetas: dict):
        return np.concatenate([self.pods[n].encode(thetas[n]) for n in self.names])

    def decode(self, z):
        sl = self.slices
        return {n: self.pods[n].decode(z[sl[n]]) for n in self.names}


def build_latent_spec(store: SnapshotStore, ranks: dict):
    names = tuple(n for n in store.blocks if n in ranks)
    pods = {n: pod_compress(store.matrix(n), ranks[n], center=True, label=n) for n in names}
    Z = np.vstack([pods[n].encode(store.matrix(n)) for n in names])
    sd = Z.std(axis=1)
    sd[sd == 0] = 1.0
    return LatentSpec(names, pods, Z.mean(axis=1), sd)


# --------------------------------------------------------- reduced residuals

@dataclass
class ReducedResidual:
    R: np.ndarray
    z_star: np.ndarray
    e_min: float
    den: float

    def value(self, z):
        d = self.R @ (z - self.z_star)
        return self.e_min + float(d @ d) / self.den

    def grad(self, z):
        return 2.0 * self.R.T @ (self.R @ (z - self.z_star)) / self.den


def reduce_system(A, b, w, latent: LatentSpec, layout: dict):
    """Reduce ||diag(w)(A theta - b)||^2 / ||diag(w) b||^2 to latent coordinates.

    ``layout`` maps block name -> slice of theta in the solver's ordering.
    """
    Aw = A * w[:, None]
    bw = b * w
    cols = []
    rhs = bw.copy()
    for n in latent.names:
        pod = latent.pods[n]
        Ab = Aw[:, layout[n]]
        cols.append(Ab @ pod.modes)
        if pod.mean is not None:
            rhs -= Ab @ pod.mean
    B = np.hstack(cols)
    Q, R = sla.qr(B, mode="economic")
    qb = Q.T @ rhs
    z_star = sla.solve_triangular(R, qb)
    res = B @ z_star - rhs
    den = float(bw @ bw) if bw @ bw > 0 else 1.0
    return ReducedResidual(R, z_star, float(res @ res) / den, den)


def _darcy_layout(solver: NbmDarcy):
    nP, nQ = solver.n_p, solver.n_q
    lay = {"p": slice(0, nP)}
    for i, part in enumerate(solver.parts):
        lay[part] = slice(nP + i * nQ, nP + (i + 1) * nQ)
    return lay


def darcy_reduced_residuals(oc: OlCase, store: SnapshotStore, latent: LatentSpec, solver=None):
    """Per (sample, step) reduced residuals of the NBM Darcy systems.

    The old-time pressure and the lagged density come from the stored
    snapshots, so each target is the converged implicit step of that sample.
    """
    solver = solver or darcy_solver(oc)
    lay = _darcy_layout(solver)
    out = []
    template = case1_template(oc) if oc.case == "I" else None
    for i, prm in enumerate(store.params):
        if oc.case == "I":
            scn = case1_scenario(oc, np.exp(prm).reshape(5, 5), template)
        else:
            scn = case2_scenario(oc, prm[0])
        solver.update(perm=scn.perm, bcs=scn.bcs)
        p_prev = np.full(solver.col.n_interior, scn.p_init)
        row = []
        for n, t in enumerate(store.times):
            th_p = store.blocks["p"][i, n]
            p_new = solver.Phi_p @ th_p
            rho = solver.props.density(p_new)
            dt = scn.darcy_dt
            sys = solver.assemble(p_prev, rho, dt, t if np.isfinite(t) else 0.0)
            row.append(reduce_system(sys.A, sys.b, sys.w, latent, lay))
            p_prev = p_new
        out.append(row)
    return out


def transport_reduced_residuals(oc: OlCase, store: SnapshotStore, latent: LatentSpec, tracer=None):
    tracer = tracer or NbmTransport(oc.grid, NbmTransportConfig(nb=oc.nb, seed=oc.seed_c))
    lay = {"c": slice(0, tracer.Phi.shape[1])}
    dt = oc.darcy_dt / oc.n_sub
    out = []
    for i, (g, c_left) in enumerate(store.params):
        scn = case3_scenario(oc, g, c_left)
        c_prev = np.zeros(tracer.mesh.n_cells)
        row = []
        for k, t in enumerate(store.times):
            n = k // oc.n_sub
            if k % oc.n_sub == 0:
                u = store.extra["velocity"][i, n]
                ux, uy = tracer.face_velocities(u, scn.bcs, store.extra["rho"][i, n], (n + 1) * oc.darcy_dt)
                op = build_upwind_operator(oc.grid, ux, uy, scn.props.eps, dt)
                A = np.asarray(op.matrix @ tracer.Phi)
            b = op.rhs(c_prev, lambda e: scn.bcs.tracer(e, t - dt, t))
            row.append(reduce_system(A, b, np.ones_like(b), latent, lay))
            c_prev = tracer.Phi @ store.blocks["c"][i, k]
        out.append(row)
    return out


def whiten_outputs(latent: LatentSpec, residuals, rcond=1e-12):
    """Latent copy whose per-block output maps diagonalize the mean reduced
    Hessian, each direction scaled by the spread of the reduced minimizers.

    The z-score map leaves the blocks strongly coupled through R^T R, which
    slows Adam down along weakly penalized directions.
    """
    flat = [r for row in residuals for r in row]
    H = sum(r.R.T @ r.R / r.den for r in flat) / len(flat)
    Zs = np.array([r.z_star for r in flat])
    maps = {}
    for n, s in latent.slices.items():
        w, V = np.linalg.eigh(H[s, s])
        w = np.maximum(w, rcond * max(w.max(), 0.0) + np.finfo(float).tiny)
        shift = Zs[:, s].mean(axis=0)
        Y = (Zs[:, s] - shift) @ V * np.sqrt(w)
        sd = Y.std(axis=0)
        sd[sd == 0] = 1.0
        maps[n] = (shift, V * (sd / np.sqrt(w)))
    return LatentSpec(latent.names, latent.pods, latent.z_mean, latent.z_std, maps)


# ----------------------------------------------------------------- model

@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch: int = 16
    epochs: int = 500
    seed: int = 0
    checkpoint_every: int = 10
    divergence_factor: float = 10.0
    divergence_patience: int = 20
    precondition: str = "sample"        # "none", "mean" or "sample" Gauss-Newton scaling of output gradients
    output_map: str = "whiten"          # "zscore" or "whiten" (see whiten_outputs)


def default_train_config(case):
    if case == "III":
        return TrainConfig(lr=5e-3, batch=32, epochs=1000)
    return TrainConfig()


def default_branches(oc: OlCase):
    """(block names, hidden sizes, weight_norm) per MLP branch."""
    if oc.case == "I":
        return [(("p",), (64, 64), False), (("div",), (64, 64), False)]
    if oc.case == "II":
        return [(("div",), (32, 32), False), (("curl",), (32, 32), False), (("p",), (32, 32), False)]
    return [(("c",), (64, 64), True)]


@dataclass
class OperatorModel:
    case: OlCase
    latent: LatentSpec
    branches: list                      # list of (block names, Mlp)
    in_lo: np.ndarray
    in_hi: np.ndarray
    horizon: float
    meta: dict = field(default_factory=dict)
    dependency: object = None           # Case-II model for Case-III

    def features(self, params, t=None):
        """Inputs scaled to [-1, 1] over the training box, plus t / horizon."""
        x = np.atleast_2d(np.asarray(params, dtype=float))
        x = 2.0 * (x - self.in_lo) / (self.in_hi - self.in_lo) - 1.0
        if t is not None:
            t = np.asarray(t, dtype=float).reshape(-1, 1)
            x = np.hstack([np.broadcast_to(x, (t.shape[0], x.shape[1])), t / self.horizon])
        return x

    def predict_latent(self, X):
        """Standardized network outputs mapped back to latent z, (batch, dim)."""
        sl = self.latent.slices
        z = np.empty((X.shape[0], self.latent.dim))
        for names, net in self.branches:
            y = net.forward(X)
            k = 0
            for n in names:
                r = sl[n].stop - sl[n].start
                z[:, sl[n]] = y[:, k:k + r]
                k += r
        return self.latent.from_outputs(z)

    def save(self, path):
        arrays = {"z_mean": self.latent.z_mean, "z_std": self.latent.z_std,
                  "in_lo": self.in_lo, "in_hi": self.in_hi}
        for n, (a, M) in self.latent.out_maps.items():
            arrays[f"out_{n}_shift"], arrays[f"out_{n}_map"] = a, M
        for n, pod in self.latent.pods.items():
            arrays[f"pod_{n}_modes"] = pod.modes
            arrays[f"pod_{n}_sv"] = pod.singular_values
            arrays[f"pod_{n}_mean"] = pod.mean if pod.mean is not None else np.zeros(0)
        branch_meta = []
        for bi, (names, net) in enumerate(self.branches):
            branch_meta.append({"names": list(names), "hidden": list(net.cfg.hidden),
                                "n_in": net.cfg.n_in, "n_out": net.cfg.n_out,
                                "weight_norm": net.cfg.weight_norm})
            for pi, p in enumerate(net.params):
                arrays[f"mlp_{bi}_{pi}"] = p
        meta = {"format": MODEL_FORMAT, "case": self.case.to_dict(), "names": list(self.latent.names),
                "branches": branch_meta, "horizon": self.horizon, "meta": self.meta}
        arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), np.uint8)
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path, dependency=None):
        with np.load(path) as z:
            meta = json.loads(bytes(z["meta"]).decode())
            if meta.get("format") != MODEL_FORMAT:
                raise ValueError(f"unsupported model format {meta.get('format')}")
            cd = meta["case"]
            cd["g_range"] = tuple(cd["g_range"])
            cd["c_range"] = tuple(cd["c_range"])
            oc = OlCase(**cd)
            pods = {}
            for n in meta["names"]:
                mean = z[f"pod_{n}_mean"]
                pods[n] = PodBasis(z[f"pod_{n}_modes"], z[f"pod_{n}_sv"], mean if mean.size else None, n)
            maps = {n: (z[f"out_{n}_shift"], z[f"out_{n}_map"]) for n in meta["names"]}
            latent = LatentSpec(tuple(meta["names"]), pods, z["z_mean"], z["z_std"], maps)
            branches = []
            for bi, bm in enumerate(meta["branches"]):
                cfg = MlpConfig(bm["n_in"], tuple(bm["hidden"]), bm["n_out"], bm["weight_norm"])
                n_arr = (3 if cfg.weight_norm else 2) * (len(cfg.hidden) + 1)
                net = Mlp(cfg, params=[z[f"mlp_{bi}_{pi}"] for pi in range(n_arr)])
                branches.append((tuple(bm["names"]), net))
            return cls(oc, latent, branches, z["in_lo"], z["in_hi"], meta["horizon"], meta["meta"],
                       dependency)


def _training_inputs(oc: OlCase, store: SnapshotStore, in_lo, in_hi, horizon):
    X = []
    for prm in store.params:
        x = 2.0 * (np.asarray(prm) - in_lo) / (in_hi - in_lo) - 1.0
        for t in store.times:
            X.append(np.concatenate([x, [t / horizon]]) if np.isfinite(t) else x)
    return np.array(X)


def train_operator(oc: OlCase, store: SnapshotStore, latent: LatentSpec, residuals,
                   train_cfg: TrainConfig = None, branches=None, log_path=None, validate=None,
                   dependency=None):
    """Fit the MLP branches by minimizing the mean reduced residual.

    ``residuals`` is the nested (sample, time) list of ``ReducedResidual``.
    ``validate(model)`` optionally returns a dict of diagnostics recorded at
    each checkpoint. Returns (model, history) where history rows are dicts.
    """
    tc = train_cfg or default_train_config(oc.case)
    branches = branches or default_branches(oc)
    rng = np.random.default_rng(tc.seed)
    if oc.case == "I":
        in_lo, in_hi = store.params.min(axis=0), store.params.max(axis=0)
    elif oc.case == "II":
        in_lo, in_hi = np.array([oc.g_range[0]]), np.array([oc.g_range[1]])
    else:
        in_lo = np.array([oc.g_range[0], oc.c_range[0]])
        in_hi = np.array([oc.g_range[1], oc.c_range[1]])
    span = in_hi - in_lo
    in_hi = np.where(span > 0, in_hi, in_lo + 1.0)
    horizon = store.times[-1] if np.isfinite(store.times[-1]) else 1.0
    X = _training_inputs(oc, store, in_lo, in_hi, horizon)
    flat = [r for row in residuals for r in row]
    if len(flat) != X.shape[0]:
        raise ValueError(f"{len(flat)} residuals for {X.shape[0]} inputs")
    if tc.output_map == "whiten":
        latent = whiten_outputs(latent, residuals)
    elif tc.output_map != "zscore":
        raise ValueError(f"unknown output map {tc.output_map!r}")
    sl = latent.slices
    nets = []
    for names, hidden, wn in branches:
        n_out = sum(sl[n].stop - sl[n].start for n in names)
        nets.append((tuple(names), Mlp(MlpConfig(X.shape[1], hidden, n_out, wn), rng=rng)))
    model = OperatorModel(oc, latent, nets, in_lo, in_hi, horizon,
                          {"train": asdict(tc)}, dependency)
    opts = [Adam(net.params, lr=tc.lr) for _, net in nets]

    def epoch_loss():
        z = model.predict_latent(X)
        return float(np.mean([r.value(zi) for r, zi in zip(flat, z)]))

    floor = float(np.mean([r.e_min for r in flat]))
    e0 = epoch_loss()
    if tc.precondition not in ("none", "mean", "sample"):
        raise ValueError(f"unknown preconditioner {tc.precondition!r}")
    if tc.precondition != "none":
        # inverse Gauss-Newton matrices of the residuals in network-output coordinates
        Mfull = sla.block_diag(*[latent.out_maps[nm][1] for nm in latent.names])
        Hy = np.array([Mfull.T @ (2.0 * r.R.T @ r.R / r.den) @ Mfull for r in flat])
        P_all = np.array([np.linalg.pinv(h, rcond=1e-12, hermitian=True) for h in Hy])
        P_mean = np.linalg.pinv(Hy.mean(axis=0), rcond=1e-12, hermitian=True)
    history = [{"epoch": 0, "e_rel": e0, "normalized": 1.0, "floor": floor}]
    if validate is not None:
        history[0].update(validate(model))
    bad = 0
    n = X.shape[0]
    t_start = time.perf_counter()
    for ep in range(1, tc.epochs + 1):
        perm = rng.permutation(n)
        for s in range(0, n, tc.batch):
            idx = perm[s:s + tc.batch]
            xb = X[idx]
            caches = [net.forward(xb, keep=True) for _, net in nets]
            z = np.empty((len(idx), latent.dim))
            for (names, net), (y, _) in zip(nets, caches):
                k = 0
                for nm in names:
                    r = sl[nm].stop - sl[nm].start
                    z[:, sl[nm]] = y[:, k:k + r]
                    k += r
            z = latent.from_outputs(z)
            gz = np.array([flat[i].grad(zi) for i, zi in zip(idx, z)]) / len(idx)
            gy_all = latent.grad_outputs(gz)
            if tc.precondition == "mean":
                gy_all = gy_all @ P_mean.T
            elif tc.precondition == "sample":
                gy_all = np.einsum("bij,bj->bi", P_all[idx], gy_all)
            else:
                gy_all /= e0
            for (names, net), (y, cache), opt in zip(nets, caches, opts):
                gy = np.hstack([gy_all[:, sl[nm]] for nm in names])
                opt.step(net.params, net.backward(cache, gy))
        e = epoch_loss()
        if not np.isfinite(e):
            raise TrainingDiverged(f"non-finite loss at epoch {ep}")
        bad = bad + 1 if e > tc.divergence_factor * e0 else 0
        if bad >= tc.divergence_patience:
            raise TrainingDiverged(f"loss above {tc.divergence_factor}x its initial value "
                                   f"({e:.3e} vs {e0:.3e}) for {bad} epochs, last epoch {ep}")
        row = {"epoch": ep, "e_rel": e, "normalized": e / e0, "floor": floor}
        if validate is not None and (ep % tc.checkpoint_every == 0 or ep == tc.epochs):
            row.update(validate(model))
        history.append(row)
    model.meta["train_seconds"] = time.perf_counter() - t_start
    if log_path is not None:
        write_train_log(log_path, history)
    return model, history


def write_train_log(path, history):
    keys = []
    for row in history:
        keys += [k for k in row if k not in keys]
    with open(path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for row in history:
            fh.write(",".join("" if row.get(k) is None else repr(float(row[k])) for k in keys) + "\n")


# -------------------------------------------------------------- inference

def infer_operator(model: OperatorModel, params, times):
    """Latent prediction decoded to coefficient blocks.

    Returns dict name -> (n_times, size) plus 'extrapolation' flag.
    """
    params = np.asarray(params, dtype=float).ravel()
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if model.case.case == "III" and model.dependency is None:
        raise ValueError("Case-III inference needs the Case-II model for the velocity field")
    steady = not np.isfinite(times[0])
    X = model.features(params) if steady else model.features(params, times)
    z = model.predict_latent(X)
    out = {n: np.array([model.latent.pods[n].decode(zi[model.latent.slices[n]]) for zi in z])
           for n in model.latent.names}
    lo_ok = np.all(params >= model.in_lo - 1e-12) and np.all(params <= model.in_hi + 1e-12)
    t_ok = steady or np.all(times <= model.horizon * (1 + 1e-12))
    out["extrapolation"] = not (lo_ok and t_ok)
    out["times"] = times
    return out


class FieldEvaluator:
    """Maps predicted coefficients to fields at the collocation points.

    Reduced field maps Phi @ Psi are formed once per model, so each query
    costs a few small matrix-vector products.
    """

    def __init__(self, model: OperatorModel, solver=None, tracer=None):
        self.model = model
        oc = model.case
        lat = model.latent
        self.maps = {}
        if oc.case in ("I", "II"):
            solver = solver or darcy_solver(oc)
            self.props = solver.props
            pod = lat.pods["p"]
            self.maps["p"] = (solver.Phi_p @ pod.modes, solver.Phi_p @ pod.mean)
            for a, comp in enumerate(("qx", "qy")):
                mats, off = [], 0.0
                for part in solver.parts:
                    pod = lat.pods[part]
                    B = solver.vb.component(part, a)
                    mats.append((part, B @ pod.modes))
                    off = off + B @ pod.mean
                self.maps[comp] = (mats, off)
        else:
            tracer = tracer or NbmTransport(oc.grid, NbmTransportConfig(nb=oc.nb, seed=oc.seed_c))
            pod = lat.pods["c"]
            self.maps["c"] = (tracer.Phi @ pod.modes, tracer.Phi @ pod.mean)

    def fields_from_latent(self, z):
        z = np.atleast_2d(z)
        sl = self.model.latent.slices
        out = {}
        if "p" in self.maps:
            Mp, mp = self.maps["p"]
            p = z[:, sl["p"]] @ Mp.T + mp
            out["p"] = p
            rho = self.props.density(p)
            out["rho"] = rho
            for comp in ("qx", "qy"):
                mats, off = self.maps[comp]
                q = off + sum(z[:, sl[part]] @ M.T for part, M in mats)
                out[comp] = q
            out["ux"] = out["qx"] / rho
            out["uy"] = out["qy"] / rho
        if "c" in self.maps:
            Mc, mc = self.maps["c"]
            out["c"] = z[:, sl["c"]] @ Mc.T + mc
        return out

    def fields(self, pred):
        """Fields from ``infer_operator`` output (re-encodes the decoded blocks)."""
        z = np.hstack([np.array([self.model.latent.pods[n].encode(th) for th in pred[n]])
                       for n in self.model.latent.names])
        return self.fields_from_latent(z)

    def trajectory(self, params, times):
        """Fast path: network to fields without forming full coefficient vectors."""
        m = self.model
        steady = not np.isfinite(np.atleast_1d(times)[0])
        X = m.features(params) if steady else m.features(params, times)
        return self.fields_from_latent(m.predict_latent(X))


def darcy_fields(solver: NbmDarcy, thetas: dict):
    """Fields at collocation points from per-step coefficient blocks."""
    p = np.array([solver.Phi_p @ th for th in thetas["p"]])
    rho = solver.props.density(p)
    zero = np.zeros(solver.n_q)
    qs = []
    for k in range(p.shape[0]):
        td = thetas["div"][k] if "div" in thetas else zero
        tc = thetas["curl"][k] if "curl" in thetas else zero
        qs.append(solver.flux(td, tc))
    q = np.array(qs)
    return {"p": p, "rho": rho, "qx": q[:, :, 0], "qy": q[:, :, 1],
            "ux": q[:, :, 0] / rho, "uy": q[:, :, 1] / rho}



def trajectory_errors(pred: dict, truth: dict, keys=("p", "ux", "uy")):
    """Per-step relative L2 errors; 'u' stacks both velocity components."""
    out = {k: np.array([rel_l2(a, b) for a, b in zip(pred[k], truth[k])]) for k in keys if k in truth}
    if "ux" in truth and "uy" in truth:
        out["u"] = np.array([rel_l2(np.concatenate([a, b]), np.concatenate([c, d]))
                             for a, b, c, d in zip(pred["ux"], pred["uy"], truth["ux"], truth["uy"])])
    return out
