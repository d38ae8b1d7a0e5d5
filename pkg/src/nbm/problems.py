"""Benchmark scenarios: CO2 storage setups, the separable manufactured
solution and log-normal Gaussian random permeability fields."""

import csv
import logging
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import units
from .geometry import BoundaryConditions, EdgeBC, Grid2D, InflowSchedule
from .properties import FluidProps, PermeabilityField

log = logging.getLogger(__name__)

HETERO_FIELD = "co2_heterogeneous_perm.csv"


@dataclass
class Scenario:
    name: str
    grid: Grid2D
    perm: PermeabilityField
    props: FluidProps
    bcs: BoundaryConditions
    p_init: float
    c_init: float = 0.0
    t_end: float = 90.0 * units.DAY
    darcy_dt: float = 10.0 * units.DAY
    n_sub: int = 8
    metadata: dict = field(default_factory=dict)

    @property
    def n_steps(self):
        return int(round(self.t_end / self.darcy_dt))

    def on_grid(self, grid: Grid2D):
        """Same physics with permeability transferred to another grid."""
        return Scenario(self.name, grid, self.perm.resample(grid), self.props, self.bcs,
                        self.p_init, self.c_init, self.t_end, self.darcy_dt, self.n_sub,
                        dict(self.metadata))


# ------------------------------------------------------------------ CO2

def co2_props():
    return FluidProps(mu=0.04 * units.CENTIPOISE, c_f=2.90e-3 / units.BAR, rho0=384.0,
                      p0=103.4 * units.BAR, eps=0.25)


def build_co2_case(variant="homogeneous", n=50, p_left=103.4 * units.BAR,
                   g_top=586.0 / units.DAY, c_in=100.0, pulse_end=10.0 * units.DAY,
                   t_end=90.0 * units.DAY, darcy_dt=30.0 * units.DAY, n_sub=1):
    """CO2 storage scenario on [0, 762]^2 m.

    Left edge: fixed pressure and tracer inflow ``c_in`` until ``pulse_end``.
    Top edge: outward mass flux ``g_top``. Right and bottom edges: no flow.
    """
    L = 762.0
    grid = Grid2D(0.0, L, 0.0, L, n, n)
    if variant == "homogeneous":
        perm = PermeabilityField(grid, np.full((n, n), 0.3 * units.DARCY))
    elif variant == "heterogeneous":
        base = load_heterogeneous_field()
        perm = base if base.grid == grid else base.resample(grid)
    else:
        raise ValueError(f"unknown CO2 variant {variant!r}")
    bcs = BoundaryConditions(
        edges={"left": EdgeBC("pressure", p_left), "top": EdgeBC("flux", g_top),
               "right": EdgeBC("flux", 0.0), "bottom": EdgeBC("flux", 0.0)},
        inflow={"left": InflowSchedule(c_in, 0.0, pulse_end)})
    props = co2_props()
    meta = {"variant": variant, "p_left_bar": p_left / units.BAR,
            "g_top_kg_per_day_m2": g_top * units.DAY, "c_in_ppm": c_in,
            "pulse_end_day": pulse_end / units.DAY}
    return Scenario(f"co2_{variant}", grid, perm, props, bcs, p_init=props.p0,
                    t_end=t_end, darcy_dt=darcy_dt, n_sub=n_sub, metadata=meta)


def load_heterogeneous_field():
    path = resources.files("nbm").joinpath("data", HETERO_FIELD)
    with path.open("r") as f:
        return read_perm_csv(f, (0.0, 762.0, 0.0, 762.0))


def read_perm_csv(fobj, box):
    rows = list(csv.DictReader(fobj))
    ix = np.array([int(r["x_index"]) for r in rows])
    iy = np.array([int(r["y_index"]) for r in rows])
    k = np.array([float(r["kappa_darcy"]) for r in rows])
    nx, ny = ix.max() + 1, iy.max() + 1
    vals = np.empty((ny, nx))
    vals[iy, ix] = k * units.DARCY
    return PermeabilityField(Grid2D(box[0], box[1], box[2], box[3], nx, ny), vals)


def write_perm_csv(fobj, perm: PermeabilityField):
    w = csv.writer(fobj, lineterminator="\n")
    w.writerow(["x_index", "y_index", "kappa_darcy"])
    for j in range(perm.grid.ny):
        for i in range(perm.grid.nx):
            w.writerow([i, j, repr(float(perm.values[j, i] / units.DARCY))])


# ---------------------------------------------------------- manufactured

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


@dataclass
class ManufacturedCase:
    grid: Grid2D
    Cx: float = 200.0
    Cy: float = 20.0
    beta: tuple = (1.0, 1.0, 1.0, 1.0)    # (bx1, bx2, by1, by2)
    B: float = -20.0 * units.BAR
    Cdir: tuple = (1.0, -0.6)
    k0: float = 0.1 * units.DARCY
    p0: float = 34.0 * units.BAR
    mu: float = 1.0 * units.CENTIPOISE

    def __post_init__(self):
        if self.Cx < 1 or self.Cy < 1:
            raise ValueError("contrasts must be >= 1")
        self.sx = 0.5 * np.log(self.Cx)
        self.sy = 0.5 * np.log(self.Cy)
        # global normalisation by max |phi| over the axis interval
        xs = np.linspace(self.grid.x0, self.grid.x1, 200001)
        ys = np.linspace(self.grid.y0, self.grid.y1, 200001)
        self._mx = np.abs(self.phi_x(xs)).max()
        self._my = np.abs(self.phi_y(ys)).max()
        self._tab_x = self._antiderivative_table(self.a, self.grid.x0, self.grid.x1, self.grid.nx)
        self._tab_y = self._antiderivative_table(self.b, self.grid.y0, self.grid.y1, self.grid.ny)

    def phi_x(self, x):
        bx1, bx2 = self.beta[0], self.beta[1]
        return bx1 * np.sin(2 * np.pi * x) + bx2 * np.cos(4 * np.pi * x)

    def phi_y(self, y):
        by1, by2 = self.beta[2], self.beta[3]
        return by1 * np.cos(2 * np.pi * y) + by2 * np.sin(2 * np.pi * y)

    def a(self, x):
        return np.exp(self.sx * self.phi_x(x) / self._mx)

    def b(self, y):
        return np.exp(self.sy * self.phi_y(y) / self._my)

    @staticmethod
    def _antiderivative_table(f, lo, hi, n):
        # cumulative integral of 1/f at the nodes of n cells, 8-point Gauss per cell
        edges = np.linspace(lo, hi, n + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 * (edges[1:] - edges[:-1])
        pts = mid[:, None] + half[:, None] * _GL_X[None, :]
        cell = (half[:, None] * _GL_W[None, :] / f(pts)).sum(axis=1)
        return edges, np.concatenate([[0.0], np.cumsum(cell)])

    @staticmethod
    def _integral(f, table, x):
        edges, cum = table
        x = np.asarray(x, dtype=float)
        k = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, len(edges) - 2)
        lo = edges[k]
        half = 0.5 * (x - lo)
        pts = (lo + half)[..., None] + half[..., None] * _GL_X
        part = (half[..., None] * _GL_W / f(pts)).sum(axis=-1)
        return cum[k] + part

    def I_x(self, x):
        return self._integral(self.a, self._tab_x, x)

    def I_y(self, y):
        return self._integral(self.b, self._tab_y, y)

    def kappa(self, x, y):
        return self.k0 * self.a(x) * self.b(y)

    def pressure(self, x, y):
        cx, cy = self.Cdir
        return self.p0 + self.B * (cx * self.I_x(x) + cy * self.I_y(y))

    def velocity(self, x, y):
        cx, cy = self.Cdir
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        ux = -self.k0 * self.B * cx * self.b(y) / self.mu
        uy = -self.k0 * self.B * cy * self.a(x) / self.mu
        return ux, uy

    def perm_field(self):
        g = self.grid
        X, Y = np.meshgrid(g.xc(), g.yc())
        return PermeabilityField(g, self.kappa(X, Y))

    def props(self):
        # incompressible: unit density, no compressibility
        return FluidProps(mu=self.mu, c_f=0.0, rho0=1.0, p0=self.p0, eps=0.25)

    def bcs(self):
        f = lambda x, y, t: self.pressure(x, y)
        return BoundaryConditions(edges={e: EdgeBC("pressure", f) for e in ("left", "right", "bottom", "top")})

    def scenario(self):
        return Scenario("manufactured", self.grid, self.perm_field(), self.props(), self.bcs(),
                        p_init=self.p0, t_end=np.inf, darcy_dt=np.inf, n_sub=1,
                        metadata={"Cx": self.Cx, "Cy": self.Cy, "beta": list(self.beta)})


def build_manufactured_case(Cx=200.0, Cy=20.0, grid=None, **kw):
    grid = grid or Grid2D(-1.0, 1.0, -1.0, 1.0, 50, 50)
    return ManufacturedCase(grid=grid, Cx=Cx, Cy=Cy, **kw)


# ------------------------------------------------------------------ GRF

@dataclass
class GrfParams:
    v: float
    lx: float
    ly: float
    theta: float = 0.0
    k_avg: float = 0.3 * units.DARCY
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.v < 1.0:
            raise ValueError(f"Dykstra-Parsons coefficient {self.v} outside (0, 1)")
        if self.lx <= 0 or self.ly <= 0:
            raise ValueError("correlation lengths must be positive")

    @property
    def sigma(self):
        return -np.log(1.0 - self.v)

    @property
    def mu_log(self):
        return np.log(self.k_avg) - 0.5 * self.sigma ** 2


def gaussian_field(grid: Grid2D, lx, ly, theta, rng):
    """Unit-variance stationary field with anisotropic Gaussian covariance."""
    if grid.nx < 2 or grid.ny < 2:
        raise ValueError("GRF needs at least 2 cells per axis")
    # pad to suppress periodic wrap-around of the FFT convolution
    px = grid.nx + int(np.ceil(3 * max(lx, ly) / grid.hx))
    py = grid.ny + int(np.ceil(3 * max(lx, ly) / grid.hy))
    kx = np.fft.fftfreq(px, d=grid.hx) * 2 * np.pi
    ky = np.fft.fftfreq(py, d=grid.hy) * 2 * np.pi
    KX, KY = np.meshgrid(kx, ky)
    c, s = np.cos(theta), np.sin(theta)
    k1 = c * KX + s * KY
    k2 = -s * KX + c * KY
    # spectral density of exp(-(r1/lx)^2 - (r2/ly)^2), up to a constant
    S = np.exp(-0.25 * ((k1 * lx) ** 2 + (k2 * ly) ** 2))
    noise = rng.standard_normal((py, px))
    f = np.real(np.fft.ifft2(np.fft.fft2(noise) * np.sqrt(S)))[: grid.ny, : grid.nx]
    f -= f.mean()
    sd = f.std()
    return f / sd if sd > 0 else f


def gen_grf_permeability(params: GrfParams, grid: Grid2D) -> PermeabilityField:
    rng = np.random.default_rng(params.seed)
    f = gaussian_field(grid, params.lx, params.ly, params.theta, rng)
    return PermeabilityField(grid, np.exp(params.mu_log + params.sigma * f))


def dykstra_parsons(values):
    k = np.asarray(values).ravel()
    return 1.0 - np.percentile(k, 50.0) / np.percentile(k, 84.1)


def block25_multiplier(xi, grid: Grid2D):
    """5x5 piecewise-constant multiplier repeated onto ``grid``."""
    if grid.nx % 5 or grid.ny % 5:
        raise ValueError(f"grid {grid.nx}x{grid.ny} is not divisible into 5x5 blocks")
    if isinstance(xi, GrfParams):
        coarse = Grid2D(grid.x0, grid.x1, grid.y0, grid.y1, 5, 5)
        blocks = gen_grf_permeability(xi, coarse).values / xi.k_avg
    else:
        blocks = np.asarray(xi, dtype=float).reshape(5, 5)
    return np.kron(blocks, np.ones((grid.ny // 5, grid.nx // 5)))


def contrast_matched_field(grid, contrast, k_avg, lx, ly, theta=0.0, seed=0):
    """Log-normal GRF with its log-range rescaled to an exact max/min contrast
    and its arithmetic mean set to ``k_avg``."""
    rng = np.random.default_rng(seed)
    f = gaussian_field(grid, lx, ly, theta, rng)
    f = (f - f.min()) / (f.max() - f.min()) * np.log(contrast)
    k = np.exp(f)
    return PermeabilityField(grid, k * (k_avg / k.mean()))
