"""Manufactured Darcy benchmark: exact (p, u) against NBM and TPFA.

    python3 demos/manufactured.py [n] [nb]
"""
import sys

import numpy as np

from nbm.darcy import NbmDarcy, NbmDarcyConfig
from nbm.fvm import FvmGrid, reconstruct_cell_velocity
from nbm.geometry import Grid2D
from nbm.metrics import rel_l2
from nbm.problems import build_manufactured_case

n = int(sys.argv[1]) if len(sys.argv) > 1 else 40
nb = int(sys.argv[2]) if len(sys.argv) > 2 else 400

mc = build_manufactured_case(grid=Grid2D(-1.0, 1.0, -1.0, 1.0, n, n))
scn = mc.scenario()
g = scn.grid
X, Y = np.meshgrid(g.xc(), g.yc())
ref = {"p": mc.pressure(X, Y)}
ref["ux"], ref["uy"] = mc.velocity(X, Y)

st = FvmGrid(g, scn.perm, scn.props, scn.bcs).step(np.full((g.ny, g.nx), scn.p_init), np.inf, 0.0)
fux, fuy = reconstruct_cell_velocity(g, st)
fvm = {"p": st.p, "ux": fux, "uy": fuy}

solver = NbmDarcy(g, scn.perm, scn.props, scn.bcs, NbmDarcyConfig(nb=nb))
d = solver.advance(solver.initial_state(scn.p_init), np.inf)
nbm = {"p": d.p.reshape(g.ny, g.nx), "ux": d.u[:, 0].reshape(g.ny, g.nx),
       "uy": d.u[:, 1].reshape(g.ny, g.nx)}

print(f"permeability contrast {scn.perm.contrast:.0f}, grid {n}x{n}, nb={nb}, E_rel={d.e_rel:.2e}")
for k in ref:
    print(f"{k:>3}  NBM {rel_l2(nbm[k], ref[k]):.3e}   FVM {rel_l2(fvm[k], ref[k]):.3e}")
