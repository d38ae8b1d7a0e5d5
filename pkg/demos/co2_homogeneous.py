"""Homogeneous CO2 storage case: NBM against a same-grid FVM run.

    python3 demos/co2_homogeneous.py [n] [nb]

Defaults (n=30, nb=300) finish in well under a minute.
"""
import sys
import time

import numpy as np

from nbm import units
from nbm.darcy import NbmDarcyConfig
from nbm.metrics import rel_l2
from nbm.problems import build_co2_case
from nbm.simulate import run_fvm, run_nbm
from nbm.transport import NbmTransportConfig

n = int(sys.argv[1]) if len(sys.argv) > 1 else 30
nb = int(sys.argv[2]) if len(sys.argv) > 2 else 300

scn = build_co2_case("homogeneous", n=n)
t0 = time.perf_counter()
fvm = run_fvm(scn)
t_fvm = time.perf_counter() - t0
t0 = time.perf_counter()
nbm = run_nbm(scn, NbmDarcyConfig(nb=nb), NbmTransportConfig(nb=nb))
t_nbm = time.perf_counter() - t0

print(f"grid {n}x{n}, nb={nb}: FVM {t_fvm:.1f}s, NBM {t_nbm:.1f}s")
print(" day    p diff   ux diff   uy diff    c diff   E_rel")
for a, b in zip(nbm, fvm):
    print(f"{a.time / units.DAY:4.0f}  {rel_l2(a.p, b.p):8.2e}  {rel_l2(a.ux, b.ux):8.2e}  "
          f"{rel_l2(a.uy, b.uy):8.2e}  {rel_l2(a.c, b.c):8.2e}  {a.info['e_rel']:.1e}")
print(f"final pressure range {np.ptp(nbm[-1].p) / units.BAR:.3f} bar, "
      f"tracer mass fraction {nbm[-1].c.mean() / 100:.4f}")
