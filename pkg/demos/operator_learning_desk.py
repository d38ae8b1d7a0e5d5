"""Self-supervised Darcy operator learning (boundary flux and time inputs).

Trains on 20 NBM trajectories at a small resolution and reports errors on
4 unseen flux values, including steps past the training horizon.

    python3 demos/operator_learning_desk.py
"""
import dataclasses

import numpy as np

from nbm.operator_learning import (FieldEvaluator, OlCase, TrainConfig, build_latent_spec,
                                   darcy_fields, darcy_reduced_residuals, darcy_solver,
                                   generate_snapshots, train_operator, trajectory_errors)

oc = OlCase("II", n=20, nb=150, n_steps=6)
store = generate_snapshots(oc, 20, seed=1)
test = generate_snapshots(dataclasses.replace(oc, n_steps=12), 4, seed=2)
solver = darcy_solver(oc)
latent = build_latent_spec(store, oc.ranks)
residuals = darcy_reduced_residuals(oc, store, latent, solver)
model, hist = train_operator(oc, store, latent, residuals, TrainConfig(epochs=100, checkpoint_every=20))
for h in hist[::20]:
    print(f"epoch {h['epoch']:4d}  E_rel {h['e_rel']:.3e}")

ev = FieldEvaluator(model, solver)
for i, prm in enumerate(test.params):
    truth = darcy_fields(solver, {k: test.blocks[k][i] for k in ("p", "div", "curl")})
    e = trajectory_errors(ev.trajectory(prm, test.times), truth)
    print(f"g_top={np.ravel(prm)[0]:6.1f}  p err in/out {e['p'][:6].max():.2e}/{e['p'][6:].max():.2e}  "
          f"u err in/out {e['u'][:6].max():.2e}/{e['u'][6:].max():.2e}")
