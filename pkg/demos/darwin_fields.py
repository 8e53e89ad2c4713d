"""Darwin fields next to the relativistic fields for a few values of c.

Two relativistic evaluators are shown: the marker Lienard-Wiechert sum that drives
the dynamics, and the split data + sphere + cone form. While the light sphere
|x - y| = ct still cuts through the marker cloud the split form carries extra
discretization noise from markers crossing that sphere.
"""

import numpy as np

from darwin_kinetics import RunConfig
from darwin_kinetics.darwin import darwin_fields, start_lvp, step_lvp
from darwin_kinetics.harness import initial_ensemble
from darwin_kinetics.rvm import field_b_gs, field_e_gs, field_rvm, start_rvm, step_rvm
from darwin_kinetics.vp import start_vp

cfg = RunConfig()
probes = np.array([[0.2, 0.1, -0.3], [0.5, 0.5, 0.0], [1.0, -0.5, 0.3]])
steps = 4

initial = start_lvp(start_vp(initial_ensemble(cfg)), cfg.profile, cfg.n_per_axis)
lvp = initial
for _ in range(steps):
    lvp = step_lvp(lvp, cfg.dt)
e0, e2, b1 = darwin_fields(lvp, probes)

for c in (4.0, 8.0, 16.0):
    s = start_rvm(initial, c)
    for _ in range(steps):
        s = step_rvm(s, cfg.dt)
    e_d, b_d = e0 + e2 / c**2, b1 / c
    e_lw, b_lw = field_rvm(s, probes)
    print(f"c={c:<5g} t={s.t:.2f}  marker sum: |E - E_D|={np.max(np.abs(e_lw - e_d)):.3e} "
          f"|B - B_D|={np.max(np.abs(b_lw - b_d)):.3e}   split form: "
          f"|E - E_D|={np.max(np.abs(field_e_gs(s, probes) - e_d)):.3e} "
          f"|B - B_D|={np.max(np.abs(field_b_gs(s, probes) - b_d)):.3e}")
