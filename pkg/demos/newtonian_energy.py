"""Energy drift of the Newtonian marker system as the step halves."""

import numpy as np

from darwin_kinetics import RunConfig
from darwin_kinetics.harness import initial_ensemble
from darwin_kinetics.vp import run_vp, vp_energy

ens = initial_ensemble(RunConfig())
previous = None
for dt in (0.1, 0.05, 0.025):
    energies = [vp_energy(ens)]
    run_vp(ens, 1.0, dt, callback=lambda s: energies.append(vp_energy(s.ensemble)))
    drift = max(abs(np.array(energies) / energies[0] - 1.0))
    order = "" if previous is None else f"  order {np.log2(previous / drift):.2f}"
    print(f"dt={dt:<6} drift={drift:.3e}{order}")
    previous = drift
