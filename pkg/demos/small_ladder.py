"""A small convergence ladder: 64 markers, short horizon, fitted orders per model pair."""

from darwin_kinetics import RunConfig, convergence_study

cfg = RunConfig(n_per_axis=2, t_end=0.5, dt=0.05, box_points=3, n_phase_probes=16)
report = convergence_study(cfg)
for name in sorted(report.rows):
    sups = "  ".join(f"{v:.2e}" for v in report.rows[name])
    fit = report.fits[name]
    print(f"{name:<9} {sups}  order {fit.order:5.2f} {fit.flag}")
print("non-monotone:", report.monotone_violations() or "none")
