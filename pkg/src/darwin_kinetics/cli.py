"""darwin-kinetics command line: one subcommand per solver or check, CSV output, exit codes 0/1/2."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import darwin, dvm, harness, rvm, selftest, vp
from .config import CliConfig, ConfigError, load_config
from .ensemble import write_snapshot

PASS, TOLERANCE_FAILURE, SOLVER_ERROR = 0, 1, 2
SOLVER_ERRORS = (dvm.FixedPointError, FloatingPointError, RuntimeError, np.linalg.LinAlgError)


def _write_rows(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating)) else str(v) for v in row])


class Checks:
    """Collects named pass/fail results and writes them as checks.csv."""

    def __init__(self):
        self.rows = []

    def _record(self, name, value, lo, hi, passed):
        self.rows.append((name, float(value), lo, hi, "pass" if passed else "fail"))
        bound = f"<= {hi:.3e}" if lo is None else f"in [{lo}, {hi}]"
        print(f"{'PASS' if passed else 'FAIL'} {name}: {value:.4g} ({bound})")

    def add(self, name, value, limit, passed):
        self._record(name, value, None, float(limit), passed)

    def upper(self, name, value, limit):
        self.add(name, value, limit, value <= limit)

    def within(self, name, value, lo, hi):
        self._record(name, value, float(lo), float(hi), lo <= value <= hi)

    @property
    def ok(self):
        return all(r[-1] == "pass" for r in self.rows)

    def write(self, path):
        _write_rows(path, ["check", "value", "lower", "upper", "status"],
                    [(n, v, "" if lo is None else lo, hi, st) for n, v, lo, hi, st in self.rows])


def cmd_run_vp(cfg: CliConfig, out: Path, checks: Checks, timing):
    run = cfg.run
    ens = harness.initial_ensemble(run)
    rows = [(0.0, vp.vp_energy(ens))]
    state = vp.run_vp(ens, run.t_end, run.dt, callback=lambda s: rows.append((s.t, vp.vp_energy(s.ensemble))))
    _write_rows(out / "energy.csv", ["t", "H"], rows)
    write_snapshot(state.ensemble, out / "snapshot.csv")
    box = harness.box_probes(run)
    vp.write_field_probes(out / "fields.csv", state.t, box, vp.field_e0_at(state, box, state.t))
    drift = max(abs(h / rows[0][1] - 1.0) for _, h in rows)
    checks.upper("vp_energy_drift", drift, cfg.checks["energy_drift_tol"])


def cmd_run_darwin(cfg: CliConfig, out: Path, checks: Checks, timing):
    run = cfg.run
    ens = harness.initial_ensemble(run)
    st = darwin.start_lvp(vp.start_vp(ens), run.profile, run.n_per_axis, run.rho2_source)
    box = harness.box_probes(run)
    w2_rows = []
    for k in range(run.steps + 1):
        if k:
            st = darwin.step_lvp(st, run.dt)
        w2 = st.w2
        total = float(np.sum(np.abs(w2)))
        w2_rows.append((st.t, float(np.sum(w2)), total))
    e2, e2_alt = darwin.field_e2(st, box), darwin.field_e2_alt(st, box)
    ibp = float(np.max(np.abs(e2 - e2_alt)) / max(np.max(np.abs(e2)), 1e-300))
    _write_rows(out / "w2.csv", ["t", "sum_w2", "sum_abs_w2"], w2_rows)
    write_snapshot(st.ensemble, out / "snapshot.csv")
    e0, e2, b1 = darwin.darwin_fields(st, box)
    _write_rows(out / "fields.csv", ["t", "x1", "x2", "x3", "E0_1", "E0_2", "E0_3", "E2_1", "E2_2", "E2_3",
                                     "B1_1", "B1_2", "B1_3"],
                [(st.t, *p, *a, *b, *c) for p, a, b, c in zip(box, e0, e2, b1)])
    checks.upper("e2_two_form_gap", ibp, cfg.checks["ibp_tol"])
    ratio = max((abs(s) / a if a > 0 else 0.0) for _, s, a in w2_rows)
    checks.upper("w2_sum_ratio", ratio, cfg.checks["w2_tol"])


def cmd_run_dvm(cfg: CliConfig, out: Path, checks: Checks, timing):
    run = cfg.run
    ens = harness.initial_ensemble(run)
    s = dvm.start_dvm(ens, cfg.c, run.fixed_point_tol, run.fixed_point_max_iter, run.include_c4)

    def row(s):
        h = dvm.energy(s)
        st = s.iteration_stats
        return (s.t, h.total, h.kinetic, h.electrostatic, h.magnetic, st.residual, st.iterations)

    rows = [row(s)]
    for _ in range(run.steps):
        s = dvm.step_dvm(s, run.dt)
        rows.append(row(s))
    dvm.write_energy_log(out / "energy.csv", rows)
    write_snapshot(s.ensemble, out / "snapshot.csv")
    box = harness.box_probes(run)
    vp.write_field_probes(out / "fields.csv", s.t, box, np.hstack([s.E_star(box), s.B_star(box)]))
    drift = max(abs(r[1] / rows[0][1] - 1.0) for r in rows)
    checks.upper("dvm_energy_drift", drift, cfg.checks["energy_drift_tol"])


def cmd_run_rvm(cfg: CliConfig, out: Path, checks: Checks, timing):
    run = cfg.run
    initial = harness._initial_copy(run)
    s = rvm.start_rvm(initial, cfg.c)
    box = harness.box_probes(run)
    e_init, b_init = darwin.matched_initial_fields(initial, cfg.c)
    e, b = rvm.field_e_gs(s, box), rvm.field_b_gs(s, box)
    gap = max(float(np.max(np.abs(e - e_init(box)))), float(np.max(np.abs(b - b_init(box)))))
    path = out / "probes.csv"
    vp.write_field_probes(path, 0.0, box, np.hstack([e, b]))
    vmax = 0.0
    for _ in range(run.steps):
        s = rvm.step_rvm(s, run.dt)
        vmax = max(vmax, float(np.max(np.linalg.norm(s.history.knot(s.history.size - 1)[1], axis=1))) / cfg.c)
        vp.write_field_probes(path, s.t, box, np.hstack([rvm.field_e_gs(s, box), rvm.field_b_gs(s, box)]),
                              append=True)
    write_snapshot(s.ensemble, out / "snapshot.csv")
    checks.upper("initial_field_reproduction", gap, cfg.checks["initial_field_tol"])
    checks.upper("max_speed_over_c", vmax, rvm.SPEED_CAP)


def cmd_converge(cfg: CliConfig, out: Path, checks: Checks, timing):
    rep = harness.convergence_study(cfg.run)
    rep.write_csv(out / "convergence.csv")
    timing.update(rep.seconds)
    lo, hi = cfg.checks["darwin_order_min"], cfg.checks["darwin_order_max"]
    for key in ("darwin_f", "darwin_E", "darwin_B", "dvm_f", "dvm_E", "dvm_B"):
        checks.within(f"order_{key}", rep.fits[key].order, lo, hi)
    checks.within("order_vp_E", rep.fits["vp_E"].order, cfg.checks["newtonian_order_min"],
                  cfg.checks["newtonian_order_max"])


def cmd_rescale_check(cfg: CliConfig, out: Path, checks: Checks, timing):
    rows = []
    ens = harness.initial_ensemble(cfg.run)
    ident = harness.rescale_state(ens, 1.0)
    id_gap = float(max(np.max(np.abs(ident.x - ens.x)), np.max(np.abs(ident.v - ens.v))))
    two = harness.rescale_state(harness.rescale_state(ens, 0.5), 0.25)
    one = harness.rescale_state(ens, 0.125)
    group_gap = float(max(np.max(np.abs(two.x - one.x) / np.max(np.abs(one.x))),
                          np.max(np.abs(two.v - one.v) / np.max(np.abs(one.v)))))
    for eps in cfg.checks["eps_list"]:
        r = harness.rescale_equivalence_check(cfg.run, eps)
        rows.append((r.eps, r.residual_e, r.residual_b1, r.residual_x, r.discretization_error,
                     "pass" if r.passed else "fail"))
        checks.upper(f"rescale_residual_eps_{eps:g}", max(r.residual_e, r.residual_b1),
                     10.0 * max(r.discretization_error, 1e-12))
    _write_rows(out / "rescale.csv", ["eps", "residual_E", "residual_B1", "residual_x", "discretization", "status"],
                rows)
    checks.upper("rescale_identity", id_gap, 1e-12)
    checks.upper("rescale_group_property", group_gap, 1e-12)


def cmd_integrals_selftest(cfg: CliConfig, out: Path, checks: Checks, timing):
    rows = selftest.integral_oracle_suite() + selftest.kernel_expansion_suite()
    _write_rows(out / "integrals.csv", ["name", "value", "reference", "error", "tolerance"],
                [(r.name, r.value, r.reference, r.error, r.tolerance) for r in rows])
    for r in rows:
        checks.add(r.name, r.error, r.tolerance, r.passed)


COMMANDS = {
    "run-vp": cmd_run_vp,
    "run-darwin": cmd_run_darwin,
    "run-dvm": cmd_run_dvm,
    "run-rvm": cmd_run_rvm,
    "converge": cmd_converge,
    "rescale-check": cmd_rescale_check,
    "integrals-selftest": cmd_integrals_selftest,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="darwin-kinetics", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return SOLVER_ERROR
    out = cfg.run_dir() / args.command
    out.mkdir(parents=True, exist_ok=True)
    checks, timing = Checks(), {}
    start = time.perf_counter()
    try:
        COMMANDS[args.command](cfg, out, checks, timing)
    except SOLVER_ERRORS as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return SOLVER_ERROR
    timing["total"] = time.perf_counter() - start
    checks.write(out / "checks.csv")
    # wall-clock numbers stay out of the CSVs so those remain bitwise reproducible
    (out / "timing.json").write_text(json.dumps({"config_hash": cfg.digest(), **timing}, indent=2))
    print(f"outputs in {out}")
    return PASS if checks.ok else TOLERANCE_FAILURE


if __name__ == "__main__":
    sys.exit(main())
