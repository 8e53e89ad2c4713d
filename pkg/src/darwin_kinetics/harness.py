"""Matched multi-model runs over a ladder of c, sup-norm differences, slope fits and the scaling check."""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .darwin import DarwinParts, darwin_fields, eval_f2, field_b1, start_lvp, step_lvp
from .dvm import eval_f_dvm, record_dvm, start_dvm, step_dvm
from .ensemble import Ensemble, InitialProfile, sample_initial
from .history import History
from .kernels import SofteningSpec
from .rvm import eval_f_rvm, field_rvm, start_rvm, step_rvm
from .vp import VPState, eval_f0, field_e0_at, run_vp, start_vp

PAIR_STEP_CAP = 1e8


def _default_profile():
    return InitialProfile(center_v=(0.3, 0.0, 0.0), radius_v=0.5, amplitude=20.0)


@dataclass(frozen=True)
class RunConfig:
    """Everything a matched comparison depends on; two runs with equal configs are bitwise equal."""

    profile: InitialProfile = field(default_factory=_default_profile)
    n_per_axis: int = 3
    delta: float = 0.2
    dt: float = 0.05
    t_end: float = 1.0
    c_list: tuple = (4.0, 8.0, 16.0, 32.0)
    box_half_width: float = 1.5
    box_points: int = 4
    n_phase_probes: int = 64
    fixed_point_tol: float = 1e-12
    fixed_point_max_iter: int = 64
    ibp_tol: float = 5e-3
    include_c4: bool = True
    rho2_source: str = "lagrangian"

    def __post_init__(self):
        cl = tuple(float(c) for c in self.c_list)
        object.__setattr__(self, "c_list", cl)
        if any(c < 4 for c in cl):
            raise ValueError("every c in c_list must be at least 4")
        if any(b <= a for a, b in zip(cl, cl[1:])):
            raise ValueError("c_list must be strictly ascending")
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be positive")
        if abs(self.t_end / self.dt - round(self.t_end / self.dt)) > 1e-9:
            raise ValueError("t_end must be a whole number of steps")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.rho2_source not in ("lagrangian", "weights"):
            raise ValueError("rho2_source must be 'lagrangian' or 'weights'")

    @property
    def steps(self):
        return int(round(self.t_end / self.dt))

    def digest(self):
        """Short stable hash of the configuration, used to name run directories."""
        blob = json.dumps(asdict(self), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def box_probes(cfg: RunConfig):
    g = np.linspace(-cfg.box_half_width, cfg.box_half_width, cfg.box_points)
    return np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)


def initial_ensemble(cfg: RunConfig) -> Ensemble:
    ens = sample_initial(cfg.profile, cfg.n_per_axis, SofteningSpec(cfg.delta))
    if len(ens) * cfg.steps > PAIR_STEP_CAP:
        raise ValueError("configuration exceeds the history memory cap (N * steps)")
    return ens


@dataclass
class DarwinReference:
    """The c-independent parts of the Darwin triple at t_end on the shared probes."""

    lvp: object
    box: np.ndarray
    phase_x: np.ndarray
    phase_v: np.ndarray
    box_parts: DarwinParts
    phase_parts: DarwinParts
    initial: object
    seconds: float


def darwin_reference(cfg: RunConfig) -> DarwinReference:
    t0 = time.perf_counter()
    ens = initial_ensemble(cfg)
    st = start_lvp(start_vp(ens), cfg.profile, cfg.n_per_axis, cfg.rho2_source)
    for _ in range(cfg.steps):
        st = step_lvp(st, cfg.dt)
    initial = _initial_copy(cfg)
    pick = np.linspace(0, len(ens) - 1, cfg.n_phase_probes).round().astype(int)
    px, pv = st.ensemble.x[pick].copy(), st.ensemble.v[pick].copy()
    box = box_probes(cfg)
    e0, e2, b1 = darwin_fields(st, box)
    bp = DarwinParts(0.0, 0.0, e0, e2, b1)
    pp = DarwinParts(np.atleast_1d(eval_f0(st.base, px, pv, cfg.profile)), eval_f2(st, px, pv), 0.0, 0.0, 0.0)
    return DarwinReference(st, box, px, pv, bp, pp, initial, time.perf_counter() - t0)


def _initial_copy(cfg: RunConfig):
    """A fresh LVP state at t = 0 (the RVM data terms read it)."""
    return start_lvp(start_vp(initial_ensemble(cfg)), cfg.profile, cfg.n_per_axis, cfg.rho2_source)


@dataclass
class ModelSample:
    """Fields on the box and f on the phase probes for one model at one c."""

    e: np.ndarray
    b: np.ndarray
    f: np.ndarray
    seconds: float
    stats: dict = field(default_factory=dict)


def sample_rvm(cfg: RunConfig, ref: DarwinReference, c) -> ModelSample:
    t0 = time.perf_counter()
    s = start_rvm(ref.initial, c)
    vmax = 0.0
    for _ in range(cfg.steps):
        s = step_rvm(s, cfg.dt)
        vmax = max(vmax, float(np.max(np.linalg.norm(s.history.knot(s.history.size - 1)[1], axis=1))) / c)
    e, b = field_rvm(s, ref.box)
    f = eval_f_rvm(s, ref.phase_x, ref.phase_v)
    return ModelSample(e, b, f, time.perf_counter() - t0, {"max_speed_over_c": vmax})


def sample_dvm(cfg: RunConfig, ref: DarwinReference, c) -> ModelSample:
    t0 = time.perf_counter()
    ens = initial_ensemble(cfg)
    s = start_dvm(ens, c, cfg.fixed_point_tol, cfg.fixed_point_max_iter, cfg.include_c4)
    hist = History(len(ens))
    record_dvm(hist, s)
    iters = [s.iteration_stats.iterations]
    for _ in range(cfg.steps):
        s = step_dvm(s, cfg.dt)
        record_dvm(hist, s)
        iters.append(s.iteration_stats.iterations)
    e = s.E_star(ref.box)
    b = s.B_star(ref.box)
    f = eval_f_dvm(hist, cfg.profile, ens.w, c, cfg.delta, ref.phase_x, ref.phase_v, cfg.include_c4)
    return ModelSample(e, b, f, time.perf_counter() - t0, {"max_iterations": max(iters)})


@dataclass(frozen=True)
class Discrepancy:
    df: float
    de: float
    db: float

    def __iter__(self):
        return iter((self.df, self.de, self.db))


def _sup(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def discrepancy(sample: ModelSample, f, e, b) -> Discrepancy:
    return Discrepancy(_sup(sample.f, f), _sup(sample.e, e), _sup(sample.b, b))


def compare_models(cfg: RunConfig, c, reference: DarwinReference = None) -> Discrepancy:
    """sup |f - f^D|, sup |E - E^D|, sup |B - B^D| between the relativistic run and the Darwin triple."""
    ref = darwin_reference(cfg) if reference is None else reference
    rv = sample_rvm(cfg, ref, c)
    f, _, _ = ref.phase_parts.at(c)
    _, e, b = ref.box_parts.at(c)
    return discrepancy(rv, f, e, b)


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares fit of log(sup) against log(c); ``order`` is minus the slope."""

    slope: float
    intercept: float
    residual: float
    points: int
    flag: str = ""

    @property
    def order(self):
        return -self.slope


def fit_slope(pairs) -> SlopeFit:
    pairs = [(float(c), float(s)) for c, s in pairs]
    if len(pairs) < 2:
        raise ValueError("a slope needs at least two points")
    good = [(c, s) for c, s in pairs if s > np.finfo(float).tiny * 1e3]
    dropped = len(pairs) - len(good)
    if len(good) < 2:
        return SlopeFit(float("nan"), float("nan"), float("nan"), len(good), "below noise floor")
    lc, ls = np.log([c for c, _ in good]), np.log([s for _, s in good])
    (slope, intercept), res, *_ = np.polyfit(lc, ls, 1, full=True)
    flags = []
    if len(good) == 2:
        flags.append("2-point")
    if dropped:
        flags.append(f"{dropped} at floor")
    return SlopeFit(float(slope), float(intercept), float(res[0]) if len(res) else 0.0, len(good), ",".join(flags))


@dataclass
class ConvergenceReport:
    """Per-c sup differences for each model pair, slope fits and runtimes."""

    c_list: tuple
    rows: dict
    fits: dict
    seconds: dict

    def write_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        keys = sorted(self.rows)
        with path.open("w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["c", *keys])
            for i, c in enumerate(self.c_list):
                out.writerow([f"{c:.17g}", *(f"{self.rows[k][i]:.17g}" for k in keys)])
        with path.with_name(path.stem + "_slopes.csv").open("w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["quantity", "order", "intercept", "residual", "points", "flag"])
            for k in keys:
                fit = self.fits[k]
                out.writerow([k, f"{fit.order:.17g}", f"{fit.intercept:.17g}", f"{fit.residual:.17g}",
                              fit.points, fit.flag])

    def monotone_violations(self):
        """Quantities whose sup increases from one rung to the next (flagged, not failed)."""
        return [k for k, v in self.rows.items() if any(b > a for a, b in zip(v, v[1:]))]


def convergence_study(cfg: RunConfig, include_dvm=True, include_vp=True, reference=None) -> ConvergenceReport:
    ref = darwin_reference(cfg) if reference is None else reference
    rows = {k: [] for k in ("darwin_f", "darwin_E", "darwin_B")}
    if include_dvm:
        rows.update({k: [] for k in ("dvm_f", "dvm_E", "dvm_B")})
    if include_vp:
        rows["vp_E"] = []
    seconds = {"darwin_reference": ref.seconds}
    e0 = ref.box_parts.e0
    for c in cfg.c_list:
        rv = sample_rvm(cfg, ref, c)
        seconds[f"rvm_c{c:g}"] = rv.seconds
        f, e, b = ref.phase_parts.at(c)[0], *ref.box_parts.at(c)[1:]
        d = discrepancy(rv, f, e, b)
        rows["darwin_f"].append(d.df)
        rows["darwin_E"].append(d.de)
        rows["darwin_B"].append(d.db)
        if include_dvm:
            dv = sample_dvm(cfg, ref, c)
            seconds[f"dvm_c{c:g}"] = dv.seconds
            d = discrepancy(rv, dv.f, dv.e, dv.b)
            rows["dvm_f"].append(d.df)
            rows["dvm_E"].append(d.de)
            rows["dvm_B"].append(d.db)
        if include_vp:
            rows["vp_E"].append(_sup(rv.e, e0))
    fits = {k: fit_slope(list(zip(cfg.c_list, v))) for k, v in rows.items()}
    return ConvergenceReport(cfg.c_list, rows, fits, seconds)


# ---- scaling family ----

def rescale_ensemble(e: Ensemble, eps) -> Ensemble:
    """x -> x/eps, v -> sqrt(eps) v, t -> eps^(-3/2) t, delta -> delta/eps, c -> sqrt(eps) c; weights unchanged."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    out = e.copy(x=e.x / eps, v=e.v * np.sqrt(eps), softening=SofteningSpec(e.softening.delta / eps),
                 c=None if e.c is None else e.c * np.sqrt(eps))
    out.t = e.t * eps**-1.5
    return out


def rescale_state(sol, eps):
    """Rescale an Ensemble or a VP state exactly; other solver states yield their rescaled ensemble."""
    if isinstance(sol, Ensemble):
        return rescale_ensemble(sol, eps)
    if isinstance(sol, VPState):
        h = sol.history
        new = History(h.n, capacity=max(h.size, 1))
        for k in range(h.size):
            x, u, a = h.knot(k)
            new.append(h.times[k] * eps**-1.5, x / eps, u * np.sqrt(eps), a * eps**2)
        return VPState(rescale_ensemble(sol.ensemble, eps), new)
    if hasattr(sol, "ensemble"):
        return rescale_ensemble(sol.ensemble, eps)
    raise TypeError(f"cannot rescale {type(sol).__name__}")


@dataclass(frozen=True)
class RescaleReport:
    eps: float
    residual_e: float
    residual_b1: float
    residual_x: float
    discretization_error: float

    @property
    def passed(self):
        scale = max(self.discretization_error, 1e-12)
        return max(self.residual_e, self.residual_b1) <= 10.0 * scale


def _vp_fields(state: VPState, x):
    return field_e0_at(state, x, state.t), field_b1(state, x)


def rescale_equivalence_check(cfg: RunConfig, eps) -> RescaleReport:
    """Run VP from f°, rescale; run VP from the rescaled data with rescaled dt; compare fields.

    The two runs are conjugate step by step, so the residual isolates
    floating-point effects. The discretization scale is the change in E
    under dt halving of the unscaled run.
    """
    ens = initial_ensemble(cfg)
    a = run_vp(ens, cfg.t_end, cfg.dt)
    mapped = rescale_state(a, eps)
    b = run_vp(rescale_ensemble(ens, eps), cfg.t_end * eps**-1.5, cfg.dt * eps**-1.5)
    probes = box_probes(cfg) / eps
    ea, ba = _vp_fields(a, probes * eps)
    eb, bb = _vp_fields(b, probes)
    scale_e = float(np.max(np.abs(ea))) * eps**2
    res_e = float(np.max(np.abs(eb - eps**2 * ea))) / scale_e
    res_b = float(np.max(np.abs(bb - eps**2.5 * ba))) / max(float(np.max(np.abs(ba))) * eps**2.5, 1e-300)
    res_x = float(np.max(np.abs(b.ensemble.x - mapped.ensemble.x))) * eps
    half = run_vp(ens, cfg.t_end, 0.5 * cfg.dt)
    eh, _ = _vp_fields(half, probes * eps)
    disc = float(np.max(np.abs(eh - ea))) / float(np.max(np.abs(ea)))
    return RescaleReport(float(eps), res_e, res_b, res_x, disc)


def newtonian_order(cfg: RunConfig, reference=None):
    """sup |E - E0| over the probe box per c, with the fitted order."""
    ref = darwin_reference(cfg) if reference is None else reference
    pairs = [(c, _sup(sample_rvm(cfg, ref, c).e, ref.box_parts.e0)) for c in cfg.c_list]
    return pairs, fit_slope(pairs)


def with_resolution(cfg: RunConfig, n_per_axis):
    return replace(cfg, n_per_axis=n_per_axis)
