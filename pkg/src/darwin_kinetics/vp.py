"""Vlasov-Poisson markers: softened Coulomb field, RK4 characteristics, backward f evaluation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ensemble import Ensemble, InitialProfile, chunked_sum
from .history import History
from .kernels import (
    plummer_density,
    plummer_density_gradient,
    plummer_field,
    plummer_field_gradient,
    plummer_potential,
)


def pair_sum(points, src_x, src_w, kernel, delta):
    """sum_j w_j kernel(points_i - src_j) with a fixed reduction order."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(src_w) == 0:
        probe = kernel(np.ones((1, 3)), delta)
        return np.zeros((len(points),) + probe.shape[1:])
    r = points[:, None, :] - src_x[None, :, :]
    k = kernel(r, delta)
    weighted = k * src_w.reshape((1, -1) + (1,) * (k.ndim - 2))
    return chunked_sum(np.moveaxis(weighted, 1, 0))


def coulomb_field(points, src_x, src_w, delta):
    return pair_sum(points, src_x, src_w, plummer_field, delta)


def coulomb_field_gradient(points, src_x, src_w, delta):
    return pair_sum(points, src_x, src_w, plummer_field_gradient, delta)


@dataclass
class VPState:
    ensemble: Ensemble
    history: History

    @property
    def t(self):
        return self.ensemble.t


def _single(x, values):
    return values[0] if np.ndim(x) == 1 else values


def field_e0(state, x):
    """Softened Coulomb field of the markers at ``x`` (one point or an (M, 3) array)."""
    e = state.ensemble if isinstance(state, VPState) else state
    return _single(x, coulomb_field(x, e.x, e.w, e.softening.delta))


def grad_field_e0(state, x):
    e = state.ensemble if isinstance(state, VPState) else state
    return _single(x, coulomb_field_gradient(x, e.x, e.w, e.softening.delta))


def start_vp(ensemble: Ensemble) -> VPState:
    e = ensemble.copy(kind="VP")
    hist = History(len(e))
    hist.append(e.t, e.x, e.v, field_e0(e, e.x))
    return VPState(e, hist)


def _rhs(x, v, w, delta):
    return v, coulomb_field(x, x, w, delta)


def step_vp(state: VPState, dt: float) -> VPState:
    """One classical RK4 step with the field re-summed at every stage."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    e = state.ensemble
    d = e.softening.delta
    x, v = e.x, e.v
    k1x, k1v = _rhs(x, v, e.w, d)
    k2x, k2v = _rhs(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v, e.w, d)
    k3x, k3v = _rhs(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v, e.w, d)
    k4x, k4v = _rhs(x + dt * k3x, v + dt * k3v, e.w, d)
    xn = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    vn = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    new = e.copy(x=xn, v=vn)
    new.t = e.t + dt
    state.history.append(new.t, xn, vn, coulomb_field(xn, xn, e.w, d))
    return VPState(new, state.history)


def run_vp(ensemble: Ensemble, t_end: float, dt: float, callback=None) -> VPState:
    state = start_vp(ensemble)
    n_steps = int(round((t_end - ensemble.t) / dt))
    for _ in range(n_steps):
        state = step_vp(state, dt)
        if callback is not None:
            callback(state)
    return state


def field_e0_at(state: VPState, x, s):
    """E0 at arbitrary points and a past time s from the interpolated marker history."""
    e = state.ensemble
    xs, _, _ = state.history.evaluate(np.full(len(e), s), np.arange(len(e)))
    return coulomb_field(x, xs, e.w, e.softening.delta)


def grad_field_e0_at(state: VPState, x, s):
    e = state.ensemble
    xs, _, _ = state.history.evaluate(np.full(len(e), s), np.arange(len(e)))
    return coulomb_field_gradient(x, xs, e.w, e.softening.delta)


def backward_characteristics(state: VPState, x, v, extra=None, extra_init=None):
    """Integrate (X, V) from the current time back to t = 0 with RK4 on the knot grid.

    ``extra(s, X, V, Y)`` optionally adds an ODE for auxiliary data Y carried
    along the same characteristics; it returns dY/ds. Returns (X0, V0, Y0).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float)).copy()
    v = np.atleast_2d(np.asarray(v, dtype=float)).copy()
    y = None if extra is None else np.asarray(extra_init, dtype=float).copy()
    times = state.history.times
    if state.t > times[-1] + 1e-12 or times[0] > 1e-12:
        raise ValueError("history does not cover [0, t]")

    def rhs(s, X, V, Y):
        dX, dV = V, field_e0_at(state, X, s)
        dY = None if extra is None else extra(s, X, V, Y)
        return dX, dV, dY

    def axpy(Y, h, dY):
        return None if Y is None else Y + h * dY

    k_end = int(np.searchsorted(times, state.t - 1e-12))
    for k in range(k_end, 0, -1):
        s1, s0 = times[k], times[k - 1]
        h = s0 - s1
        a = rhs(s1, x, v, y)
        b = rhs(s1 + 0.5 * h, x + 0.5 * h * a[0], v + 0.5 * h * a[1], axpy(y, 0.5 * h, a[2]))
        c = rhs(s1 + 0.5 * h, x + 0.5 * h * b[0], v + 0.5 * h * b[1], axpy(y, 0.5 * h, b[2]))
        d = rhs(s0, x + h * c[0], v + h * c[1], axpy(y, h, c[2]))
        x = x + h / 6.0 * (a[0] + 2 * b[0] + 2 * c[0] + d[0])
        v = v + h / 6.0 * (a[1] + 2 * b[1] + 2 * c[1] + d[1])
        if y is not None:
            y = y + h / 6.0 * (a[2] + 2 * b[2] + 2 * c[2] + d[2])
    return x, v, y


def eval_f0(state: VPState, x, v, profile: InitialProfile):
    """f0(x, v, t) = f°(X(0), V(0)) along the backward characteristic."""
    x0, v0, _ = backward_characteristics(state, x, v)
    vals = profile(x0, v0)
    return float(vals[0]) if np.ndim(x) == 1 else vals


def tangent_flow(state: VPState, x, v):
    """Jacobian d(X(0), V(0))/d(x, v) of the backward flow, shape (M, 6, 6)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m = len(x)

    def variational(s, X, V, J):
        g = grad_field_e0_at(state, X, s)
        dJ = np.empty_like(J)
        dJ[:, :3] = J[:, 3:]
        dJ[:, 3:] = np.einsum("mij,mjk->mik", g, J[:, :3])
        return dJ

    init = np.broadcast_to(np.eye(6), (m, 6, 6))
    _, _, jac = backward_characteristics(state, x, v, variational, init)
    return jac


def vp_energy(e: Ensemble):
    """Kinetic plus pairwise softened interaction energy (self pairs excluded)."""
    kin = 0.5 * chunked_sum(e.w * np.einsum("ij,ij->i", e.v, e.v))
    if len(e) < 2:
        return float(kin)
    r = e.x[:, None, :] - e.x[None, :, :]
    pot = plummer_potential(r, e.softening.delta)
    np.fill_diagonal(pot, 0.0)
    inter = 0.5 * chunked_sum(e.w * chunked_sum((pot * e.w[None, :]).T))
    return float(kin + inter)


def current_divergence(x_src, v_src, w, delta, points):
    points = np.atleast_2d(points)
    r = points[:, None, :] - x_src[None, :, :]
    grad = plummer_density_gradient(r, delta)
    return chunked_sum((np.einsum("mjk,jk->mj", grad, v_src) * w[None, :]).T)


def continuity_residual(state: VPState, probes, k=None):
    """sup |(rho(t_{k+1}) - rho(t_k))/dt + div j(t_k + dt/2)| over the probe points.

    Uses the two latest knots unless ``k`` selects the interval [t_k, t_{k+1}].
    """
    hist = state.history
    if hist.size < 2:
        raise ValueError("need two stored time levels")
    k = hist.size - 2 if k is None else k
    t0, t1 = hist.times[k], hist.times[k + 1]
    e = state.ensemble
    d = e.softening.delta
    idx = np.arange(len(e))
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    rho = []
    for xs in (hist.knot(k)[0], hist.knot(k + 1)[0]):
        rho.append(pair_sum(probes, xs, e.w, plummer_density, d))
    xm, um, _ = hist.evaluate(np.full(len(e), 0.5 * (t0 + t1)), idx)
    div = current_divergence(xm, um, e.w, d, probes)
    return float(np.max(np.abs((rho[1] - rho[0]) / (t1 - t0) + div)))


def write_field_probes(path, t, points, fields, append=False):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not (append and path.exists())
    with path.open("a" if append else "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        if new:
            names = ["E1", "E2", "E3", "B1", "B2", "B3"][: fields.shape[1]]
            out.writerow(["t", "x1", "x2", "x3", *names])
        for p, f in zip(np.atleast_2d(points), np.atleast_2d(fields)):
            out.writerow([f"{val:.17g}" for val in (t, *p, *f)])


__all__ = [
    "VPState", "field_e0", "grad_field_e0", "start_vp", "step_vp", "run_vp", "eval_f0",
    "tangent_flow", "vp_energy", "continuity_residual", "write_field_probes",
]
