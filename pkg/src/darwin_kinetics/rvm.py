"""Relativistic Vlasov-Maxwell markers driven by retarded fields of every other marker's history."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from numpy.polynomial.legendre import leggauss

from .darwin import (
    LVPState,
    b1_from_sources,
    boundary_term,
    e2_alt_from_sources,
    e2_from_sources,
    retarded_kernel_terms,
)
from .ensemble import Ensemble, InitialProfile, bump, chunked_sum, velocity_moments
from .history import History, retarded_times
from .kernels import (
    GSKernelInputs,
    gs_kernel_b,
    gs_kernel_e,
    momentum_from_velocity,
    plummer_field,
    plummer_field_gradient,
    relativistic_velocity,
    relativistic_velocity_jacobian,
    softened_distance,
    sphere_quadrature,
)
from .vp import coulomb_field

SPEED_CAP = 0.999


def _dot(a, b):
    return np.sum(a * b, axis=-1, keepdims=True)


def lienard_wiechert(r, u, a, delta, c):
    """Retarded (E, B) per unit charge of a softened source, from its emission-time state.

    ``r`` = x - X(s*), ``u`` and ``a`` the source velocity and acceleration at
    s*. Potentials phi = 1/D and A = u/(c D) with D = R_delta - r.u/c; the
    fields follow from differentiating through the emission time.
    """
    rd = softened_distance(r, delta)[..., None]
    n = r / rd
    dist = rd - _dot(r, u) / c
    kappa = dist / rd
    grad_s = -n / (c * kappa)
    d_dist_ds = -_dot(n, u) + (_dot(u, u) - _dot(r, a)) / c
    explicit = (n - u / c) + d_dist_ds * grad_s
    e = explicit / dist**2 - (a / dist - u * d_dist_ds / dist**2) / (c**2 * kappa)
    b = (-np.cross(explicit, u) / dist**2 + np.cross(grad_s, a) / dist) / c
    return e, b


class TaylorPrehistory:
    """Cubic extrapolation of marker paths to negative times, encoding the matched initial data."""

    def __init__(self, x0, u0, a0, j0):
        self.x0, self.u0, self.a0, self.j0 = x0, u0, a0, j0
        self._coef = np.stack([x0, u0, 0.5 * a0, j0 / 6.0], axis=1)

    def __call__(self, s, j):
        c = self._coef[j]
        s = s[..., None]
        c0, c1, c2, c3 = c[..., 0, :], c[..., 1, :], c[..., 2, :], c[..., 3, :]
        x = ((c3 * s + c2) * s + c1) * s + c0
        u = (3.0 * c3 * s + 2.0 * c2) * s + c1
        a = 6.0 * c3 * s + 2.0 * c2
        return x, u, a


def matched_marker_data(e: Ensemble, c):
    """Initial marker velocity, acceleration and jerk implied by the matched fields.

    Fields at each marker exclude the marker itself, as in the dynamics.
    """
    d = e.softening.delta
    e0 = coulomb_field(e.x, e.x, e.w, d)
    e2 = e2_from_sources(e.x, e.x, e.v, e0, e.w, d, exclude_self=True)
    b1 = b1_from_sources(e.x, e.x, e.v, e.w, d)
    u0 = relativistic_velocity(e.v, c)
    force = e0 + e2 / c**2 + np.cross(u0, b1) / c**2
    a0 = np.einsum("nij,nj->ni", relativistic_velocity_jacobian(e.v, c), force)
    r = e.x[:, None, :] - e.x[None, :, :]
    g = plummer_field_gradient(r, d) * e.w[None, :, None, None]
    idx = np.arange(len(e))
    g[idx, idx] = 0.0
    du = u0[:, None, :] - u0[None, :, :]
    j0 = chunked_sum(np.moveaxis(np.einsum("mjik,mjk->mji", g, du), 1, 0))
    return u0, a0, j0


@dataclass
class RVMState:
    ensemble: Ensemble
    history: History
    force: np.ndarray
    initial: LVPState
    _sphere: dict = None

    @property
    def t(self):
        return self.ensemble.t

    @property
    def c(self):
        return self.ensemble.c


def _path(hist: History, tail=None):
    return lambda s, j: hist.evaluate(s, j, tail=tail)


def retarded_fields(hist: History, points, t, c, delta, w, tail=None, exclude_self=False, mask=None):
    """Sum of retarded (E, B) over all marker paths, plus the emission times.

    ``mask`` (points x markers, boolean) restricts the sum.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    s, X, U, A = retarded_times(points, t, c, delta, _path(hist, tail), hist.n)
    e, b = lienard_wiechert(points[:, None, :] - X, U, A, delta, c)
    keep = np.ones(s.shape, dtype=bool) if mask is None else mask.copy()
    if exclude_self:
        idx = np.arange(len(points))
        keep[idx, idx] = False
    wk = (w[None, :] * keep)[..., None]
    return chunked_sum(np.moveaxis(e * wk, 1, 0)), chunked_sum(np.moveaxis(b * wk, 1, 0)), s


def start_rvm(initial: LVPState, c) -> RVMState:
    """Relativistic markers at t = 0 sharing positions, momenta and weights with the VP markers."""
    if c < 4:
        raise ValueError("c must be at least 4")
    e0 = initial.ensemble
    e = e0.copy(kind="RVM", c=float(c))
    e.t = 0.0
    u0, a0, j0 = matched_marker_data(e, c)
    hist = History(len(e), before=TaylorPrehistory(e.x.copy(), u0, a0, j0))
    hist.append(0.0, e.x, u0, a0)
    ef, bf, _ = retarded_fields(hist, e.x, 0.0, c, e.softening.delta, e.w, exclude_self=True)
    force = ef + np.cross(u0, bf) / c
    state = RVMState(e, hist, force, initial)
    # Replace the knot acceleration by the one the retarded fields actually produce.
    hist._a[0] = np.einsum("nij,nj->ni", relativistic_velocity_jacobian(e.v, c), force)
    return state


def _marker_force(hist, x, v, t, c, e: Ensemble, tail_a):
    """Force on markers at a provisional state (x, v) at time t beyond the last knot.

    Two passes: the provisional path segment first uses ``tail_a`` as its end
    acceleration, then the acceleration the first pass produced.
    """
    u = relativistic_velocity(v, c)
    jac = relativistic_velocity_jacobian(v, c)
    d = e.softening.delta
    last = hist.times[-1]
    force = None
    for _ in range(2):
        tail = None if t <= last else (t, x, u, tail_a)
        ef, bf, s = retarded_fields(hist, x, t, c, d, e.w, tail=tail, exclude_self=True)
        force = ef + np.cross(u, bf) / c
        tail_a = np.einsum("nij,nj->ni", jac, force)
        idx = np.arange(len(x))
        s_off = s.copy()
        s_off[idx, idx] = -np.inf
        if tail is None or np.max(s_off) <= last:
            break
    return force, tail_a


def step_rvm(s: RVMState, dt: float) -> RVMState:
    """Classical RK4 in (x, v) with retarded fields re-evaluated at every stage."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    e, hist, c = s.ensemble, s.history, s.c
    t = e.t
    x, v = e.x, e.v
    a_now = hist.knot(hist.size - 1)[2]

    k1 = (relativistic_velocity(v, c), s.force)
    x2, v2 = x + 0.5 * dt * k1[0], v + 0.5 * dt * k1[1]
    f2, a2 = _marker_force(hist, x2, v2, t + 0.5 * dt, c, e, a_now)
    k2 = (relativistic_velocity(v2, c), f2)
    x3, v3 = x + 0.5 * dt * k2[0], v + 0.5 * dt * k2[1]
    f3, a3 = _marker_force(hist, x3, v3, t + 0.5 * dt, c, e, a2)
    k3 = (relativistic_velocity(v3, c), f3)
    x4, v4 = x + dt * k3[0], v + dt * k3[1]
    f4, a4 = _marker_force(hist, x4, v4, t + dt, c, e, a3)
    k4 = (relativistic_velocity(v4, c), f4)
    xn = x + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    vn = v + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    un = relativistic_velocity(vn, c)
    if np.any(np.linalg.norm(un, axis=1) >= SPEED_CAP * c):
        raise FloatingPointError("marker speed reached the causal cap")
    fn, an = _marker_force(hist, xn, vn, t + dt, c, e, a4)
    hist.append(t + dt, xn, un, an)
    new = e.copy(x=xn, v=vn)
    new.t = t + dt
    return RVMState(new, hist, fn, s.initial, s._sphere)


def field_rvm(s: RVMState, x, t=None):
    """Retarded (E, B) of all markers, pre-history included, at points x and a committed time t."""
    t = s.t if t is None else t
    e = s.ensemble
    ef, bf, _ = retarded_fields(s.history, x, t, s.c, e.softening.delta, e.w)
    return ef, bf


def run_rvm(s: RVMState, t_end, dt, callback=None):
    steps = int(round((t_end - s.t) / dt))
    for _ in range(steps):
        s = step_rvm(s, dt)
        if callback is not None:
            callback(s)
    return s


# ---- split representation: data terms, sphere terms, in-cone marker sums ----

def velocity_rule(profile: InitialProfile, n_radial=16, n_theta=8, n_phi=16):
    """Nodes and weights for int g(v) b(|v - center_v| / radius_v) dv (the velocity factor of f°)."""
    r, wr = leggauss(n_radial)
    rv = profile.radius_v
    r, wr = 0.5 * rv * (r + 1.0), 0.5 * rv * wr
    dirs, wd = sphere_quadrature(n_theta, n_phi)
    v = np.asarray(profile.center_v, dtype=float) + r[:, None, None] * dirs[None]
    w = (wr * r**2 * bump(r / rv))[:, None] * wd[None]
    return v.reshape(-1, 3), w.reshape(-1)


def _spatial_factor(profile: InitialProfile, y):
    return profile.amplitude * bump(np.linalg.norm(y - np.asarray(profile.center_x), axis=-1) / profile.radius_x)


def _sphere_data(s: RVMState):
    """Direction integrals int K_DT(zbar, vhat) b_v dv and int L_DT b_v dv on the sphere nodes, cached."""
    if s._sphere is None:
        dirs, wq = sphere_quadrature()
        v, wv = velocity_rule(s.initial.profile)
        vhat = relativistic_velocity(v, s.c)
        k_dt, l_dt = np.zeros_like(dirs), np.zeros_like(dirs)
        for start in range(0, len(dirs), 128):
            z = np.broadcast_to(dirs[start:start + 128, None, :], (min(128, len(dirs) - start), len(v), 3))
            inp = GSKernelInputs(z, np.broadcast_to(vhat[None], z.shape), s.c)
            k_dt[start:start + 128] = np.einsum("qkd,k->qd", gs_kernel_e(inp, "DT"), wv)
            l_dt[start:start + 128] = np.einsum("qkd,k->qd", gs_kernel_b(inp, "DT"), wv)
        s._sphere = dict(dirs=dirs, wq=wq, k_dt=k_dt, l_dt=l_dt)
    return s._sphere


def _initial_markers(s: RVMState):
    """Positions, VP velocities and accelerations of the markers at t = 0."""
    return s.initial.base.history.knot(0)


def _directional(r, q, delta):
    """(q . grad) K and (q . grad)^2 K for the Plummer field K(r) = r / R_delta^3."""
    rd = softened_distance(r, delta)[..., None]
    rq, qq = _dot(r, q), _dot(q, q)
    first = q / rd**3 - 3.0 * r * rq / rd**5
    second = -6.0 * q * rq / rd**5 - 3.0 * r * qq / rd**5 + 15.0 * r * rq**2 / rd**7
    return first, second


def _exterior(s: RVMState, x, t):
    """Order-resolved fields of markers still outside the cone, Taylor-evolved from t = 0."""
    x0, u, a = _initial_markers(s)
    e = s.ensemble
    d, w, c = e.softening.delta, e.w, s.c
    r = x[:, None, :] - x0[None]
    outside = softened_distance(r, d) > c * t
    k = plummer_field(r, d)
    du, duu = _directional(r, np.broadcast_to(u[None], r.shape), d)
    da, _ = _directional(r, np.broadcast_to(a[None], r.shape), d)
    ub = np.broadcast_to(u[None], r.shape)
    ab = np.broadcast_to(a[None], r.shape)
    wm = (w[None, :] * outside)[..., None]
    pe = k - t * du + 0.5 * t**2 * (duu - da)
    pb = np.cross(ub, k) + t * (np.cross(ab, k) - np.cross(ub, du))
    ef = chunked_sum(np.moveaxis(pe * wm, 1, 0))
    bf = chunked_sum(np.moveaxis(pb * wm, 1, 0)) / c
    ef = ef + _masked_alt_sum(x, x0, u, a, w, d, outside) / c**2
    return ef, bf, ~outside


def _masked_alt_sum(points, X, U, A, w, delta, mask):
    out = np.zeros((len(points), 3))
    for i, p in enumerate(points):
        if np.any(mask[i]):
            out[i] = e2_alt_from_sources(p[None], X[mask[i]], U[mask[i]], A[mask[i]], w[mask[i]], delta)[0]
    return out


def _sphere_terms(s: RVMState, x, t):
    """(III sphere term + E_DT, B_D sphere term + B_DT) from f° on |z| = ct."""
    if t <= 0:
        return np.zeros_like(x), np.zeros_like(x)
    sd = _sphere_data(s)
    dirs, wq = sd["dirs"], sd["wq"]
    prof = s.initial.profile
    radius = s.c * t
    ee, bb = np.zeros_like(x), np.zeros_like(x)
    for i, xi in enumerate(x):
        y = xi[None, :] + radius * dirs
        sp = _spatial_factor(prof, y)
        if not np.any(sp):
            continue
        m0, m1, _ = velocity_moments(prof, y)
        ee[i] = radius * np.sum(wq[:, None] * (m0[:, None] * dirs - sp[:, None] * sd["k_dt"]), axis=0)
        bb[i] = np.sum(wq[:, None] * (radius * sp[:, None] * sd["l_dt"] - t * np.cross(dirs, m1)), axis=0)
    return ee, bb


def data_term_e(s: RVMState, x, t=None):
    """Field carried by the initial data: exterior markers plus the sphere density term."""
    t = s.t if t is None else t
    x = np.atleast_2d(np.asarray(x, dtype=float))
    ef, _, _ = _exterior(s, x, t)
    if t > 0:
        sd = _sphere_data(s)
        for i, xi in enumerate(x):
            m0, _, _ = velocity_moments(s.initial.profile, xi[None, :] + s.c * t * sd["dirs"])
            ef[i] += s.c * t * np.sum(sd["wq"][:, None] * m0[:, None] * sd["dirs"], axis=0)
    return ef


def data_term_b(s: RVMState, x, t=None):
    t = s.t if t is None else t
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _, bf, _ = _exterior(s, x, t)
    if t > 0:
        sd = _sphere_data(s)
        for i, xi in enumerate(x):
            _, m1, _ = velocity_moments(s.initial.profile, xi[None, :] + s.c * t * sd["dirs"])
            bf[i] -= t * np.sum(sd["wq"][:, None] * np.cross(sd["dirs"], m1), axis=0)
    return bf


def _check_time(s: RVMState, t):
    t = s.t if t is None else float(t)
    if t > s.t + 1e-12 or t < 0:
        raise ValueError("field time must lie in [0, current time]")
    return t


def _fields_gs(s: RVMState, x, t):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    e = s.ensemble
    ext_e, ext_b, inside = _exterior(s, x, t)
    sph_e, sph_b = _sphere_terms(s, x, t)
    ie, ib = np.zeros_like(x), np.zeros_like(x)
    if t > 0 and np.any(inside):
        ie, ib, _ = retarded_fields(s.history, x, t, s.c, e.softening.delta, e.w, mask=inside)
    return ext_e + sph_e + ie, ext_b + sph_b + ib


def field_e_gs(s: RVMState, x, t=None):
    """E = data term + sphere term + in-cone marker sum at (x, t)."""
    t = _check_time(s, t)
    out = _fields_gs(s, x, t)[0]
    return out[0] if np.ndim(x) == 1 else out


def field_b_gs(s: RVMState, x, t=None):
    t = _check_time(s, t)
    out = _fields_gs(s, x, t)[1]
    return out[0] if np.ndim(x) == 1 else out


def expanded_field_e(s: RVMState, x, t=None):
    """Exterior Taylor sums, in-cone kernels truncated at c^-2, and the boundary sphere term."""
    t = _check_time(s, t)
    single = np.ndim(x) == 1
    x = np.atleast_2d(np.asarray(x, dtype=float))
    e = s.ensemble
    d, c = e.softening.delta, s.c
    ext, _, inside = _exterior(s, x, t)
    out = ext + boundary_term(s.initial.profile, x, t, c)
    if t > 0 and np.any(inside):
        _, X, U, A = retarded_times(x, t, c, d, _path(s.history), s.history.n)
        r = x[:, None, :] - X
        k0, k1, k2 = retarded_kernel_terms(r, U, A, d, c)
        kappa = 1.0 - _dot(r / softened_distance(r, d)[..., None], U) / c
        pair = (k0 + k1 / c + k2 / c**2) / kappa * (e.w[None, :] * inside)[..., None]
        out = out + chunked_sum(np.moveaxis(pair, 1, 0))
    return out[0] if single else out


def eval_f_rvm(s: RVMState, x, v):
    """f(x, v, t) = f°(X(0), V(0)) along backward characteristics in the retarded fields."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    c = s.c
    times = s.history.times
    X, V = x.copy(), v.copy()

    def rhs(tau, X, V):
        ef, bf = field_rvm(s, X, tau)
        u = relativistic_velocity(V, c)
        return u, ef + np.cross(u, bf) / c

    for k in range(len(times) - 1, 0, -1):
        t1, t0 = times[k], times[k - 1]
        h = t0 - t1
        k1 = rhs(t1, X, V)
        k2 = rhs(t1 + 0.5 * h, X + 0.5 * h * k1[0], V + 0.5 * h * k1[1])
        k3 = rhs(t1 + 0.5 * h, X + 0.5 * h * k2[0], V + 0.5 * h * k2[1])
        k4 = rhs(t0, X + h * k3[0], V + h * k3[1])
        X = X + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        V = V + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return s.initial.profile(X, V)
