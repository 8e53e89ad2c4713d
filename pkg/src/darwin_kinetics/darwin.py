"""Order c^-1 and c^-2 corrections: B1, the delta-f system for f2, E2 in two forms, and the Darwin triple."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensemble import InitialProfile, chunked_sum, velocity_moments
from .history import History, retarded_times
from .kernels import (
    distance_derivatives,
    plummer_field,
    plummer_field_gradient,
    softened_distance,
    sphere_quadrature,
)
from .vp import (
    VPState,
    backward_characteristics,
    coulomb_field,
    coulomb_field_gradient,
    eval_f0,
    grad_field_e0_at,
    pair_sum,
)

# f1, E1 and B2 vanish identically for this expansion and are never computed.
F1 = E1 = B2 = 0.0


def _separations(points, src_x):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return points[:, None, :] - src_x[None, :, :]


def _reduce(per_pair, w, exclude_self):
    """Weighted fixed-order sum over the source axis (axis 1)."""
    per_pair = per_pair * w.reshape((1, -1) + (1,) * (per_pair.ndim - 2))
    if exclude_self:
        idx = np.arange(per_pair.shape[0])
        per_pair[idx, idx] = 0.0
    return chunked_sum(np.moveaxis(per_pair, 1, 0))


def b1_from_sources(points, src_x, src_u, w, delta, exclude_self=False):
    """sum_j w_j u_j x (x - X_j) / R_delta^3."""
    r = _separations(points, src_x)
    k = plummer_field(r, delta)
    return _reduce(np.cross(src_u[None, :, :], k), w, exclude_self)


def e2_from_sources(points, src_x, src_u, src_a, w, delta, exclude_self=False):
    """Velocity and acceleration terms of E2 in the form without time derivatives.

    Per source: n (u^2 - 3 (n.u)^2) / (2 R^2) - (a + (n.a) n) / (2 R) with
    R the softened distance and n = (x - X)/R.
    """
    r = _separations(points, src_x)
    rd = softened_distance(r, delta)[..., None]
    n = r / rd
    u = np.broadcast_to(src_u[None], r.shape)
    a = np.broadcast_to(src_a[None], r.shape)
    nu = np.sum(n * u, axis=-1, keepdims=True)
    na = np.sum(n * a, axis=-1, keepdims=True)
    uu = np.sum(u * u, axis=-1, keepdims=True)
    term = n * (uu - 3.0 * nu**2) / (2.0 * rd**2) - (a + na * n) / (2.0 * rd)
    return _reduce(term, w, exclude_self)


def e2_alt_from_sources(points, src_x, src_u, src_a, w, delta, exclude_self=False):
    """Same quantity from time derivatives of the moving-source moments.

    Uses 1/2 d^2/dt^2 of the displacement direction and -d/dt (u / R) per source.
    """
    r = _separations(points, src_x)
    rd, n, d2, d3 = distance_derivatives(r, delta)
    u = np.broadcast_to(src_u[None], r.shape)
    a = np.broadcast_to(src_a[None], r.shape)
    # d/dt r = -u, so d^2/dt^2 n = d3[u, u] - d2 a.
    second = 0.5 * (-np.einsum("...ijk,...j,...k->...i", d3, u, u) + np.einsum("...ij,...j->...i", d2, a))
    nu = np.sum(n * u, axis=-1, keepdims=True)
    rd = rd[..., None]
    current = -(a / rd + u * nu / rd**2)
    return _reduce(second + current, w, exclude_self)


def rho2_field_lagrangian(points, src_x, xi, w, delta, exclude_self=False):
    """Field of rho2 = -div(xi rho0): -sum_j w_j grad K(x - X_j) xi_j."""
    r = _separations(points, src_x)
    g = plummer_field_gradient(r, delta)
    return -_reduce(np.einsum("...ij,...j->...i", g, np.broadcast_to(xi[None], r.shape)), w, exclude_self)


def rho2_field_weights(points, src_x, w2, delta):
    """Field of the signed w2 charges."""
    return pair_sum(points, src_x, w2, plummer_field, delta)


def darwin_vector_potential(points, src_x, src_u, w, delta):
    """Instantaneous vector potential sum_j w_j (I + n n) u_j / (2 R)."""
    r = _separations(points, src_x)
    rd = softened_distance(r, delta)[..., None]
    n = r / rd
    u = np.broadcast_to(src_u[None], r.shape)
    term = 0.5 * (u + n * np.sum(n * u, axis=-1, keepdims=True)) / rd
    return _reduce(term, w, False)


def field_b1(state, x):
    """Softened Biot-Savart field of the VP currents."""
    e = state.ensemble if hasattr(state, "ensemble") else state
    out = b1_from_sources(x, e.x, e.v, e.w, e.softening.delta)
    return out[0] if np.ndim(x) == 1 else out


@dataclass
class LVPState:
    """VP markers plus the order c^-2 displacement (xi, eta) and delta-f weights w2.

    ``tangent`` is the forward Jacobian d(X, V)(t)/d(X, V)(0); ``cell`` the
    phase-space volume each marker represents. ``xi_history`` stores xi with
    its first two time derivatives at every knot.
    """

    base: VPState
    xi: np.ndarray
    eta: np.ndarray
    tangent: np.ndarray
    x0: np.ndarray
    v0: np.ndarray
    cell: float
    profile: InitialProfile
    xi_history: History
    rho2_source: str = "lagrangian"
    _rates: tuple = field(default=None, repr=False)

    @property
    def ensemble(self):
        return self.base.ensemble

    @property
    def t(self):
        return self.base.ensemble.t

    @property
    def w2(self):
        return self.base.ensemble.w2

    def _record_rates(self):
        self._rates = _current_rates(self)

    def _record_xi(self):
        self._record_rates()
        rates = self._rates
        V, A = self.ensemble.v, rates["e0"]
        vv = np.sum(V * V, axis=1, keepdims=True)
        xi_dd = rates["deta"] - (0.5 * vv * A + np.sum(V * A, axis=1, keepdims=True) * V)
        self.xi_history.append(self.t, self.xi, rates["dxi"], xi_dd)


def _cell_volume(profile: InitialProfile, n_per_axis):
    return (2.0 * profile.radius_x / n_per_axis) ** 3 * (2.0 * profile.radius_v / n_per_axis) ** 3


def _lvp_rates(X, V, xi, eta, M, x0, v0, w, w2, delta, cell, profile, mode):
    """Time derivatives of every LVP component, plus E0 at the markers.

    All marker-marker kernels share one pass over the pair separations.
    """
    n_mark = len(w)
    r = X[:, None, :] - X[None, :, :]
    rd = softened_distance(r, delta)[..., None]
    inv3 = w[None, :, None] / rd**3
    k = r * inv3
    e0 = chunked_sum(np.moveaxis(k, 1, 0))
    nvec = r / rd
    u = np.broadcast_to(V[None], r.shape)
    a = np.broadcast_to(e0[None], r.shape)
    nu = np.sum(nvec * u, axis=-1, keepdims=True)
    na = np.sum(nvec * a, axis=-1, keepdims=True)
    vv = np.sum(V * V, axis=1, keepdims=True)
    e2_pair = w[None, :, None] * (nvec * (vv[None] - 3.0 * nu**2) / (2.0 * rd**2) - (a + na * nvec) / (2.0 * rd))
    idx = np.arange(n_mark)
    e2_pair[idx, idx] = 0.0
    e2_moments = chunked_sum(np.moveaxis(e2_pair, 1, 0))
    b1 = chunked_sum(np.moveaxis(np.cross(u, k), 1, 0))
    lorentz = np.cross(V, b1)
    # grad K(r) y = y / R^3 - 3 r (r.y) / R^5, applied without forming the 3x3 blocks.
    inv5 = inv3 / rd**2

    def grad_apply(y_pair):
        return y_pair * inv3 - 3.0 * r * np.sum(r * y_pair, axis=-1, keepdims=True) * inv5

    coupling_pair = grad_apply(xi[:, None, :] - xi[None, :, :])
    coupling_pair[idx, idx] = 0.0
    deta = chunked_sum(np.moveaxis(coupling_pair, 1, 0)) + e2_moments + lorentz
    dxi = eta - 0.5 * vv * V
    grad = (chunked_sum(inv3[..., 0].T)[:, None, None] * np.eye(3)
            - 3.0 * chunked_sum(np.moveaxis(np.einsum("mji,mjk->mjik", r, r) * inv5[..., None], 1, 0)))
    dM = np.empty_like(M)
    dM[:, :3] = M[:, 3:]
    dM[:, 3:] = np.einsum("mij,mjk->mik", grad, M[:, :3])
    gx, gv = profile.gradient(x0, v0)
    g0 = np.concatenate([gx, gv], axis=1)
    g_now = np.linalg.solve(np.transpose(M, (0, 2, 1)), g0[..., None])[..., 0]
    if mode == "weights":
        rho2 = rho2_field_weights(X, X, w2, delta)
    else:
        rho2 = -chunked_sum(np.moveaxis(grad_apply(np.broadcast_to(xi[None], r.shape)), 1, 0))
    push = np.concatenate([0.5 * vv * V, -(e2_moments + rho2 + lorentz)], axis=1)
    dw2 = cell * np.sum(g_now * push, axis=1)
    return dict(dX=V, dV=e0, dxi=dxi, deta=deta, dM=dM, dw2=dw2, e0=e0)


def start_lvp(base: VPState, profile: InitialProfile, n_per_axis: int, rho2_source="lagrangian") -> LVPState:
    """LVP state at t = 0 with xi = eta = 0 and w2 = 0."""
    if base.history.size != 1 or base.t != 0.0:
        raise ValueError("LVP must start from a fresh VP state at t = 0")
    if rho2_source not in ("lagrangian", "weights"):
        raise ValueError("rho2_source must be 'lagrangian' or 'weights'")
    e = base.ensemble
    n = len(e)
    e.w2 = np.zeros(n)
    st = LVPState(base, np.zeros((n, 3)), np.zeros((n, 3)), np.broadcast_to(np.eye(6), (n, 6, 6)).copy(),
                  e.x.copy(), e.v.copy(), _cell_volume(profile, n_per_axis), profile,
                  History(n), rho2_source)
    st._record_xi()
    return st


def _current_rates(st: LVPState):
    e = st.ensemble
    return _lvp_rates(e.x, e.v, st.xi, st.eta, st.tangent, st.x0, st.v0, e.w, e.w2,
                      e.softening.delta, st.cell, st.profile, st.rho2_source)


def step_lvp(st: LVPState, dt: float) -> LVPState:
    """RK4 step of the VP markers together with (xi, eta), the tangent map and w2."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    e = st.ensemble
    d, w = e.softening.delta, e.w
    y0 = dict(X=e.x, V=e.v, xi=st.xi, eta=st.eta, M=st.tangent, w2=e.w2)

    def rates(y):
        return _lvp_rates(y["X"], y["V"], y["xi"], y["eta"], y["M"], st.x0, st.v0, w, y["w2"],
                          d, st.cell, st.profile, st.rho2_source)

    def shift(h, k):
        return {key: y0[key] + h * k["d" + key] for key in y0}

    k1 = st._rates if st._rates is not None else rates(y0)
    k2 = rates(shift(0.5 * dt, k1))
    k3 = rates(shift(0.5 * dt, k2))
    k4 = rates(shift(dt, k3))
    y1 = {key: y0[key] + dt / 6.0 * (k1["d" + key] + 2 * k2["d" + key] + 2 * k3["d" + key] + k4["d" + key])
          for key in y0}
    new_e = e.copy(x=y1["X"], v=y1["V"], w2=y1["w2"])
    new_e.t = e.t + dt
    new = LVPState(VPState(new_e, st.base.history), y1["xi"], y1["eta"], y1["M"], st.x0, st.v0,
                   st.cell, st.profile, st.xi_history, st.rho2_source)
    new._record_xi()
    st.base.history.append(new_e.t, new_e.x, new_e.v, new._rates["e0"])
    return new


def _sources(st: LVPState, s=None):
    """Marker (X, V, A, xi) at the current time or interpolated at a past time s."""
    if s is None or s == st.t:
        if st._rates is None:
            st._record_rates()
        return st.ensemble.x, st.ensemble.v, st._rates["e0"], st.xi
    idx = np.arange(len(st.ensemble))
    sv = np.full(len(idx), float(s))
    X, V, A = st.base.history.evaluate(sv, idx)
    xi = st.xi_history.evaluate(sv, idx)[0]
    return X, V, A, xi


def _rho2_term(st: LVPState, x, X, xi, s=None):
    e = st.ensemble
    if st.rho2_source == "weights":
        if s is not None and s != st.t:
            raise ValueError("w2 charges are only available at the current time")
        return rho2_field_weights(x, X, e.w2, e.softening.delta)
    return rho2_field_lagrangian(x, X, xi, e.w, e.softening.delta)


def _single(x, out):
    return out[0] if np.ndim(x) == 1 else out


def field_e2(st: LVPState, x, s=None):
    """E2 from velocity moments, the E0 rho0 product and rho2."""
    X, V, A, xi = _sources(st, s)
    d = st.ensemble.softening.delta
    out = e2_from_sources(x, X, V, A, st.ensemble.w, d) + _rho2_term(st, x, X, xi, s)
    return _single(x, out)


def field_e2_alt(st: LVPState, x, s=None):
    """E2 from second time derivative of rho0, first of j0, and rho2."""
    X, V, A, xi = _sources(st, s)
    d = st.ensemble.softening.delta
    out = e2_alt_from_sources(x, X, V, A, st.ensemble.w, d) + _rho2_term(st, x, X, xi, s)
    return _single(x, out)


def darwin_fields(st: LVPState, x, s=None):
    """c-independent (E0, E2, B1) at points x and time s."""
    X, V, A, xi = _sources(st, s)
    e = st.ensemble
    d = e.softening.delta
    x = np.atleast_2d(np.asarray(x, dtype=float))
    e0 = coulomb_field(x, X, e.w, d)
    e2 = e2_from_sources(x, X, V, A, e.w, d) + _rho2_term(st, x, X, xi, s)
    b1 = b1_from_sources(x, X, V, e.w, d)
    return e0, e2, b1


def eval_f2(st: LVPState, x, v):
    """f2 at (x, v, t) by Duhamel integration along the backward VP characteristic.

    Carries zeta with dzeta/ds = A zeta + P, zeta(t) = 0, where A is the
    linearised VP flow and P = (-v^2 v / 2, E2 + v x B1); then
    f2 = grad f°(Z(0)) . zeta(0).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))

    def rhs(s, X, V, Y):
        _, e2, b1 = darwin_fields(st, X, s)
        grad = grad_field_e0_at(st.base, X, s)
        dY = np.empty_like(Y)
        dY[:, :3] = Y[:, 3:] - 0.5 * np.sum(V * V, axis=1, keepdims=True) * V
        dY[:, 3:] = np.einsum("mij,mj->mi", grad, Y[:, :3]) + e2 + np.cross(V, b1)
        return dY

    x0, v0, zeta = backward_characteristics(st.base, x, v, rhs, np.zeros((len(x), 6)))
    gx, gv = st.profile.gradient(x0, v0)
    return np.sum(gx * zeta[:, :3], axis=1) + np.sum(gv * zeta[:, 3:], axis=1)


@dataclass(frozen=True)
class DarwinParts:
    """c-independent pieces; the triple for any c is formed by scaling them."""

    f0: np.ndarray
    f2: np.ndarray
    e0: np.ndarray
    e2: np.ndarray
    b1: np.ndarray

    def at(self, c):
        return self.f0 + self.f2 / c**2, self.e0 + self.e2 / c**2, self.b1 / c


def darwin_parts(st: LVPState, x, v):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    f0 = np.atleast_1d(eval_f0(st.base, x, v, st.profile))
    f2 = eval_f2(st, x, v)
    e0, e2, b1 = darwin_fields(st, x)
    return DarwinParts(f0, f2, e0, e2, b1)


def darwin_triple(st: LVPState, x, v, c):
    """(f0 + f2/c^2, E0 + E2/c^2, B1/c) at matching rows of x and v."""
    if c < 1:
        raise ValueError("c must be at least 1")
    return darwin_parts(st, x, v).at(c)


def matched_initial_fields(st0: LVPState, c):
    """Closures for E° = E0 + E2/c^2 and B° = B1/c at t = 0."""
    if st0.t != 0.0:
        raise ValueError("matched data are defined at t = 0")

    def e_init(x):
        e0, e2, _ = darwin_fields(st0, x)
        return _single(x, e0 + e2 / c**2)

    def b_init(x):
        _, _, b1 = darwin_fields(st0, x)
        return _single(x, b1 / c)

    return e_init, b_init


def retarded_kernel_terms(r, u, a, delta, c):
    """Per-pair field kernels at the emission point, by powers of 1/c.

    Returns (k0, k1, k2) such that the retarded field of a moving softened
    charge is (k0 + k1/c + k2/c^2 + O(c^-3)) / kappa with kappa = 1 - n.u/c.
    """
    rd = softened_distance(r, delta)[..., None]
    n = r / rd
    p = np.sum(n * u, axis=-1, keepdims=True)
    uu = np.sum(u * u, axis=-1, keepdims=True)
    na = np.sum(n * a, axis=-1, keepdims=True)
    k0 = n / rd**2
    k1 = (2.0 * p * n - u) / rd**2
    k2 = (3.0 * p**2 * n - uu * n - 2.0 * p * u) / rd**2 + (na * n - a) / rd
    return k0, k1, k2


class _ShiftedPath:
    """Marker paths X + xi/c^2 built from the VP and displacement histories."""

    def __init__(self, st: LVPState, c):
        self.st, self.c = st, c

    def __call__(self, s, j):
        X, V, A = self.st.base.history.evaluate(s, j)
        xi, dxi, ddxi = self.st.xi_history.evaluate(s, j)
        c2 = self.c**2
        return X + xi / c2, V + dxi / c2, A + ddxi / c2


def _base_path(st: LVPState):
    return lambda s, j: st.base.history.evaluate(s, j)


def boundary_term(profile: InitialProfile, x, t, c, n_theta=32, n_phi=64):
    """Sphere |z| = ct integrals of the initial velocity moments."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    if t <= 0:
        return out
    dirs, wq = sphere_quadrature(n_theta, n_phi)
    radius = c * t
    for i, xi in enumerate(x):
        _, m1, m2 = velocity_moments(profile, xi[None, :] + radius * dirs)
        zm1 = np.sum(dirs * m1, axis=1, keepdims=True)
        m2z = np.einsum("qij,qj->qi", m2, dirs)
        zm2z = np.sum(dirs * m2z, axis=1, keepdims=True)
        integrand = zm1 * dirs / c + (m2z - zm2z * dirs) / c**2
        out[i] = radius * np.sum(wq[:, None] * integrand, axis=0)
    return out


def ed_decomposition(st: LVPState, x, c):
    """Exterior, interior and boundary parts of E^D at the current time.

    Returns (ext, int, bd, full), each of shape (M, 3).
    """
    e = st.ensemble
    t, d, w = st.t, e.softening.delta, e.w
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = len(e)
    shifted = _ShiftedPath(st, c)
    idx = np.arange(n)
    Y, _, _ = shifted(np.full(n, t), idx)
    X, V, A, _ = _sources(st)

    ext_y, ext_x = outside_at(x, Y, d, c * t), outside_at(x, X, d, c * t)
    ry = x[:, None, :] - Y[None]
    ext = chunked_sum(np.moveaxis(np.where(ext_y[..., None], w[None, :, None] * plummer_field(ry, d), 0.0), 1, 0))
    ext += _masked_alt(x, X, V, A, w, d, ext_x) / c**2

    interior = np.zeros_like(x)
    if t > 0:
        x0y, _, _ = shifted(np.zeros(n), idx)
        x0x = st.base.history.knot(0)[0]
        in_y, in_x = ~outside_at(x, x0y, d, c * t), ~outside_at(x, x0x, d, c * t)
        _, Ys, Us, _ = retarded_times(x, t, c, d, shifted, n, lo=0.0)
        r = x[:, None, :] - Ys
        k0, _, _ = retarded_kernel_terms(r, Us, np.zeros_like(Us), d, c)
        kappa = 1.0 - np.sum(r / softened_distance(r, d)[..., None] * Us, axis=-1, keepdims=True) / c
        interior += chunked_sum(np.moveaxis(np.where(in_y[..., None], w[None, :, None] * k0 / kappa, 0.0), 1, 0))
        _, Xs, Vs, As = retarded_times(x, t, c, d, _base_path(st), n, lo=0.0)
        r = x[:, None, :] - Xs
        _, k1, k2 = retarded_kernel_terms(r, Vs, As, d, c)
        kappa = 1.0 - np.sum(r / softened_distance(r, d)[..., None] * Vs, axis=-1, keepdims=True) / c
        pair = (k1 / c + k2 / c**2) / kappa
        interior += chunked_sum(np.moveaxis(np.where(in_x[..., None], w[None, :, None] * pair, 0.0), 1, 0))
    bd = boundary_term(st.profile, x, t, c)
    e0, e2, _ = darwin_fields(st, x)
    return ext, interior, bd, e0 + e2 / c**2


def outside_at(x, pos, delta, radius):
    r = x[:, None, :] - pos[None, :, :]
    return softened_distance(r, delta) > radius


def _masked_alt(points, X, V, A, w, delta, mask):
    total = np.zeros((len(points), 3))
    for i, p in enumerate(points):
        sel = mask[i]
        if np.any(sel):
            total[i] = e2_alt_from_sources(p[None], X[sel], V[sel], A[sel], w[sel], delta)[0]
    return total
