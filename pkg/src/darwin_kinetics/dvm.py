"""Darwin-Vlasov-Maxwell markers: instantaneous fields by fixed-point iteration, RK4 motion, energy."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ensemble import Ensemble, chunked_sum
from .history import History
from .kernels import darwin_velocity, sphere_quadrature, darwin_velocity_jacobian, plummer_field, softened_distance

C_MIN = 4.0


class FixedPointError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


def _dot(a, b):
    return np.sum(a * b, axis=-1, keepdims=True)


def tensor_apply(r, q, delta):
    """G(r) q with G = (I + n n^T) / (2 R_delta)."""
    rd = softened_distance(r, delta)[..., None]
    n = r / rd
    return 0.5 * (q + n * _dot(n, q)) / rd


def tensor_transport(r, u, q, delta):
    """(u . grad_x) [G(x - X) q] for r = x - X."""
    rd = softened_distance(r, delta)[..., None]
    n = r / rd
    pu, pq = _dot(n, u), _dot(n, q)
    return 0.5 * (u * pq + n * _dot(u, q) - 3.0 * n * pu * pq - q * pu) / rd**2


def _pair_reduce(per_pair, w, exclude_self):
    per_pair = per_pair * w[None, :, None]
    if exclude_self:
        idx = np.arange(per_pair.shape[0])
        per_pair[idx, idx] = 0.0
    return chunked_sum(np.moveaxis(per_pair, 1, 0))


@dataclass
class DVMSources:
    """Everything the instantaneous fields depend on: marker data plus converged forces."""

    x: np.ndarray
    v: np.ndarray
    w: np.ndarray
    force: np.ndarray
    c: float
    delta: float
    include_c4: bool = True

    @property
    def transport(self):
        return darwin_velocity(self.v, self.c)

    @property
    def carried(self):
        """Velocity inside the vector potential: the Darwin velocity, or v without the c^-4 term."""
        return self.transport if self.include_c4 else self.v

    def carried_rate(self, force):
        if self.include_c4:
            return np.einsum("nij,nj->ni", darwin_velocity_jacobian(self.v, self.c), force)
        return force


class _PairGeometry:
    """Separations between evaluation points and sources, shared across fixed-point sweeps."""

    def __init__(self, points, src: DVMSources, exclude_self):
        self.src = src
        r = np.atleast_2d(points)[:, None, :] - src.x[None, :, :]
        rd = softened_distance(r, src.delta)
        self.n = r / rd[..., None]
        weight = src.w[None, :] / rd
        if exclude_self:
            idx = np.arange(len(r))
            weight[idx, idx] = 0.0
        self.half_w_over_r = 0.5 * weight
        u = np.broadcast_to(src.transport[None], r.shape)
        q = np.broadcast_to(src.carried[None], r.shape)
        coul = plummer_field(r, src.delta) * weight[..., None] * rd[..., None]
        transport = tensor_transport(r, u, q, src.delta) * weight[..., None] * rd[..., None]
        self.static_e = chunked_sum(np.moveaxis(coul + transport / src.c**2, 1, 0))
        self.b = chunked_sum(np.moveaxis(np.cross(u, coul), 1, 0)) / src.c

    def e(self, force):
        qdot = self.src.carried_rate(force)
        hw = self.half_w_over_r
        along = hw * np.sum(self.n * qdot[None, :, :], axis=-1)
        g = np.einsum("ij,jk->ik", hw, qdot) + np.einsum("ij,ijk->ik", along, self.n)
        return self.static_e - g / self.src.c**2


def _fields(points, src: DVMSources, force, exclude_self):
    geo = _PairGeometry(points, src, exclude_self)
    return geo.e(force), geo.b


def field_bstar(e: Ensemble, x):
    """c^-1 sum_j w_j vtilde_j x (x - X_j) / R_delta^3."""
    if e.c is None:
        raise ValueError("DVM fields need c on the ensemble")
    r = np.atleast_2d(x)[:, None, :] - e.x[None, :, :]
    u = np.broadcast_to(darwin_velocity(e.v, e.c)[None], r.shape)
    out = _pair_reduce(np.cross(u, plummer_field(r, e.softening.delta)), e.w, False) / e.c
    return out[0] if np.ndim(x) == 1 else out


@dataclass
class FixedPointStats:
    iterations: int
    residual: float
    ratios: tuple


def solve_fields_fixed_point(e: Ensemble, tol=1e-12, max_iter=64, include_c4=True, guess=None):
    """Iterate the marker forces F_i = E*(X_i) + v_i x B*(X_i) / c to a fixed point.

    Returns (E* closure, B* closure, stats, sources).
    """
    if e.c is None:
        raise ValueError("DVM fields need c on the ensemble")
    if e.c < C_MIN:
        raise ValueError(f"c must be at least {C_MIN}")
    d = e.softening.delta
    force = np.zeros_like(e.x) if guess is None else np.array(guess, dtype=float)
    src = DVMSources(e.x, e.v, e.w, force, e.c, d, include_c4)
    residuals = []
    geo = _PairGeometry(e.x, src, exclude_self=True)
    lorentz = np.cross(e.v, geo.b) / e.c
    for it in range(1, max_iter + 1):
        new = geo.e(force) + lorentz
        res = float(np.max(np.abs(new - force))) if len(force) else 0.0
        residuals.append(res)
        force = new
        if res <= tol * max(1.0, float(np.max(np.abs(force))) if len(force) else 1.0):
            break
    else:
        raise FixedPointError("fixed-point iteration did not converge", residuals[-1])
    src.force = force
    ratios = tuple(residuals[k + 1] / residuals[k] for k in range(len(residuals) - 1) if residuals[k] > 0)
    stats = FixedPointStats(it, residuals[-1], ratios)

    def e_star(x):
        out = _fields(x, src, force, exclude_self=False)[0]
        return out[0] if np.ndim(x) == 1 else out

    def b_star(x):
        out = _fields(x, src, force, exclude_self=False)[1]
        return out[0] if np.ndim(x) == 1 else out

    return e_star, b_star, stats, src


@dataclass
class DVMState:
    ensemble: Ensemble
    E_star: object
    B_star: object
    iteration_stats: FixedPointStats
    sources: DVMSources
    tol: float = 1e-12
    max_iter: int = 64

    @property
    def t(self):
        return self.ensemble.t


def start_dvm(e: Ensemble, c=None, tol=1e-12, max_iter=64, include_c4=True) -> DVMState:
    e = e.copy(kind="DVM", c=c if c is not None else e.c)
    es, bs, stats, src = solve_fields_fixed_point(e, tol, max_iter, include_c4)
    return DVMState(e, es, bs, stats, src, tol, max_iter)


def step_dvm(s: DVMState, dt: float) -> DVMState:
    """RK4 on x' = vtilde(v), v' = F with the fields re-solved at every stage."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    e = s.ensemble
    c4 = s.sources.include_c4

    def rates(x, v, guess):
        stage = e.copy(x=x, v=v)
        _, _, _, src = solve_fields_fixed_point(stage, s.tol, s.max_iter, c4, guess)
        return darwin_velocity(v, e.c), src.force

    x, v = e.x, e.v
    k1 = (darwin_velocity(v, e.c), s.sources.force)
    k2 = rates(x + 0.5 * dt * k1[0], v + 0.5 * dt * k1[1], k1[1])
    k3 = rates(x + 0.5 * dt * k2[0], v + 0.5 * dt * k2[1], k2[1])
    k4 = rates(x + dt * k3[0], v + dt * k3[1], k3[1])
    xn = x + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    vn = v + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    new = e.copy(x=xn, v=vn)
    new.t = e.t + dt
    es, bs, stats, src = solve_fields_fixed_point(new, s.tol, s.max_iter, c4, k4[1])
    return DVMState(new, es, bs, stats, src, s.tol, s.max_iter)


@dataclass(frozen=True)
class EnergyParts:
    kinetic: float
    electrostatic: float
    magnetic: float

    @property
    def total(self):
        return self.kinetic + self.electrostatic + self.magnetic


def energy(s: DVMState) -> EnergyParts:
    """Kinetic, pairwise electrostatic and pairwise magnetic (Darwin tensor) energy, self pairs excluded."""
    e = s.ensemble
    c, d, w = e.c, e.softening.delta, e.w
    vv = np.sum(e.v * e.v, axis=1)
    kin = chunked_sum(w * (0.5 * vv - 0.125 * vv**2 / c**2))
    if len(e) < 2:
        return EnergyParts(float(kin), 0.0, 0.0)
    r = e.x[:, None, :] - e.x[None, :, :]
    pot = 1.0 / softened_distance(r, d)
    np.fill_diagonal(pot, 0.0)
    es = 0.5 * chunked_sum(w * chunked_sum((pot * w[None, :]).T))
    q = s.sources.carried
    gq = tensor_apply(r, np.broadcast_to(q[None], r.shape), d) * w[None, :, None]
    idx = np.arange(len(e))
    gq[idx, idx] = 0.0
    a_at = chunked_sum(np.moveaxis(gq, 1, 0))
    mag = 0.5 * chunked_sum(w * np.sum(q * a_at, axis=1)) / c**2
    return EnergyParts(float(kin), float(es), float(mag))


def canonical_momentum(s: DVMState):
    """sum_i w_i (v_i + A(X_i) / c) with A the pairwise Darwin vector potential of the other markers."""
    e = s.ensemble
    r = e.x[:, None, :] - e.x[None, :, :]
    q = s.sources.carried
    gq = tensor_apply(r, np.broadcast_to(q[None], r.shape), e.softening.delta) * e.w[None, :, None]
    idx = np.arange(len(e))
    gq[idx, idx] = 0.0
    a_at = chunked_sum(np.moveaxis(gq, 1, 0))
    return chunked_sum(e.w[:, None] * (e.v + a_at / e.c**2))


def magnetic_energy_quadrature(s: DVMState, radius, n_radial=48, n_theta=24, n_phi=48, chunk=4096):
    """(1/8 pi) int |B*|^2 over all of space, centred on the weighted marker centroid.

    Gauss-Legendre in r on [0, radius], the tail through r = radius / u with u in (0, 1],
    and a product rule on the sphere. Returns (value, tail_fraction); a large tail
    fraction means ``radius`` does not enclose the current.
    """
    e = s.ensemble
    centre = (e.w @ e.x) / np.sum(e.w)
    g, gw = np.polynomial.legendre.leggauss(n_radial)
    r_in, w_in = 0.5 * radius * (g + 1.0), 0.5 * radius * gw * (0.5 * radius * (g + 1.0)) ** 2
    u = 0.5 * (g + 1.0)
    r_out, w_out = radius / u, 0.5 * gw * (radius / u) ** 2 * radius / u**2
    nodes, sw = sphere_quadrature(n_theta, n_phi)

    def shell_integral(radii, rw):
        pts = (centre + radii[:, None, None] * nodes[None]).reshape(-1, 3)
        b2 = np.concatenate([np.sum(s.B_star(pts[k:k + chunk]) ** 2, axis=1) for k in range(0, len(pts), chunk)])
        return chunked_sum(b2 * np.outer(rw, sw).ravel()) / (8.0 * np.pi)

    inner, outer = shell_integral(r_in, w_in), shell_integral(r_out, w_out)
    total = inner + outer
    return float(total), float(outer / total) if total > 0 else 0.0


def self_magnetic_energy(s: DVMState):
    """Field energy each softened marker carries alone: sum_i w_i^2 |q_i|^2 pi / (16 delta c^2)."""
    e = s.ensemble
    q = s.sources.transport
    return float(chunked_sum(e.w**2 * np.sum(q * q, axis=1)) * np.pi / (16.0 * e.softening.delta * e.c**2))


def write_energy_log(path, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["t", "H_total", "H_kin", "H_es", "H_mag", "residual", "iters"])
        for row in rows:
            out.writerow([f"{val:.17g}" if isinstance(val, float) else str(val) for val in row])


def momentum_from_darwin_velocity(u, c, tol=1e-15, max_iter=50):
    """Invert vtilde = v (1 - v^2 / (2 c^2)) by Newton's method (branch continuous at v = 0)."""
    v = np.array(u, dtype=float)
    for _ in range(max_iter):
        jac = darwin_velocity_jacobian(v, c)
        step = np.linalg.solve(jac, (darwin_velocity(v, c) - u)[..., None])[..., 0]
        v = v - step
        if np.max(np.abs(step), initial=0.0) <= tol * (1.0 + np.max(np.abs(v), initial=0.0)):
            return v
    raise FixedPointError("Darwin velocity inversion did not converge", float(np.max(np.abs(step))))


def record_dvm(history: History, s: DVMState):
    """Append the knot (x, vtilde, d vtilde/dt) of a DVM state."""
    e = s.ensemble
    rate = np.einsum("nij,nj->ni", darwin_velocity_jacobian(e.v, e.c), s.sources.force)
    history.append(e.t, e.x, darwin_velocity(e.v, e.c), rate)


def fields_from_history(history: History, t, points, w, c, delta, include_c4=True):
    """E* and B* at time t rebuilt from interpolated marker data."""
    idx = np.arange(history.n)
    X, U, A = history.evaluate(np.full(history.n, float(t)), idx)
    v = momentum_from_darwin_velocity(U, c)
    force = np.linalg.solve(darwin_velocity_jacobian(v, c), A[..., None])[..., 0]
    src = DVMSources(X, v, w, force, c, delta, include_c4)
    return _fields(np.atleast_2d(points), src, force, exclude_self=False)


def eval_f_dvm(history: History, profile, w, c, delta, x, v, include_c4=True):
    """f*(x, v, t_last) = f°(X(0), V(0)) by RK4 backward along the knot grid."""
    X = np.atleast_2d(np.asarray(x, dtype=float)).copy()
    V = np.atleast_2d(np.asarray(v, dtype=float)).copy()

    def rhs(tau, X, V):
        ef, bf = fields_from_history(history, tau, X, w, c, delta, include_c4)
        u = darwin_velocity(V, c)
        return u, ef + np.cross(V, bf) / c

    times = history.times
    for k in range(len(times) - 1, 0, -1):
        t1, t0 = times[k], times[k - 1]
        h = t0 - t1
        k1 = rhs(t1, X, V)
        k2 = rhs(t1 + 0.5 * h, X + 0.5 * h * k1[0], V + 0.5 * h * k1[1])
        k3 = rhs(t1 + 0.5 * h, X + 0.5 * h * k2[0], V + 0.5 * h * k2[1])
        k4 = rhs(t0, X + h * k3[0], V + h * k3[1])
        X = X + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        V = V + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return profile(X, V)
