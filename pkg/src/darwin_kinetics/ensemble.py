"""Phase-space markers, deterministic sampling of a bump profile, and moments."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from .kernels import (
    SofteningSpec,
    darwin_velocity,
    plummer_density,
    relativistic_velocity,
)

KINDS = ("VP", "LVP", "DVM", "RVM")
CONVENTIONS = ("newtonian", "darwin", "relativistic")
CHUNK = 1024
CSV_HEADER = ["t", "x1", "x2", "x3", "v1", "v2", "v3", "w", "w2"]


class ConfigurationError(ValueError):
    """Raised when an ensemble lacks data a requested operation needs."""


def chunked_sum(values, axis=0):
    """Left-to-right sum over fixed chunks of 1024 along ``axis``.

    The reduction order depends only on the array length, so results are
    bitwise reproducible across runs and machines with the same numpy build.
    """
    values = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    total = np.zeros(values.shape[1:])
    for start in range(0, values.shape[0], CHUNK):
        total = total + np.sum(values[start:start + CHUNK], axis=0)
    return total


@dataclass(frozen=True)
class Marker:
    x: np.ndarray
    v: np.ndarray
    w: float
    w2: float = 0.0


@dataclass
class Ensemble:
    """Structure-of-arrays marker set.

    ``x`` and ``v`` have shape (N, 3); ``w`` and ``w2`` have shape (N,).
    ``v`` is the momentum variable; the transport velocity depends on ``kind``.
    """

    x: np.ndarray
    v: np.ndarray
    w: np.ndarray
    softening: SofteningSpec
    t: float = 0.0
    c: float | None = None
    kind: str = "VP"
    w2: np.ndarray = field(default=None)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(-1, 3)
        self.v = np.asarray(self.v, dtype=float).reshape(-1, 3)
        self.w = np.asarray(self.w, dtype=float).reshape(-1)
        if self.w2 is None:
            self.w2 = np.zeros_like(self.w)
        self.w2 = np.asarray(self.w2, dtype=float).reshape(-1)
        n = len(self.w)
        if not (len(self.x) == len(self.v) == len(self.w2) == n):
            raise ValueError("marker arrays have inconsistent lengths")
        if np.any(self.w < 0):
            raise ValueError("charge weights must be nonnegative")
        if self.kind not in KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")

    def __len__(self):
        return len(self.w)

    @property
    def markers(self):
        return [Marker(self.x[i].copy(), self.v[i].copy(), float(self.w[i]), float(self.w2[i]))
                for i in range(len(self))]

    def copy(self, **changes):
        base = dict(x=self.x.copy(), v=self.v.copy(), w=self.w.copy(), w2=self.w2.copy())
        base.update(changes)
        return replace(self, **base)

    def total_charge(self):
        return float(chunked_sum(self.w))

    def velocity(self, convention="newtonian"):
        """Velocity map applied to every marker momentum."""
        if convention == "newtonian":
            return self.v
        if convention not in CONVENTIONS:
            raise ValueError(f"unknown convention {convention!r}")
        if self.c is None:
            raise ConfigurationError(f"{convention} moments need a speed of light on the ensemble")
        if convention == "darwin":
            return darwin_velocity(self.v, self.c)
        return relativistic_velocity(self.v, self.c)


def union(a: Ensemble, b: Ensemble) -> Ensemble:
    return a.copy(x=np.vstack([a.x, b.x]), v=np.vstack([a.v, b.v]),
                  w=np.concatenate([a.w, b.w]), w2=np.concatenate([a.w2, b.w2]))


def bump(s):
    """exp(-1/(1-s^2)) for |s| < 1, zero otherwise."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def bump_derivative(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    q = 1.0 - si**2
    out[inside] = -2.0 * si / q**2 * np.exp(-1.0 / q)
    return out


@dataclass(frozen=True)
class InitialProfile:
    center_x: tuple = (0.0, 0.0, 0.0)
    center_v: tuple = (0.0, 0.0, 0.0)
    radius_x: float = 1.0
    radius_v: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be nonnegative")
        if self.radius_x <= 0 or self.radius_v <= 0:
            raise ValueError("support radii must be positive")

    def _scaled(self, x, v):
        dx = np.asarray(x, dtype=float) - np.asarray(self.center_x)
        dv = np.asarray(v, dtype=float) - np.asarray(self.center_v)
        return dx, dv, np.linalg.norm(dx, axis=-1) / self.radius_x, np.linalg.norm(dv, axis=-1) / self.radius_v

    def __call__(self, x, v):
        _, _, sx, sv = self._scaled(x, v)
        return self.amplitude * bump(sx) * bump(sv)

    def gradient(self, x, v):
        """(d f/dx, d f/dv), each with the trailing shape 3."""
        dx, dv, sx, sv = self._scaled(x, v)
        bx, bv = bump(sx), bump(sv)
        with np.errstate(invalid="ignore", divide="ignore"):
            ux = np.where(sx[..., None] > 0, dx / (sx[..., None] * self.radius_x), 0.0)
            uv = np.where(sv[..., None] > 0, dv / (sv[..., None] * self.radius_v), 0.0)
        gx = self.amplitude * (bump_derivative(sx) * bv)[..., None] * ux / self.radius_x
        gv = self.amplitude * (bx * bump_derivative(sv))[..., None] * uv / self.radius_v
        return gx, gv


def _radial_bump_moment(power):
    """int_0^1 b(s) s^power ds."""
    return quad(lambda s: float(bump(np.array(s))) * s**power, 0.0, 1.0, epsabs=1e-15, epsrel=1e-13)[0]


def velocity_moments(profile: InitialProfile, x):
    """(int f dv, int v f dv, int v v^T f dv) of the profile at positions x, in closed form."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    sx = np.linalg.norm(x - np.asarray(profile.center_x), axis=-1) / profile.radius_x
    rv = profile.radius_v
    mass = 4.0 * np.pi * rv**3 * _radial_bump_moment(2)
    spread = 4.0 * np.pi / 3.0 * rv**5 * _radial_bump_moment(4)
    cv = np.asarray(profile.center_v, dtype=float)
    m0 = profile.amplitude * bump(sx)
    m1 = m0[:, None] * (mass * cv)[None, :]
    m2 = m0[:, None, None] * (mass * np.outer(cv, cv) + spread * np.eye(3))[None]
    return m0 * mass, m1, m2


def _midpoints(center, radius, n):
    edges = np.linspace(-radius, radius, n + 1)
    mids = 0.5 * (edges[1:] + edges[:-1])
    return center + mids, 2.0 * radius / n


def sample_initial(profile: InitialProfile, n_per_axis: int, softening: SofteningSpec,
                   kind="VP", c=None) -> Ensemble:
    """Midpoint rule on a regular 6-d grid over the support box."""
    if n_per_axis < 2:
        raise ValueError("n_per_axis must be at least 2")
    axes_x, axes_v = [], []
    for k in range(3):
        ax, hx = _midpoints(profile.center_x[k], profile.radius_x, n_per_axis)
        av, hv = _midpoints(profile.center_v[k], profile.radius_v, n_per_axis)
        axes_x.append(ax)
        axes_v.append(av)
    gx = np.stack(np.meshgrid(*axes_x, indexing="ij"), axis=-1).reshape(-1, 3)
    gv = np.stack(np.meshgrid(*axes_v, indexing="ij"), axis=-1).reshape(-1, 3)
    _, _, sx, _ = profile._scaled(gx, profile.center_v)
    _, _, _, sv = profile._scaled(profile.center_x, gv)
    gx, gv = gx[sx < 1.0], gv[sv < 1.0]
    x = np.repeat(gx, len(gv), axis=0)
    v = np.tile(gv, (len(gx), 1))
    w = profile(x, v) * (hx**3) * (hv**3)
    if w.size and w.max() > 0:
        keep = w >= 1e-16 * w.max()
    else:
        keep = np.zeros(w.shape, dtype=bool)
    return Ensemble(x[keep], v[keep], w[keep], softening, kind=kind, c=c)


def _blob_weights(e: Ensemble, points):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    r = points[:, None, :] - e.x[None, :, :]
    return plummer_density(r, e.softening.delta), points


def charge_density(e: Ensemble, x):
    """Mollified density sum_i w_i S(x - x_i); scalar for a single point."""
    single = np.ndim(x) == 1
    if len(e) == 0:
        out = np.zeros(np.atleast_2d(x).shape[0])
    else:
        s, _ = _blob_weights(e, x)
        out = chunked_sum((s * e.w[None, :]).T)
    return float(out[0]) if single else out


def current_density(e: Ensemble, x, convention="newtonian"):
    vel = e.velocity(convention)
    single = np.ndim(x) == 1
    if len(e) == 0:
        out = np.zeros((np.atleast_2d(x).shape[0], 3))
    else:
        s, _ = _blob_weights(e, x)
        out = chunked_sum(np.moveaxis((s * e.w[None, :])[..., None] * vel[None, :, :], 1, 0))
    return out[0] if single else out


def support_radius(e: Ensemble):
    if len(e) == 0:
        return 0.0, 0.0
    return float(np.max(np.linalg.norm(e.x, axis=1))), float(np.max(np.linalg.norm(e.v, axis=1)))


def write_snapshot(e: Ensemble, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(CSV_HEADER)
        for i in range(len(e)):
            row = [e.t, *e.x[i], *e.v[i], e.w[i], e.w2[i]]
            out.writerow([f"{val:.17g}" for val in row])


def read_snapshot(path, softening: SofteningSpec, kind="VP", c=None) -> Ensemble:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        return Ensemble(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), softening, kind=kind, c=c)
    return Ensemble(data[:, 1:4], data[:, 4:7], data[:, 7], softening, t=float(data[0, 0]),
                    c=c, kind=kind, w2=data[:, 8])
