"""Pure kernel functions shared by every solver.

Velocity maps, the Plummer-softened interaction geometry, the
Glassey-Strauss kernels with their low-order expansions in 1/c, and the
closed-form spherical means that serve as oracles for the field
representations.

Array conventions: trailing axis of length 3 is the vector axis; every
function broadcasts over leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class SofteningSpec:
    """Plummer softening length shared by all solvers."""

    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"softening delta must be positive, got {self.delta}")


def _norm(a):
    return np.sqrt(np.einsum("...i,...i->...", a, a))


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


# ---------------------------------------------------------------------------
# velocity maps


def relativistic_velocity(v, c):
    """vhat = (1 + v^2/c^2)^(-1/2) v."""
    v = np.asarray(v, dtype=float)
    return v / np.sqrt(1.0 + _dot(v, v) / c**2)[..., None]


def momentum_from_velocity(vhat, c):
    """Inverse of `relativistic_velocity`; requires |vhat| < c."""
    vhat = np.asarray(vhat, dtype=float)
    s = 1.0 - _dot(vhat, vhat) / c**2
    if np.any(s <= 0):
        raise ValueError("|vhat| must be below c")
    return vhat / np.sqrt(s)[..., None]


def relativistic_velocity_jacobian(v, c):
    """d vhat / d v, shape (..., 3, 3)."""
    v = np.asarray(v, dtype=float)
    g = 1.0 + _dot(v, v) / c**2
    eye = np.eye(3)
    return (eye * g[..., None, None] - np.einsum("...i,...j->...ij", v, v) / c**2) / g[
        ..., None, None
    ] ** 1.5


def darwin_velocity(v, c):
    """(1 - v^2/(2c^2)) v, the truncated velocity map of the Darwin system."""
    v = np.asarray(v, dtype=float)
    return v * (1.0 - 0.5 * _dot(v, v) / c**2)[..., None]


def darwin_velocity_jacobian(v, c):
    v = np.asarray(v, dtype=float)
    s = 1.0 - 0.5 * _dot(v, v) / c**2
    return np.eye(3) * s[..., None, None] - np.einsum("...i,...j->...ij", v, v) / c**2


# ---------------------------------------------------------------------------
# softened pair geometry


def softened_distance(r, delta):
    r = np.asarray(r, dtype=float)
    return np.sqrt(_dot(r, r) + delta**2)


def plummer_field(r, delta):
    """r / (|r|^2 + delta^2)^(3/2): field at separation r = x - y of a unit charge."""
    r = np.asarray(r, dtype=float)
    rd = softened_distance(r, delta)
    return r / rd[..., None] ** 3


def plummer_field_gradient(r, delta):
    """d/dr of `plummer_field`, symmetric 3x3."""
    r = np.asarray(r, dtype=float)
    rd = softened_distance(r, delta)
    outer = np.einsum("...i,...j->...ij", r, r)
    return np.eye(3) / rd[..., None, None] ** 3 - 3.0 * outer / rd[..., None, None] ** 5


def plummer_potential(r, delta):
    return 1.0 / softened_distance(r, delta)


def plummer_density(r, delta):
    """Normalised blob whose Coulomb field is `plummer_field`."""
    rd = softened_distance(r, delta)
    return 3.0 * delta**2 / (FOUR_PI * rd**5)


def plummer_density_gradient(r, delta):
    r = np.asarray(r, dtype=float)
    rd = softened_distance(r, delta)
    return -15.0 * delta**2 / (FOUR_PI * rd[..., None] ** 7) * r


def distance_derivatives(r, delta):
    """Softened distance and its first three derivatives in r.

    Returns (rd, d1, d2, d3) with d1 = r/rd, d2[i,j] = (I - d1 d1)/rd and the
    third-order tensor d3[i,j,k]. Used to differentiate |z|-type moments of
    moving markers in time.
    """
    r = np.asarray(r, dtype=float)
    rd = softened_distance(r, delta)
    n = r / rd[..., None]
    eye = np.eye(3)
    nn = np.einsum("...i,...j->...ij", n, n)
    d2 = (eye - nn) / rd[..., None, None]
    d3 = (
        -(np.einsum("...ik,...j->...ijk", d2, n) + np.einsum("...i,...jk->...ijk", n, d2))
        / rd[..., None, None, None]
        - np.einsum("...ij,...k->...ijk", eye - nn, n) / rd[..., None, None, None] ** 2
    )
    return rd, n, d2, d3


# ---------------------------------------------------------------------------
# spherical means and the direction integral


def sphere_quadrature(n_theta=32, n_phi=64):
    """Product rule on the unit sphere: Gauss-Legendre in cos(theta) x uniform phi.

    Returns nodes (n, 3) and weights (n,) summing to 4 pi.
    """
    mu, wmu = np.polynomial.legendre.leggauss(n_theta)
    phi = (np.arange(n_phi) + 0.5) * (2.0 * np.pi / n_phi)
    st = np.sqrt(1.0 - mu**2)
    nodes = np.stack(
        [
            np.outer(st, np.cos(phi)).ravel(),
            np.outer(st, np.sin(phi)).ravel(),
            np.repeat(mu, n_phi),
        ],
        axis=-1,
    )
    weights = np.repeat(wmu, n_phi) * (2.0 * np.pi / n_phi)
    return nodes, weights


def sphere_mean_inverse(z, r):
    """Integral over the unit sphere of |z - r w|^-1."""
    if not r > 0:
        raise ValueError("r must be positive")
    return FOUR_PI / np.maximum(r, _norm(np.asarray(z, dtype=float)))


def sphere_mean_gradient(z, r):
    """Integral over the unit sphere of |z - r w|^-3 (z - r w).

    On the sphere |z| = r the exterior value is halved (the integral jumps there).
    """
    if not r > 0:
        raise ValueError("r must be positive")
    z = np.asarray(z, dtype=float)
    nz = _norm(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        ext = FOUR_PI * z / np.where(nz > 0, nz, 1.0)[..., None] ** 3
    factor = np.where(nz > r, 1.0, np.where(nz < r, 0.0, 0.5))
    return ext * factor[..., None]


def sphere_mean_distance(z, r):
    """Integral over the unit sphere of |z - r w|."""
    z = np.asarray(z, dtype=float)
    nz = _norm(z)
    inner = FOUR_PI * r + FOUR_PI / 3.0 * nz**2 / r
    with np.errstate(divide="ignore"):
        outer = FOUR_PI * nz + FOUR_PI / 3.0 * r**2 / np.where(nz > 0, nz, 1.0)
    return np.where(r >= nz, inner, outer)


def sphere_mean_linear(z, r):
    """Integral over the unit sphere of |z - r w|^-1 (z - r w)."""
    if not r > 0:
        raise ValueError("r must be positive")
    z = np.asarray(z, dtype=float)
    nz = _norm(z)[..., None]
    inner = 8.0 * np.pi / (3.0 * r) * z
    with np.errstate(divide="ignore", invalid="ignore"):
        zbar = z / np.where(nz > 0, nz, 1.0)
        outer = FOUR_PI * zbar - FOUR_PI / 3.0 * r**2 / np.where(nz > 0, nz, 1.0) ** 2 * zbar
    return np.where(r > nz, inner, outer)


def coulomb_direction_integral(z):
    """Integral over R^3 of |z - v|^-1 |v|^-3 v dv = 2 pi zbar."""
    z = np.asarray(z, dtype=float)
    nz = _norm(z)
    if np.any(nz == 0):
        raise ValueError("z must be nonzero")
    return 2.0 * np.pi * z / nz[..., None]


def coulomb_direction_quadrature(z, r_min=1e-3, r_max=1e3, n_panels=60, n_gauss=16, tails=True):
    """Numerical value of the direction integral on r_min <= |v| <= r_max.

    Spherical shells about the origin, polar axis along z. The azimuth is
    trivial and only the z-component survives. On each shell the polar
    integral is taken in the distance d = |z - v| (which removes the
    1/|z - v| singularity), then the radial integral in log|v| by composite
    Gauss-Legendre with a panel break at |v| = |z|.

    The shells outside the cutoffs have exact shell means (4 pi/3) s/|z|^2
    below |z| and (4 pi/3) |z|/s^2 above it; with ``tails`` those two
    remainders are added so the cutoffs only control quadrature work.
    """
    z = np.asarray(z, dtype=float)
    nz = float(_norm(z))
    if nz == 0:
        raise ValueError("z must be nonzero")
    edges = np.geomspace(r_min, r_max, n_panels + 1)
    if r_min < nz < r_max:
        edges = np.unique(np.concatenate([edges, [nz]]))
    xg, wg = np.polynomial.legendre.leggauss(n_gauss)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        la, lb = np.log(a), np.log(b)
        s = np.exp(0.5 * (lb - la) * xg + 0.5 * (lb + la))
        w_s = 0.5 * (lb - la) * wg * s
        ang = np.empty_like(s)
        for k, sk in enumerate(s):
            d0, d1 = abs(nz - sk), nz + sk
            d = 0.5 * (d1 - d0) * xg + 0.5 * (d1 + d0)
            mu = (nz**2 + sk**2 - d**2) / (2.0 * nz * sk)
            # int mu / d dmu over [-1, 1] == int mu / (nz sk) dd over [d0, d1]
            ang[k] = 2.0 * np.pi * np.sum(0.5 * (d1 - d0) * wg * mu) / (nz * sk)
        # s^2 ds * |v|^-3 * (v . zbar) = mu ds
        total += np.sum(w_s * ang)
    if tails:
        total += 2.0 * np.pi / 3.0 * min(r_min, nz) ** 2 / nz**2
        total += 4.0 * np.pi / 3.0 * nz / max(r_max, nz)
    return total * z / nz


# ---------------------------------------------------------------------------
# Glassey-Strauss kernels


@dataclass(frozen=True)
class GSKernelInputs:
    zbar: np.ndarray
    vhat: np.ndarray
    c: float

    def __post_init__(self):
        zbar = np.asarray(self.zbar, dtype=float)
        vhat = np.asarray(self.vhat, dtype=float)
        if np.any(np.abs(_norm(zbar) - 1.0) > 1e-12):
            raise ValueError("zbar must be a unit vector")
        if np.any(_norm(vhat) >= self.c):
            raise ValueError("|vhat| must be strictly below c")
        object.__setattr__(self, "zbar", zbar)
        object.__setattr__(self, "vhat", vhat)


def _cross_matrix(a):
    """[a]_x with [a]_x b = a x b."""
    m = np.zeros(a.shape[:-1] + (3, 3))
    m[..., 0, 1], m[..., 0, 2] = -a[..., 2], a[..., 1]
    m[..., 1, 0], m[..., 1, 2] = a[..., 2], -a[..., 0]
    m[..., 2, 0], m[..., 2, 1] = -a[..., 1], a[..., 0]
    return m


def gs_kernel_e(inputs: GSKernelInputs, part: str):
    """Exact kernels K_DT, K_T (vectors) and K_S (3x3) of the electric field."""
    z, vh, c = inputs.zbar, inputs.vhat, inputs.c
    zv = _dot(z, vh)[..., None]
    q = 1.0 + zv / c
    if part == "DT":
        return (z - (zv / c**2) * vh) / q
    if part == "T":
        return (1.0 - _dot(vh, vh)[..., None] / c**2) * (z + vh / c) / q**2
    if part == "S":
        # (1 + c^-2 v^2)^(-1/2) with v the momentum belonging to vhat
        gamma_inv = np.sqrt(1.0 - _dot(vh, vh) / c**2)[..., None, None]
        q2 = q[..., None]
        bracket = (
            q2 * np.eye(3)
            + np.einsum("...i,...j->...ij", zv * z - vh, vh) / c**2
            - np.einsum("...i,...j->...ij", z + vh / c, z)
        )
        return gamma_inv * bracket / q2**2
    raise ValueError(f"unknown part {part!r}")


def gs_kernel_b(inputs: GSKernelInputs, part: str):
    """Kernels L_DT, L_T (vectors) and L_S (3x3) of the magnetic field.

    L_S acts on the Lorentz force F as zbar x (K_S F); expanding that product
    gives exactly the second displayed term -(zbar x vhat) (c zbar + vhat)/c^2.
    """
    z, vh, c = inputs.zbar, inputs.vhat, inputs.c
    zv = _dot(z, vh)[..., None]
    q = 1.0 + zv / c
    zxv = np.cross(z, vh)
    if part == "DT":
        return zxv / (c * q)
    if part == "T":
        return (1.0 - _dot(vh, vh)[..., None] / c**2) * zxv / q**2
    if part == "S":
        return np.einsum("...ij,...jk->...ik", _cross_matrix(z), gs_kernel_e(inputs, "S"))
    raise ValueError(f"unknown part {part!r}")


def gs_kernel_e_expanded(zbar, v, c, part):
    """Expansion of K_DT, K_T, K_S in powers of 1/c, written in the momentum v.

    Truncated so that the field integrands (with their explicit c-prefactors)
    are correct through c^-2; K_S is therefore only kept at leading order.
    """
    z = np.asarray(zbar, dtype=float)
    v = np.asarray(v, dtype=float)
    zv = _dot(z, v)[..., None]
    if part == "DT":
        return z - zv * z / c + (zv**2 * z - zv * v) / c**2
    if part == "T":
        return z + (v - 2.0 * zv * z) / c + (3.0 * zv**2 * z - _dot(v, v)[..., None] * z - 2.0 * zv * v) / c**2
    if part == "S":
        return np.eye(3) - np.einsum("...i,...j->...ij", z, z)
    raise ValueError(f"unknown part {part!r}")


def gs_kernel_b_expanded(zbar, v, c, part):
    z = np.asarray(zbar, dtype=float)
    v = np.asarray(v, dtype=float)
    zv = _dot(z, v)[..., None]
    zxv = np.cross(z, v)
    if part == "DT":
        return (zxv - zv * zxv / c) / c
    if part == "T":
        return zxv - 2.0 * zv * zxv / c
    if part == "S":
        return _cross_matrix(z)
    raise ValueError(f"unknown part {part!r}")
