"""Dense marker trajectories from knots carrying position, velocity and acceleration."""

from __future__ import annotations

import numpy as np

# Rows: quintic Hermite basis for (x0, h u0, h^2 a0, x1, h u1, h^2 a1); columns: powers tau^0..tau^5.
_QUINTIC = np.array([
    [1, 0, 0, -10, 15, -6],
    [0, 1, 0, -6, 8, -3],
    [0, 0, 0.5, -1.5, 1.5, -0.5],
    [0, 0, 0, 10, -15, 6],
    [0, 0, 0, -4, 7, -3],
    [0, 0, 0, 0.5, -1, 0.5],
], dtype=float)


def _basis(tau, order):
    """Basis values (order 0), first or second tau-derivatives; shape tau.shape + (6,)."""
    powers = np.arange(6)
    coef = _QUINTIC.copy()
    for _ in range(order):
        coef = coef[:, 1:] * powers[1:len(coef[0]) + 1][None, :]
        coef = np.hstack([coef, np.zeros((6, 1))])
    tp = tau[..., None] ** powers
    return tp @ coef.T


def quintic_segment(tau, h, x0, u0, a0, x1, u1, a1):
    """Position, velocity and acceleration of the quintic Hermite segment at tau in [0, 1]."""
    tau = np.asarray(tau, dtype=float)
    h = np.asarray(h, dtype=float)
    hh = h[..., None]
    data = np.stack([x0, hh * u0, hh**2 * a0, x1, hh * u1, hh**2 * a1], axis=-2)
    out = []
    for order in range(3):
        b = _basis(tau, order)
        out.append(np.einsum("...k,...kd->...d", b, data) / hh**order)
    return tuple(out)


class History:
    """Growable record of knots (t, x, u, a) for a fixed set of N markers.

    ``u`` is the transport velocity and ``a`` its time derivative. Times
    before the first knot are served by ``before(s, j)`` when given, which
    must return (x, u, a) arrays for the marker indices ``j``.
    """

    def __init__(self, n_markers, before=None, capacity=64):
        self.n = n_markers
        self.before = before
        self._t = np.empty(capacity)
        self._x = np.empty((capacity, n_markers, 3))
        self._u = np.empty_like(self._x)
        self._a = np.empty_like(self._x)
        self.size = 0

    @property
    def times(self):
        return self._t[:self.size]

    def knot(self, k):
        return self._x[k], self._u[k], self._a[k]

    def append(self, t, x, u, a):
        if self.size and t <= self._t[self.size - 1]:
            raise ValueError("knot times must increase")
        if self.size == len(self._t):
            grow = len(self._t)
            self._t = np.concatenate([self._t, np.empty(grow)])
            pad = np.empty((grow, self.n, 3))
            self._x = np.concatenate([self._x, pad])
            self._u = np.concatenate([self._u, pad])
            self._a = np.concatenate([self._a, pad])
        k = self.size
        self._t[k] = t
        self._x[k], self._u[k], self._a[k] = x, u, a
        self.size += 1

    def evaluate(self, s, j, tail=None):
        """Interpolated (x, u, a) of markers ``j`` at times ``s`` (broadcast together).

        ``tail`` = (t_end, x, u, a) adds a provisional segment from the last
        knot to t_end, used for stage states that are not yet committed.
        """
        s, j = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(j))
        shape = s.shape + (3,)
        xs, us, as_ = np.zeros(shape), np.zeros(shape), np.zeros(shape)
        t = self.times
        t_hi = t[-1] if tail is None else tail[0]
        if np.any(s > t_hi * (1 + 1e-14) + 1e-14):
            raise ValueError("requested time lies beyond the recorded history")
        early = s < t[0]
        if np.any(early):
            if self.before is None:
                raise ValueError("requested time precedes the recorded history")
            xs[early], us[early], as_[early] = self.before(s[early], j[early])
        late = np.zeros_like(early) if tail is None else (s > t[-1]) & ~early
        if np.any(late):
            t_end, xe, ue, ae = tail
            jl = j[late]
            x0, u0, a0 = self.knot(self.size - 1)
            h = np.full(jl.shape, t_end - t[-1])
            tau = (s[late] - t[-1]) / h
            xs[late], us[late], as_[late] = quintic_segment(
                tau, h, x0[jl], u0[jl], a0[jl], xe[jl], ue[jl], ae[jl])
        mid = ~early & ~late
        if np.any(mid):
            sm, jm = s[mid], j[mid]
            if self.size == 1:
                xs[mid], us[mid], as_[mid] = self._x[0][jm], self._u[0][jm], self._a[0][jm]
            else:
                k = np.clip(np.searchsorted(t, sm, side="right") - 1, 0, self.size - 2)
                h = t[k + 1] - t[k]
                tau = (sm - t[k]) / h
                xs[mid], us[mid], as_[mid] = quintic_segment(
                    tau, h, self._x[k, jm], self._u[k, jm], self._a[k, jm],
                    self._x[k + 1, jm], self._u[k + 1, jm], self._a[k + 1, jm])
        return xs, us, as_


def retarded_times(points, t, c, delta, path, n_markers, lo=None, tol=1e-14, max_iter=60):
    """Emission times s with s + R_delta(x - X_j(s)) / c = t for every (point, marker) pair.

    ``path(s, j)`` returns (X, U, A) for broadcast arrays of times and marker
    indices. The residual has derivative 1 - n.u/c > 0, so a Newton iteration
    safeguarded by bisection inside [lo, t] converges for subluminal paths.
    Returns (s, X, U, A) at the roots.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    m = len(points)
    j = np.broadcast_to(np.arange(n_markers)[None, :], (m, n_markers))

    def residual(s):
        X, U, A = path(s, j)
        r = points[:, None, :] - X
        rd = np.sqrt(np.sum(r * r, axis=-1) + delta**2)
        g = s + rd / c - t
        with np.errstate(invalid="ignore", divide="ignore"):
            dg = 1.0 - np.sum(r * U, axis=-1) / (rd * c)
        return g, dg, X, U, A

    hi = np.full((m, n_markers), float(t))
    g_hi, _, _, _, _ = residual(hi)
    if lo is None:
        lo = hi - 2.0 * g_hi
    lo = np.broadcast_to(np.asarray(lo, dtype=float), hi.shape).copy()
    s = np.clip(hi - g_hi, lo, hi)
    for _ in range(max_iter):
        g, dg, X, U, A = residual(s)
        lo = np.where(g < 0, s, lo)
        hi = np.where(g > 0, s, hi)
        with np.errstate(invalid="ignore", divide="ignore"):
            step = np.where(g == 0.0, 0.0, g / dg)
        trial = s - step
        outside = ~((trial >= lo) & (trial <= hi))
        trial = np.where(outside, 0.5 * (lo + hi), trial)
        done = np.abs(trial - s) <= tol * (1.0 + abs(t))
        s = trial
        if np.all(done):
            break
    else:
        raise RuntimeError("retarded-time iteration did not converge")
    _, _, X, U, A = residual(s)
    return s, X, U, A
