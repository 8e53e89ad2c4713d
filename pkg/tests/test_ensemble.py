import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from darwin_kinetics.ensemble import (
    ConfigurationError,
    Ensemble,
    InitialProfile,
    bump,
    bump_derivative,
    charge_density,
    chunked_sum,
    read_snapshot,
    sample_initial,
    union,
    velocity_moments,
    write_snapshot,
)
from darwin_kinetics.kernels import SofteningSpec


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=3000))
def test_chunked_sum_is_close_to_exact_sum(values):
    arr = np.array(values)
    assert math.isclose(chunked_sum(arr), math.fsum(values), rel_tol=1e-9, abs_tol=1e-6)


def test_chunked_sum_order_is_fixed():
    arr = np.random.default_rng(3).normal(size=(5000, 3))
    assert np.array_equal(chunked_sum(arr), chunked_sum(arr.copy()))


@settings(max_examples=40)
@given(st.floats(-0.99, 0.99))
def test_bump_derivative_matches_finite_difference(s):
    h = 1e-6
    fd = (bump(np.array(s + h)) - bump(np.array(s - h))) / (2 * h)
    assert np.isclose(bump_derivative(np.array(s)), fd, atol=1e-7)


def test_profile_gradient_matches_finite_differences(profile):
    x, v = np.array([0.2, -0.3, 0.1]), np.array([0.4, 0.1, -0.2])
    gx, gv = profile.gradient(x, v)
    h = 1e-6
    fdx = [(profile(x + h * e, v) - profile(x - h * e, v)) / (2 * h) for e in np.eye(3)]
    fdv = [(profile(x, v + h * e) - profile(x, v - h * e)) / (2 * h) for e in np.eye(3)]
    assert np.allclose(gx, fdx, atol=1e-6) and np.allclose(gv, fdv, atol=1e-6)


def test_sampling_counts_and_positive_weights(ensemble):
    assert len(ensemble) == 361
    assert np.all(ensemble.w > 0)


def test_total_charge_converges_to_profile_mass(profile):
    exact = 4 * np.pi * profile.radius_x**3 * velocity_moments(profile, np.zeros((1, 3)))[0][0] / bump(np.zeros(1))[0]
    from scipy.integrate import quad

    exact = 4 * np.pi * quad(lambda s: bump(np.array(s)) * s**2, 0, 1)[0] * profile.amplitude * \
        velocity_moments(InitialProfile(amplitude=1.0, radius_v=profile.radius_v), np.zeros((1, 3)))[0][0] / bump(np.zeros(1))[0]
    errs = [abs(sample_initial(profile, n, SofteningSpec(0.2)).total_charge() - exact) for n in (4, 8)]
    assert errs[1] < errs[0]


def test_velocity_moments_match_marker_quadrature():
    prof = InitialProfile(center_v=(0.3, -0.1, 0.2), radius_v=0.5)
    v = np.stack(np.meshgrid(*[np.linspace(-0.6, 0.6, 121)] * 3, indexing="ij"), -1).reshape(-1, 3)
    v = v + np.array(prof.center_v)
    h3 = (1.2 / 120) ** 3
    x = np.array([0.1, 0.2, 0.0])
    f = prof(np.broadcast_to(x, v.shape), v) * h3
    m0, m1, m2 = velocity_moments(prof, x[None])
    assert np.isclose(f.sum(), m0[0], rtol=1e-6)
    assert np.allclose(f @ v, m1[0], rtol=1e-6)
    assert np.allclose(np.einsum("k,ki,kj->ij", f, v, v), m2[0], rtol=1e-6)


def test_velocity_conventions_need_c(ensemble):
    with pytest.raises(ConfigurationError):
        ensemble.velocity("darwin")
    e = ensemble.copy(c=4.0)
    assert np.all(np.linalg.norm(e.velocity("relativistic"), axis=1) < 4.0)


def test_density_of_single_marker_integrates_to_weight():
    e = Ensemble(np.zeros((1, 3)), np.zeros((1, 3)), [2.0], SofteningSpec(0.3))
    g = np.linspace(-6, 6, 97)
    pts = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    total = charge_density(e, pts).sum() * (g[1] - g[0]) ** 3
    assert abs(total - 2.0) < 0.02


def test_union_and_validation(ensemble):
    both = union(ensemble, ensemble)
    assert len(both) == 2 * len(ensemble)
    with pytest.raises(ValueError):
        Ensemble(np.zeros((1, 3)), np.zeros((1, 3)), [-1.0], SofteningSpec(0.1))
    with pytest.raises(ValueError):
        Ensemble(np.zeros((2, 3)), np.zeros((1, 3)), [1.0], SofteningSpec(0.1))


def test_snapshot_round_trip_is_exact(tmp_path, ensemble):
    path = tmp_path / "snap.csv"
    write_snapshot(ensemble, path)
    back = read_snapshot(path, ensemble.softening)
    assert np.array_equal(back.x, ensemble.x) and np.array_equal(back.v, ensemble.v)
    assert np.array_equal(back.w, ensemble.w)
