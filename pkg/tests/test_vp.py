import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from darwin_kinetics.ensemble import Ensemble
from darwin_kinetics.kernels import SofteningSpec
from darwin_kinetics.vp import (
    continuity_residual,
    eval_f0,
    field_e0,
    run_vp,
    start_vp,
    step_vp,
    tangent_flow,
    vp_energy,
)

vec = arrays(np.float64, 3, elements=st.floats(-1, 1))


@pytest.fixture(scope="module")
def fine_run(ensemble):
    return run_vp(ensemble, 0.25, 0.0125)


@settings(max_examples=20, deadline=None)
@given(vec, vec)
def test_single_marker_moves_in_a_straight_line(x, v):
    e = Ensemble(x[None], v[None], [3.0], SofteningSpec(0.2))
    s = run_vp(e, 0.5, 0.1)
    assert np.allclose(s.ensemble.x[0], x + 0.5 * v, atol=1e-13)
    assert np.array_equal(s.ensemble.v[0], v)


def test_two_marker_repulsion_stays_on_axis_and_conserves_momentum():
    e = Ensemble(np.array([[-0.5, 0, 0], [0.5, 0, 0]], dtype=float), np.zeros((2, 3)), [1.0, 1.0],
                 SofteningSpec(0.1))
    s = start_vp(e)
    for _ in range(20):
        s = step_vp(s, 0.05)
        assert np.all(s.ensemble.x[:, 1:] == 0.0)
        assert np.all(np.abs(s.ensemble.w @ s.ensemble.v) <= 1e-12)
    assert s.ensemble.x[1, 0] > 0.5


def test_eval_f0_at_t0_is_the_initial_profile(ensemble, profile):
    s = start_vp(ensemble)
    x, v = ensemble.x[:10], ensemble.v[:10]
    assert np.array_equal(eval_f0(s, x, v, profile), profile(x, v))


def test_eval_f0_vanishes_far_from_support(fine_run, profile):
    x = np.array([[4.0, 0.0, 0.0], [0.0, -3.5, 0.0]])
    v = np.zeros((2, 3))
    assert np.all(eval_f0(fine_run, x, v, profile) == 0.0)


def test_eval_f0_is_bounded_by_initial_maximum(fine_run, profile):
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, size=(40, 3))
    v = rng.uniform(-0.3, 0.9, size=(40, 3))
    peak = profile(np.array([profile.center_x]), np.array([profile.center_v]))[0]
    assert np.max(eval_f0(fine_run, x, v, profile)) <= peak + 1e-6


def test_eval_f0_is_constant_along_marker_trajectories(fine_run, ensemble, profile):
    idx = np.arange(0, len(ensemble), 20)
    now = fine_run.ensemble
    got = eval_f0(fine_run, now.x[idx], now.v[idx], profile)
    assert np.max(np.abs(got - profile(ensemble.x[idx], ensemble.v[idx]))) <= 1e-8


def test_backward_flow_preserves_volume(fine_run):
    idx = np.arange(0, len(fine_run.ensemble), 40)
    jac = tangent_flow(fine_run, fine_run.ensemble.x[idx], fine_run.ensemble.v[idx])
    assert np.max(np.abs(np.linalg.det(jac) - 1.0)) <= 1e-8


def test_energy_drift_decreases_at_fourth_order(ensemble):
    drifts = []
    for dt in (0.1, 0.05, 0.025):
        h = [vp_energy(ensemble)]
        run_vp(ensemble, 1.0, dt, callback=lambda s: h.append(vp_energy(s.ensemble)))
        drifts.append(max(abs(np.array(h) / h[0] - 1.0)))
    orders = np.log2(np.array(drifts[:-1]) / drifts[1:])
    assert np.all(orders >= 3.5)


@pytest.mark.slow
def test_energy_drift_at_fine_step(ensemble):
    h = [vp_energy(ensemble)]
    run_vp(ensemble, 1.0, 1e-3, callback=lambda s: h.append(vp_energy(s.ensemble)))
    assert max(abs(np.array(h) / h[0] - 1.0)) <= 1e-6


def test_continuity_residual_of_static_marker_is_zero():
    s = start_vp(Ensemble(np.zeros((1, 3)), np.zeros((1, 3)), [1.0], SofteningSpec(0.2)))
    s = step_vp(s, 0.05)
    probes = np.array([[0.1, 0.2, 0.0], [0.5, -0.3, 0.2]])
    assert continuity_residual(s, probes) <= 1e-10
    assert np.allclose(field_e0(s, np.zeros(3)), 0.0)


def _streaming_residual(ensemble, dt, shift=0.0):
    e = ensemble.copy()
    e.x = e.x + shift
    s = step_vp(start_vp(e), dt)
    return continuity_residual(s, np.array([[0.2, 0.1, -0.3], [0.5, 0.5, 0.0]]) + shift)


def test_continuity_residual_converges_and_is_translation_invariant(ensemble):
    r1, r2 = _streaming_residual(ensemble, 0.04), _streaming_residual(ensemble, 0.02)
    assert np.log2(r1 / r2) >= 1.8
    shifted = _streaming_residual(ensemble, 0.04, np.array([1.5, -0.5, 0.25]))
    assert np.isclose(shifted, r1, rtol=1e-6)
