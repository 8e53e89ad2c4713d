import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from darwin_kinetics.harness import (
    ConvergenceReport,
    RunConfig,
    box_probes,
    fit_slope,
    initial_ensemble,
    rescale_ensemble,
    rescale_equivalence_check,
    rescale_state,
    with_resolution,
)
from darwin_kinetics.vp import run_vp

LADDER = (4.0, 8.0, 16.0, 32.0)


@given(st.floats(0.5, 5.0), st.floats(-5, 5))
def test_fit_slope_is_exact_on_power_laws(order, log_k):
    fit = fit_slope([(c, np.exp(log_k) * c**-order) for c in LADDER])
    assert np.isclose(fit.order, order, atol=1e-9) and fit.flag == ""


@settings(max_examples=50)
@given(st.floats(1.0, 4.0), st.lists(st.floats(-0.05, 0.05), min_size=4, max_size=4))
def test_fit_slope_tolerates_five_percent_noise(order, noise):
    fit = fit_slope([(c, c**-order * (1 + n)) for c, n in zip(LADDER, noise)])
    assert abs(fit.order - order) < 0.1


def test_fit_slope_flags():
    assert fit_slope([(4, 1e-2), (8, 1e-3)]).flag == "2-point"
    floored = fit_slope([(4, 1e-2), (8, 1e-3), (16, 1e-4), (32, 0.0)])
    assert "1 at floor" in floored.flag and floored.points == 3
    assert fit_slope([(4, 0.0), (8, 0.0)]).flag == "below noise floor"
    with pytest.raises(ValueError):
        fit_slope([(4, 1.0)])


def test_report_writes_rows_and_slopes(tmp_path):
    rows = {"a": [1e-2, 1.25e-3, 1.5625e-4, 1.953125e-5], "b": [1.0, 2.0, 1.0, 0.5]}
    rep = ConvergenceReport(LADDER, rows, {k: fit_slope(list(zip(LADDER, v))) for k, v in rows.items()}, {})
    rep.write_csv(tmp_path / "conv.csv")
    assert (tmp_path / "conv.csv").read_text().splitlines()[0] == "c,a,b"
    slopes = (tmp_path / "conv_slopes.csv").read_text().splitlines()
    assert np.isclose(float(slopes[1].split(",")[1]), 3.0)
    assert rep.monotone_violations() == ["b"]


@pytest.mark.parametrize("kwargs", [{"c_list": (2.0, 8.0)}, {"c_list": (8.0, 4.0)}, {"dt": 0.0},
                                    {"t_end": 1.0, "dt": 0.3}, {"delta": -1.0}, {"rho2_source": "grid"}])
def test_run_config_validation(kwargs):
    with pytest.raises(ValueError):
        RunConfig(**kwargs)


def test_run_config_digest_is_stable_and_sensitive():
    assert RunConfig().digest() == RunConfig().digest()
    assert RunConfig().digest() != RunConfig(dt=0.025).digest()
    assert with_resolution(RunConfig(), 4).n_per_axis == 4


def test_memory_cap():
    with pytest.raises(ValueError):
        initial_ensemble(RunConfig(n_per_axis=5, dt=1e-5, t_end=1.0))


def test_box_probes_shape():
    assert box_probes(RunConfig(box_points=3)).shape == (27, 3)


def test_rescale_identity_and_group_property(ensemble):
    one = rescale_ensemble(ensemble, 1.0)
    assert np.array_equal(one.x, ensemble.x) and np.array_equal(one.v, ensemble.v)
    two = rescale_ensemble(rescale_ensemble(ensemble.copy(c=8.0), 0.5), 0.25)
    direct = rescale_ensemble(ensemble.copy(c=8.0), 0.125)
    assert np.allclose(two.x, direct.x, rtol=1e-12) and np.allclose(two.v, direct.v, rtol=1e-12)
    assert np.isclose(two.c, direct.c, rtol=1e-12)
    assert np.isclose(two.softening.delta, direct.softening.delta, rtol=1e-12)
    with pytest.raises(ValueError):
        rescale_ensemble(ensemble, 2.0)


def test_rescaled_state_keeps_history(ensemble):
    state = run_vp(ensemble, 0.1, 0.05)
    mapped = rescale_state(state, 0.25)
    assert mapped.history.size == state.history.size
    assert np.isclose(mapped.t, 0.1 * 8.0)
    with pytest.raises(TypeError):
        rescale_state(object(), 0.5)


def test_rescale_equivalence_is_at_round_off():
    rep = rescale_equivalence_check(RunConfig(t_end=0.2), 0.25)
    assert rep.passed
    assert max(rep.residual_e, rep.residual_b1) < 1e-10
