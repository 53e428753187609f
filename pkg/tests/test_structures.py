import numpy as np
import pytest

from sst.errors import InvalidConfig, UnknownElement, ValidationError
from sst.modal_id import mac
from sst.structures import (
    PRESETS,
    ExcitationSpec,
    ModelConfig,
    StateSpec,
    analytic_modes,
    apply_state,
    build_model,
    check_mirror_symmetric,
    default_damage_element,
    gaussian_excitation,
    load_matrix,
    preset,
    simulate_response,
    state_spec,
)


def test_two_dof_closed_form():
    m, k = 2.0, 500.0
    model = build_model(ModelConfig(2, mass=m, stiffness=k))
    truth = analytic_modes(model)
    np.testing.assert_allclose(truth.frequencies, np.sqrt([k / m, 3 * k / m]) / (2 * np.pi), rtol=1e-12)
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(np.abs(truth.mode_shapes), s, rtol=1e-12)
    assert np.sign(truth.mode_shapes[1, 0]) != np.sign(truth.mode_shapes[1, 1])


def test_single_dof_is_grounded_spring():
    model = build_model(ModelConfig(1, mass=4.0, stiffness=(2 * np.pi * 3.0) ** 2 * 4.0))
    assert analytic_modes(model).frequencies[0] == pytest.approx(3.0, rel=1e-12)


@pytest.mark.parametrize("name", PRESETS)
def test_rayleigh_calibration(name):
    truth = analytic_modes(preset(name))
    np.testing.assert_allclose(truth.damping_ratios[:2], 0.02, rtol=1e-12)
    assert np.all(truth.damping_ratios[2:] > 0.02)


def test_explicit_rayleigh_and_bad_inputs():
    model = build_model({"dof_count": 3, "rayleigh": (0.1, 0.0)})
    assert model.rayleigh_a0 == 0.1 and model.rayleigh_a1 == 0.0
    with pytest.raises(InvalidConfig):
        build_model(ModelConfig(3, stiffness=[1.0, 2.0]))
    with pytest.raises(InvalidConfig):
        build_model(ModelConfig(0))
    with pytest.raises(InvalidConfig):
        build_model({"dof_count": 2, "colour": "red"})


@pytest.mark.parametrize("name", PRESETS)
def test_presets_symmetric_and_states_mirror(name):
    model = preset(name)
    check_mirror_symmetric(model)
    beta = apply_state(model, state_spec(model, "beta"))
    gamma = apply_state(model, state_spec(model, "gamma"))
    e = default_damage_element(model)
    assert beta.element_stiffness[e] == pytest.approx(0.6 * model.element_stiffness[e])
    assert gamma.element_stiffness[model.n_elements - 1 - e] == pytest.approx(0.6 * model.element_stiffness[e])
    tb, tg = analytic_modes(beta), analytic_modes(gamma)
    np.testing.assert_allclose(tb.frequencies, tg.frequencies, rtol=1e-9)
    for sb, sg in zip(tb.mode_shapes, tg.mode_shapes):
        assert mac(sb, sg[::-1]) >= 0.99
    # damage lowers every frequency or leaves it unchanged
    assert np.all(tb.frequencies <= analytic_modes(model).frequencies * (1 + 1e-12))


def test_state_errors():
    model = preset("bridge1")
    with pytest.raises(UnknownElement):
        apply_state(model, StateSpec("beta", (99,), 0.6))
    with pytest.raises(InvalidConfig):
        StateSpec("beta", (1,), 1.5)
    with pytest.raises(InvalidConfig):
        state_spec(model, "delta")
    with pytest.raises(ValidationError):
        check_mirror_symmetric(apply_state(model, state_spec(model, "beta")))


def test_excitation_is_seeded_and_scaled():
    spec = ExcitationSpec(duration_s=64, seed=11)
    a, b = gaussian_excitation(spec), gaussian_excitation(spec)
    assert a == b and len(a) == 64 * 256
    assert np.std(a.samples) == pytest.approx(0.3, rel=0.03)
    assert gaussian_excitation(ExcitationSpec(duration_s=64, seed=12)) != a
    assert ExcitationSpec().n_samples == 262144
    with pytest.raises(InvalidConfig):
        ExcitationSpec(mean=1.0)
    with pytest.raises(InvalidConfig):
        ExcitationSpec(duration_s=1.001, sample_rate_hz=256)


def test_load_patterns():
    ex = gaussian_excitation(ExcitationSpec(duration_s=8))
    uni = load_matrix(ex, 4)
    assert np.all(uni == ex.samples[:, None])
    ind = load_matrix(ex, 4, "independent", seed=3)
    assert np.array_equal(ind[:, 0], ex.samples)
    assert abs(np.corrcoef(ind.T)[1, 2]) < 0.05
    with pytest.raises(InvalidConfig):
        load_matrix(ex, 4, "random")


def test_simulated_response_is_mirror_image_for_mirrored_states():
    model = preset("bridge1")
    ex = gaussian_excitation(ExcitationSpec(duration_s=16))
    rb = simulate_response(apply_state(model, state_spec(model, "beta")), ex)
    rg = simulate_response(apply_state(model, state_spec(model, "gamma")), ex)
    assert rb.responses.state_label == "beta"
    np.testing.assert_allclose(rb.responses.data, rg.responses.data[::-1], atol=1e-9)
