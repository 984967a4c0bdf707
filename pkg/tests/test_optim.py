"""Adam against scalar hand calculations, the cosine schedule, and the
generic first-order meta-update closed form."""

import numpy as np
import pytest

from latopt.optim import AdamState, adam_step, cosine_lr, maml_meta_update


def test_adam_zero_gradient_keeps_params():
    state = AdamState()
    params = {"w": np.array([1.0, -2.0])}
    adam_step(state, params, {"w": np.zeros(2)}, lr=0.1)
    np.testing.assert_array_equal(params["w"], [1.0, -2.0])


def test_adam_first_step_scalar_oracle():
    # from zero state: m_hat = g, v_hat = g^2, step = -lr*g/(|g|+eps)
    state = AdamState()
    g = np.array([0.37])
    params = {"w": np.array([0.0])}
    adam_step(state, params, {"w": g}, lr=0.01)
    expected = -0.01 * g / (np.abs(g) + state.eps)
    np.testing.assert_allclose(params["w"], expected, atol=1e-15)


def test_adam_constant_gradient_step_magnitude_approaches_lr():
    state = AdamState()
    params = {"w": np.array([0.0])}
    g = {"w": np.array([2.5])}
    prev = params["w"].copy()
    for _ in range(500):
        prev = params["w"].copy()
        adam_step(state, params, g, lr=0.01)
    np.testing.assert_allclose(np.abs(params["w"] - prev), 0.01, rtol=1e-6)
    assert params["w"][0] < 0  # moves against the gradient sign


def test_adam_shape_mismatch():
    state = AdamState()
    with pytest.raises(ValueError):
        adam_step(state, {"w": np.zeros(2)}, {"w": np.zeros(3)}, lr=0.1)


def test_adam_state_scalars_mirror_params():
    state = AdamState()
    params = {"a": np.zeros((2, 3)), "b": np.zeros(4)}
    grads = {k: np.ones_like(v) for k, v in params.items()}
    adam_step(state, params, grads, lr=0.1)
    assert state.state_scalars() == 2 * (6 + 4)
    assert state.step == 1


def test_cosine_schedule_endpoints():
    assert cosine_lr(0, 100, 0.5) == 0.5
    assert abs(cosine_lr(100, 100, 0.5)) < 1e-16
    assert abs(cosine_lr(50, 100, 0.5) - 0.25) < 1e-15
    with pytest.raises(ValueError):
        cosine_lr(101, 100, 0.5)


def _quad_grad(params):
    return {k: v.copy() for k, v in params.items()}  # grad of 0.5*||w||^2


def test_maml_single_task_gamma_zero_is_sgd():
    params = {"w": np.array([2.0, -1.0])}
    out = maml_meta_update(params, [_quad_grad], gamma=0.0, eta=0.1)
    np.testing.assert_allclose(out["w"], params["w"] - 0.1 * params["w"], atol=1e-15)


def test_maml_identical_tasks_equal_single_task():
    params = {"w": np.array([1.5, 0.5])}
    one = maml_meta_update(params, [_quad_grad], gamma=0.05, eta=0.1)
    many = maml_meta_update(params, [_quad_grad] * 4, gamma=0.05, eta=0.1)
    np.testing.assert_allclose(one["w"], many["w"], atol=1e-15)


def test_maml_quadratic_closed_form_factor():
    # f(w) = 0.5||w||^2: per-coordinate update factor 1 - eta*(1 - gamma)
    gamma, eta = 0.13, 0.2
    params = {"w": np.array([3.0, -4.0, 0.5])}
    out = maml_meta_update(params, [_quad_grad], gamma=gamma, eta=eta)
    np.testing.assert_allclose(out["w"], (1 - eta * (1 - gamma)) * params["w"], atol=1e-12)


def test_maml_rejects_empty_tasks_and_negative_gamma():
    with pytest.raises(ValueError):
        maml_meta_update({"w": np.zeros(1)}, [], gamma=0.1, eta=0.1)
    with pytest.raises(ValueError):
        maml_meta_update({"w": np.zeros(1)}, [_quad_grad], gamma=-0.1, eta=0.1)
