import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pidgm.autodiff import AutodiffError, Tape, backward, grad_check
from pidgm.nn import (
    MlpSpec,
    NetworkParams,
    bind,
    bind_flat,
    forward,
    forward_with_input_derivs,
    load_params,
    predict,
    save_params,
    xavier_init,
)

SMALL = MlpSpec(3, 2, 6, 1)


def test_spec_validation():
    with pytest.raises(ValueError):
        MlpSpec(3, 0, 5, 1)
    with pytest.raises(ValueError):
        MlpSpec(0, 2, 5, 1)
    with pytest.raises(ValueError):
        MlpSpec(3, 2, 5, 1, activation="relu")


def test_parameter_count_for_4x50_generator():
    # 3*50+50 + 3*(50*50+50) + 50+1
    assert MlpSpec(3, 4, 50, 1).n_params == 200 + 3 * 2550 + 51


def test_layer_shapes():
    assert MlpSpec(3, 2, 4, 2).layer_shapes() == [(4, 3), (4, 4), (2, 4)]


def test_xavier_statistics_and_zero_bias():
    spec = MlpSpec(200, 1, 300, 1)
    p = xavier_init(spec, 0)
    w = p.weights[0]
    assert w.std() == pytest.approx(np.sqrt(2.0 / 500), rel=0.02)
    assert abs(w.mean()) < 3 * np.sqrt(2.0 / 500) / np.sqrt(w.size)
    assert all(np.all(b == 0) for b in p.biases)


def test_xavier_is_seeded():
    a = xavier_init(SMALL, 7).flatten()
    np.testing.assert_array_equal(a, xavier_init(SMALL, 7).flatten())
    assert not np.array_equal(a, xavier_init(SMALL, 8).flatten())


def test_flat_round_trip_and_shape_errors():
    p = xavier_init(SMALL, 1)
    q = NetworkParams.from_flat(SMALL, p.flatten())
    np.testing.assert_array_equal(p.flatten(), q.flatten())
    with pytest.raises(ValueError):
        NetworkParams.from_flat(SMALL, np.zeros(SMALL.n_params + 1))
    with pytest.raises(ValueError):
        NetworkParams(SMALL, p.weights[:-1], p.biases)


def test_params_are_immutable():
    p = xavier_init(SMALL, 1)
    with pytest.raises(ValueError):
        p.weights[0][0, 0] = 1.0


def test_forward_matches_predict():
    p = xavier_init(SMALL, 2)
    x = np.random.default_rng(0).normal(size=(9, 3))
    tape = Tape()
    out = forward(p, tape, tape.constant(x))
    np.testing.assert_allclose(out.value, predict(p, x), rtol=1e-14)


def test_forward_rejects_wrong_width():
    tape = Tape()
    with pytest.raises(AutodiffError):
        forward(xavier_init(SMALL, 0), tape, tape.constant(np.zeros((2, 4))))


def test_zero_network_outputs_zero():
    p = xavier_init(SMALL, 0).with_zero_weights()
    np.testing.assert_array_equal(predict(p, np.ones((4, 3))), np.zeros((4, 1)))


def test_save_load_round_trip(tmp_path):
    p = xavier_init(MlpSpec(3, 3, 7, 2), 4)
    save_params(p, tmp_path / "p.json")
    q = load_params(tmp_path / "p.json")
    assert q.spec == p.spec
    np.testing.assert_array_equal(q.flatten(), p.flatten())


def test_bind_flat_matches_bind():
    p = xavier_init(SMALL, 3)
    x = np.random.default_rng(1).normal(size=(5, 3))
    tape = Tape()
    a = forward(bind(p, tape), tape, tape.constant(x))
    b = forward(bind_flat(SMALL, tape, tape.leaf(p.flatten())), tape, tape.constant(x))
    np.testing.assert_array_equal(a.value, b.value)


def _fd_input_derivs(p, x, t, z, h=1e-4):
    def u(xx, tt):
        return predict(p, np.column_stack([xx, tt, z])).ravel()

    u0 = u(x, t)
    ux = (u(x + h, t) - u(x - h, t)) / (2 * h)
    ut = (u(x, t + h) - u(x, t - h)) / (2 * h)
    uxx = (u(x + h, t) - 2 * u0 + u(x - h, t)) / h**2
    return u0, ux, ut, uxx


def test_input_derivatives_of_one_hidden_layer_closed_form():
    # u = v tanh(w x + b): u_x = v w s, u_xx = -2 v w^2 tanh s
    spec = MlpSpec(3, 1, 1, 1)
    w, b, v = 0.7, 0.2, 1.3
    p = NetworkParams(spec, (np.array([[w, 0.0, 0.0]]), np.array([[v]])), (np.array([b]), np.zeros(1)))
    x = np.array([[0.4]])
    tape = Tape()
    u, ux, ut, uxx = forward_with_input_derivs(p, tape, tape.constant(x), tape.constant([[0.0]]), tape.constant([[0.0]]))
    th = np.tanh(w * 0.4 + b)
    s = 1 - th**2
    assert u.value[0, 0] == pytest.approx(v * th, rel=1e-14)
    assert ux.value[0, 0] == pytest.approx(v * w * s, rel=1e-14)
    assert ut.value[0, 0] == 0.0
    assert uxx.value[0, 0] == pytest.approx(-2 * v * w * w * th * s, rel=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(2, 12))
def test_input_derivatives_match_finite_differences(seed, depth, width):
    rng = np.random.default_rng(seed)
    p = xavier_init(MlpSpec(3, depth, width, 1), rng)
    x, t, z = rng.uniform(-1, 1, 8), rng.uniform(0, 1, 8), rng.normal(size=8)
    tape = Tape()
    col = lambda a: tape.constant(a.reshape(-1, 1))  # noqa: E731
    got = forward_with_input_derivs(p, tape, col(x), col(t), col(z))
    ref = _fd_input_derivs(p, x, t, z)
    for g, r, tol in zip(got, ref, (1e-12, 1e-7, 1e-7, 1e-4)):
        np.testing.assert_allclose(g.value.ravel(), r, atol=tol, rtol=tol)


def test_input_derivatives_differentiable_in_parameters():
    p = xavier_init(MlpSpec(3, 2, 5, 1), 11)
    rng = np.random.default_rng(2)
    pts = rng.uniform(-1, 1, (6, 3))

    def f(tape, flat):
        net = bind_flat(p.spec, tape, flat)
        col = lambda j: tape.constant(pts[:, j : j + 1])  # noqa: E731
        u, ux, ut, uxx = forward_with_input_derivs(net, tape, col(0), col(1), col(2))
        return tape.apply("mean", tape.apply("square", ut + u * ux - 0.1 * uxx))

    assert grad_check(f, p.flatten()) < 1e-6


def test_gradient_wrt_parameters_via_bind():
    p = xavier_init(SMALL, 5)
    x = np.random.default_rng(3).normal(size=(4, 3))
    tape = Tape()
    net = bind(p, tape)
    out = tape.apply("sum", forward(net, tape, tape.constant(x)))
    g = backward(tape, out, net.leaves())
    # output bias gradient is the batch size
    assert g[net.biases[-1]][0] == pytest.approx(4.0)
