import math

import numpy as np
import pytest

from pidgm.autodiff import AutodiffError, Tape
from pidgm.nn import MlpSpec, NetworkParams, xavier_init
from pidgm.physics import (
    BURGERS,
    BURGERS_DOMAIN,
    BURGERS_NU,
    Domain,
    PdeOperator,
    burgers_residual,
    pde_residual_loss,
    sample_collocation,
)


def _const(tape, v):
    return tape.constant(np.array([[v]]))


def test_viscosity_value():
    assert BURGERS_NU == pytest.approx(0.00318309886, rel=1e-9)


def test_residual_of_zero_field():
    tape = Tape()
    z = _const(tape, 0.0)
    assert burgers_residual(z, z, z, z, BURGERS_NU).value[0, 0] == 0.0


def test_residual_arithmetic():
    # 0.5 + 2*3 - nu*4
    tape = Tape()
    r = burgers_residual(_const(tape, 2.0), _const(tape, 3.0), _const(tape, 0.5), _const(tape, 4.0), BURGERS_NU)
    assert r.value[0, 0] == pytest.approx(6.5 - 4 * BURGERS_NU, rel=1e-15)


def test_residual_errors():
    tape = Tape()
    a = _const(tape, 1.0)
    with pytest.raises(ValueError):
        burgers_residual(a, a, a, a, 0.0)
    with pytest.raises(AutodiffError):
        burgers_residual(a, a, a, tape.constant(np.zeros((2, 1))), BURGERS_NU)


def test_operator_table_entry():
    tape = Tape()
    a = _const(tape, 1.0)
    assert BURGERS.residual(a, a, a, a).value[0, 0] == pytest.approx(2 - BURGERS_NU)
    heat = PdeOperator("heat", lambda u, u_x, u_t, u_xx, k: u_t - k * u_xx, {"k": 0.5})
    assert heat.residual(a, a, a, a).value[0, 0] == 0.5


def test_zero_generator_has_zero_pde_loss():
    p = xavier_init(MlpSpec(3, 2, 5, 1), 0).with_zero_weights()
    tape = Tape()
    loss = pde_residual_loss(p, tape, sample_collocation(16, seed=1), np.zeros(16))
    assert loss.value == 0.0


def test_linear_in_t_generator():
    # u = t gives r = 1 everywhere
    spec = MlpSpec(3, 1, 1, 1)
    p = NetworkParams(spec, (np.array([[0.0, 1e-3, 0.0]]), np.array([[1e3]])), (np.zeros(1), np.zeros(1)))
    tape = Tape()
    loss = pde_residual_loss(p, tape, np.array([[0.0, 0.1], [0.5, 0.2]]), np.zeros(2))
    assert loss.value == pytest.approx(1.0, rel=1e-5)


def test_pde_loss_input_errors():
    p = xavier_init(MlpSpec(3, 1, 3, 1), 0)
    tape = Tape()
    with pytest.raises(ValueError):
        pde_residual_loss(p, tape, np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ValueError):
        pde_residual_loss(p, tape, np.zeros((3, 2)), np.zeros(2))


def test_domain_validation_and_contains():
    with pytest.raises(ValueError):
        Domain(1.0, 1.0, 0.0, 1.0)
    assert BURGERS_DOMAIN.contains(-1.0, 1.0)
    assert not BURGERS_DOMAIN.contains(1.01, 0.5)


def test_lhs_one_point_per_stratum():
    n = 64
    pts = sample_collocation(n, seed=3)
    assert pts.shape == (n, 2)
    assert BURGERS_DOMAIN.contains(pts[:, 0], pts[:, 1]).all()
    bx = np.floor((pts[:, 0] + 1) / 2 * n).astype(int)
    bt = np.floor(pts[:, 1] * n).astype(int)
    assert sorted(bx) == list(range(n))
    assert sorted(bt) == list(range(n))


def test_lhs_determinism():
    np.testing.assert_array_equal(sample_collocation(10, seed=5), sample_collocation(10, seed=5))
    assert not np.array_equal(sample_collocation(10, seed=5), sample_collocation(10, seed=6))
    with pytest.raises(ValueError):
        sample_collocation(0)


def test_lhs_marginals_uniform():
    pts = sample_collocation(10_000, seed=0)
    assert pts[:, 0].mean() == pytest.approx(0.0, abs=0.01)
    assert pts[:, 1].mean() == pytest.approx(0.5, abs=0.01)
    assert math.isclose(pts[:, 1].var(), 1 / 12, rel_tol=0.02)
