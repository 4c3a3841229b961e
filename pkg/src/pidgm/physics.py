"""PDE residuals, collocation sampling and the residual loss."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .autodiff import AutodiffError, Node, Tape
from .nn import forward_with_input_derivs

__all__ = [
    "BURGERS_NU",
    "Domain",
    "BURGERS_DOMAIN",
    "PdeOperator",
    "BURGERS",
    "burgers_residual",
    "pde_residual_loss",
    "sample_collocation",
]

BURGERS_NU = 0.01 / math.pi


@dataclass(frozen=True)
class Domain:
    x_min: float
    x_max: float
    t_min: float
    t_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.t_min < self.t_max):
            raise ValueError("domain bounds must satisfy min < max")

    def contains(self, x, t) -> np.ndarray:
        x, t = np.asarray(x), np.asarray(t)
        return (x >= self.x_min) & (x <= self.x_max) & (t >= self.t_min) & (t <= self.t_max)


BURGERS_DOMAIN = Domain(-1.0, 1.0, 0.0, 1.0)


def burgers_residual(u: Node, u_x: Node, u_t: Node, u_xx: Node, nu: float) -> Node:
    """Elementwise ``u_t + u u_x - nu u_xx``."""
    if nu <= 0:
        raise ValueError("nu must be positive")
    if not (u.shape == u_x.shape == u_t.shape == u_xx.shape):
        raise AutodiffError("residual inputs must share a shape")
    return u_t + u * u_x - nu * u_xx


@dataclass(frozen=True)
class PdeOperator:
    """Residual rule ``(u, u_x, u_t, u_xx, **coefficients) -> r``."""

    name: str
    rule: Callable[..., Node]
    coefficients: dict = field(default_factory=dict)
    domain: Domain = BURGERS_DOMAIN

    def residual(self, u, u_x, u_t, u_xx) -> Node:
        return self.rule(u, u_x, u_t, u_xx, **self.coefficients)


BURGERS = PdeOperator("burgers", burgers_residual, {"nu": BURGERS_NU}, BURGERS_DOMAIN)


def _column(tape: Tape, values) -> Node:
    return tape.constant(np.asarray(values, dtype=np.float64).reshape(-1, 1))


def pde_residual_loss(gen_params, tape: Tape, collocation, z, nu: float = BURGERS_NU, operator: PdeOperator | None = None) -> Node:
    """Mean squared PDE residual of the generator at the collocation points.

    ``collocation`` is an ``(n, 2)`` array of (x, t); ``z`` holds one latent
    draw per point.  Target residuals are zero.
    """
    pts = np.asarray(collocation, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64).ravel()
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("collocation batch is empty")
    if z.shape[0] != pts.shape[0]:
        raise ValueError("need one latent sample per collocation point")
    u, u_x, u_t, u_xx = forward_with_input_derivs(
        gen_params, tape, _column(tape, pts[:, 0]), _column(tape, pts[:, 1]), _column(tape, z)
    )
    if operator is None:
        r = burgers_residual(u, u_x, u_t, u_xx, nu)
    else:
        r = operator.residual(u, u_x, u_t, u_xx)
    return tape.apply("mean", tape.apply("square", r))


def sample_collocation(n: int, domain: Domain = BURGERS_DOMAIN, seed=0) -> np.ndarray:
    """Latin hypercube sample of ``n`` points over the domain rectangle, shape ``(n, 2)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    unit = qmc.LatinHypercube(d=2, seed=np.random.default_rng(seed)).random(n)
    lo = np.array([domain.x_min, domain.t_min])
    hi = np.array([domain.x_max, domain.t_max])
    return lo + unit * (hi - lo)
