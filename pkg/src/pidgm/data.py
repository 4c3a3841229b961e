"""Burgers training data and the Cole-Hopf exact solution."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .physics import BURGERS_DOMAIN, BURGERS_NU, Domain, sample_collocation

__all__ = [
    "Dataset",
    "build_burgers_dataset",
    "split_n_u",
    "noisy_initial_condition",
    "exact_burgers_solution",
    "uniform_test_points",
    "evaluation_grid",
    "write_dataset_csv",
    "read_dataset_csv",
]

NOISE_STD = 0.1


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observations ``data`` (rows x, t, u) tagged by ``kinds`` plus collocation points (x, t)."""

    data: np.ndarray
    kinds: tuple[str, ...]
    collocation: np.ndarray
    domain: Domain = BURGERS_DOMAIN
    noisy: bool = False
    seed: int | None = None

    @property
    def n_u(self) -> int:
        return self.data.shape[0]

    @property
    def n_r(self) -> int:
        return self.collocation.shape[0]

    @property
    def inputs(self) -> np.ndarray:
        return self.data[:, :2]

    def equals(self, other: "Dataset") -> bool:
        return (
            self.kinds == other.kinds
            and np.array_equal(self.data, other.data)
            and np.array_equal(self.collocation, other.collocation)
        )


def noisy_initial_condition(x, eps):
    """``-sin(pi (x + 2 d)) + d`` with ``d = eps / exp(3 |x|)``."""
    x = np.asarray(x, dtype=np.float64)
    delta = np.asarray(eps, dtype=np.float64) / np.exp(3.0 * np.abs(x))
    return -np.sin(np.pi * (x + 2.0 * delta)) + delta


def split_n_u(n_u: int) -> tuple[int, int]:
    """Split a total observation count into (initial, per-boundary) counts, one third each.

    Any remainder goes to the initial condition.
    """
    per_side = n_u // 3
    return n_u - 2 * per_side, per_side


def build_burgers_dataset(
    n_initial: int = 100,
    n_boundary_per_side: int = 50,
    n_collocation: int = 10000,
    noisy: bool = True,
    seed: int = 0,
) -> Dataset:
    if min(n_initial, n_boundary_per_side, n_collocation) < 0:
        raise ValueError("counts must be non-negative")
    ss = np.random.SeedSequence(seed)
    ic_rng, bc_rng, noise_rng, colloc_seed = ss.spawn(4)
    ic_rng, bc_rng, noise_rng = (np.random.default_rng(s) for s in (ic_rng, bc_rng, noise_rng))

    x0 = ic_rng.uniform(-1.0, 1.0, n_initial)
    if noisy:
        u0 = noisy_initial_condition(x0, noise_rng.normal(0.0, NOISE_STD, n_initial))
    else:
        u0 = -np.sin(np.pi * x0)
    t_left = bc_rng.uniform(0.0, 1.0, n_boundary_per_side)
    t_right = bc_rng.uniform(0.0, 1.0, n_boundary_per_side)

    nb = n_boundary_per_side
    data = np.concatenate(
        [
            np.column_stack([x0, np.zeros(n_initial), u0]),
            np.column_stack([-np.ones(nb), t_left, np.zeros(nb)]),
            np.column_stack([np.ones(nb), t_right, np.zeros(nb)]),
        ]
    ).reshape(-1, 3)
    kinds = ("ic",) * n_initial + ("bc",) * (2 * nb)
    colloc = sample_collocation(n_collocation, BURGERS_DOMAIN, colloc_seed) if n_collocation else np.zeros((0, 2))
    return Dataset(data, kinds, colloc, BURGERS_DOMAIN, noisy, seed)


@lru_cache(maxsize=8)
def _hermite(n: int):
    return np.polynomial.hermite.hermgauss(n)


def exact_burgers_solution(x, t, nu: float = BURGERS_NU, n_nodes: int = 128) -> np.ndarray:
    """Cole-Hopf solution of Burgers with ``u(x, 0) = -sin(pi x)`` on [-1, 1].

    ``u = -int sin(pi(x-e)) f(x-e) exp(-e^2/4 nu t) de / int f(x-e) exp(-e^2/4 nu t) de``
    with ``f(y) = exp(-cos(pi y) / (2 pi nu))``, evaluated by Gauss-Hermite
    quadrature after substituting ``e = sqrt(4 nu t) s``.
    """
    if nu <= 0:
        raise ValueError("nu must be positive")
    x, t = np.broadcast_arrays(np.asarray(x, dtype=np.float64), np.asarray(t, dtype=np.float64))
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    shape = x.shape
    x, t = x.ravel(), t.ravel()
    out = -np.sin(np.pi * x)
    pos = t > 0
    if np.any(pos):
        nodes, weights = _hermite(n_nodes)
        xs, ts = x[pos], t[pos]
        y = xs[:, None] - np.sqrt(4.0 * nu * ts)[:, None] * nodes[None, :]
        g = -np.cos(np.pi * y) / (2.0 * np.pi * nu)
        g -= g.max(axis=1, keepdims=True)
        f = weights[None, :] * np.exp(g)
        out[pos] = -(np.sin(np.pi * y) * f).sum(axis=1) / f.sum(axis=1)
    return out.reshape(shape)


def uniform_test_points(n: int = 25600, domain: Domain = BURGERS_DOMAIN, seed: int = 1234) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(domain.x_min, domain.x_max, n), rng.uniform(domain.t_min, domain.t_max, n)])


def evaluation_grid(nx: int = 256, nt: int = 100, domain: Domain = BURGERS_DOMAIN) -> np.ndarray:
    """Uniform (x, t) grid, x varying fastest; shape ``(nx * nt, 2)``."""
    xs = np.linspace(domain.x_min, domain.x_max, nx)
    ts = np.linspace(domain.t_min, domain.t_max, nt)
    tt, xx = np.meshgrid(ts, xs, indexing="ij")
    return np.column_stack([xx.ravel(), tt.ravel()])


def write_dataset_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "x", "t", "u"])
        for kind, (x, t, u) in zip(ds.kinds, ds.data):
            w.writerow([kind, repr(float(x)), repr(float(t)), repr(float(u))])
        for x, t in ds.collocation:
            w.writerow(["colloc", repr(float(x)), repr(float(t)), ""])


def read_dataset_csv(path, noisy: bool = False, seed: int | None = None) -> Dataset:
    rows, kinds, colloc = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["kind", "x", "t", "u"]:
            raise ValueError(f"{path}: expected header kind,x,t,u, got {reader.fieldnames}")
        for line, rec in enumerate(reader, start=2):
            kind = rec["kind"]
            if kind == "colloc":
                colloc.append((float(rec["x"]), float(rec["t"])))
            elif kind in ("ic", "bc"):
                rows.append((float(rec["x"]), float(rec["t"]), float(rec["u"])))
                kinds.append(kind)
            else:
                raise ValueError(f"{path}:{line}: unknown kind {kind!r}")
    data = np.array(rows, dtype=np.float64).reshape(-1, 3)
    return Dataset(data, tuple(kinds), np.array(colloc, dtype=np.float64).reshape(-1, 2), BURGERS_DOMAIN, noisy, seed)

