"""Adversarial training of a physics-informed generative model.

Three networks are trained together:

* generator ``f(x, t, z) -> u`` with latent ``z ~ N(0, 1)``;
* encoder ``(x, t, u) -> (mu, log sigma)`` of a Gaussian ``q(z | x, t, u)``;
* discriminator ``(x, t, u) -> T``, a logit separating generated from observed triples.

The discriminator maximizes ``E_fake[log sig(T)] + E_real[log(1 - sig(T))]``.
Generator and encoder minimize ``E_fake[T + (1 - lam) log q(z | x, t, u)]``
plus ``beta`` times the mean squared PDE residual.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import Node, Tape, backward
from .data import Dataset
from .nn import BoundParams, MlpSpec, NetworkParams, bind, forward, params_from_dict, params_to_dict, xavier_init
from .physics import BURGERS_NU, pde_residual_loss

__all__ = [
    "TrainConfig",
    "ModelTriplet",
    "AdamState",
    "TrainingDiverged",
    "History",
    "init_triplet",
    "generator_sample",
    "encoder_log_density",
    "discriminator_loss",
    "generator_loss",
    "adam_step",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "write_history_csv",
]

log = logging.getLogger(__name__)

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
LOG_SIGMA_CLAMP = 10.0


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 1.5
    beta: float = 1.0
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    steps: int = 30000
    k_g: int = 5
    k_d: int = 1
    data_batch: int | None = None  # None: full N_u
    colloc_batch: int = 128
    resample_collocation: bool = False
    pde_fresh_z: bool = True
    mode: str = "adversarial"  # or "pinn": deterministic data misfit + residual
    gen_layers: int = 4
    gen_width: int = 50
    enc_layers: int = 4
    enc_width: int = 50
    disc_layers: int = 4
    disc_width: int = 50
    log_every: int = 100
    seed: int = 0
    nu: float = BURGERS_NU
    # training floors sigma at 1: a tighter encoder makes the pathwise (z - mu)^2 / sigma^2
    # gradient swamp the discriminator signal and the generator collapses onto z
    log_sigma_min: float = 0.0
    log_sigma_max: float = LOG_SIGMA_CLAMP

    def __post_init__(self):
        if self.k_g < 1 or self.k_d < 1:
            raise ValueError("k_g and k_d must be >= 1")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.mode not in ("adversarial", "pinn"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.log_sigma_min <= self.log_sigma_max:
            raise ValueError("log_sigma_min must not exceed log_sigma_max")
        if self.colloc_batch < 1 or self.log_every < 1:
            raise ValueError("colloc_batch and log_every must be >= 1")

    @property
    def generator_spec(self) -> MlpSpec:
        return MlpSpec(3, self.gen_layers, self.gen_width, 1)

    @property
    def encoder_spec(self) -> MlpSpec:
        return MlpSpec(3, self.enc_layers, self.enc_width, 2)

    @property
    def discriminator_spec(self) -> MlpSpec:
        return MlpSpec(3, self.disc_layers, self.disc_width, 1)


@dataclass(frozen=True, eq=False)
class ModelTriplet:
    generator: NetworkParams
    encoder: NetworkParams
    discriminator: NetworkParams


@dataclass(frozen=True, eq=False)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, losses: dict):
        self.step = step
        self.losses = losses
        super().__init__(f"non-finite loss at step {step}: {losses}")


@dataclass
class History:
    rows: list[tuple[int, float, float, float]] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)


def init_triplet(cfg: TrainConfig, seed=None) -> ModelTriplet:
    seed = cfg.seed if seed is None else seed
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    g, e, d = ss.spawn(3)
    return ModelTriplet(
        xavier_init(cfg.generator_spec, g),
        xavier_init(cfg.encoder_spec, e),
        xavier_init(cfg.discriminator_spec, d),
    )


# ---------------------------------------------------------------------------
# model pieces on the tape


def _col(tape: Tape, values) -> Node:
    return tape.constant(np.asarray(values, dtype=np.float64).reshape(-1, 1))


def _triple(tape: Tape, x, t, u) -> Node:
    x = x if isinstance(x, Node) else _col(tape, x)
    t = t if isinstance(t, Node) else _col(tape, t)
    u = u if isinstance(u, Node) else _col(tape, u)
    return tape.apply("concat", x, t, u)


def generator_sample(theta, tape: Tape, x, t, z) -> Node:
    """``u = f(x, t, z)`` as an ``(n, 1)`` node; deterministic given z."""
    x, t, z = (np.asarray(a, dtype=np.float64).ravel() for a in (x, t, z))
    if not (x.shape == t.shape == z.shape):
        raise ValueError("x, t, z must have equal lengths")
    return forward(theta, tape, _triple(tape, x, t, z))


def encoder_log_density(phi, tape: Tape, x, t, u, z, log_sigma_bounds=(-LOG_SIGMA_CLAMP, LOG_SIGMA_CLAMP)) -> Node:
    """Per-row ``log N(z; mu, sigma^2)`` with ``(mu, log sigma) = encoder(x, t, u)``.

    ``log sigma`` is clipped to ``log_sigma_bounds`` before use.
    """
    out = forward(phi, tape, _triple(tape, x, t, u))
    if isinstance(z, Node):
        z_node = z
    else:
        z_node = _col(tape, z)
    if z_node.shape != (out.shape[0], 1):
        raise ValueError("z batch length does not match")
    mu = tape.apply("column", out, j=0)
    log_sigma = tape.apply("clip", tape.apply("column", out, j=1), lo=log_sigma_bounds[0], hi=log_sigma_bounds[1])
    inv_var = tape.apply("exp", -2.0 * log_sigma)
    sq = tape.apply("square", z_node - mu)
    return (-HALF_LOG_2PI) - log_sigma - 0.5 * (sq * inv_var)


def discriminator_loss(psi, theta, tape: Tape, data: np.ndarray, fake_inputs: np.ndarray, z) -> Node:
    """``mean log sig(T(fake)) + mean log(1 - sig(T(real)))``, to be maximized over psi."""
    data = np.asarray(data, dtype=np.float64)
    fake_inputs = np.asarray(fake_inputs, dtype=np.float64)
    if data.shape[0] == 0 or fake_inputs.shape[0] == 0:
        raise ValueError("empty batch")
    u_fake = generator_sample(theta, tape, fake_inputs[:, 0], fake_inputs[:, 1], z)
    t_fake = forward(psi, tape, _triple(tape, fake_inputs[:, 0], fake_inputs[:, 1], u_fake))
    t_real = forward(psi, tape, _triple(tape, data[:, 0], data[:, 1], data[:, 2]))
    fake_term = tape.apply("mean", tape.apply("log_sigmoid", t_fake))
    real_term = tape.apply("mean", tape.apply("log_sigmoid", -t_real))
    return fake_term + real_term


def generator_loss(theta, phi, psi, tape: Tape, fake_inputs: np.ndarray, z, lam: float,
                   log_sigma_bounds=(-LOG_SIGMA_CLAMP, LOG_SIGMA_CLAMP)) -> Node:
    """``mean[T(x, t, u) + (1 - lam) log q(z | x, t, u)]`` with ``u = f(x, t, z)``."""
    fake_inputs = np.asarray(fake_inputs, dtype=np.float64)
    if fake_inputs.shape[0] == 0:
        raise ValueError("empty batch")
    x, t = fake_inputs[:, 0], fake_inputs[:, 1]
    u = generator_sample(theta, tape, x, t, z)
    logit = tape.apply("mean", forward(psi, tape, _triple(tape, x, t, u)))
    if lam == 1.0:
        return logit
    log_q = tape.apply("mean", encoder_log_density(phi, tape, x, t, u, z, log_sigma_bounds))
    return logit + (1.0 - lam) * log_q


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray, cfg: TrainConfig | None = None):
    """One bias-corrected Adam update on flat vectors; returns ``(params', state')``."""
    cfg = cfg or TrainConfig()
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ValueError("params, grads and Adam moments must align")
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite gradient")
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    step = state.step + 1
    m = b1 * state.m + (1.0 - b1) * grads
    v = b2 * state.v + (1.0 - b2) * (grads * grads)
    m_hat = m / (1.0 - b1**step)
    v_hat = v / (1.0 - b2**step)
    new = params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return new, AdamState(m, v, step)


# ---------------------------------------------------------------------------
# training


def _flat_grads(grads: dict, bound: list[BoundParams]) -> np.ndarray:
    return np.concatenate([grads[leaf].ravel() for net in bound for leaf in net.leaves()])


def _unflatten(flat: np.ndarray, nets: list[NetworkParams]) -> list[NetworkParams]:
    out, k = [], 0
    for net in nets:
        n = net.spec.n_params
        out.append(NetworkParams.from_flat(net.spec, flat[k : k + n]))
        k += n
    return out


def _flatten(nets: list[NetworkParams]) -> np.ndarray:
    return np.concatenate([net.flatten() for net in nets])


class _Trainer:
    def __init__(self, cfg: TrainConfig, dataset: Dataset, model: ModelTriplet | None = None):
        self.cfg = cfg
        self.ds = dataset
        ss = np.random.SeedSequence(cfg.seed)
        init_ss, self_ss = ss.spawn(2)
        self.model = model or init_triplet(cfg, init_ss)
        self.rng = np.random.default_rng(self_ss)
        self.data = dataset.data
        self.inputs = dataset.inputs
        self.n_data = self.data.shape[0]
        self.data_batch = min(cfg.data_batch or self.n_data, self.n_data)
        self.colloc_pool = dataset.collocation
        self.colloc_batch = min(cfg.colloc_batch, max(len(self.colloc_pool), 1))
        self.disc_state = AdamState.zeros(self.model.discriminator.spec.n_params)
        gen_nets = [self.model.generator, self.model.encoder]
        self.gen_state = AdamState.zeros(sum(n.spec.n_params for n in gen_nets))

    # -- batches
    def _fake_inputs(self) -> np.ndarray:
        idx = self.rng.integers(0, self.n_data, size=self.data_batch)
        return self.inputs[idx]

    def _real_batch(self) -> np.ndarray:
        if self.data_batch == self.n_data:
            return self.data
        return self.data[self.rng.choice(self.n_data, size=self.data_batch, replace=False)]

    def _colloc(self) -> np.ndarray:
        if self.cfg.resample_collocation:
            from .physics import sample_collocation

            return sample_collocation(self.colloc_batch, self.ds.domain, self.rng)
        if self.colloc_batch == len(self.colloc_pool):
            return self.colloc_pool
        return self.colloc_pool[self.rng.choice(len(self.colloc_pool), size=self.colloc_batch, replace=False)]

    # -- steps
    def disc_step(self) -> float:
        m = self.model
        fake = self._fake_inputs()
        z = self.rng.standard_normal(fake.shape[0])
        real = self._real_batch()
        tape = Tape()
        psi = bind(m.discriminator, tape)
        loss = discriminator_loss(psi, m.generator, tape, real, fake, z)
        objective = -loss
        g = _flat_grads(backward(tape, objective, psi.leaves()), [psi])
        value = float(loss.value)
        if not math.isfinite(value):
            raise FloatingPointError(value)
        new, self.disc_state = adam_step(self.disc_state, m.discriminator.flatten(), g, self.cfg)
        self.model = replace(m, discriminator=NetworkParams.from_flat(m.discriminator.spec, new))
        return value

    def gen_step(self) -> tuple[float, float]:
        cfg, m = self.cfg, self.model
        tape = Tape()
        theta = bind(m.generator, tape)
        phi = bind(m.encoder, tape)
        fake = self._fake_inputs()
        z = self.rng.standard_normal(fake.shape[0])
        if cfg.mode == "pinn":
            real = self._real_batch()
            u = generator_sample(theta, tape, real[:, 0], real[:, 1], np.zeros(real.shape[0]))
            adv = tape.apply("mean", tape.apply("square", u - _col(tape, real[:, 2])))
        else:
            adv = generator_loss(
                theta, phi, m.discriminator, tape, fake, z, cfg.lam, (cfg.log_sigma_min, cfg.log_sigma_max)
            )
        pde_value = 0.0
        total = adv
        if (cfg.beta != 0.0 or cfg.mode == "pinn") and len(self.colloc_pool):
            colloc = self._colloc()
            if cfg.mode == "pinn":
                zc = np.zeros(colloc.shape[0])
            elif cfg.pde_fresh_z or colloc.shape[0] != z.shape[0]:
                zc = self.rng.standard_normal(colloc.shape[0])
            else:
                zc = z
            pde = pde_residual_loss(theta, tape, colloc, zc, cfg.nu)
            pde_value = float(pde.value)
            weight = 1.0 if cfg.mode == "pinn" else cfg.beta
            total = adv + weight * pde
        g = _flat_grads(backward(tape, total, theta.leaves() + phi.leaves()), [theta, phi])
        adv_value = float(adv.value)
        if not (math.isfinite(adv_value) and math.isfinite(pde_value)):
            raise FloatingPointError((adv_value, pde_value))
        nets = [m.generator, m.encoder]
        new, self.gen_state = adam_step(self.gen_state, _flatten(nets), g, self.cfg)
        gen, enc = _unflatten(new, nets)
        self.model = replace(m, generator=gen, encoder=enc)
        return adv_value, pde_value

    def run(self, progress=None) -> tuple[ModelTriplet, History]:
        cfg = self.cfg
        history = History()
        loss_d = loss_g = loss_pde = float("nan")
        for step in range(cfg.steps):
            try:
                if cfg.mode == "adversarial":
                    for _ in range(cfg.k_d):
                        loss_d = self.disc_step()
                for _ in range(cfg.k_g):
                    loss_g, loss_pde = self.gen_step()
            except FloatingPointError:
                raise TrainingDiverged(step, {"loss_D": loss_d, "loss_G": loss_g, "loss_PDE": loss_pde}) from None
            if (step + 1) % cfg.log_every == 0:
                history.rows.append((step + 1, loss_d, loss_g, loss_pde))
                if progress is not None:
                    progress(step + 1, loss_d, loss_g, loss_pde)
        return self.model, history


def train(cfg: TrainConfig, dataset: Dataset, model: ModelTriplet | None = None, progress=None):
    """Alternate ``k_d`` discriminator ascent steps and ``k_g`` generator/encoder descent steps.

    Returns ``(ModelTriplet, History)``.  Raises :class:`TrainingDiverged` on a
    non-finite loss or gradient.
    """
    return _Trainer(cfg, dataset, model).run(progress)


# ---------------------------------------------------------------------------
# persistence


def save_checkpoint(model: ModelTriplet, cfg: TrainConfig, path, final_losses: dict | None = None) -> None:
    payload = {
        "generator": params_to_dict(model.generator),
        "encoder": params_to_dict(model.encoder),
        "discriminator": params_to_dict(model.discriminator),
        "config": asdict(cfg),
        "final_losses": final_losses or {},
    }
    Path(path).write_text(json.dumps(payload))


def load_checkpoint(path) -> tuple[ModelTriplet, TrainConfig, dict]:
    payload = json.loads(Path(path).read_text())
    try:
        model = ModelTriplet(
            params_from_dict(payload["generator"]),
            params_from_dict(payload["encoder"]),
            params_from_dict(payload["discriminator"]),
        )
        cfg = TrainConfig(**payload["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: malformed checkpoint ({exc})") from exc
    if model.generator.spec != cfg.generator_spec:
        raise ValueError(f"{path}: generator spec does not match its config")
    return model, cfg, payload.get("final_losses", {})


def write_history_csv(history: History, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss_D", "loss_G", "loss_PDE"])
        for step, d, g, p in history.rows:
            w.writerow([step, repr(d), repr(g), repr(p)])
