"""Feed-forward tanh networks on the tape, with forward-propagated input derivatives."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .autodiff import AutodiffError, Node, Tape

__all__ = [
    "MlpSpec",
    "NetworkParams",
    "BoundParams",
    "xavier_init",
    "bind",
    "bind_flat",
    "forward",
    "forward_with_input_derivs",
    "predict",
    "save_params",
    "load_params",
]


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_layers: int
    hidden_width: int
    output_dim: int
    activation: str = "tanh"

    def __post_init__(self):
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise ValueError("hidden_layers and hidden_width must be >= 1")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be >= 1")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(out, in) shape of each weight matrix, input layer first."""
        dims = [self.input_dim] + [self.hidden_width] * self.hidden_layers + [self.output_dim]
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]

    @property
    def n_params(self) -> int:
        return sum(o * i + o for o, i in self.layer_shapes())


@dataclass(frozen=True, eq=False)
class NetworkParams:
    """Weights (row-major, out x in) and biases of an :class:`MlpSpec` network."""

    spec: MlpSpec
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        shapes = self.spec.layer_shapes()
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ValueError("layer count does not match spec")
        for (o, i), w, b in zip(shapes, self.weights, self.biases):
            if w.shape != (o, i) or b.shape != (o,):
                raise ValueError(f"expected W {(o, i)} and b {(o,)}, got {w.shape} and {b.shape}")
            w.flags.writeable = False
            b.flags.writeable = False

    def flatten(self) -> np.ndarray:
        """Layer by layer, weights then bias."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, spec: MlpSpec, flat) -> "NetworkParams":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (spec.n_params,):
            raise ValueError(f"expected {spec.n_params} parameters, got {flat.shape}")
        ws, bs, k = [], [], 0
        for o, i in spec.layer_shapes():
            ws.append(flat[k : k + o * i].reshape(o, i).copy())
            k += o * i
            bs.append(flat[k : k + o].copy())
            k += o
        return cls(spec, tuple(ws), tuple(bs))

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @classmethod
    def from_arrays(cls, spec: MlpSpec, arrays) -> "NetworkParams":
        return cls(spec, tuple(arrays[0::2]), tuple(arrays[1::2]))

    def with_zero_weights(self) -> "NetworkParams":
        return NetworkParams(
            self.spec, tuple(np.zeros_like(w) for w in self.weights), tuple(np.zeros_like(b) for b in self.biases)
        )


@dataclass(frozen=True, eq=False)
class BoundParams:
    """Network parameters recorded as nodes on one tape."""

    spec: MlpSpec
    weights: tuple[Node, ...]
    biases: tuple[Node, ...]

    def leaves(self) -> list[Node]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


def xavier_init(spec: MlpSpec, seed) -> NetworkParams:
    """Normal Xavier weights, variance 2/(fan_in + fan_out); zero biases.

    ``seed`` is anything accepted by :func:`numpy.random.default_rng`.
    """
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for o, i in spec.layer_shapes():
        ws.append(rng.normal(0.0, np.sqrt(2.0 / (i + o)), size=(o, i)))
        bs.append(np.zeros(o))
    return NetworkParams(spec, tuple(ws), tuple(bs))


def bind(params: NetworkParams, tape: Tape, requires_grad: bool = True) -> BoundParams:
    ws = tuple(tape.leaf(w, requires_grad) for w in params.weights)
    bs = tuple(tape.leaf(b, requires_grad) for b in params.biases)
    return BoundParams(params.spec, ws, bs)


def bind_flat(spec: MlpSpec, tape: Tape, flat: Node, offset: int = 0) -> BoundParams:
    """Slice a flat parameter node into layer nodes (used by gradient checks)."""
    ws, bs, k = [], [], offset
    for o, i in spec.layer_shapes():
        ws.append(tape.apply("segment", flat, start=k, shape=(o, i)))
        k += o * i
        bs.append(tape.apply("segment", flat, start=k, shape=(o,)))
        k += o
    return BoundParams(spec, tuple(ws), tuple(bs))


def _bound(params, tape: Tape) -> BoundParams:
    if isinstance(params, NetworkParams):
        return bind(params, tape, requires_grad=False)
    return params


def forward(params, tape: Tape, inputs: Node) -> Node:
    """Row-wise network output for an ``(n, input_dim)`` batch node."""
    net = _bound(params, tape)
    if len(inputs.shape) != 2 or inputs.shape[1] != net.spec.input_dim:
        raise AutodiffError(f"input shape {inputs.shape} does not match input_dim {net.spec.input_dim}")
    h = inputs
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = tape.apply("affine", h, w, b)
        if k < last:
            h = tape.apply("tanh", h)
    return h


def forward_with_input_derivs(params, tape: Tape, x: Node, t: Node, z: Node):
    """Return ``(u, u_x, u_t, u_xx)`` nodes for a 3-input network f(x, t, z).

    Derivatives are carried forward layer by layer.  With ``h = tanh(a)`` and
    ``s = 1 - h^2``: ``h' = s a'`` and ``h'' = s a'' - 2 h h' a'``.
    """
    net = _bound(params, tape)
    if net.spec.input_dim != 3:
        raise AutodiffError("forward_with_input_derivs needs input_dim == 3")
    for node in (x, t, z):
        if node.shape != x.shape or len(node.shape) != 2 or node.shape[1] != 1:
            raise AutodiffError("x, t, z must be equal-length (n, 1) batches")
    n = x.shape[0]
    inputs = tape.apply("concat", x, t, z)
    seed_x = np.zeros((n, 3))
    seed_x[:, 0] = 1.0
    seed_t = np.zeros((n, 3))
    seed_t[:, 1] = 1.0

    w, b = net.weights[0], net.biases[0]
    a = tape.apply("affine", inputs, w, b)
    a_x = tape.apply("affine", tape.constant(seed_x), w)
    a_t = tape.apply("affine", tape.constant(seed_t), w)
    a_xx = None  # first layer is affine in x
    for w, b in zip(net.weights[1:], net.biases[1:]):
        h = tape.apply("tanh", a)
        s = 1.0 - tape.apply("square", h)
        h_x = s * a_x
        h_t = s * a_t
        curv = 2.0 * (h * (h_x * a_x))
        h_xx = -curv if a_xx is None else s * a_xx - curv
        a = tape.apply("affine", h, w, b)
        a_x = tape.apply("affine", h_x, w)
        a_t = tape.apply("affine", h_t, w)
        a_xx = tape.apply("affine", h_xx, w)
    if a_xx is None:
        a_xx = tape.constant(np.zeros(a.shape))
    return a, a_x, a_t, a_xx


def predict(params: NetworkParams, inputs: np.ndarray) -> np.ndarray:
    """Plain numpy evaluation of the network, no tape."""
    h = np.asarray(inputs, dtype=np.float64)
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w.T + b
        if k < last:
            np.tanh(h, out=h)
    return h


def params_to_dict(params: NetworkParams) -> dict:
    return {"spec": asdict(params.spec), "params": params.flatten().tolist()}


def params_from_dict(d: dict) -> NetworkParams:
    spec = MlpSpec(**d["spec"])
    return NetworkParams.from_flat(spec, np.array(d["params"], dtype=np.float64))


def save_params(params: NetworkParams, path) -> None:
    """JSON checkpoint: ``{"spec": {...}, "params": [...]}``; floats round-trip exactly."""
    Path(path).write_text(json.dumps(params_to_dict(params)))


def load_params(path) -> NetworkParams:
    return params_from_dict(json.loads(Path(path).read_text()))
