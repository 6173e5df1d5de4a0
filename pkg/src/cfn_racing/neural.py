"""Small dense policy network trained with a weighted L1 loss and Adam.

Everything here is plain numpy.  Weight matrices are stored ``(in, out)`` so
a batch ``x`` of shape ``(B, in)`` maps to ``x @ W + b``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

INPUT_LAYOUT = "wp5_bodyvel_yawrate"
LAYER_SIZES = (19, 64, 32, 16, 4)
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


_ACTIVATIONS = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0).astype(float)),
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
}


@dataclass
class PolicyNet:
    weights: list
    biases: list
    hidden_activation: str = "relu"
    output_activation: str = "tanh"
    dropout_rate: float = 0.5
    dropout_layer: int = 2  # 1-based index of the hidden layer whose activations are dropped
    input_layout: str = INPUT_LAYOUT

    def __post_init__(self):
        if self.hidden_activation not in _ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation != "tanh":
            raise ValueError("only a tanh output layer is supported")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i}: expects {w.shape[0]} inputs, previous layer gives "
                                 f"{self.weights[i - 1].shape[1]}")

    @property
    def sizes(self) -> tuple:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def params(self) -> list:
        """Flat parameter list ``[W0, b0, W1, b1, ...]`` (views, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "PolicyNet":
        return PolicyNet([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                         self.hidden_activation, self.output_activation, self.dropout_rate,
                         self.dropout_layer, self.input_layout)


def init_net(rng: np.random.Generator, sizes=LAYER_SIZES, hidden_activation: str = "relu",
             input_scale: float = 10.0, dropout_rate: float = 0.5) -> PolicyNet:
    """He-uniform init; the first layer is shrunk by ``input_scale`` because
    inputs are raw metres and m/s rather than unit-scale features."""
    ws, bs = [], []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        lim = math.sqrt(6.0 / n_in)
        if i == 0:
            lim /= input_scale
        if i == len(sizes) - 2:
            lim = math.sqrt(6.0 / (n_in + n_out))
        ws.append(rng.uniform(-lim, lim, size=(n_in, n_out)))
        bs.append(np.zeros(n_out))
    return PolicyNet(ws, bs, hidden_activation, dropout_rate=dropout_rate)


def zero_net(sizes=LAYER_SIZES) -> PolicyNet:
    return PolicyNet([np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
                     [np.zeros(b) for b in sizes[1:]])


def dropout_mask(net: PolicyNet, batch: int, rng: np.random.Generator) -> np.ndarray:
    keep = 1.0 - net.dropout_rate
    width = net.sizes[net.dropout_layer]
    return (rng.random((batch, width)) < keep) / keep


@dataclass
class Cache:
    inputs: list = field(default_factory=list)  # input to each layer
    pre: list = field(default_factory=list)  # pre-activations
    post: list = field(default_factory=list)  # activations before dropout
    mask: np.ndarray | None = None


def forward(net: PolicyNet, x, train: bool = False, rng: np.random.Generator | None = None,
            mask: np.ndarray | None = None):
    """Returns ``(output, cache)``; output has the batch shape of ``x``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != net.sizes[0]:
        raise ValueError(f"input has {h.shape[1]} features, network expects {net.sizes[0]}")
    act, _ = _ACTIVATIONS[net.hidden_activation]
    cache = Cache()
    n_layers = len(net.weights)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        cache.inputs.append(h)
        z = h @ w + b
        cache.pre.append(z)
        if i == n_layers - 1:
            h = np.tanh(z)
            cache.post.append(h)
            break
        h = act(z)
        cache.post.append(h)
        if train and i + 1 == net.dropout_layer and net.dropout_rate > 0:
            if mask is None:
                if rng is None:
                    raise ValueError("train-mode forward needs a mask or an rng for dropout")
                mask = dropout_mask(net, h.shape[0], rng)
            cache.mask = mask
            h = h * mask
    return (h[0] if single else h), cache


DEFAULT_LOSS_WEIGHTS = (1.0, 1.0, 1.0, 1.0)


def weighted_l1(pred, label, weights=DEFAULT_LOSS_WEIGHTS) -> float:
    """Batch mean of sum_j w_j |pred_j - label_j|."""
    d = np.abs(np.atleast_2d(pred) - np.atleast_2d(label))
    return float((d @ np.asarray(weights, dtype=float)).mean())


def loss_and_grad(net: PolicyNet, x, label, weights=DEFAULT_LOSS_WEIGHTS, train: bool = True,
                  rng: np.random.Generator | None = None, mask: np.ndarray | None = None):
    """Weighted-L1 loss and gradients ``[dW0, db0, dW1, db1, ...]``.

    Subgradients are 0 at the |.| kink and at ReLU kinks.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(label, dtype=float))
    out, cache = forward(net, x, train=train, rng=rng, mask=mask)
    w = np.asarray(weights, dtype=float)
    diff = out - y
    loss = float((np.abs(diff) @ w).mean())
    _, dact = _ACTIVATIONS[net.hidden_activation]
    n_layers = len(net.weights)
    grads = [None] * (2 * n_layers)
    dz = np.sign(diff) * w / x.shape[0] * (1.0 - out * out)
    for i in range(n_layers - 1, -1, -1):
        grads[2 * i] = cache.inputs[i].T @ dz
        grads[2 * i + 1] = dz.sum(axis=0)
        if i == 0:
            break
        dh = dz @ net.weights[i].T
        if cache.mask is not None and i == net.dropout_layer:
            dh = dh * cache.mask
        dz = dh * dact(cache.pre[i - 1], cache.post[i - 1])
    return loss, grads


# -- optimisation --------------------------------------------------------------

@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adam_step(params: list, grads: list, opt: AdamState) -> None:
    """Bias-corrected Adam, updating ``params`` and ``opt`` in place."""
    if len(params) != len(grads) or len(params) != len(opt.m):
        raise ValueError("params, grads and optimiser state have different lengths")
    opt.step += 1
    b1, b2 = opt.beta1, opt.beta2
    c1 = 1.0 - b1 ** opt.step
    c2 = 1.0 - b2 ** opt.step
    for p, g, m, v in zip(params, grads, opt.m, opt.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)


class OuNoise:
    """Ornstein-Uhlenbeck process, Euler-Maruyama discretised."""

    def __init__(self, rng: np.random.Generator, size: int = 4, theta: float = 0.15, mu: float = 0.0,
                 sigma: float = 0.2, dt: float = 1.0 / 60.0, x0=None):
        self.rng = rng
        self.theta, self.mu, self.sigma, self.dt = theta, mu, sigma, dt
        self.x = np.full(size, float(mu)) if x0 is None else np.array(x0, dtype=float).reshape(size)

    def reset(self):
        self.x = np.full_like(self.x, self.mu)

    def sample(self) -> np.ndarray:
        noise = self.rng.standard_normal(self.x.shape)
        self.x = self.x + self.theta * (self.mu - self.x) * self.dt + self.sigma * math.sqrt(self.dt) * noise
        return self.x.copy()


# -- model files ---------------------------------------------------------------

def model_to_dict(net: PolicyNet) -> dict:
    layers = [{"in": int(w.shape[0]), "out": int(w.shape[1]),
               "w": [float(x) for x in w.ravel()], "b": [float(x) for x in b]}
              for w, b in zip(net.weights, net.biases)]
    return {"format_version": FORMAT_VERSION, "input_layout": net.input_layout, "layers": layers,
            "hidden_activation": net.hidden_activation, "output_activation": net.output_activation}


def save_model(net: PolicyNet) -> bytes:
    return (json.dumps(model_to_dict(net)) + "\n").encode("utf-8")


def _field(d: dict, key: str, where: str):
    if key not in d:
        raise ModelFormatError(f"{where}: missing field {key!r}")
    return d[key]


def load_model(data: bytes | str) -> PolicyNet:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ModelFormatError(f"model file is not UTF-8: {e}") from None
    try:
        d = json.loads(data)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"model file is not valid JSON: {e}") from None
    if not isinstance(d, dict):
        raise ModelFormatError("model file must hold a JSON object")
    known = {"format_version", "input_layout", "layers", "hidden_activation", "output_activation"}
    extra = set(d) - known
    if extra:
        raise ModelFormatError(f"unknown field(s) {sorted(extra)}")
    if _field(d, "format_version", "model") != FORMAT_VERSION:
        raise ModelFormatError(f"format_version: unsupported value {d['format_version']!r}")
    layout = _field(d, "input_layout", "model")
    if not isinstance(layout, str):
        raise ModelFormatError("input_layout: expected a string")
    hidden = _field(d, "hidden_activation", "model")
    if hidden not in _ACTIVATIONS:
        raise ModelFormatError(f"hidden_activation: unknown value {hidden!r}")
    if _field(d, "output_activation", "model") != "tanh":
        raise ModelFormatError(f"output_activation: unsupported value {d['output_activation']!r}")
    layers = _field(d, "layers", "model")
    if not isinstance(layers, list) or not layers:
        raise ModelFormatError("layers: expected a non-empty list")
    ws, bs = [], []
    for i, layer in enumerate(layers):
        where = f"layers[{i}]"
        if not isinstance(layer, dict):
            raise ModelFormatError(f"{where}: expected an object")
        n_in, n_out = _field(layer, "in", where), _field(layer, "out", where)
        w, b = _field(layer, "w", where), _field(layer, "b", where)
        if not all(isinstance(v, int) and v > 0 for v in (n_in, n_out)):
            raise ModelFormatError(f"{where}: 'in'/'out' must be positive integers")
        if not isinstance(w, list) or len(w) != n_in * n_out:
            got = len(w) if isinstance(w, list) else type(w).__name__
            raise ModelFormatError(f"{where}: 'w' declares {n_in}x{n_out}={n_in * n_out} values, found {got}")
        if not isinstance(b, list) or len(b) != n_out:
            got = len(b) if isinstance(b, list) else type(b).__name__
            raise ModelFormatError(f"{where}: 'b' declares {n_out} values, found {got}")
        try:
            wa = np.array(w, dtype=float).reshape(n_in, n_out)
            ba = np.array(b, dtype=float)
        except (TypeError, ValueError) as e:
            raise ModelFormatError(f"{where}: non-numeric weight ({e})") from None
        if not (np.all(np.isfinite(wa)) and np.all(np.isfinite(ba))):
            raise ModelFormatError(f"{where}: non-finite weight")
        if ws and ws[-1].shape[1] != n_in:
            raise ModelFormatError(f"{where}: 'in'={n_in} does not match previous 'out'={ws[-1].shape[1]}")
        ws.append(wa)
        bs.append(ba)
    return PolicyNet(ws, bs, hidden_activation=hidden, input_layout=layout)
