"""Dense vector-field network with a flat parameter vector and manual backprop."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ACTIVATIONS = ("silu", "relu", "tanh")


class NonFiniteError(FloatingPointError):
    """A NaN or Inf appeared in an input, loss or integration state."""


@dataclass(eq=False)
class VectorFieldNet:
    """MLP ``u(x_t, cond)``.

    The input layer sees ``[x_t, cond, embed(cond)]`` where ``embed`` maps each
    group alpha to ``cond_embed_dim`` sinusoidal features, so
    ``layer_dims[0] == d + k * (1 + cond_embed_dim)``. Parameters are stored
    layer by layer as a row-major ``(fan_in, fan_out)`` weight followed by the
    bias.
    """

    layer_dims: tuple
    activation: str
    params: np.ndarray
    k: int
    cond_embed_dim: int = 0

    def __post_init__(self):
        self.layer_dims = tuple(int(n) for n in self.layer_dims)
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise ValueError(f"invalid layer_dims {self.layer_dims}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.cond_embed_dim % 2:
            raise ValueError("cond_embed_dim must be even")
        expected = self.d + self.k * (1 + self.cond_embed_dim)
        if self.layer_dims[0] != expected:
            raise ValueError(f"input width {self.layer_dims[0]} != d + k*(1+embed) = {expected}")
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (param_count(self.layer_dims),):
            raise ValueError(f"params length {self.params.size} != {param_count(self.layer_dims)}")

    @property
    def d(self) -> int:
        return self.layer_dims[-1]

    def layers(self, params=None):
        """Views ``[(W, b), ...]`` into ``params`` (defaults to the net's own)."""
        p = self.params if params is None else params
        out, off = [], 0
        for fan_in, fan_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            w = p[off : off + fan_in * fan_out].reshape(fan_in, fan_out)
            off += fan_in * fan_out
            out.append((w, p[off : off + fan_out]))
            off += fan_out
        return out

    def copy(self) -> "VectorFieldNet":
        return VectorFieldNet(self.layer_dims, self.activation, self.params.copy(), self.k, self.cond_embed_dim)


def param_count(layer_dims) -> int:
    return sum((a + 1) * b for a, b in zip(layer_dims[:-1], layer_dims[1:]))


def input_width(d: int, k: int, cond_embed_dim: int) -> int:
    return d + k * (1 + cond_embed_dim)


def init(layer_dims, activation: str = "silu", seed: int = 0, k: int | None = None, cond_embed_dim: int = 0):
    """He-scaled hidden weights, zero biases, zero output layer (so u == 0)."""
    layer_dims = tuple(int(n) for n in layer_dims)
    if len(layer_dims) < 2:
        raise ValueError("layer_dims needs at least input and output widths")
    if k is None:
        k = (layer_dims[0] - layer_dims[-1]) // (1 + cond_embed_dim)
    rng = np.random.default_rng(seed)
    params = np.zeros(param_count(layer_dims))
    net = VectorFieldNet(layer_dims, activation, params, k, cond_embed_dim)
    for w, _ in net.layers()[:-1]:
        w[...] = rng.standard_normal(w.shape) * np.sqrt(2.0 / w.shape[0])
    return net


def build(d: int, k: int, hidden=(128, 128, 128), activation="silu", cond_embed_dim=16, seed=0):
    dims = (input_width(d, k, cond_embed_dim), *hidden, d)
    return init(dims, activation, seed, k=k, cond_embed_dim=cond_embed_dim)


def embed_cond(cond: np.ndarray, dim: int) -> np.ndarray:
    """Sinusoidal features ``sin/cos(2^i * pi * alpha)`` for each alpha."""
    if dim == 0:
        return cond[..., :0]
    freqs = np.pi * 2.0 ** np.arange(dim // 2)
    ang = cond[..., None] * freqs
    feats = np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)
    return feats.reshape(*cond.shape[:-1], cond.shape[-1] * dim)


def _sigmoid(h):
    return 0.5 * (1.0 + np.tanh(0.5 * h))


def _act(name, h):
    if name == "silu":
        return h * _sigmoid(h)
    if name == "relu":
        return np.maximum(h, 0.0)
    return np.tanh(h)


def _act_grad(name, h, a):
    if name == "silu":
        s = _sigmoid(h)
        return s * (1.0 + h * (1.0 - s))
    if name == "relu":
        return (h > 0).astype(h.dtype)
    return 1.0 - a * a


def _inputs(net: VectorFieldNet, x_t, cond):
    x_t = np.asarray(x_t, dtype=np.float64)
    cond = np.asarray(cond, dtype=np.float64)
    if x_t.shape[-1] != net.d or cond.shape[-1] != net.k:
        raise ValueError(f"expected x_t[..., {net.d}] and cond[..., {net.k}], got {x_t.shape}, {cond.shape}")
    single = x_t.ndim == 1
    x2 = np.atleast_2d(x_t)
    c2 = np.broadcast_to(np.atleast_2d(cond), (x2.shape[0], net.k))
    if not (np.all(np.isfinite(x2)) and np.all(np.isfinite(c2))):
        raise NonFiniteError("non-finite network input")
    h0 = np.concatenate([x2, c2, embed_cond(c2, net.cond_embed_dim)], axis=1)
    return h0, single


def forward_cached(net: VectorFieldNet, h0: np.ndarray):
    layers = net.layers()
    acts = [h0]
    pre = []
    h = h0
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        if i < len(layers) - 1:
            pre.append(z)
            h = _act(net.activation, z)
            acts.append(h)
        else:
            h = z
    return h, (acts, pre)


def backward_cached(net: VectorFieldNet, cache, grad_out: np.ndarray) -> np.ndarray:
    """Parameter gradient of ``sum(grad_out * output)`` given a forward cache."""
    acts, pre = cache
    layers = net.layers()
    grad = np.zeros_like(net.params)
    glayers = net.layers(grad)
    g = grad_out
    for i in range(len(layers) - 1, -1, -1):
        gw, gb = glayers[i]
        gw[...] = acts[i].T @ g
        gb[...] = g.sum(axis=0)
        if i > 0:
            g = (g @ layers[i][0].T) * _act_grad(net.activation, pre[i - 1], acts[i])
    return grad


def forward(net: VectorFieldNet, x_t, cond) -> np.ndarray:
    h0, single = _inputs(net, x_t, cond)
    out, _ = forward_cached(net, h0)
    return out[0] if single else out


def backward(net: VectorFieldNet, x_t, cond, loss_grad) -> np.ndarray:
    """dL/dtheta for ``L = <loss_grad, forward(x_t, cond)>`` (summed over rows)."""
    h0, _ = _inputs(net, x_t, cond)
    g = np.atleast_2d(np.asarray(loss_grad, dtype=np.float64))
    if g.shape != (h0.shape[0], net.d):
        raise ValueError(f"loss_grad shape {g.shape} does not match output ({h0.shape[0]}, {net.d})")
    _, cache = forward_cached(net, h0)
    return backward_cached(net, cache, g)


def save_checkpoint(path, net: VectorFieldNet, flow_config: dict | None = None, extra: dict | None = None) -> Path:
    """One JSON header line followed by the raw little-endian float64 parameters."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "layer_dims": list(net.layer_dims),
        "activation": net.activation,
        "k": net.k,
        "cond_embed_dim": net.cond_embed_dim,
        "n_params": int(net.params.size),
        "flow_config": flow_config,
    }
    if extra:
        header.update(extra)
    data = json.dumps(header, separators=(",", ":")).encode() + b"\n" + net.params.astype("<f8").tobytes()
    path.write_bytes(data)
    return path


def load_checkpoint(path):
    """Return ``(net, header)``; ``header["flow_config"]`` is the raw config dict."""
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ValueError(f"{path}: missing checkpoint header")
    header = json.loads(raw[:nl])
    params = np.frombuffer(raw[nl + 1 :], dtype="<f8").astype(np.float64)
    if params.size != header["n_params"]:
        raise ValueError(f"{path}: expected {header['n_params']} parameters, found {params.size}")
    net = VectorFieldNet(header["layer_dims"], header["activation"], params, header["k"], header["cond_embed_dim"])
    return net, header
