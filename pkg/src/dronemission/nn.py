"""Minimal dense network engine: 2 ReLU hidden layers, linear output,
mean-squared-error loss with optional per-sample output masking, analytic
backprop, and Adam. Everything is float64 numpy; parameters live in one flat
vector so optimizer updates touch a single contiguous array.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


class FormatError(ValueError):
    """Corrupt or incompatible serialized parameter buffer."""


_MAGIC = b"DMNN"
_VERSION = 1
_HEADER = struct.Struct("<4sI4I")


@lru_cache(maxsize=None)
def _layout(dims: tuple[int, int, int, int]) -> tuple[tuple[int, int, tuple[int, ...]], ...]:
    """(offset, size, shape) for W1, b1, W2, b2, W3, b3 within the flat vector."""
    d0, d1, d2, d3 = dims
    shapes = [(d0, d1), (d1,), (d1, d2), (d2,), (d2, d3), (d3,)]
    out = []
    off = 0
    for shape in shapes:
        size = 1
        for d in shape:
            size *= d
        out.append((off, size, shape))
        off += size
    return tuple(out)


def parameter_count(dims: tuple[int, int, int, int]) -> int:
    return sum(size for _, size, _ in _layout(tuple(dims)))


@dataclass
class Mlp:
    dims: tuple[int, int, int, int]
    theta: np.ndarray  # flat float64 parameter vector; mutated only in place
    _views: tuple = field(default=None, repr=False, compare=False)

    def views(self) -> tuple[np.ndarray, ...]:
        """(W1, b1, W2, b2, W3, b3) as reshaped views into theta."""
        if self._views is None:
            self._views = tuple(self.theta[off:off + size].reshape(shape)
                                for off, size, shape in _layout(self.dims))
        return self._views


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    _scratch: np.ndarray = field(default=None, repr=False, compare=False)


def init(dims, seed: int) -> Mlp:
    """Scaled-variance init: weights N(0, 2/fan_in), biases zero."""
    dims = tuple(int(d) for d in dims)
    if len(dims) != 4 or any(d < 1 for d in dims):
        raise ValueError("dims must be 4 positive layer sizes")
    rng = np.random.default_rng(seed)
    theta = np.zeros(parameter_count(dims), dtype=np.float64)
    net = Mlp(dims=dims, theta=theta)
    w1, _, w2, _, w3, _ = net.views()
    for w in (w1, w2, w3):
        fan_in = w.shape[0]
        w[:] = rng.standard_normal(w.shape) * np.sqrt(2.0 / fan_in)
    return net


def init_adam(net: Mlp, learning_rate: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    n = net.theta.size
    return AdamState(first_moment=np.zeros(n), second_moment=np.zeros(n),
                     learning_rate=learning_rate, beta1=beta1, beta2=beta2,
                     epsilon=epsilon, _scratch=np.zeros(n))


def _forward_cached(net: Mlp, x: np.ndarray):
    w1, b1, w2, b2, w3, b3 = net.views()
    z1 = x @ w1 + b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ w2 + b2
    h2 = np.maximum(z2, 0.0)
    out = h2 @ w3 + b3
    return z1, h1, z2, h2, out


def forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Q-values for one input vector or a (batch, input) matrix."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if x.shape[-1] != net.dims[0]:
        raise ValueError(f"input width {x.shape[-1]} != {net.dims[0]}")
    out = _forward_cached(net, np.atleast_2d(x))[-1]
    return out[0] if single else out


def backward(net: Mlp, x: np.ndarray, target: np.ndarray,
             action_mask=None, _cache=None) -> tuple[np.ndarray, float]:
    """Gradient of the masked MSE loss w.r.t. all parameters.

    With a mask, only the indexed output of each sample carries error; masked
    entries contribute exactly zero, and the divisor stays batch*output_width,
    so a masked pass equals an unmasked pass whose target matches the
    prediction everywhere off the mask. Returns (flat gradient, loss).
    """
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    target = np.atleast_2d(target)
    if x.shape[-1] != net.dims[0]:
        raise ValueError(f"input width {x.shape[-1]} != {net.dims[0]}")
    if target.shape != (x.shape[0], net.dims[3]):
        raise ValueError(f"target shape {target.shape} does not match "
                         f"({x.shape[0]}, {net.dims[3]})")

    z1, h1, z2, h2, out = _cache if _cache is not None else _forward_cached(net, x)
    n, d_out = out.shape

    err = out - target
    if action_mask is not None:
        if single and np.isscalar(action_mask):
            action_mask = [action_mask]
        idx = np.asarray(action_mask, dtype=np.intp)
        keep = np.zeros_like(err)
        rows = np.arange(n)
        keep[rows, idx] = err[rows, idx]
        err = keep
    loss = float(np.sum(err * err) / (n * d_out))
    d_out_grad = (2.0 / (n * d_out)) * err

    w1, b1, w2, b2, w3, b3 = net.views()
    grads = np.empty_like(net.theta)
    g = Mlp(dims=net.dims, theta=grads)
    gw1, gb1, gw2, gb2, gw3, gb3 = g.views()

    gw3[:] = h2.T @ d_out_grad
    gb3[:] = d_out_grad.sum(axis=0)
    dh2 = d_out_grad @ w3.T
    dz2 = dh2 * (z2 > 0.0)
    gw2[:] = h1.T @ dz2
    gb2[:] = dz2.sum(axis=0)
    dh1 = dz2 @ w2.T
    dz1 = dh1 * (z1 > 0.0)
    gw1[:] = x.T @ dz1
    gb1[:] = dz1.sum(axis=0)
    return grads, loss


def adam_step(net: Mlp, state: AdamState, grads: np.ndarray) -> tuple[Mlp, AdamState]:
    """One bias-corrected Adam update, in place on net and state.

    The moment updates are written in incremental form (m += (1-b1)(g-m)) and
    the bias corrections are folded into scalar factors so the whole update is
    a handful of allocation-free vector ops on the flat parameter buffer.
    """
    if grads.shape != net.theta.shape:
        raise ValueError("gradient shape does not match parameters")
    state.step_count += 1
    t = state.step_count
    m, v = state.first_moment, state.second_moment
    s = state._scratch if state._scratch is not None else np.empty_like(m)

    np.subtract(grads, m, out=s)
    s *= 1.0 - state.beta1
    m += s
    np.multiply(grads, grads, out=s)
    s -= v
    s *= 1.0 - state.beta2
    v += s

    # theta -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
    np.sqrt(v, out=s)
    s *= 1.0 / np.sqrt(1.0 - state.beta2 ** t)
    s += state.epsilon
    np.divide(m, s, out=s)
    s *= state.learning_rate / (1.0 - state.beta1 ** t)
    net.theta -= s
    return net, state


def copy_parameters(source: Mlp, dest: Mlp) -> None:
    if source.dims != dest.dims:
        raise ValueError("network dims differ")
    dest.theta[:] = source.theta


def clone(net: Mlp) -> Mlp:
    return Mlp(dims=net.dims, theta=net.theta.copy())


def save_parameters(net: Mlp) -> bytes:
    """Little-endian buffer: magic, format version, 4 layer dims, raw float64
    parameters in W1,b1,W2,b2,W3,b3 order."""
    header = _HEADER.pack(_MAGIC, _VERSION, *net.dims)
    return header + np.ascontiguousarray(net.theta, dtype="<f8").tobytes()


def load_parameters(buffer: bytes) -> Mlp:
    if len(buffer) < _HEADER.size:
        raise FormatError("buffer shorter than header")
    magic, version, *dims = _HEADER.unpack_from(buffer)
    if magic != _MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != _VERSION:
        raise FormatError(f"unsupported format version {version}")
    dims = tuple(dims)
    expected = _HEADER.size + 8 * parameter_count(dims)
    if len(buffer) != expected:
        raise FormatError(f"buffer length {len(buffer)}, expected {expected}")
    theta = np.frombuffer(buffer, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    return Mlp(dims=dims, theta=theta)
