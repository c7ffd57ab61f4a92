"""Layer specifications with their forward and backward kernels.

Shapes exclude the batch axis. A 1-D signal with channels is laid out as
``(channels, length)``; dense layers take ``(features,)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError, ValidationError

Shape = tuple[int, ...]


@dataclass(frozen=True)
class Activation:
    """Pointwise nonlinearity.

    ``param`` is the negative slope for ``leaky_relu`` and the output scale for
    ``tanh``; it is ignored otherwise.
    """

    kind: str = "linear"
    param: float = 1.0

    KINDS = ("linear", "tanh", "sigmoid", "leaky_relu")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValidationError(f"unknown activation {self.kind!r}")

    def forward(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "linear":
            return z
        if self.kind == "tanh":
            return self.param * np.tanh(z)
        if self.kind == "sigmoid":
            # split by sign so exp never overflows
            out = np.empty_like(z)
            pos = z >= 0
            out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
            ez = np.exp(z[~pos])
            out[~pos] = ez / (1.0 + ez)
            return out
        return np.where(z > 0, z, self.param * z)

    def backward(self, z: np.ndarray, a: np.ndarray, da: np.ndarray) -> np.ndarray:
        if self.kind == "linear":
            return da
        if self.kind == "tanh":
            t = a / self.param if self.param != 0 else np.tanh(z)
            return da * self.param * (1.0 - t * t)
        if self.kind == "sigmoid":
            return da * a * (1.0 - a)
        return da * np.where(z > 0, 1.0, self.param)


LINEAR = Activation("linear")


def leaky_relu(slope: float = 0.2) -> Activation:
    return Activation("leaky_relu", slope)


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base class. Subclasses are frozen dataclasses, so specs compare by value."""

    kind = "layer"

    def out_shape(self, in_shape: Shape) -> Shape:
        raise NotImplementedError

    def init_params(self, in_shape: Shape, rng: np.random.Generator, dtype) -> dict[str, np.ndarray]:
        return {}

    def init_state(self, in_shape: Shape, dtype) -> dict[str, np.ndarray]:
        return {}

    def forward(self, params, state, x, training: bool, update_stats: bool):
        raise NotImplementedError

    def backward(self, params, cache, dy):
        raise NotImplementedError

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for k, v in self.__dict__.items():
            d[k] = {"kind": v.kind, "param": v.param} if isinstance(v, Activation) else v
        return d


@dataclass(frozen=True)
class FullyConnected(Layer):
    in_features: int
    out_features: int
    activation: Activation = LINEAR

    kind = "fully_connected"

    def out_shape(self, in_shape):
        if tuple(in_shape) != (self.in_features,):
            raise ShapeError(f"fully_connected expects ({self.in_features},), got {tuple(in_shape)}")
        return (self.out_features,)

    def init_params(self, in_shape, rng, dtype):
        return {
            "W": _glorot(rng, (self.in_features, self.out_features), self.in_features, self.out_features, dtype),
            "b": np.zeros(self.out_features, dtype=dtype),
        }

    def forward(self, params, state, x, training, update_stats):
        z = x @ params["W"] + params["b"]
        a = self.activation.forward(z)
        return a, (x, z, a)

    def backward(self, params, cache, dy):
        x, z, a = cache
        dz = self.activation.backward(z, a, dy)
        grads = {"W": x.T @ dz, "b": dz.sum(axis=0)}
        return dz @ params["W"].T, grads


@dataclass(frozen=True)
class Conv1D(Layer):
    """Valid (unpadded) strided 1-D convolution over ``(channels, length)`` input."""

    in_channels: int
    filters: int
    window: int
    stride: int = 1
    activation: Activation = LINEAR

    kind = "conv1d"

    def out_shape(self, in_shape):
        if len(in_shape) != 2 or in_shape[0] != self.in_channels:
            raise ShapeError(f"conv1d expects ({self.in_channels}, length), got {tuple(in_shape)}")
        length = in_shape[1]
        if length < self.window:
            raise ShapeError(f"conv1d window {self.window} longer than input length {length}")
        return (self.filters, (length - self.window) // self.stride + 1)

    def init_params(self, in_shape, rng, dtype):
        shape = (self.filters, self.in_channels, self.window)
        return {
            "W": _glorot(rng, shape, self.in_channels * self.window, self.filters * self.window, dtype),
            "b": np.zeros(self.filters, dtype=dtype),
        }

    def forward(self, params, state, x, training, update_stats):
        positions = (x.shape[2] - self.window) // self.stride + 1
        # (batch, channels, positions, window)
        patches = sliding_window_view(x, self.window, axis=2)[:, :, ::self.stride, :][:, :, :positions, :]
        z = np.einsum("bcpw,fcw->bfp", patches, params["W"], optimize=True) + params["b"][None, :, None]
        a = self.activation.forward(z)
        return a, (x.shape, patches, z, a)

    def backward(self, params, cache, dy):
        x_shape, patches, z, a = cache
        dz = self.activation.backward(z, a, dy)
        grads = {
            "W": np.einsum("bcpw,bfp->fcw", patches, dz, optimize=True),
            "b": dz.sum(axis=(0, 2)),
        }
        dpatch = np.einsum("bfp,fcw->bcpw", dz, params["W"], optimize=True)
        dx = np.zeros(x_shape, dtype=dz.dtype)
        positions = dz.shape[2]
        span = self.stride * (positions - 1) + 1
        for w in range(self.window):
            dx[:, :, w:w + span:self.stride] += dpatch[:, :, :, w]
        return dx, grads


@dataclass(frozen=True)
class MaxPool1D(Layer):
    """Non-overlapping max pooling along the length axis; a ragged tail is dropped."""

    pool_width: int

    kind = "max_pool1d"

    def out_shape(self, in_shape):
        if len(in_shape) != 2:
            raise ShapeError(f"max_pool1d expects (channels, length), got {tuple(in_shape)}")
        if in_shape[1] < self.pool_width:
            raise ShapeError(f"pool width {self.pool_width} longer than input length {in_shape[1]}")
        return (in_shape[0], in_shape[1] // self.pool_width)

    def forward(self, params, state, x, training, update_stats):
        b, c, length = x.shape
        p = length // self.pool_width
        blocks = x[:, :, :p * self.pool_width].reshape(b, c, p, self.pool_width)
        idx = blocks.argmax(axis=3)
        out = np.take_along_axis(blocks, idx[..., None], axis=3)[..., 0]
        return out, (x.shape, idx)

    def backward(self, params, cache, dy):
        (b, c, length), idx = cache
        p = idx.shape[2]
        dblocks = np.zeros((b, c, p, self.pool_width), dtype=dy.dtype)
        np.put_along_axis(dblocks, idx[..., None], dy[..., None], axis=3)
        dx = np.zeros((b, c, length), dtype=dy.dtype)
        dx[:, :, :p * self.pool_width] = dblocks.reshape(b, c, p * self.pool_width)
        return dx, {}


@dataclass(frozen=True)
class BatchNorm(Layer):
    """Batch normalization over the batch axis of ``(features,)`` input.

    Training mode uses batch statistics; inference mode uses running
    statistics, updated as ``running = momentum * running + (1 - momentum) * batch``.
    """

    features: int
    momentum: float = 0.9
    eps: float = 1e-5

    kind = "batch_norm"

    def out_shape(self, in_shape):
        if tuple(in_shape) != (self.features,):
            raise ShapeError(f"batch_norm expects ({self.features},), got {tuple(in_shape)}")
        return (self.features,)

    def init_params(self, in_shape, rng, dtype):
        return {"gamma": np.ones(self.features, dtype=dtype), "beta": np.zeros(self.features, dtype=dtype)}

    def init_state(self, in_shape, dtype):
        return {
            "running_mean": np.zeros(self.features, dtype=dtype),
            "running_var": np.ones(self.features, dtype=dtype),
        }

    def forward(self, params, state, x, training, update_stats):
        if training:
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            if update_stats:
                m = self.momentum
                state["running_mean"][...] = m * state["running_mean"] + (1 - m) * mu
                state["running_var"][...] = m * state["running_var"] + (1 - m) * var
        else:
            mu, var = state["running_mean"], state["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv_std
        return params["gamma"] * xhat + params["beta"], (xhat, inv_std, training)

    def backward(self, params, cache, dy):
        xhat, inv_std, training = cache
        grads = {"gamma": (dy * xhat).sum(axis=0), "beta": dy.sum(axis=0)}
        dxhat = dy * params["gamma"]
        if not training:
            return dxhat * inv_std, grads
        n = dy.shape[0]
        dx = inv_std / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        return dx, grads


@dataclass(frozen=True)
class Flatten(Layer):
    kind = "flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, params, state, x, training, update_stats):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, params, cache, dy):
        return dy.reshape(cache), {}


@dataclass(frozen=True)
class Reshape(Layer):
    shape: tuple[int, ...]

    kind = "reshape"

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))

    def out_shape(self, in_shape):
        if int(np.prod(in_shape)) != int(np.prod(self.shape)):
            raise ShapeError(f"cannot reshape {tuple(in_shape)} to {self.shape}")
        return self.shape

    def forward(self, params, state, x, training, update_stats):
        return x.reshape((x.shape[0],) + self.shape), x.shape

    def backward(self, params, cache, dy):
        return dy.reshape(cache), {}


LAYER_TYPES = {cls.kind: cls for cls in (FullyConnected, Conv1D, MaxPool1D, BatchNorm, Flatten, Reshape)}


def layer_from_dict(d: dict) -> Layer:
    d = dict(d)
    cls = LAYER_TYPES.get(d.pop("kind", None))
    if cls is None:
        raise ValidationError(f"unknown layer spec {d!r}")
    if "activation" in d:
        d["activation"] = Activation(**d["activation"])
    if "shape" in d:
        d["shape"] = tuple(d["shape"])
    return cls(**d)
