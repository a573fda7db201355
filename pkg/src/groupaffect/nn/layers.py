"""Layer specs and their numpy implementations (NHWC, cross-correlation).

A spec is a small frozen dataclass describing one layer; ``build`` turns it
into a layer object holding parameters and the forward cache. Shapes passed
around are per-sample (no batch axis).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BN_MOMENTUM = 0.99
BN_EPS = 1e-5


class ShapeError(ValueError):
    """A layer stack does not fit its input."""


class Param:
    __slots__ = ("name", "data", "grad")

    def __init__(self, name: str, data: np.ndarray):
        self.name = name
        self.data = data
        self.grad = np.zeros_like(data)

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.data.shape})"


class Layer:
    def params(self) -> list[Param]:
        return []

    def buffers(self) -> list[np.ndarray]:
        return []

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _require_cache(self, cache):
        if cache is None:
            raise RuntimeError(f"{type(self).__name__}.backward called before forward")
        return cache


def _he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


# -- specs ------------------------------------------------------------------

@dataclass(frozen=True)
class Conv2dSpec:
    kind: ClassVar[str] = "conv2d"
    filters: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if min(self.filters, self.kernel_h, self.kernel_w, self.stride) < 1 or self.padding < 0:
            raise ValueError(f"invalid {self}")

    def output_shape(self, shape):
        if len(shape) != 3:
            raise ShapeError(f"conv2d expects HxWxC input, got {shape}")
        h, w, _ = shape
        hp, wp = h + 2 * self.padding, w + 2 * self.padding
        if self.kernel_h > hp or self.kernel_w > wp:
            raise ShapeError(f"conv2d kernel {self.kernel_h}x{self.kernel_w} larger than padded input {hp}x{wp}")
        return (
            (hp - self.kernel_h) // self.stride + 1,
            (wp - self.kernel_w) // self.stride + 1,
            self.filters,
        )

    def n_params(self, shape) -> int:
        return self.kernel_h * self.kernel_w * shape[2] * self.filters + self.filters

    def build(self, shape, rng, dtype):
        c = shape[2]
        fan_in = self.kernel_h * self.kernel_w * c
        w = _he_uniform(rng, (self.kernel_h, self.kernel_w, c, self.filters), fan_in, dtype)
        return Conv2d(w, np.zeros(self.filters, dtype=dtype), self.stride, self.padding)


@dataclass(frozen=True)
class MaxPoolSpec:
    kind: ClassVar[str] = "maxpool"
    size: int
    stride: int | None = None

    def __post_init__(self):
        if self.size < 1 or (self.stride is not None and self.stride < 1):
            raise ValueError(f"invalid {self}")

    @property
    def step(self) -> int:
        return self.size if self.stride is None else self.stride

    def output_shape(self, shape):
        if len(shape) != 3:
            raise ShapeError(f"maxpool expects HxWxC input, got {shape}")
        h, w, c = shape
        if self.size > h or self.size > w:
            raise ShapeError(f"maxpool window {self.size} larger than input {h}x{w}")
        return ((h - self.size) // self.step + 1, (w - self.size) // self.step + 1, c)

    def n_params(self, shape) -> int:
        return 0

    def build(self, shape, rng, dtype):
        return MaxPool(self.size, self.step)


@dataclass(frozen=True)
class ZeroPadSpec:
    kind: ClassVar[str] = "zeropad"
    size: int

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"invalid {self}")

    def output_shape(self, shape):
        if len(shape) != 3:
            raise ShapeError(f"zeropad expects HxWxC input, got {shape}")
        h, w, c = shape
        return (h + 2 * self.size, w + 2 * self.size, c)

    def n_params(self, shape) -> int:
        return 0

    def build(self, shape, rng, dtype):
        return ZeroPad(self.size)


@dataclass(frozen=True)
class DenseSpec:
    kind: ClassVar[str] = "dense"
    units: int

    def __post_init__(self):
        if self.units < 1:
            raise ValueError(f"invalid {self}")

    def output_shape(self, shape):
        if len(shape) != 1:
            raise ShapeError(f"dense expects a flat input, got {shape}; add a flatten layer")
        return (self.units,)

    def n_params(self, shape) -> int:
        return shape[0] * self.units + self.units

    def build(self, shape, rng, dtype):
        w = _he_uniform(rng, (shape[0], self.units), shape[0], dtype)
        return Dense(w, np.zeros(self.units, dtype=dtype))


@dataclass(frozen=True)
class ReLUSpec:
    kind: ClassVar[str] = "relu"

    def output_shape(self, shape):
        return tuple(shape)

    def n_params(self, shape) -> int:
        return 0

    def build(self, shape, rng, dtype):
        return ReLU()


@dataclass(frozen=True)
class DropoutSpec:
    kind: ClassVar[str] = "dropout"
    rate: float

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")

    def output_shape(self, shape):
        return tuple(shape)

    def n_params(self, shape) -> int:
        return 0

    def build(self, shape, rng, dtype):
        return Dropout(self.rate)


@dataclass(frozen=True)
class BatchNormSpec:
    kind: ClassVar[str] = "batchnorm"

    def output_shape(self, shape):
        return tuple(shape)

    def n_params(self, shape) -> int:
        return 2 * shape[-1]

    def build(self, shape, rng, dtype):
        return BatchNorm(shape[-1], dtype)


@dataclass(frozen=True)
class FlattenSpec:
    kind: ClassVar[str] = "flatten"

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def n_params(self, shape) -> int:
        return 0

    def build(self, shape, rng, dtype):
        return Flatten()


@dataclass(frozen=True)
class SoftmaxSpec:
    kind: ClassVar[str] = "softmax"

    def output_shape(self, shape):
        if len(shape) != 1:
            raise ShapeError(f"softmax expects a flat input, got {shape}")
        return tuple(shape)

    def n_params(self, shape) -> int:
        return 0

    def build(self, shape, rng, dtype):
        return Softmax()


SPEC_TYPES = {
    cls.kind: cls
    for cls in (
        Conv2dSpec, MaxPoolSpec, ZeroPadSpec, DenseSpec, ReLUSpec,
        DropoutSpec, BatchNormSpec, FlattenSpec, SoftmaxSpec,
    )
}


def spec_to_dict(spec) -> dict:
    d = {"kind": spec.kind}
    d.update(spec.__dict__)
    return d


def spec_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind")
    try:
        cls = SPEC_TYPES[kind]
    except KeyError:
        raise ValueError(f"unknown layer kind {kind!r}") from None
    return cls(**d)


def infer_shapes(specs, input_shape) -> list[tuple[int, ...]]:
    """Per-sample shape after each layer; raises ShapeError on underflow."""
    shapes = []
    shape = tuple(input_shape)
    for i, spec in enumerate(specs):
        try:
            shape = tuple(spec.output_shape(shape))
        except ShapeError as exc:
            raise ShapeError(f"layer {i} ({spec.kind}): {exc}") from None
        if any(d < 1 for d in shape):
            raise ShapeError(f"layer {i} ({spec.kind}) produces empty shape {shape}")
        shapes.append(shape)
    return shapes


def count_params(specs, input_shape) -> int:
    total = 0
    shape = tuple(input_shape)
    for spec in specs:
        total += spec.n_params(shape)
        shape = spec.output_shape(shape)
    return total


# -- layers -----------------------------------------------------------------

class Conv2d(Layer):
    def __init__(self, weight: np.ndarray, bias: np.ndarray, stride: int = 1, padding: int = 0):
        self.weight = Param("weight", weight)
        self.bias = Param("bias", bias)
        self.stride = stride
        self.padding = padding
        self._cache = None

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x, train):
        kh, kw, c, f = self.weight.data.shape
        if x.shape[3] != c:
            raise ValueError(f"conv2d expects {c} input channels, got {x.shape[3]}")
        p, s = self.padding, self.stride
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
        n, hp, wp, _ = xp.shape
        if kh > hp or kw > wp:
            raise ValueError(f"kernel {kh}x{kw} larger than padded input {hp}x{wp}")
        oh = (hp - kh) // s + 1
        ow = (wp - kw) // s + 1
        win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, : (oh - 1) * s + 1 : s, : (ow - 1) * s + 1 : s]
        cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * oh * ow, kh * kw * c)
        out = cols @ self.weight.data.reshape(-1, f) + self.bias.data
        self._cache = (cols, xp.shape, oh, ow)
        return out.reshape(n, oh, ow, f)

    def backward(self, dout):
        cols, xp_shape, oh, ow = self._require_cache(self._cache)
        kh, kw, c, f = self.weight.data.shape
        s, p = self.stride, self.padding
        d2 = dout.reshape(-1, f)
        self.weight.grad += (cols.T @ d2).reshape(self.weight.data.shape)
        self.bias.grad += d2.sum(axis=0)
        dcols = (d2 @ self.weight.data.reshape(-1, f).T).reshape(-1, oh, ow, kh, kw, c)
        dxp = np.zeros(xp_shape, dtype=dout.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i : i + s * (oh - 1) + 1 : s, j : j + s * (ow - 1) + 1 : s, :] += dcols[:, :, :, i, j, :]
        if p:
            dxp = dxp[:, p:-p, p:-p, :]
        return dxp


class MaxPool(Layer):
    def __init__(self, size: int, stride: int):
        self.size = size
        self.stride = stride
        self._cache = None

    def forward(self, x, train):
        k, s = self.size, self.stride
        n, h, w, c = x.shape
        if k > h or k > w:
            raise ValueError(f"pool window {k} larger than input {h}x{w}")
        oh = (h - k) // s + 1
        ow = (w - k) // s + 1
        win = sliding_window_view(x, (k, k), axis=(1, 2))[:, : (oh - 1) * s + 1 : s, : (ow - 1) * s + 1 : s]
        flat = win.reshape(n, oh, ow, c, k * k)
        arg = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
        self._cache = (arg, x.shape, oh, ow)
        return out

    def backward(self, dout):
        arg, x_shape, oh, ow = self._require_cache(self._cache)
        k, s = self.size, self.stride
        dx = np.zeros(x_shape, dtype=dout.dtype)
        for idx in range(k * k):
            i, j = divmod(idx, k)
            dx[:, i : i + s * (oh - 1) + 1 : s, j : j + s * (ow - 1) + 1 : s, :] += dout * (arg == idx)
        return dx


class ZeroPad(Layer):
    def __init__(self, size: int):
        self.size = size

    def forward(self, x, train):
        p = self.size
        return np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))

    def backward(self, dout):
        p = self.size
        return dout[:, p:-p, p:-p, :]


class Flatten(Layer):
    def __init__(self):
        self._shape = None

    def forward(self, x, train):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._require_cache(self._shape))


class Dense(Layer):
    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        self.weight = Param("weight", weight)
        self.bias = Param("bias", bias)
        self._x = None

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x, train):
        if x.ndim != 2 or x.shape[1] != self.weight.data.shape[0]:
            raise ValueError(f"dense expects (N, {self.weight.data.shape[0]}) input, got {x.shape}")
        self._x = x
        return x @ self.weight.data + self.bias.data

    def backward(self, dout):
        x = self._require_cache(self._x)
        self.weight.grad += x.T @ dout
        self.bias.grad += dout.sum(axis=0)
        return dout @ self.weight.data.T


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    def forward(self, x, train):
        self._mask = x > 0
        return np.where(self._mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, dout):
        return dout * self._require_cache(self._mask)


class Dropout(Layer):
    """Inverted dropout; the identity outside training."""

    def __init__(self, rate: float, rng: np.random.Generator | None = None):
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._mask = None

    def forward(self, x, train):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = ((self.rng.random(x.shape) < keep) / keep).astype(x.dtype)
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


class BatchNorm(Layer):
    """Per-channel normalization over every axis but the last."""

    def __init__(self, channels: int, dtype=np.float64, momentum: float = BN_MOMENTUM, eps: float = BN_EPS):
        self.gamma = Param("gamma", np.ones(channels, dtype=dtype))
        self.beta = Param("beta", np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps
        self._cache = None

    def params(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [self.running_mean, self.running_var]

    def forward(self, x, train):
        axes = tuple(range(x.ndim - 1))
        if train:
            if x.shape[0] < 2:
                raise ValueError("batchnorm in train mode needs a batch of at least 2")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.running_mean[...] = m * self.running_mean + (1 - m) * mean
            self.running_var[...] = m * self.running_var + (1 - m) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, train)
        return self.gamma.data * xhat + self.beta.data

    def backward(self, dout):
        xhat, inv_std, train = self._require_cache(self._cache)
        axes = tuple(range(dout.ndim - 1))
        self.gamma.grad += (dout * xhat).sum(axis=axes)
        self.beta.grad += dout.sum(axis=axes)
        dxhat = dout * self.gamma.data
        if not train:
            return dxhat * inv_std
        m = dout.size // dout.shape[-1]
        return (inv_std / m) * (
            m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes)
        )


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Softmax(Layer):
    def __init__(self):
        self._out = None

    def forward(self, x, train):
        self._out = softmax(x)
        return self._out

    def backward(self, dout):
        s = self._require_cache(self._out)
        return s * (dout - (dout * s).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean categorical cross entropy and its gradient w.r.t. the logits."""
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    loss = -log_probs[rows, labels].mean()
    grad = np.exp(log_probs)
    grad[rows, labels] -= 1.0
    return float(loss), grad / n
