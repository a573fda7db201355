"""Sequential network over layer specs, plus the NNCK1 checkpoint format.

Checkpoint layout (little-endian)::

    b"NNCK1"
    u32 ndim, u32 dims...          per-sample input shape
    u32 nbytes, JSON spec list     utf-8
    u32 count                      number of tensors
    per tensor: u32 ndim, u32 dims..., float32 data

Tensors are parameters and batchnorm running statistics in declaration
order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .layers import (
    Dropout,
    Layer,
    Param,
    SoftmaxSpec,
    count_params,
    infer_shapes,
    softmax,
    softmax_cross_entropy,
    spec_from_dict,
    spec_to_dict,
)

CKPT_MAGIC = b"NNCK1"


class Network:
    def __init__(self, specs: Sequence, input_shape: Sequence[int], seed: int = 0, dtype=np.float64):
        self.specs = list(specs)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.dtype = np.dtype(dtype)
        self.shapes = infer_shapes(self.specs, self.input_shape)
        init_rng, dropout_seed = np.random.default_rng([seed, 0]), [seed, 1]
        self.layers: list[Layer] = []
        shape = self.input_shape
        for i, spec in enumerate(self.specs):
            layer = spec.build(shape, init_rng, self.dtype)
            if isinstance(layer, Dropout):
                layer.rng = np.random.default_rng(dropout_seed + [i])
            self.layers.append(layer)
            shape = self.shapes[i]
        # a trailing softmax is applied by predict_proba; training works on logits
        self._n_logit_layers = len(self.layers) - (1 if self.specs and isinstance(self.specs[-1], SoftmaxSpec) else 0)

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.shapes[-1]

    def n_params(self) -> int:
        return count_params(self.specs, self.input_shape)

    def params(self) -> list[Param]:
        return [p for layer in self.layers for p in layer.params()]

    def tensors(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend(p.data for p in layer.params())
            out.extend(layer.buffers())
        return out

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """Logits for a batch (N, *input_shape)."""
        if tuple(x.shape[1:]) != self.input_shape:
            raise ValueError(f"expected batch of shape (N, {self.input_shape}), got {x.shape}")
        out = x.astype(self.dtype, copy=False)
        for layer in self.layers[: self._n_logit_layers]:
            out = layer.forward(out, train)
        return out

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        d = dlogits
        for layer in reversed(self.layers[: self._n_logit_layers]):
            d = layer.backward(d)
        return d

    def zero_grad(self) -> None:
        for p in self.params():
            p.grad[...] = 0

    def loss(self, x: np.ndarray, labels: np.ndarray, train: bool = False) -> tuple[float, np.ndarray]:
        logits = self.forward(x, train)
        return softmax_cross_entropy(logits, labels)

    def predict_proba(self, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
        outs = []
        for start in range(0, len(x), batch_size):
            logits = self.forward(x[start : start + batch_size], train=False)
            outs.append(softmax(logits) if self._n_logit_layers < len(self.layers) else logits)
        return np.concatenate(outs) if outs else np.zeros((0,) + self.output_shape)

    def predict(self, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
        return self.predict_proba(x, batch_size).argmax(axis=1)

    def snapshot(self) -> list[np.ndarray]:
        return [t.copy() for t in self.tensors()]

    def restore(self, tensors: Sequence[np.ndarray]) -> None:
        current = self.tensors()
        if len(current) != len(tensors):
            raise ValueError(f"expected {len(current)} tensors, got {len(tensors)}")
        for dst, src in zip(current, tensors):
            if dst.shape != src.shape:
                raise ValueError(f"tensor shape mismatch {dst.shape} vs {src.shape}")
            dst[...] = src


def save_checkpoint(net: Network, path: str | Path, tensors: Sequence[np.ndarray] | None = None) -> None:
    tensors = net.tensors() if tensors is None else tensors
    spec_blob = json.dumps([spec_to_dict(s) for s in net.specs], sort_keys=True).encode("utf-8")
    parts = [CKPT_MAGIC, struct.pack("<I", len(net.input_shape))]
    parts.append(struct.pack(f"<{len(net.input_shape)}I", *net.input_shape))
    parts.append(struct.pack("<I", len(spec_blob)))
    parts.append(spec_blob)
    parts.append(struct.pack("<I", len(tensors)))
    for t in tensors:
        parts.append(struct.pack("<I", t.ndim))
        parts.append(struct.pack(f"<{t.ndim}I", *t.shape))
        parts.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path, dtype=np.float32) -> Network:
    data = Path(path).read_bytes()
    if data[:5] != CKPT_MAGIC:
        raise ValueError(f"{path}: not an NNCK1 checkpoint")
    pos = 5

    def read_u32(n=1):
        nonlocal pos
        vals = struct.unpack_from(f"<{n}I", data, pos)
        pos += 4 * n
        return vals

    (ndim,) = read_u32()
    input_shape = read_u32(ndim)
    (nbytes,) = read_u32()
    specs = [spec_from_dict(d) for d in json.loads(data[pos : pos + nbytes].decode("utf-8"))]
    pos += nbytes
    (count,) = read_u32()
    tensors = []
    for _ in range(count):
        (nd,) = read_u32()
        shape = read_u32(nd)
        size = int(np.prod(shape)) if nd else 1
        tensors.append(np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(shape))
        pos += 4 * size
    net = Network(specs, input_shape, seed=0, dtype=dtype)
    net.restore(tensors)
    return net

