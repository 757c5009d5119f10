"""Minimal feed-forward CNN inference for 7-way expression classification.

Networks are a flat list of layers over float32 tensors shaped (C, H, W) or
(F,). The layer set (conv, depthwise conv, relu, max pool, global average
pool, batch norm, dense, softmax) covers the small real-time FER network
family; any compatible exported model runs. Weights load from the native
``FERW`` binary format and are fully shape-checked at load time, so forward
passes cannot hit a shape error.

No training here: inference only, 32-bit arithmetic, zero padding.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .emotions import EmotionCategory, check_probs

FERW_MAGIC = b"FERW"
FERW_VERSION = 1
BATCH_NORM_EPS = 1e-3

INPUT_SHAPE = (1, 48, 48)
NUM_CLASSES = len(EmotionCategory)


class WeightsError(ValueError):
    """Raised for malformed weights files or inconsistent layer shapes."""


def softmax(logits) -> np.ndarray:
    """Max-subtracted stable softmax; sums to 1, order preserving."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise ValueError(f"softmax expects a non-empty vector, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax requires finite logits")
    e = np.exp(z - z.max())
    return e / e.sum()


def _conv_out(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


@dataclass(frozen=True)
class Conv2D:
    kind = "conv2d"
    weights: np.ndarray  # (out_c, in_c, kh, kw)
    bias: np.ndarray  # (out_c,)
    stride: int = 1
    padding: int = 0

    def output_shape(self, shape):
        if len(shape) != 3 or shape[0] != self.weights.shape[1]:
            raise WeightsError(
                f"conv2d expects {self.weights.shape[1]} input channels, got {shape}"
            )
        _, kh, kw = self.weights.shape[1:]
        oh = _conv_out(shape[1], kh, self.stride, self.padding)
        ow = _conv_out(shape[2], kw, self.stride, self.padding)
        if oh < 1 or ow < 1:
            raise WeightsError(f"conv2d output collapses from input {shape}")
        return (self.weights.shape[0], oh, ow)

    def forward(self, x: np.ndarray) -> np.ndarray:
        out_c, _, kh, kw = self.weights.shape
        _, oh, ow = self.output_shape(x.shape)
        p = self.padding
        xp = np.pad(x, ((0, 0), (p, p), (p, p))) if p else x
        out = np.zeros((out_c, oh, ow), dtype=np.float32)
        s = self.stride
        for u in range(kh):
            for v in range(kw):
                win = xp[:, u : u + s * oh : s, v : v + s * ow : s]
                out += np.einsum("oc,chw->ohw", self.weights[:, :, u, v], win)
        return out + self.bias[:, None, None]


@dataclass(frozen=True)
class DepthwiseConv2D:
    kind = "depthwise_conv2d"
    weights: np.ndarray  # (c, kh, kw)
    bias: np.ndarray  # (c,)
    stride: int = 1
    padding: int = 0

    def output_shape(self, shape):
        if len(shape) != 3 or shape[0] != self.weights.shape[0]:
            raise WeightsError(
                f"depthwise conv expects {self.weights.shape[0]} channels, got {shape}"
            )
        c, kh, kw = self.weights.shape
        oh = _conv_out(shape[1], kh, self.stride, self.padding)
        ow = _conv_out(shape[2], kw, self.stride, self.padding)
        if oh < 1 or ow < 1:
            raise WeightsError(f"depthwise output collapses from input {shape}")
        return (c, oh, ow)

    def forward(self, x: np.ndarray) -> np.ndarray:
        c, kh, kw = self.weights.shape
        _, oh, ow = self.output_shape(x.shape)
        p = self.padding
        xp = np.pad(x, ((0, 0), (p, p), (p, p))) if p else x
        out = np.zeros((c, oh, ow), dtype=np.float32)
        s = self.stride
        for u in range(kh):
            for v in range(kw):
                win = xp[:, u : u + s * oh : s, v : v + s * ow : s]
                out += self.weights[:, u, v][:, None, None] * win
        return out + self.bias[:, None, None]


@dataclass(frozen=True)
class ReLU:
    kind = "relu"

    def output_shape(self, shape):
        return shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(x, np.float32(0.0))


@dataclass(frozen=True)
class MaxPool2D:
    kind = "max_pool"
    size: int = 2
    stride: int = 2

    def output_shape(self, shape):
        if len(shape) != 3:
            raise WeightsError(f"max_pool expects (c, h, w), got {shape}")
        oh = (shape[1] - self.size) // self.stride + 1
        ow = (shape[2] - self.size) // self.stride + 1
        if oh < 1 or ow < 1:
            raise WeightsError(f"max_pool window {self.size} exceeds input {shape}")
        return (shape[0], oh, ow)

    def forward(self, x: np.ndarray) -> np.ndarray:
        c, oh, ow = self.output_shape(x.shape)
        out = np.full((c, oh, ow), -np.inf, dtype=np.float32)
        s = self.stride
        for u in range(self.size):
            for v in range(self.size):
                win = x[:, u : u + s * oh : s, v : v + s * ow : s]
                np.maximum(out, win, out=out)
        return out


@dataclass(frozen=True)
class GlobalAvgPool:
    kind = "global_avg_pool"

    def output_shape(self, shape):
        if len(shape) != 3:
            raise WeightsError(f"global_avg_pool expects (c, h, w), got {shape}")
        return (shape[0],)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x.mean(axis=(1, 2), dtype=np.float32)


@dataclass(frozen=True)
class BatchNorm:
    kind = "batch_norm"
    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eps: float = BATCH_NORM_EPS

    def output_shape(self, shape):
        channels = shape[0]
        if self.gamma.shape != (channels,):
            raise WeightsError(
                f"batch_norm has {self.gamma.shape[0]} channels, input has {channels}"
            )
        return shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        scale = self.gamma / np.sqrt(self.var + np.float32(self.eps))
        shift = self.beta - self.mean * scale
        if x.ndim == 3:
            return x * scale[:, None, None] + shift[:, None, None]
        return x * scale + shift


@dataclass(frozen=True)
class Dense:
    kind = "dense"
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    def output_shape(self, shape):
        flat = int(np.prod(shape))
        if flat != self.weights.shape[1]:
            raise WeightsError(
                f"dense expects {self.weights.shape[1]} inputs, got {shape} ({flat})"
            )
        return (self.weights.shape[0],)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.weights @ x.reshape(-1) + self.bias


@dataclass(frozen=True)
class Softmax:
    kind = "softmax"

    def output_shape(self, shape):
        if len(shape) != 1:
            raise WeightsError(f"softmax expects a vector, got {shape}")
        return shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        return softmax(x).astype(np.float32)


Layer = Conv2D | DepthwiseConv2D | ReLU | MaxPool2D | GlobalAvgPool | BatchNorm | Dense | Softmax


def forward_layer(layer: Layer, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    expected = layer.output_shape(x.shape)
    out = layer.forward(x).astype(np.float32)
    if out.shape != tuple(expected):
        raise WeightsError(f"{layer.kind}: produced {out.shape}, expected {expected}")
    return out


@dataclass(frozen=True)
class Network:
    layers: tuple[Layer, ...]
    input_shape: tuple[int, int, int] = INPUT_SHAPE

    def validate(self) -> "Network":
        shape = self.input_shape
        for idx, layer in enumerate(self.layers):
            try:
                shape = layer.output_shape(shape)
            except WeightsError as exc:
                raise WeightsError(f"layer {idx} ({layer.kind}): {exc}") from None
        if not self.layers or self.layers[-1].kind != "softmax":
            raise WeightsError("network must end with a softmax layer")
        if tuple(shape) != (NUM_CLASSES,):
            raise WeightsError(f"network outputs shape {shape}, expected ({NUM_CLASSES},)")
        return self


def infer_probs(net: Network, face) -> np.ndarray:
    """Sequential forward pass; output is indexed by EmotionCategory order."""
    x = np.asarray(face, dtype=np.float32)
    if x.shape != net.input_shape:
        raise ValueError(f"input shape {x.shape}, network wants {net.input_shape}")
    for layer in net.layers:
        x = forward_layer(layer, x)
    return check_probs(x.astype(np.float64))


class ClassifierBackend(Protocol):
    """Anything that turns a preprocessed face tensor into 7 probabilities."""

    name: str

    def classify(self, face: np.ndarray) -> np.ndarray: ...


class NetworkClassifier:
    """Native classifier backend wrapping a loaded Network."""

    def __init__(self, net: Network, name: str = "ferw"):
        self.net = net
        self.name = name

    @classmethod
    def from_file(cls, path: str | Path) -> "NetworkClassifier":
        return cls(load_weights_file(path), name=f"ferw:{Path(path).name}")

    def classify(self, face: np.ndarray) -> np.ndarray:
        return infer_probs(self.net, face)


# --- FERW weights format ------------------------------------------------------
#
# magic "FERW" | u32 version=1 | u32 n_layers
# per layer: u8 kind tag, then per kind:
#   1 conv2d:            u32 stride | u32 padding | tensor weights | tensor bias
#   2 depthwise_conv2d:  u32 stride | u32 padding | tensor weights | tensor bias
#   3 relu:              (nothing)
#   4 max_pool:          u32 size | u32 stride
#   5 global_avg_pool:   (nothing)
#   6 batch_norm:        tensor gamma | tensor beta | tensor mean | tensor var
#   7 dense:             tensor weights | tensor bias
#   8 softmax:           (nothing)
# tensor: u32 rank | u32 dims[rank] | f32 values (row-major)
# All fields little-endian. Full byte-level description in docs/formats.md.

_KIND_TAGS = {
    1: "conv2d",
    2: "depthwise_conv2d",
    3: "relu",
    4: "max_pool",
    5: "global_avg_pool",
    6: "batch_norm",
    7: "dense",
    8: "softmax",
}
_TAG_FOR_KIND = {v: k for k, v in _KIND_TAGS.items()}


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise WeightsError("unexpected end of stream")
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals

    def tensor(self, rank: int, what: str) -> np.ndarray:
        (got_rank,) = self.take("<I")
        if got_rank != rank:
            raise WeightsError(f"{what}: rank {got_rank}, expected {rank}")
        dims = self.take(f"<{rank}I")
        count = int(np.prod(dims))
        size = 4 * count
        if self.pos + size > len(self.data):
            raise WeightsError("unexpected end of stream")
        arr = np.frombuffer(self.data, dtype="<f4", count=count, offset=self.pos)
        self.pos += size
        if not np.all(np.isfinite(arr)):
            raise WeightsError(f"{what}: non-finite values")
        return arr.reshape(dims).astype(np.float32)


def load_weights(data: bytes, input_shape=INPUT_SHAPE) -> Network:
    """Parse FERW bytes into a fully shape-checked Network."""
    r = _Reader(data)
    (magic,) = r.take("<4s")
    if magic != FERW_MAGIC:
        raise WeightsError(f"bad magic {magic!r}, expected {FERW_MAGIC!r}")
    (version,) = r.take("<I")
    if version != FERW_VERSION:
        raise WeightsError(f"unsupported weights version {version}")
    (n_layers,) = r.take("<I")
    layers: list[Layer] = []
    for idx in range(n_layers):
        (tag,) = r.take("<B")
        kind = _KIND_TAGS.get(tag)
        if kind is None:
            raise WeightsError(f"layer {idx}: unknown kind tag {tag}")
        where = f"layer {idx} ({kind})"
        if kind == "conv2d":
            stride, padding = r.take("<II")
            layers.append(
                Conv2D(r.tensor(4, where), r.tensor(1, where), stride, padding)
            )
        elif kind == "depthwise_conv2d":
            stride, padding = r.take("<II")
            layers.append(
                DepthwiseConv2D(r.tensor(3, where), r.tensor(1, where), stride, padding)
            )
        elif kind == "relu":
            layers.append(ReLU())
        elif kind == "max_pool":
            size, stride = r.take("<II")
            layers.append(MaxPool2D(size, stride))
        elif kind == "global_avg_pool":
            layers.append(GlobalAvgPool())
        elif kind == "batch_norm":
            gamma = r.tensor(1, where)
            beta = r.tensor(1, where)
            mean = r.tensor(1, where)
            var = r.tensor(1, where)
            if not (gamma.shape == beta.shape == mean.shape == var.shape):
                raise WeightsError(f"{where}: parameter shapes disagree")
            layers.append(BatchNorm(gamma, beta, mean, var))
        elif kind == "dense":
            layers.append(Dense(r.tensor(2, where), r.tensor(1, where)))
        elif kind == "softmax":
            layers.append(Softmax())
    if r.pos != len(data):
        raise WeightsError(f"{len(data) - r.pos} trailing bytes after network")
    return Network(tuple(layers), tuple(input_shape)).validate()


def load_weights_file(path: str | Path) -> Network:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise WeightsError(f"cannot read weights {path}: {exc}") from exc
    return load_weights(data)


def _pack_tensor(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    out = struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return out + arr.tobytes()


def save_weights(net: Network, path: str | Path) -> None:
    """Serialize a Network to the FERW format (the exporter counterpart)."""
    net.validate()
    out = bytearray()
    out += struct.pack("<4sII", FERW_MAGIC, FERW_VERSION, len(net.layers))
    for layer in net.layers:
        out += struct.pack("<B", _TAG_FOR_KIND[layer.kind])
        if isinstance(layer, Conv2D) or isinstance(layer, DepthwiseConv2D):
            out += struct.pack("<II", layer.stride, layer.padding)
            out += _pack_tensor(layer.weights) + _pack_tensor(layer.bias)
        elif isinstance(layer, MaxPool2D):
            out += struct.pack("<II", layer.size, layer.stride)
        elif isinstance(layer, BatchNorm):
            for t in (layer.gamma, layer.beta, layer.mean, layer.var):
                out += _pack_tensor(t)
        elif isinstance(layer, Dense):
            out += _pack_tensor(layer.weights) + _pack_tensor(layer.bias)
    Path(path).write_bytes(bytes(out))
