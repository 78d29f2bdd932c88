"""Frozen truncated-VGG19 feature extractor and the FCMW weight container.

FCMW layout (all integers little-endian):
  magic "FCMW" | version u16 = 1 | layer_count u16 |
  per layer { name_len u16, name utf-8, out_ch u32, in_ch u32, kh u32, kw u32,
              weights f32 (out,in,kh,kw) row-major, bias f32 (out,) } |
  CRC32 of all preceding bytes, u32.

Max-pool positions are not stored: they follow the VGG naming convention
conv<block>_<index>, with a 2x2 pool inserted wherever the block number
increases. Files holding other layer names (e.g. tone-mapper checkpoints)
simply get no pools.
"""

from __future__ import annotations

import math
import re
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import ConfigError, FormatError

MAGIC = b"FCMW"
VERSION = 1

# Channel normalization the pretrained weights were produced with (RGB order,
# inputs in [0, 1]).
PREPROC_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float64)
PREPROC_STD = np.array([0.229, 0.224, 0.225], dtype=np.float64)

# Truncated prefix: conv1_1, conv1_2, pool, conv2_1.
CANONICAL_LAYERS = (
    ("conv1_1", 64, 3),
    ("conv1_2", 64, 64),
    ("conv2_1", 128, 64),
)

_NAME_RE = re.compile(r"conv(\d+)_(\d+)$")


@dataclass
class ConvLayer:
    name: str
    weights: np.ndarray  # (out, in, kh, kw)
    bias: np.ndarray  # (out,)


@dataclass
class VggWeights:
    layers: list[ConvLayer]
    pool_before: frozenset[int] | None = None  # layer indices; derived from names

    def __post_init__(self) -> None:
        if self.pool_before is None:
            self.pool_before = frozenset(_derive_pools(self.layers))


def _derive_pools(layers: list[ConvLayer]) -> list[int]:
    pools = []
    prev_block = None
    for i, layer in enumerate(layers):
        m = _NAME_RE.match(layer.name)
        if m is None:
            return []
        block = int(m.group(1))
        if prev_block is not None and block > prev_block:
            pools.append(i)
        prev_block = block
    return pools


# ---------------------------------------------------------------------------
# Container serialization
# ---------------------------------------------------------------------------


def save_weight_file(layers: list[ConvLayer]) -> bytes:
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HH", VERSION, len(layers))
    for layer in layers:
        name = layer.name.encode("utf-8")
        cout, cin, kh, kw = layer.weights.shape
        if layer.bias.shape != (cout,):
            raise ValueError(
                f"layer {layer.name!r}: bias shape {layer.bias.shape} != ({cout},)"
            )
        out += struct.pack("<H", len(name))
        out += name
        out += struct.pack("<IIII", cout, cin, kh, kw)
        out += layer.weights.astype("<f4").tobytes()
        out += layer.bias.astype("<f4").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("truncated weight file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out


def load_weight_file(data: bytes) -> list[ConvLayer]:
    if len(data) < 12:
        raise FormatError("truncated weight file")
    if data[:4] != MAGIC:
        raise FormatError("bad magic: not an FCMW weight file")
    stored_crc = struct.unpack("<I", data[-4:])[0]
    actual_crc = zlib.crc32(data[:-4])
    if stored_crc != actual_crc:
        raise FormatError(
            f"checksum failure: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )
    rd = _Reader(data[:-4])
    rd.take(4)
    version, count = struct.unpack("<HH", rd.take(4))
    if version != VERSION:
        raise FormatError(f"version mismatch: file v{version}, supported v{VERSION}")
    layers = []
    for _ in range(count):
        (name_len,) = struct.unpack("<H", rd.take(2))
        name = rd.take(name_len).decode("utf-8")
        cout, cin, kh, kw = struct.unpack("<IIII", rd.take(16))
        w = np.frombuffer(rd.take(cout * cin * kh * kw * 4), dtype="<f4")
        b = np.frombuffer(rd.take(cout * 4), dtype="<f4")
        layers.append(
            ConvLayer(
                name=name,
                weights=w.reshape(cout, cin, kh, kw).astype(np.float32),
                bias=b.astype(np.float32),
            )
        )
    if rd.pos != len(rd.data):
        raise FormatError("trailing bytes after last layer")
    return layers


def load_weights(data: bytes) -> VggWeights:
    """Load an FCMW stream and derive pooling positions from layer names."""
    return VggWeights(layers=load_weight_file(data))


def random_weights(seed: int, scale: float = 1.0) -> VggWeights:
    """Canonical 3-layer shapes with He-scaled random values (for testing).

    Biases are positive, like the pretrained network's: with zero biases
    half of every post-ReLU map is exactly zero and the local feature means
    collapse to the epsilon scale, which riddles the contrast maps with
    stabilizer spikes. Deterministic for a fixed seed (numpy PCG64).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    layers = []
    for name, cout, cin in CANONICAL_LAYERS:
        std = scale * math.sqrt(2.0 / (cin * 9))
        layers.append(
            ConvLayer(
                name=name,
                weights=rng.normal(0.0, std, size=(cout, cin, 3, 3)).astype(np.float32),
                bias=rng.uniform(0.2, 0.8, size=cout).astype(np.float32),
            )
        )
    return VggWeights(layers=layers)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def preprocess(img: np.ndarray) -> np.ndarray:
    """(img - mean) / std per channel on a (3, H, W) array in [0, 1]."""
    mean = PREPROC_MEAN.astype(img.dtype)[:, None, None]
    std = PREPROC_STD.astype(img.dtype)[:, None, None]
    return (img - mean) / std


def vgg_forward(
    img: np.ndarray, weights: VggWeights, n_layers: int
) -> tuple[list[np.ndarray], dict]:
    """Run the truncated prefix; return post-ReLU maps of the first n_layers.

    The cache returned alongside feeds vgg_backward.
    """
    if not 1 <= n_layers <= len(weights.layers):
        raise ConfigError(
            f"n_layers must be in 1..{len(weights.layers)}, got {n_layers}"
        )
    if img.shape[0] != 3:
        raise ValueError("expected a 3-channel image tensor")
    x = preprocess(img)
    acts = []
    cache = {"conv_inputs": [], "pre_relu": [], "pools": [], "n_layers": n_layers}
    for i in range(n_layers):
        layer = weights.layers[i]
        if i in weights.pool_before:
            pooled, idx = ops.maxpool2x2(x)
            cache["pools"].append((i, idx, x.shape))
            x = pooled
        cache["conv_inputs"].append(x)
        pre = ops.conv2d_forward(x, layer.weights.astype(x.dtype, copy=False), layer.bias.astype(x.dtype, copy=False))
        cache["pre_relu"].append(pre)
        x = ops.relu(pre)
        acts.append(x)
    return acts, cache


def vgg_backward(
    grads: list[np.ndarray], cache: dict, weights: VggWeights
) -> np.ndarray:
    """Accumulate per-layer activation gradients down to the input image."""
    n_layers = cache["n_layers"]
    if len(grads) != n_layers:
        raise ValueError(f"expected {n_layers} gradient maps, got {len(grads)}")
    pools = {i: (idx, shape) for i, idx, shape in cache["pools"]}
    g = None
    for i in reversed(range(n_layers)):
        layer = weights.layers[i]
        g = grads[i] if g is None else g + grads[i]
        g = ops.relu_backward(cache["pre_relu"][i], g)
        x = cache["conv_inputs"][i]
        g, _, _ = ops.conv2d_backward(x, layer.weights.astype(x.dtype, copy=False), g)
        if i in pools:
            idx, shape = pools[i]
            g = ops.maxpool2x2_backward(g, idx, shape)
    std = PREPROC_STD.astype(g.dtype)[:, None, None]
    return g / std
