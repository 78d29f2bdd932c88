"""Trainable tone mapping network.

Three 3-channel exposures each pass through a shared-weight encoder
(16, 32, 64 channels), the 192-channel concatenation goes through two
fusion convs (192, 192), and a decoder (32, 16, 3) produces the residual
output: sigmoid(decoder output + mean of the exposure images). All convs
are 3x3, stride 1, same padding, ReLU activations except the final sigmoid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import FormatError
from .vgg import ConvLayer, load_weight_file, save_weight_file

ENCODER_CHANNELS = (16, 32, 64)
FUSION_CHANNELS = (192, 192)
DECODER_CHANNELS = (32, 16, 3)

_LAYER_PLAN = (
    ("enc1", 3, 16),
    ("enc2", 16, 32),
    ("enc3", 32, 64),
    ("fus1", 192, 192),
    ("fus2", 192, 192),
    ("dec1", 192, 32),
    ("dec2", 32, 16),
    ("dec3", 16, 3),
)


@dataclass
class ConvParams:
    weights: np.ndarray  # (out, in, 3, 3)
    bias: np.ndarray  # (out,)


@dataclass
class TmParams:
    encoder: list[ConvParams]
    fusion: list[ConvParams]
    decoder: list[ConvParams]

    def named_layers(self) -> list[tuple[str, ConvParams]]:
        layers = self.encoder + self.fusion + self.decoder
        return [(name, layer) for (name, _, _), layer in zip(_LAYER_PLAN, layers)]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for _, layer in self.named_layers():
            out.append(layer.weights)
            out.append(layer.bias)
        return out

    def param_count(self) -> int:
        return sum(a.size for a in self.arrays())


def init_params(seed: int, dtype=np.float32) -> TmParams:
    """Uniform(-sqrt(6/fan_in), sqrt(6/fan_in)) weights, zero biases.

    fan_in = in_ch * 9. The sqrt(6) gain keeps activation variance roughly
    constant through the ReLU stack; a plain 1/sqrt(fan_in) bound shrinks
    the signal by ~sqrt(6) per layer, which leaves the eight-layer network
    too insensitive to train at the default learning rate. Deterministic
    for a fixed seed; draws come from numpy's PCG64 generator.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    groups: dict[str, list[ConvParams]] = {"enc": [], "fus": [], "dec": []}
    for name, cin, cout in _LAYER_PLAN:
        bound = math.sqrt(6.0 / (cin * 9))
        w = rng.uniform(-bound, bound, size=(cout, cin, 3, 3)).astype(dtype)
        b = np.zeros(cout, dtype=dtype)
        groups[name[:3]].append(ConvParams(w, b))
    return TmParams(encoder=groups["enc"], fusion=groups["fus"], decoder=groups["dec"])


def zeros_like_params(params: TmParams) -> TmParams:
    def z(layers):
        return [ConvParams(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in layers]

    return TmParams(z(params.encoder), z(params.fusion), z(params.decoder))


def _conv_relu_stack(x: np.ndarray, layers: list[ConvParams], cache: list) -> np.ndarray:
    for layer in layers:
        pre = ops.conv2d_forward(x, layer.weights, layer.bias)
        cache.append((x, pre))
        x = ops.relu(pre)
    return x


def forward(exposures: list[np.ndarray], params: TmParams) -> tuple[np.ndarray, dict]:
    """Map three (3, H, W) exposure tensors to the tone mapped (3, H, W) output."""
    if len(exposures) != 3:
        raise ValueError("expected exactly three exposure tensors")
    shape = exposures[0].shape
    if any(e.shape != shape for e in exposures) or shape[0] != 3:
        raise ValueError("exposures must share one (3, H, W) shape")
    cache: dict = {"branches": [], "fusion": [], "decoder": []}
    feats = []
    for e in exposures:
        branch_cache: list = []
        feats.append(_conv_relu_stack(e, params.encoder, branch_cache))
        cache["branches"].append(branch_cache)
    fused_in = ops.concat_channels(feats)
    x = _conv_relu_stack(fused_in, params.fusion, cache["fusion"])
    for li, layer in enumerate(params.decoder):
        pre = ops.conv2d_forward(x, layer.weights, layer.bias)
        cache["decoder"].append((x, pre))
        x = ops.relu(pre) if li < len(params.decoder) - 1 else pre
    residual = (exposures[0] + exposures[1] + exposures[2]) / 3.0
    pre_out = x + residual
    y = ops.sigmoid(pre_out)
    cache["output"] = y
    cache["exposures"] = exposures
    return y, cache


def _stack_backward(
    g: np.ndarray, layers: list[ConvParams], cache: list, grads: list[ConvParams]
) -> np.ndarray:
    for li in reversed(range(len(layers))):
        x, pre = cache[li]
        g = ops.relu_backward(pre, g)
        g, gw, gb = ops.conv2d_backward(x, layers[li].weights, g)
        grads[li].weights += gw
        grads[li].bias += gb
    return g


def backward(
    g_out: np.ndarray, cache: dict, params: TmParams
) -> tuple[TmParams, list[np.ndarray]]:
    """Parameter gradients (encoder summed over the three shared branches)
    and gradients w.r.t. the exposure tensors."""
    grads = zeros_like_params(params)
    y = cache["output"]
    g = ops.sigmoid_backward(y, g_out)
    g_residual = g / 3.0

    # Decoder: last layer has no ReLU.
    for li in reversed(range(len(params.decoder))):
        x, pre = cache["decoder"][li]
        if li < len(params.decoder) - 1:
            g = ops.relu_backward(pre, g)
        g, gw, gb = ops.conv2d_backward(x, params.decoder[li].weights, g)
        grads.decoder[li].weights += gw
        grads.decoder[li].bias += gb

    g = _stack_backward(g, params.fusion, cache["fusion"], grads.fusion)
    branch_grads = ops.concat_backward(g, [ENCODER_CHANNELS[-1]] * 3)
    g_exposures = []
    for bi in range(3):
        gb = _stack_backward(
            branch_grads[bi], params.encoder, cache["branches"][bi], grads.encoder
        )
        g_exposures.append(gb + g_residual)
    return grads, g_exposures


# ---------------------------------------------------------------------------
# Checkpoints (FCMW container with tone-mapper layer names)
# ---------------------------------------------------------------------------


def save_checkpoint(params: TmParams) -> bytes:
    layers = [
        ConvLayer(name=name, weights=layer.weights, bias=layer.bias)
        for name, layer in params.named_layers()
    ]
    return save_weight_file(layers)


def load_checkpoint(data: bytes) -> TmParams:
    layers = load_weight_file(data)
    by_name = {layer.name: layer for layer in layers}
    groups: dict[str, list[ConvParams]] = {"enc": [], "fus": [], "dec": []}
    for name, cin, cout in _LAYER_PLAN:
        if name not in by_name:
            raise FormatError(f"checkpoint missing layer {name!r}")
        layer = by_name[name]
        if layer.weights.shape != (cout, cin, 3, 3):
            raise FormatError(
                f"checkpoint layer {name!r} has shape {layer.weights.shape}, "
                f"expected {(cout, cin, 3, 3)}"
            )
        groups[name[:3]].append(ConvParams(layer.weights.copy(), layer.bias.copy()))
    return TmParams(encoder=groups["enc"], fusion=groups["fus"], decoder=groups["dec"])
