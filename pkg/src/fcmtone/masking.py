"""Feature contrast masking transform and the loss built on it.

Per feature channel F the transform is:

    C   = (F - G(F)) / (|G(F)| + eps)        feature contrast, G = Gaussian
    M_s = smooth_sign(C) * |C|^alpha         self-masking (compressive)
    M_n = std_box(F) / (|mean_box(F)| + eps) neighborhood masking
    f   = M_s / (1 + M_n)                    masked features

with smooth_sign(x) = x / (|x| + eps). The training loss is the mean
absolute difference between masked feature maps of the guidance image and
the tone mapped output, averaged over VGG layers; only the tone-mapped
branch receives gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import hdr_io, ops
from .errors import ConfigError
from .vgg import VggWeights, vgg_backward, vgg_forward


@dataclass
class FcmConfig:
    """Loss hyperparameters with the production default settings."""

    alpha_hdr: float = 0.5
    alpha_tm: float = 1.0
    epsilon: float = 1e-6
    patch: int = 13
    gaussian_sigma: float = 2.0
    n_layers: int = 3

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha_hdr <= 1.0 and 0.0 < self.alpha_tm <= 1.0):
            raise ConfigError("alpha exponents must lie in (0, 1]")
        if self.patch < 3 or self.patch % 2 == 0:
            raise ConfigError("patch must be odd and >= 3")
        if self.epsilon <= 0.0:
            raise ConfigError("epsilon must be > 0")
        if self.gaussian_sigma <= 0.0:
            raise ConfigError("gaussian_sigma must be > 0")
        if not 1 <= self.n_layers <= 3:
            raise ConfigError("n_layers must be in 1..3")


@dataclass
class ContrastMaps:
    """All intermediate maps of the transform, for diagnostics and dumps."""

    contrast: np.ndarray
    box_mean: np.ndarray
    box_std: np.ndarray
    self_mask: np.ndarray
    neighborhood: np.ndarray
    masked: np.ndarray


def smooth_sign(x: np.ndarray, epsilon: float) -> np.ndarray:
    return x / (np.abs(x) + epsilon)


def feature_contrast(fmap: np.ndarray, cfg: FcmConfig) -> np.ndarray:
    """Per-channel (F - G(F)) / (|G(F)| + eps)."""
    blurred = ops.gaussian_filter(fmap, cfg.patch, cfg.gaussian_sigma)
    return (fmap - blurred) / (np.abs(blurred) + cfg.epsilon)


def self_masking(contrast: np.ndarray, alpha: float, epsilon: float) -> np.ndarray:
    """smooth_sign(C) * |C|^alpha: compressive, polarity preserving."""
    return smooth_sign(contrast, epsilon) * np.abs(contrast) ** alpha


def neighborhood_masking(fmap: np.ndarray, cfg: FcmConfig) -> np.ndarray:
    """std/(|mean| + eps) over the sliding patch window; always >= 0."""
    mean, std = ops.box_stats(fmap, cfg.patch)
    return std / (np.abs(mean) + cfg.epsilon)


def masked_features(
    fmap: np.ndarray, alpha: float, cfg: FcmConfig, neighborhood: bool = True
) -> np.ndarray:
    """f = M_s / (1 + M_n); set neighborhood=False to drop the denominator."""
    m_s = self_masking(feature_contrast(fmap, cfg), alpha, cfg.epsilon)
    if not neighborhood:
        return m_s
    return m_s / (1.0 + neighborhood_masking(fmap, cfg))


def compute_contrast_maps(fmap: np.ndarray, alpha: float, cfg: FcmConfig) -> ContrastMaps:
    contrast = feature_contrast(fmap, cfg)
    mean, std = ops.box_stats(fmap, cfg.patch)
    m_s = self_masking(contrast, alpha, cfg.epsilon)
    m_n = std / (np.abs(mean) + cfg.epsilon)
    return ContrastMaps(contrast, mean, std, m_s, m_n, m_s / (1.0 + m_n))


# ---------------------------------------------------------------------------
# Differentiable path
# ---------------------------------------------------------------------------


def masked_forward(fmap: np.ndarray, alpha: float, cfg: FcmConfig) -> tuple[np.ndarray, dict]:
    """Masked features plus the cache needed by masked_backward."""
    eps = cfg.epsilon
    blurred = ops.gaussian_filter(fmap, cfg.patch, cfg.gaussian_sigma)
    denom = np.abs(blurred) + eps
    contrast = (fmap - blurred) / denom
    abs_c = np.abs(contrast)
    pow_c = abs_c**alpha
    m_s = contrast / (abs_c + eps) * pow_c
    mean, std = ops.box_stats(fmap, cfg.patch)
    m_n = std / (np.abs(mean) + eps)
    mask_den = 1.0 + m_n
    out = m_s / mask_den
    cache = {
        "fmap": fmap,
        "alpha": alpha,
        "blurred": blurred,
        "denom": denom,
        "contrast": contrast,
        "abs_c": abs_c,
        "pow_c": pow_c,
        "mean": mean,
        "std": std,
        "m_n": m_n,
        "mask_den": mask_den,
        "out": out,
    }
    return out, cache


def masked_backward(g_out: np.ndarray, cache: dict, cfg: FcmConfig) -> np.ndarray:
    """Gradient of the masked features w.r.t. the raw feature map."""
    eps = cfg.epsilon
    fmap = cache["fmap"]
    alpha = cache["alpha"]
    contrast = cache["contrast"]
    abs_c = cache["abs_c"]
    pow_c = cache["pow_c"]
    denom = cache["denom"]
    mean, std = cache["mean"], cache["std"]
    mask_den = cache["mask_den"]

    g_ms = g_out / mask_den
    g_mn = -g_out * cache["out"] / mask_den

    # d M_s / d C = |C|^alpha * (eps/(|C|+eps)^2 + alpha/(|C|+eps)); both the
    # smoothed sign and the power derivative folded into one stable form.
    sc = abs_c + eps
    dms_dc = pow_c * (eps / (sc * sc) + alpha / sc)
    g_c = g_ms * dms_dc

    # C = (F - B)/(|B|+eps): direct F path plus the Gaussian-blurred path.
    g_f = g_c / denom
    g_b = -g_c * (1.0 + contrast * np.sign(cache["blurred"])) / denom
    g_f = g_f + ops.gaussian_filter_backward(g_b, cfg.patch, cfg.gaussian_sigma)

    # M_n = std/(|mean|+eps) through the box statistics.
    mdenom = np.abs(mean) + eps
    g_std = g_mn / mdenom
    g_mean = -g_mn * cache["m_n"] * np.sign(mean) / mdenom
    g_f = g_f + ops.box_stats_backward(fmap, mean, std, g_mean, g_std, cfg.patch)
    return g_f


# ---------------------------------------------------------------------------
# Losses over VGG activation lists
# ---------------------------------------------------------------------------


def fcm_loss(
    acts_guidance: list[np.ndarray],
    acts_output: list[np.ndarray],
    cfg: FcmConfig,
    guidance_masked: list[np.ndarray] | None = None,
) -> tuple[float, list[np.ndarray]]:
    """Mean |f(guidance) - f(output)| per layer, layers averaged.

    Returns (loss, gradients w.r.t. the output activations). The guidance
    branch is a constant target; pass guidance_masked to reuse precomputed
    masked maps.
    """
    if len(acts_guidance) != len(acts_output):
        raise ValueError("layer count mismatch between branches")
    n = len(acts_output)
    loss = 0.0
    grads = []
    for li in range(n):
        a_g, a_o = acts_guidance[li], acts_output[li]
        if a_g.shape != a_o.shape:
            raise ValueError(f"layer {li} shape mismatch: {a_g.shape} vs {a_o.shape}")
        target = (
            guidance_masked[li]
            if guidance_masked is not None
            else masked_features(a_g, cfg.alpha_hdr, cfg)
        )
        f_o, cache = masked_forward(a_o, cfg.alpha_tm, cfg)
        diff = f_o - target
        loss += float(np.mean(np.abs(diff), dtype=np.float64)) / n
        g_f = np.sign(diff) / (n * diff.size)
        grads.append(masked_backward(g_f.astype(a_o.dtype), cache, cfg))
    return loss, grads


def plain_vgg_loss(
    acts_guidance: list[np.ndarray], acts_output: list[np.ndarray]
) -> tuple[float, list[np.ndarray]]:
    """Mean |A_guidance - A_output| per layer, layers averaged."""
    if len(acts_guidance) != len(acts_output):
        raise ValueError("layer count mismatch between branches")
    n = len(acts_output)
    loss = 0.0
    grads = []
    for a_g, a_o in zip(acts_guidance, acts_output):
        if a_g.shape != a_o.shape:
            raise ValueError(f"shape mismatch: {a_g.shape} vs {a_o.shape}")
        diff = a_o - a_g
        loss += float(np.mean(np.abs(diff), dtype=np.float64)) / n
        grads.append((np.sign(diff) / (n * diff.size)).astype(a_o.dtype))
    return loss, grads


# ---------------------------------------------------------------------------
# Sinusoid penalty probe
# ---------------------------------------------------------------------------


@dataclass
class ProbeResult:
    contrasts: list[float]
    fcm_deltas: list[float]
    vgg_deltas: list[float]


def sinusoid_image(contrast: float, size: int = 128, period: float = 16.0) -> np.ndarray:
    """Horizontal sinusoid of the given amplitude around mean 0.5, (3, H, W)."""
    x = np.arange(size, dtype=np.float64)
    row = 0.5 + contrast * np.sin(2.0 * math.pi * x / period)
    img = np.broadcast_to(row, (size, size))
    return np.ascontiguousarray(np.broadcast_to(img, (3, size, size)))


def sinusoid_penalty_probe(
    contrasts: list[float],
    delta: float,
    cfg: FcmConfig,
    weights: VggWeights,
    size: int = 128,
    period: float = 16.0,
) -> ProbeResult:
    """Loss increase caused by adding `delta` amplitude to each sinusoid.

    The masking exponent is the symmetric compressive one (alpha_hdr) on both
    branches. Alongside the masked-loss deltas the plain feature-space deltas
    are returned for comparison.
    """
    probe_cfg = FcmConfig(
        alpha_hdr=cfg.alpha_hdr,
        alpha_tm=cfg.alpha_hdr,
        epsilon=cfg.epsilon,
        patch=cfg.patch,
        gaussian_sigma=cfg.gaussian_sigma,
        n_layers=cfg.n_layers,
    )
    fcm_deltas = []
    vgg_deltas = []
    for c in contrasts:
        if not (0.0 <= 0.5 - (c + delta) and 0.5 + (c + delta) <= 1.0):
            raise ConfigError(f"sinusoid of contrast {c} + {delta} leaves [0, 1]")
        base = sinusoid_image(c, size, period)
        bumped = sinusoid_image(c + delta, size, period)
        acts_base, _ = vgg_forward(base, weights, probe_cfg.n_layers)
        acts_bump, _ = vgg_forward(bumped, weights, probe_cfg.n_layers)
        loss_fcm, _ = fcm_loss(acts_base, acts_bump, probe_cfg)
        loss_vgg, _ = plain_vgg_loss(acts_base, acts_bump)
        fcm_deltas.append(loss_fcm)
        vgg_deltas.append(loss_vgg)
    return ProbeResult(list(contrasts), fcm_deltas, vgg_deltas)


# ---------------------------------------------------------------------------
# Diagnostic dumps
# ---------------------------------------------------------------------------

_MAP_FIELDS = (
    ("contrast", "contrast"),
    ("self_mask", "self_mask"),
    ("neighborhood", "neighborhood"),
    ("masked", "masked"),
)


def write_map_dumps(
    maps: ContrastMaps, out_dir: Path, layer_index: int, channels: list[int]
) -> list[Path]:
    """Write the four masking maps of selected channels as grayscale PFMs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for ch in channels:
        for stem, attr in _MAP_FIELDS:
            arr = getattr(maps, attr)[ch]
            path = out_dir / f"layer{layer_index + 1}_ch{ch:03d}_{stem}.pfm"
            path.write_bytes(hdr_io.write_pfm(arr))
            written.append(path)
    return written
