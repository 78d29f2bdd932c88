"""Per-image test-time optimization loop.

One "epoch" is one full-image gradient step: the dataset is the single
input image. The guidance branch (masked features of the mu-law compressed
image) does not depend on the network parameters, so it is computed once
and cached; recomputing it every epoch is available as a cross-check knob.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import exposure as exp
from . import masking, network, optim, vgg
from .errors import ConfigError, DivergenceError
from .hdr_io import HdrImage, LdrImage

LOSS_MODES = ("fcm", "plain-vgg")
INPUT_MODES = ("mef", "single-linear", "single-log")
DECAY_INTERVAL = 10


@dataclass
class TrainConfig:
    epochs: int = 400
    lr0: float = 2e-4
    decay: float = 0.9
    seed: int = 0
    loss_mode: str = "fcm"
    input_mode: str = "mef"
    fcm: masking.FcmConfig = field(default_factory=masking.FcmConfig)
    cache_guidance: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr0 <= 0.0:
            raise ConfigError("learning rate must be > 0")
        if not 0.0 < self.decay <= 1.0:
            raise ConfigError("decay must lie in (0, 1]")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"loss_mode must be one of {LOSS_MODES}")
        if self.input_mode not in INPUT_MODES:
            raise ConfigError(f"input_mode must be one of {INPUT_MODES}")


@dataclass
class TrainReport:
    loss_trace: list[float]
    seconds: float
    final_loss: float
    diverged: bool
    mu: float
    exposures: tuple[float, float, float] | None


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    """lr0 * decay^floor(epoch / 10), epoch counted from 0."""
    return cfg.lr0 * cfg.decay ** (epoch // DECAY_INTERVAL)


def _chw(img: LdrImage) -> np.ndarray:
    return np.ascontiguousarray(img.data.transpose(2, 0, 1).astype(np.float32))


def ablation_inputs(
    norm: exp.NormalizedHdr, mode: str
) -> tuple[list[np.ndarray], tuple[float, float, float] | None]:
    """Exposure tensors per input mode; single-image modes triplicate."""
    if mode == "mef":
        eset = exp.make_exposure_set(norm)
        return [_chw(im) for im in eset.images], (eset.e_low, eset.e_mid, eset.e_high)
    if mode == "single-linear":
        single = _chw(exp.render_exposure(norm, 0.0))
        return [single, single.copy(), single.copy()], None
    if mode == "single-log":
        data = norm.image.data.astype(np.float64)
        top = float(data.max())
        mapped = np.log1p(data) / np.log1p(top)
        single = np.ascontiguousarray(mapped.transpose(2, 0, 1).astype(np.float32))
        return [single, single.copy(), single.copy()], None
    raise ConfigError(f"unknown input mode {mode!r}")


def _guidance_targets(
    guidance: LdrImage, weights: vgg.VggWeights, cfg: TrainConfig
) -> tuple[list[np.ndarray] | None, list[np.ndarray]]:
    acts, _ = vgg.vgg_forward(_chw(guidance), weights, cfg.fcm.n_layers)
    if cfg.loss_mode == "fcm":
        return [masking.masked_features(a, cfg.fcm.alpha_hdr, cfg.fcm) for a in acts], acts
    return None, acts


def evaluate_loss(
    output: np.ndarray,
    guidance_acts: list[np.ndarray],
    guidance_masked: list[np.ndarray] | None,
    weights: vgg.VggWeights,
    cfg: TrainConfig,
) -> tuple[float, list[np.ndarray], dict]:
    acts, cache = vgg.vgg_forward(output, weights, cfg.fcm.n_layers)
    if cfg.loss_mode == "fcm":
        loss, grads = masking.fcm_loss(guidance_acts, acts, cfg.fcm, guidance_masked)
    else:
        loss, grads = masking.plain_vgg_loss(guidance_acts, acts)
    return loss, grads, cache


def train(
    src: HdrImage, cfg: TrainConfig, weights: vgg.VggWeights
) -> tuple[LdrImage, TrainReport]:
    """Optimize a fresh network on one image; returns output and report."""
    start = time.perf_counter()
    norm = exp.normalize(src)
    mu = exp.adaptive_mu(norm.median_intensity)
    guidance = exp.mu_law(norm, mu)
    inputs, stops = ablation_inputs(norm, cfg.input_mode)

    guidance_masked, guidance_acts = _guidance_targets(guidance, weights, cfg)
    params = network.init_params(cfg.seed)
    state = optim.AdamState.for_params(params.arrays())

    trace: list[float] = []
    diverged = False
    for epoch in range(cfg.epochs):
        if not cfg.cache_guidance:
            guidance_masked, guidance_acts = _guidance_targets(guidance, weights, cfg)
        y, net_cache = network.forward(inputs, params)
        loss, act_grads, vgg_cache = evaluate_loss(
            y, guidance_acts, guidance_masked, weights, cfg
        )
        if not np.isfinite(loss):
            diverged = True
            break
        trace.append(loss)
        g_y = vgg.vgg_backward(act_grads, vgg_cache, weights)
        grads, _ = network.backward(g_y, net_cache, params)
        try:
            optim.adam_step(params.arrays(), grads.arrays(), state, learning_rate(cfg, epoch))
        except DivergenceError:
            diverged = True
            break

    y, _ = network.forward(inputs, params)
    if diverged or not np.isfinite(y).all():
        diverged = True
        final_loss = trace[-1] if trace else float("nan")
        y = np.clip(np.nan_to_num(y, nan=0.5), 0.0, 1.0)
    else:
        final_loss, _, _ = evaluate_loss(y, guidance_acts, guidance_masked, weights, cfg)
    out = LdrImage(src.width, src.height, np.ascontiguousarray(y.transpose(1, 2, 0)))
    report = TrainReport(
        loss_trace=trace,
        seconds=time.perf_counter() - start,
        final_loss=final_loss,
        diverged=diverged,
        mu=mu,
        exposures=stops,
    )
    return out, report
