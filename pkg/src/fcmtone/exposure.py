"""HDR normalization, exposure selection, and adaptive mu-law compression.

The input HDR image is mean-normalized to 0.5, split into three clipped
exposures that bracket its content, and compressed by a mu-law whose mu is
chosen from the median intensity of the normalized image. The compressed
image is the training guidance; the exposures are the network inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateInputError
from .hdr_io import HdrImage, LdrImage

# Percentile anchors for exposure selection: scale the 95th luminance
# percentile to 0.9 for the darkening exposure and the 5th percentile to 0.1
# for the brightening one, then halve both stops to keep content moderate.
ANCHOR_HIGH = 0.9
ANCHOR_LOW = 0.1
PCTL_HIGH = 95.0
PCTL_LOW = 5.0


@dataclass(frozen=True)
class AdaptiveMuParams:
    """Fit constants of the median-driven mu curve."""

    lambda1: float = 8.759
    gamma1: float = 2.148
    lambda2: float = 0.1494
    gamma2: float = -2.067


@dataclass
class NormalizedHdr:
    """Mean-0.5 HDR image plus the statistics derived from it."""

    image: HdrImage
    median_intensity: float
    original_mean: float


@dataclass
class ExposureSet:
    """Three clipped exposures in ascending stop order."""

    e_low: float
    e_mid: float
    e_high: float
    images: tuple[LdrImage, LdrImage, LdrImage]


def lower_median(values: np.ndarray) -> float:
    """Median without interpolation: element floor((n-1)/2) of the sorted data."""
    flat = np.asarray(values).ravel()
    k = (flat.size - 1) // 2
    return float(np.partition(flat, k)[k])


def nearest_rank_percentile(sorted_values: np.ndarray, pct: float) -> float:
    """Nearest-rank percentile over an ascending-sorted 1-D array."""
    n = sorted_values.size
    rank = max(1, math.ceil(pct / 100.0 * n))
    return float(sorted_values[min(rank, n) - 1])


def normalize(src: HdrImage) -> NormalizedHdr:
    """Scale so the mean over all RGB components is 0.5; record the median."""
    mean = float(src.data.mean(dtype=np.float64))
    if mean <= 0.0:
        raise DegenerateInputError("degenerate HDR input: image is all zero")
    scaled = (src.data.astype(np.float64) * (0.5 / mean)).astype(np.float32)
    image = HdrImage(src.width, src.height, scaled)
    return NormalizedHdr(image, lower_median(scaled), mean)


def adaptive_mu(median: float, params: AdaptiveMuParams = AdaptiveMuParams()) -> float:
    """mu = lambda1 * median^gamma1 + lambda2 * median^gamma2."""
    if median <= 0.0:
        raise ConfigError("median intensity must be > 0 (negative-power term)")
    return params.lambda1 * median**params.gamma1 + params.lambda2 * median**params.gamma2


def mu_law(norm: NormalizedHdr, mu: float) -> LdrImage:
    """Compress with log(1 + mu*v)/log(1 + mu), clamped to [0, 1].

    Clamping is needed because only the mean is normalized, so components
    above 1 exist; the natural-log base cancels in the ratio.
    """
    if mu <= 0.0:
        raise ConfigError("mu must be > 0")
    v = norm.image.data.astype(np.float64)
    out = np.log1p(mu * v) / math.log1p(mu)
    out = np.clip(out, 0.0, 1.0).astype(np.float32)
    return LdrImage(norm.image.width, norm.image.height, out)


def exposures_from_luminance(y: np.ndarray) -> tuple[float, float, float]:
    """Stops from the strictly positive per-pixel luminances.

    e_low = log2(ANCHOR_HIGH / P95) / 2 and e_high = log2(ANCHOR_LOW / P5) / 2;
    if the pair comes out inverted the two collapse to their average.
    """
    pos = np.sort(y[y > 0.0].astype(np.float64))
    if pos.size == 0:
        raise DegenerateInputError("degenerate HDR input: no positive luminance")
    p_hi = nearest_rank_percentile(pos, PCTL_HIGH)
    p_lo = nearest_rank_percentile(pos, PCTL_LOW)
    e_low = 0.5 * math.log2(ANCHOR_HIGH / p_hi)
    e_high = 0.5 * math.log2(ANCHOR_LOW / p_lo)
    if e_low > e_high:
        e_low = e_high = (e_low + e_high) / 2.0
    return e_low, (e_low + e_high) / 2.0, e_high


def select_exposures(norm: NormalizedHdr) -> tuple[float, float, float]:
    """Pick (e_low, e_mid, e_high) from the normalized image's luminance."""
    y = norm.image.data.mean(axis=2, dtype=np.float64)
    return exposures_from_luminance(y)


def render_exposure(norm: NormalizedHdr, e: float) -> LdrImage:
    """clip(2^e * v) into [0, 1]; no quantization."""
    v = norm.image.data.astype(np.float64) * 2.0**e
    out = np.clip(v, 0.0, 1.0).astype(np.float32)
    return LdrImage(norm.image.width, norm.image.height, out)


def make_exposure_set(norm: NormalizedHdr) -> ExposureSet:
    """Select stops and render the three clipped exposures."""
    e_low, e_mid, e_high = select_exposures(norm)
    images = tuple(render_exposure(norm, e) for e in (e_low, e_mid, e_high))
    return ExposureSet(e_low, e_mid, e_high, images)
