import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fcmtone.hdr_io import HdrImage


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def synthetic_hdr(width=64, height=64, low=0.01, high=10.0, seed=7) -> HdrImage:
    """Two intensity plateaus with texture, spanning high/low by construction."""
    r = np.random.default_rng(seed)
    data = np.empty((height, width, 3), dtype=np.float32)
    half = width // 2
    data[:, :half] = low
    data[:, half:] = high
    texture = (0.5 + 0.5 * r.random((height, width, 1))).astype(np.float32)
    data *= texture
    # A few highlights and deep shadows widen the histogram.
    data[: height // 8, : width // 8] = high * 4.0
    data[-height // 8 :, -width // 8 :] = low * 0.25
    return HdrImage(width, height, data)


@pytest.fixture
def small_hdr():
    return synthetic_hdr(width=24, height=16, seed=3)


def acceptance_hdr(size=64) -> HdrImage:
    """Smooth 4-decade synthetic: dark floor, two highlights, gentle waves."""
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    field = (
        0.01
        + 100.0 * np.exp(-(((xx - 0.3) ** 2 + (yy - 0.4) ** 2) / 0.01))
        + 30.0 * np.exp(-(((xx - 0.75) ** 2 + (yy - 0.7) ** 2) / 0.02))
        + 0.02 * (1.0 + np.sin(2.0 * np.pi * 3 * xx) * np.sin(2.0 * np.pi * 2 * yy))
    )
    data = np.stack([field * s for s in (1.0, 0.9, 1.1)], axis=2).astype(np.float32)
    return HdrImage(size, size, data)
