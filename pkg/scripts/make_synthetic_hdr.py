#!/usr/bin/env python3
"""Write synthetic HDR test scenes (.hdr and .pfm).

`blobs`: smooth four-decade field with two highlights (the acceptance
scene). `plateaus`: harsh two-level split with texture, a stress case for
the adaptive mu selection.
"""

import argparse
from pathlib import Path

import numpy as np

from fcmtone.hdr_io import HdrImage, write_pfm, write_radiance


def blobs(size: int) -> HdrImage:
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    field = (
        0.01
        + 100.0 * np.exp(-(((xx - 0.3) ** 2 + (yy - 0.4) ** 2) / 0.01))
        + 30.0 * np.exp(-(((xx - 0.75) ** 2 + (yy - 0.7) ** 2) / 0.02))
        + 0.02 * (1.0 + np.sin(2 * np.pi * 3 * xx) * np.sin(2 * np.pi * 2 * yy))
    )
    data = np.stack([field * s for s in (1.0, 0.9, 1.1)], axis=2).astype(np.float32)
    return HdrImage(size, size, data)


def plateaus(size: int, seed: int = 7) -> HdrImage:
    rng = np.random.default_rng(seed)
    data = np.empty((size, size, 3), dtype=np.float32)
    data[:, : size // 2] = 0.01
    data[:, size // 2 :] = 10.0
    data *= (0.5 + 0.5 * rng.random((size, size, 1))).astype(np.float32)
    return HdrImage(size, size, data)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scene", choices=("blobs", "plateaus"), default="blobs")
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("-o", "--out", default="scene", help="output stem")
    args = ap.parse_args()
    img = blobs(args.size) if args.scene == "blobs" else plateaus(args.size)
    Path(f"{args.out}.hdr").write_bytes(write_radiance(img))
    Path(f"{args.out}.pfm").write_bytes(write_pfm(img.data))
    lo, hi = img.data[img.data > 0].min(), img.data.max()
    print(f"wrote {args.out}.hdr / {args.out}.pfm ({args.size}x{args.size}, "
          f"{np.log10(hi / lo):.1f} orders of magnitude)")


if __name__ == "__main__":
    main()
