#!/usr/bin/env python3
"""Penalty-ranking table: loss increase per sinusoid contrast level.

For each base contrast the amplitude is bumped by delta and both the
masked loss and the plain feature loss between the two patterns are
printed. The masked loss should penalize the low-contrast pattern
hardest; the plain loss barely depends on the base contrast.
"""

import argparse
from pathlib import Path

from fcmtone.masking import FcmConfig, sinusoid_penalty_probe
from fcmtone.vgg import load_weights, random_weights, save_weight_file


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--weights", help="FCMW file (default: random seed-2024 weights)")
    ap.add_argument("--contrasts", type=float, nargs="+", default=[0.05, 0.15, 0.35])
    ap.add_argument("--delta", type=float, default=0.05)
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--period", type=float, default=16.0)
    args = ap.parse_args()
    if args.weights:
        weights = load_weights(Path(args.weights).read_bytes())
    else:
        weights = load_weights(save_weight_file(random_weights(2024).layers))
    res = sinusoid_penalty_probe(
        args.contrasts, args.delta, FcmConfig(), weights, size=args.size, period=args.period
    )
    print(f"{'contrast':>10} {'masked-loss delta':>18} {'plain-loss delta':>18}")
    for c, f, v in zip(res.contrasts, res.fcm_deltas, res.vgg_deltas):
        print(f"{c:>10.3f} {f:>18.6f} {v:>18.6f}")


if __name__ == "__main__":
    main()
