#!/usr/bin/env python3
"""Write a random FCMW weight file (canonical truncated-VGG shapes).

Lets the tone mapper run end-to-end without the pretrained export tool;
useful for smoke tests and the acceptance suite.
"""

import argparse
from pathlib import Path

from fcmtone.vgg import random_weights, save_weight_file


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-o", "--out", default="random.fcmw")
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()
    data = save_weight_file(random_weights(args.seed).layers)
    Path(args.out).write_bytes(data)
    print(f"wrote {args.out} ({len(data)} bytes, seed {args.seed})")


if __name__ == "__main__":
    main()
