#!/usr/bin/env python3
"""Ablation study runner: trains the loss/input variants on one image and
evaluates every result under the default masked loss.
"""

import argparse
import json
from pathlib import Path

from fcmtone import exposure as exp
from fcmtone.cli import _read_input
from fcmtone.masking import FcmConfig, fcm_loss, masked_features
from fcmtone.trainer import TrainConfig, _chw, train
from fcmtone.vgg import load_weights, vgg_forward

VARIANTS = {
    "default": {},
    "plain-vgg-loss": {"loss_mode": "plain-vgg"},
    "single-linear-input": {"input_mode": "single-linear"},
    "single-log-input": {"input_mode": "single-log"},
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-i", "--input", required=True)
    ap.add_argument("--weights", required=True)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("-o", "--out", default="ablation.json")
    args = ap.parse_args()

    src = _read_input(args.input)
    weights = load_weights(Path(args.weights).read_bytes())
    cfg = FcmConfig()
    norm = exp.normalize(src)
    guidance = exp.mu_law(norm, exp.adaptive_mu(norm.median_intensity))
    g_acts, _ = vgg_forward(_chw(guidance), weights, 3)
    g_masked = [masked_features(a, cfg.alpha_hdr, cfg) for a in g_acts]

    rows = {}
    for name, kw in VARIANTS.items():
        out, report = train(src, TrainConfig(epochs=args.epochs, seed=args.seed, **kw), weights)
        acts, _ = vgg_forward(_chw(out), weights, 3)
        score, _ = fcm_loss(g_acts, acts, cfg, g_masked)
        rows[name] = {"trained_loss": report.final_loss, "default_loss_eval": score}
        print(f"{name:22s} trained {report.final_loss:.5f}  default-eval {score:.5f}")

    Path(args.out).write_text(json.dumps(rows, indent=2))
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
