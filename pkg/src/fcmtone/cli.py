"""Command-line surface: tonemap, dump, gradcheck.

Every numeric flag is validated against the module preconditions before any
work starts. Failures exit with status 1 and a categorized message
(io | format | config | divergence).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fcmtone",
        description="Self-supervised per-image HDR tone mapping",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_train=True):
        p.add_argument("-i", "--input", required=True, help="input .hdr or .pfm file")
        p.add_argument(
            "--weights",
            default=os.environ.get("FCMW_WEIGHTS"),
            help="FCMW weight file (falls back to $FCMW_WEIGHTS)",
        )
        p.add_argument("--patch", type=int, default=13)
        p.add_argument("--sigma", type=float, default=2.0)
        p.add_argument("--alpha-hdr", type=float, default=0.5)
        p.add_argument("--alpha-tm", type=float, default=1.0)
        p.add_argument("--layers", type=int, default=3)
        if with_train:
            p.add_argument("--epochs", type=int, default=400)
            p.add_argument("--lr", type=float, default=2e-4)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--loss", choices=("fcm", "plain-vgg"), default="fcm")
            p.add_argument("--input-mode", choices=("mef", "linear", "log"), default="mef")
        p.add_argument("--threads", type=int, default=0, help="0 = auto")

    tm = sub.add_parser("tonemap", help="train on one image and write the result")
    add_common(tm)
    tm.add_argument("-o", "--output", required=True, help="output .ppm file")
    tm.add_argument("--gamma", type=float, default=1.0)
    tm.add_argument("--dump", metavar="DIR", help="also write diagnostic PFMs here")

    dp = sub.add_parser("dump", help="write exposures, guidance, and masking maps")
    add_common(dp, with_train=False)
    dp.add_argument("-o", "--out-dir", required=True)
    dp.add_argument("--channel", type=int, default=0, help="feature channel to dump")

    gc = sub.add_parser("gradcheck", help="finite-difference validation of backwards")
    gc.add_argument("--tolerance", type=float, default=1e-3)
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--threads", type=int, default=0)
    return parser


def _set_threads(n: int) -> None:
    if n > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def _read_input(path: str):
    from . import hdr_io
    from .errors import FormatError

    data = Path(path).read_bytes()
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        return hdr_io.read_pfm(data)
    if suffix in (".hdr", ".pic", ".rgbe"):
        return hdr_io.read_radiance(data)
    raise FormatError(f"unrecognized input extension {suffix!r} (.hdr or .pfm)")


def _load_weights(path: str | None):
    from . import vgg
    from .errors import ConfigError

    if not path:
        raise ConfigError("no weight file: pass --weights or set FCMW_WEIGHTS")
    return vgg.load_weights(Path(path).read_bytes())


def _fcm_config(args):
    from .masking import FcmConfig

    return FcmConfig(
        alpha_hdr=args.alpha_hdr,
        alpha_tm=args.alpha_tm,
        patch=args.patch,
        gaussian_sigma=args.sigma,
        n_layers=args.layers,
    )


def _mode_name(flag: str) -> str:
    return {"mef": "mef", "linear": "single-linear", "log": "single-log"}[flag]


def _cmd_tonemap(args) -> int:
    from . import hdr_io, trainer
    from .errors import ConfigError, DivergenceError

    cfg = trainer.TrainConfig(
        epochs=args.epochs,
        lr0=args.lr,
        seed=args.seed,
        loss_mode=args.loss,
        input_mode=_mode_name(args.input_mode),
        fcm=_fcm_config(args),
    )
    if args.gamma <= 0:
        raise ConfigError("gamma must be > 0")
    src = _read_input(args.input)
    weights = _load_weights(args.weights)
    out_img, report = trainer.train(src, cfg, weights)
    out_path = Path(args.output)
    report_path = out_path.parent / (out_path.stem + ".report.json")
    payload = {
        "report_version": 1,
        "input": str(args.input),
        "output": str(out_path),
        "mu": report.mu,
        "exposures": (
            None
            if report.exposures is None
            else dict(zip(("e_low", "e_mid", "e_high"), report.exposures))
        ),
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "loss_mode": cfg.loss_mode,
        "input_mode": cfg.input_mode,
        "final_loss": report.final_loss,
        "loss_trace": report.loss_trace,
        "seconds": report.seconds,
        "diverged": report.diverged,
    }
    if report.diverged:
        report_path.write_text(json.dumps(payload, indent=2))
        raise DivergenceError(f"training diverged; partial report at {report_path}")
    out_path.write_bytes(hdr_io.write_ppm(out_img, gamma=args.gamma))
    report_path.write_text(json.dumps(payload, indent=2))
    if args.dump:
        _write_diagnostics(src, weights, _fcm_config(args), Path(args.dump), channel=0)
    print(f"wrote {out_path} (mu={report.mu:.4g}, final_loss={report.final_loss:.6g})")
    return 0


def _write_diagnostics(src, weights, fcm_cfg, out_dir: Path, channel: int) -> float:
    from . import exposure as exp
    from . import hdr_io, masking, vgg

    out_dir.mkdir(parents=True, exist_ok=True)
    norm = exp.normalize(src)
    mu = exp.adaptive_mu(norm.median_intensity)
    guidance = exp.mu_law(norm, mu)
    eset = exp.make_exposure_set(norm)
    for stem, img in (
        ("exposure_low", eset.images[0]),
        ("exposure_mid", eset.images[1]),
        ("exposure_high", eset.images[2]),
        ("guidance_mu", guidance),
    ):
        (out_dir / f"{stem}.pfm").write_bytes(hdr_io.write_pfm(img.data))
    chw = guidance.data.transpose(2, 0, 1).astype("float32")
    acts, _ = vgg.vgg_forward(chw, weights, fcm_cfg.n_layers)
    for li, act in enumerate(acts):
        ch = min(channel, act.shape[0] - 1)
        maps = masking.compute_contrast_maps(act, fcm_cfg.alpha_hdr, fcm_cfg)
        masking.write_map_dumps(maps, out_dir, li, [ch])
    manifest = {
        "mu": mu,
        "exposures": {"e_low": eset.e_low, "e_mid": eset.e_mid, "e_high": eset.e_high},
        "layers": fcm_cfg.n_layers,
        "channel": channel,
    }
    (out_dir / "dump.json").write_text(json.dumps(manifest, indent=2))
    return mu


def _cmd_dump(args) -> int:
    src = _read_input(args.input)
    weights = _load_weights(args.weights)
    mu = _write_diagnostics(src, weights, _fcm_config(args), Path(args.out_dir), args.channel)
    print(f"mu={mu:.6g}")
    print(f"wrote diagnostics to {args.out_dir}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite

    start = time.perf_counter()
    report = run_suite(tolerance=args.tolerance, seed=args.seed)
    for line in report.lines():
        print(line)
    print(f"({time.perf_counter() - start:.1f}s)")
    if not report.passed:
        print("gradcheck FAILED", file=sys.stderr)
        return 1
    print("gradcheck passed")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    _set_threads(getattr(args, "threads", 0))
    from .errors import ConfigError, DegenerateInputError, DivergenceError, FormatError

    try:
        if args.command == "tonemap":
            return _cmd_tonemap(args)
        if args.command == "dump":
            return _cmd_dump(args)
        return _cmd_gradcheck(args)
    except OSError as err:
        print(f"io: {err}", file=sys.stderr)
    except (FormatError, DegenerateInputError) as err:
        print(f"format: {err}", file=sys.stderr)
    except ConfigError as err:
        print(f"config: {err}", file=sys.stderr)
    except DivergenceError as err:
        print(f"divergence: {err}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
