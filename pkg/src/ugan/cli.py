"""Command-line entry point: ``ugan <subcommand>``.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
``UGAN_DEVICE`` selects the compute device (default: automatic).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import evalsuite, imageio, infer, pairgen, trainer
from .losses import LossWeights

log = logging.getLogger("ugan")


class UsageError(Exception):
    """Bad arguments or invalid input data (exit code 2)."""


# -- prepare-data / synth-distort ------------------------------------------------------

def cmd_prepare_data(args) -> int:
    try:
        manifest = pairgen.ingest_external_pairs(args.clean_dir, args.distorted_dir, seed=args.seed)
        manifest = pairgen.build_split(manifest, args.test_fraction, args.seed)
    except (ValueError, FileNotFoundError) as exc:
        raise UsageError(str(exc)) from exc
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    manifest.save(args.out)
    print(f"wrote {args.out}: {len(manifest.split('train'))} train / {len(manifest.split('test'))} test pairs")
    return 0


def cmd_synth_distort(args) -> int:
    try:
        params = pairgen.DistortionParams.from_file(args.params_file)
        paths = imageio.list_images(args.in_dir)
    except (ValueError, FileNotFoundError) as exc:
        raise UsageError(str(exc)) from exc
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    size = (args.size, args.size) if args.size else None
    for i, path in enumerate(paths):
        clean = imageio.load_image(path, size)
        # one independent noise stream per file, reproducible from --seed
        seed = int(np.random.SeedSequence([args.seed, i]).generate_state(1)[0])
        imageio.save_image(pairgen.synth_distort(clean, params, seed), out_dir / f"{path.stem}.png")
    print(f"wrote {len(paths)} distorted images to {out_dir}")
    return 0


# -- train ----------------------------------------------------------------------------

# flag name -> (TrainConfig field or weights field, reference default)
TRAIN_FLAGS = {
    "epochs": ("epochs", 100),
    "batch_size": ("batch_size", 32),
    "lr": ("learning_rate", 1e-4),
    "beta1": ("adam_beta1", 0.5),
    "beta2": ("adam_beta2", 0.999),
    "n_critic": ("n_critic", 5),
    "image_size": ("image_size", 256),
    "checkpoint_every": ("checkpoint_every", 1000),
    "max_iterations": ("max_iterations", None),
    "seed": ("seed", 0),
}
WEIGHT_FLAGS = {
    "lambda1": ("lambda_1", 100.0),
    "lambda2": ("lambda_2", 1.0),
    "lambda_gp": ("lambda_gp", 10.0),
    "alpha": ("alpha", 1),
}


def resolve_train_config(args) -> trainer.TrainConfig:
    """Preset, then config file, then explicit flags; the variant has the last word on lambda_2."""
    cfg = trainer.TrainConfig.desk() if args.preset == "desk" else trainer.TrainConfig.paper()
    d = cfg.to_dict()
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config file {args.config}: {exc}") from exc
        weights = overrides.pop("weights", {})
        d.update(overrides)
        d["weights"].update(weights)
    for flag, (name, _) in TRAIN_FLAGS.items():
        if getattr(args, flag) is not None:
            d[name] = getattr(args, flag)
    for flag, (name, _) in WEIGHT_FLAGS.items():
        if getattr(args, flag) is not None:
            d["weights"][name] = getattr(args, flag)
    if args.variant == "ugan":
        d["weights"]["lambda_2"] = 0.0
    elif args.lambda2 is None and d["weights"]["lambda_2"] == 0.0:
        d["weights"]["lambda_2"] = 1.0
    try:
        return trainer.TrainConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid training configuration: {exc}") from exc


def cmd_train(args) -> int:
    cfg = resolve_train_config(args)
    if args.dump_config:
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return 0
    if not args.manifest:
        raise UsageError("--manifest is required")
    try:
        manifest = pairgen.DatasetManifest.load(args.manifest)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read manifest: {exc}") from exc
    try:
        result = trainer.train(manifest, cfg, out_dir=args.out_dir, resume_from=args.resume)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    last = result.records[-1] if result.records else {}
    print(f"trained to iteration {result.state.iteration}; last record: {json.dumps(last)}")
    print(f"checkpoints: {', '.join(str(p) for p in result.checkpoints)}")
    return 0


# -- infer / benchmark / evaluate ----------------------------------------------------------

def cmd_infer(args) -> int:
    inputs = infer.expand_inputs(args.inputs)
    written = infer.restore(args.checkpoint, inputs, args.out_dir, resize_to_source=args.resize_to_source)
    print(f"wrote {len(written)} of {len(inputs)} images to {args.out_dir}")
    return 0 if written or not inputs else 1


def cmd_benchmark(args) -> int:
    if args.trials < 10:
        raise UsageError("--trials must be at least 10")
    r = infer.benchmark(args.checkpoint, args.trials, args.device)
    h, w, c = r.image_size
    print(f"device={r.device_label} image={h}x{w}x{c} trials={r.trials}")
    print(f"mean_seconds_per_image={r.mean_seconds_per_image:.6f} fps={r.fps:.2f}")
    return 0


def _labelled_dir(text: str) -> tuple[str, str]:
    label, sep, path = text.partition("=")
    if not sep or not label or not path:
        raise argparse.ArgumentTypeError(f"expected label=directory, got {text!r}")
    return label, path


def _patch(text: str) -> evalsuite.PatchSpec:
    try:
        return evalsuite.PatchSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def cmd_evaluate(args) -> int:
    if not 0 < args.canny_low < args.canny_high:
        raise UsageError("need 0 < --canny-low < --canny-high")
    size = (args.image_size, args.image_size) if args.image_size else None
    try:
        report = evalsuite.run_report(args.original_dir, args.method, args.patch,
                                      (args.canny_low, args.canny_high), out_path=args.out,
                                      image_size=size)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from exc
    print(report.summary(), end="")
    print(f"report written to {args.out}")
    return 0


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ugan", description="Underwater image restoration with UGAN / UGAN-P.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("prepare-data", help="pair clean/distorted files and split train/test")
    s.add_argument("--clean-dir", required=True, help="directory of undistorted images")
    s.add_argument("--distorted-dir", required=True, help="directory of distorted counterparts (same stems)")
    s.add_argument("--test-fraction", type=float, default=0.1, help="share of pairs tagged test (default: 0.1)")
    s.add_argument("--seed", type=int, default=0, help="shuffle seed (default: 0)")
    s.add_argument("--out", required=True, help="manifest file to write")
    s.set_defaults(func=cmd_prepare_data)

    s = sub.add_parser("synth-distort", help="apply the parametric distortion to a directory")
    s.add_argument("--in-dir", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--params-file", required=True,
                   help="key = value file with red_attenuation, haze_color, haze_strength, blur_radius, noise_std")
    s.add_argument("--seed", type=int, default=0, help="noise seed (default: 0)")
    s.add_argument("--size", type=int, default=None, help="resize to SIZE x SIZE first (default: keep native size)")
    s.set_defaults(func=cmd_synth_distort)

    s = sub.add_parser("train", help="train the generator and critic",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       description="Defaults reproduce the reference setup: lambda1=100, lambda_gp=10, batch size 32, "
                                   "Adam lr 1e-4, n_critic=5, 100 epochs; UGAN-P adds lambda2=1.0, alpha=1.\n"
                                   "Precedence: flags > --config file > --preset.")
    s.add_argument("--manifest", help="manifest written by prepare-data")
    s.add_argument("--variant", choices=("ugan", "ugan-p"), default="ugan-p",
                   help="ugan forces lambda2=0; ugan-p uses lambda2=1.0, alpha=1 (default: ugan-p)")
    s.add_argument("--preset", choices=("paper", "desk"), default="paper",
                   help="paper: 256x256, batch 32; desk: 64x64, batch 4, lr 2e-3, smaller networks (default: paper)")
    s.add_argument("--config", help="JSON file of TrainConfig fields overriding the preset")
    s.add_argument("--dump-config", action="store_true", help="print the resolved configuration and exit")
    s.add_argument("--out-dir", default="runs/ugan", help="checkpoints and metrics.jsonl (default: runs/ugan)")
    s.add_argument("--resume", help="training checkpoint to continue from")
    s.add_argument("--epochs", type=int, help="training epochs (reference default: 100)")
    s.add_argument("--batch-size", type=int, help="batch size (reference default: 32)")
    s.add_argument("--lr", type=float, help="Adam learning rate (reference default: 1e-4)")
    s.add_argument("--beta1", type=float, help="Adam beta1 (default: 0.5)")
    s.add_argument("--beta2", type=float, help="Adam beta2 (default: 0.999)")
    s.add_argument("--n-critic", type=int, help="critic updates per generator update (reference default: 5)")
    s.add_argument("--lambda1", type=float, help="L1 weight (reference default: 100)")
    s.add_argument("--lambda2", type=float, help="GDL weight for ugan-p (reference default: 1.0)")
    s.add_argument("--lambda-gp", type=float, help="gradient penalty weight (reference default: 10)")
    s.add_argument("--alpha", type=int, help="GDL exponent (reference default: 1)")
    s.add_argument("--image-size", type=int, help="training resolution (reference default: 256)")
    s.add_argument("--checkpoint-every", type=int, help="checkpoint cadence in iterations (default: 1000)")
    s.add_argument("--max-iterations", type=int, help="stop after this many iterations")
    s.add_argument("--seed", type=int, help="seed for weights, batches and penalties (default: 0)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("infer", help="restore images with a trained checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--resize-to-source", action="store_true",
                   help="resize outputs back to the input resolution (default: model resolution)")
    s.add_argument("inputs", nargs="+", help="image files or directories")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("benchmark", help="time single-image inference")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--trials", type=int, default=100, help="timed passes after one warm-up (default: 100, min 10)")
    s.add_argument("--device", default=None, help="device label (default: $UGAN_DEVICE or automatic)")
    s.set_defaults(func=cmd_benchmark)

    s = sub.add_parser("evaluate", help="edge distance and patch metrics against originals")
    s.add_argument("--original-dir", required=True)
    s.add_argument("--method", type=_labelled_dir, action="append", required=True,
                   help="label=directory of generated images; repeatable")
    s.add_argument("--patch", type=_patch, action="append", default=[],
                   help="label:top,left,height,width; repeatable")
    s.add_argument("--canny-low", type=float, default=evalsuite.DEFAULT_THRESHOLDS[0],
                   help="Canny low threshold on normalized magnitude (default: 0.1)")
    s.add_argument("--canny-high", type=float, default=evalsuite.DEFAULT_THRESHOLDS[1],
                   help="Canny high threshold on normalized magnitude (default: 0.2)")
    s.add_argument("--image-size", type=int, default=None, help="resize originals to SIZE x SIZE first")
    s.add_argument("--out", required=True, help="report file (tab-separated records)")
    s.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ugan {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        log.debug("failure", exc_info=True)
        print(f"ugan {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
