"""
Desk-scale training run
=======================

Trains the small 64x64 profile on synthetic pairs for a few hundred
iterations, then restores the held-out images and compares edge distances.
Takes a couple of minutes on one CPU core.

    python demos/03_desk_training.py [out_dir] [iterations]
"""

import sys
from pathlib import Path

from ugan import evalsuite, imageio, infer, pairgen, trainer
from ugan.trainer import TrainConfig

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/desk")
iterations = int(sys.argv[2]) if len(sys.argv) > 2 else 200

for sub in ("clean", "distorted"):
    (out / sub).mkdir(parents=True, exist_ok=True)
for i, img in enumerate(pairgen.make_toy_corpus(40, 64, seed=0)):
    imageio.save_image(img, out / "clean" / f"toy{i:02d}.png")
    imageio.save_image(pairgen.synth_distort(img, pairgen.TOY_DISTORTION, seed=i), out / "distorted" / f"toy{i:02d}.png")

manifest = pairgen.build_split(pairgen.ingest_external_pairs(out / "clean", out / "distorted"), 0.25, seed=0)
config = TrainConfig.desk(max_iterations=iterations)
result = trainer.train(manifest, config, out_dir=out / "run")

for r in result.records[:: max(1, iterations // 10)]:
    print(f"iter {r['iteration']:4d}  critic {r['critic_loss']:8.3f}  "
          f"L1 {r['l1'] / config.weights.lambda_1:.4f}  gdl {r['gdl']:.4f}  gp {r['gp']:.3f}")

tests = [Path(e.distorted_path) for e in manifest.split("test")]
infer.restore(out / "run" / "final.npz", tests, out / "restored")

print("\nimage    distorted  restored   (Canny edge distance to the clean image)")
for p in tests:
    c = imageio.load_image(out / "clean" / p.name, None)
    d = imageio.load_image(p, None)
    r = imageio.load_image(out / "restored" / p.name, None)
    print(f"{p.stem}   {evalsuite.edge_distance(c, d):9.2f} {evalsuite.edge_distance(c, r):9.2f}")
