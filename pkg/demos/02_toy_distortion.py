"""
Synthetic underwater pairs
==========================

Procedural clean images pushed through the parametric distortion, written to
disk, and scored with the Canny edge distance.

    python demos/02_toy_distortion.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from ugan import evalsuite, imageio, pairgen

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/toy")
(out / "clean").mkdir(parents=True, exist_ok=True)
(out / "distorted").mkdir(parents=True, exist_ok=True)

params = pairgen.TOY_DISTORTION
print(params)
params.save(out / "params.cfg")

clean = pairgen.make_toy_corpus(6, size=64, seed=0)
for i, img in enumerate(clean):
    dist = pairgen.synth_distort(img, params, seed=i)
    imageio.save_image(img, out / "clean" / f"toy{i}.png")
    imageio.save_image(dist, out / "distorted" / f"toy{i}.png")
    # red drops, the rest is pulled toward the haze colour
    means = ((img + 1) / 2).reshape(-1, 3).mean(0), ((dist + 1) / 2).reshape(-1, 3).mean(0)
    print(f"toy{i}: rgb mean {np.round(means[0], 2)} -> {np.round(means[1], 2)}, "
          f"edge distance {evalsuite.edge_distance(img, dist):.2f}")

# the same pairs, as a manifest with a seeded 2/6 test split
manifest = pairgen.build_split(pairgen.ingest_external_pairs(out / "clean", out / "distorted"), 1 / 3, seed=0)
manifest.save(out / "manifest.tsv")
print(manifest.dumps())
