"""Paired training-set construction.

Pairs are (clean, distorted) images matched by filename stem. Distorted
counterparts either come from an external distorter (files on disk) or from
:func:`synth_distort`, a small parametric stand-in: red-channel attenuation,
Gaussian blur, haze blending and additive noise.
"""

from __future__ import annotations

import configparser
import dataclasses
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import imageio

log = logging.getLogger(__name__)

MANIFEST_MAGIC = "#ugan-manifest"
SPLITS = ("train", "test")


class EmptyDatasetError(ValueError):
    pass


class AmbiguousStemError(ValueError):
    pass


@dataclass(frozen=True)
class ImagePair:
    clean: np.ndarray
    distorted: np.ndarray

    def __post_init__(self):
        if self.clean.shape != self.distorted.shape:
            raise ValueError(f"pair shapes differ: {self.clean.shape} vs {self.distorted.shape}")
        imageio.check_tensor(self.clean)
        imageio.check_tensor(self.distorted)


@dataclass(frozen=True)
class ManifestEntry:
    clean_path: str
    distorted_path: str
    split: str = "train"


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    seed: int = 0

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.split not in SPLITS:
                raise ValueError(f"unknown split tag {e.split!r}")
            if e.clean_path in seen:
                raise ValueError(f"clean path listed twice: {e.clean_path}")
            seen.add(e.clean_path)

    def __len__(self):
        return len(self.entries)

    def split(self, tag: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == tag]

    def dumps(self) -> str:
        lines = [f"{MANIFEST_MAGIC}\tseed={self.seed}"]
        lines += [f"{e.clean_path}\t{e.distorted_path}\t{e.split}" for e in self.entries]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "DatasetManifest":
        lines = text.splitlines()
        if not lines or not lines[0].startswith(MANIFEST_MAGIC):
            raise ValueError("not a manifest file (missing header line)")
        header = dict(kv.split("=", 1) for kv in lines[0].split("\t")[1:])
        entries = []
        for n, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"line {n}: expected 3 tab-separated fields, got {len(parts)}")
            entries.append(ManifestEntry(*parts))
        return cls(entries, seed=int(header.get("seed", 0)))

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "DatasetManifest":
        return cls.loads(Path(path).read_text())


def _index_by_stem(directory: Path) -> dict[str, Path]:
    index: dict[str, Path] = {}
    for p in imageio.list_images(directory):
        if p.stem in index:
            raise AmbiguousStemError(f"stem {p.stem!r} appears twice in {directory}")
        index[p.stem] = p
    return index


def ingest_external_pairs(clean_dir, distorted_dir, seed: int = 0) -> DatasetManifest:
    """Pair files in two directories by equal filename stem.

    Unmatched files are logged as warnings. All entries are tagged ``train``.
    """
    clean = _index_by_stem(Path(clean_dir))
    distorted = _index_by_stem(Path(distorted_dir))
    matched = sorted(clean.keys() & distorted.keys())
    for stem in sorted(clean.keys() ^ distorted.keys()):
        where = clean_dir if stem in clean else distorted_dir
        log.warning("unmatched image %r in %s", stem, where)
    if not matched:
        raise EmptyDatasetError(f"no matching pairs between {clean_dir} and {distorted_dir}")
    entries = [ManifestEntry(str(clean[s]), str(distorted[s])) for s in matched]
    return DatasetManifest(entries, seed=seed)


def _round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def build_split(manifest: DatasetManifest, test_fraction: float, seed: int) -> DatasetManifest:
    """Assign train/test tags by a seeded shuffle.

    The test count is ``test_fraction * N`` rounded half away from zero, capped
    at ``N - 1`` so that the train set is never empty.
    """
    n = len(manifest)
    if n == 0:
        raise EmptyDatasetError("cannot split an empty manifest")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n_test = min(_round_half_away(test_fraction * n), n - 1)
    if n - n_test < 1:
        raise ValueError("split would leave the train set empty")
    order = np.random.default_rng(seed).permutation(n)
    test_idx = set(order[:n_test].tolist())
    entries = [dataclasses.replace(e, split="test" if i in test_idx else "train")
               for i, e in enumerate(manifest.entries)]
    return DatasetManifest(entries, seed=seed)


@dataclass(frozen=True)
class DistortionParams:
    red_attenuation: float = 1.0
    haze_color: tuple[float, float, float] = (0.0, 0.0, 0.0)
    haze_strength: float = 0.0
    blur_radius: float = 0.0
    noise_std: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "haze_color", tuple(float(c) for c in self.haze_color))
        if not 0.0 <= self.red_attenuation <= 1.0:
            raise ValueError("red_attenuation must be in [0, 1]")
        if len(self.haze_color) != 3 or any(not -1.0 <= c <= 1.0 for c in self.haze_color):
            raise ValueError("haze_color must be three values in [-1, 1]")
        if not 0.0 <= self.haze_strength <= 1.0:
            raise ValueError("haze_strength must be in [0, 1]")
        if self.blur_radius < 0 or self.noise_std < 0:
            raise ValueError("blur_radius and noise_std must be non-negative")

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "DistortionParams":
        """Read ``key = value`` lines; keys are the field names.

        A section header is optional. ``haze_color`` takes three
        comma-separated numbers.
        """
        text = Path(path).read_text()
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text if text.lstrip().startswith("[") else "[distortion]\n" + text)
        except configparser.Error as exc:
            raise ValueError(f"malformed params file {path}: {exc}") from exc
        values = {}
        known = {f.name for f in dataclasses.fields(cls)}
        for section in parser.sections():
            for key, raw in parser.items(section):
                if key not in known:
                    raise ValueError(f"unknown distortion key {key!r}")
                if key == "haze_color":
                    values[key] = tuple(float(c) for c in raw.split(","))
                else:
                    values[key] = float(raw)
        return cls(**values)

    def save(self, path: str | os.PathLike) -> Path:
        """Write a params file that :meth:`from_file` reads back."""
        lines = [f"{f.name} = {', '.join(map(repr, v)) if isinstance(v, tuple) else repr(v)}"
                 for f in dataclasses.fields(self) for v in [getattr(self, f.name)]]
        path = Path(path)
        path.write_text("\n".join(lines) + "\n")
        return path


def synth_distort(clean: np.ndarray, params: DistortionParams, seed: int) -> np.ndarray:
    """Apply the parametric underwater distortion to a [-1, 1] image.

    Red attenuation scales physical intensity ((v + 1) / 2), so dark reds are
    never brightened. Blur is Gaussian with ``blur_radius`` as sigma and
    reflected edges.
    """
    x = np.array(clean, dtype=np.float64)
    red01 = (x[..., 0] + 1.0) / 2.0 * params.red_attenuation
    x[..., 0] = red01 * 2.0 - 1.0
    if params.blur_radius > 0:
        x = ndimage.gaussian_filter(x, sigma=(params.blur_radius, params.blur_radius, 0), mode="reflect")
    h = params.haze_strength
    x = x * (1.0 - h) + np.asarray(params.haze_color) * h
    if params.noise_std > 0:
        x = x + np.random.default_rng(seed).normal(0.0, params.noise_std, size=x.shape)
    return np.clip(x, -1.0, 1.0).astype(np.float32)


# Underwater-looking defaults for the toy corpus: red loss, blue-green haze,
# softening and enough sensor noise to disturb the edge maps.
TOY_DISTORTION = DistortionParams(red_attenuation=0.4, haze_color=(-0.6, -0.1, 0.1),
                                  haze_strength=0.3, blur_radius=1.0, noise_std=0.15)


def make_toy_corpus(n: int, size: int = 64, seed: int = 0) -> list[np.ndarray]:
    """Procedural clean images: coloured rectangles and discs on a gradient."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    images = []
    for _ in range(n):
        top, bottom = rng.uniform(-0.6, 0.8, size=(2, 3))
        img = top + (bottom - top) * yy[..., None]
        for _ in range(rng.integers(2, 5)):
            color = rng.uniform(-1, 1, size=3)
            if rng.random() < 0.5:
                r0, c0 = rng.integers(0, size - size // 4, size=2)
                h, w = rng.integers(size // 8, size // 2, size=2)
                img[r0:r0 + h, c0:c0 + w] = color
            else:
                cy, cx = rng.uniform(0.2, 0.8, size=2)
                rad = rng.uniform(0.08, 0.25)
                img[(yy - cy) ** 2 + (xx - cx) ** 2 < rad ** 2] = color
        images.append(np.clip(img, -1, 1).astype(np.float32))
    return images


@dataclass
class PairSet:
    """In-memory arrays for a manifest split, laid out N x 3 x H x W."""
    clean: np.ndarray
    distorted: np.ndarray
    names: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.clean)


def load_pairs(manifest: DatasetManifest, split: str, image_size: int) -> PairSet:
    entries = manifest.split(split)
    size = (image_size, image_size)
    clean = [imageio.load_image(e.clean_path, size) for e in entries]
    distorted = [imageio.load_image(e.distorted_path, size) for e in entries]
    if not entries:
        empty = np.zeros((0, 3, image_size, image_size), np.float32)
        return PairSet(empty, empty.copy(), [])
    return PairSet(np.stack(clean).transpose(0, 3, 1, 2).copy(),
                   np.stack(distorted).transpose(0, 3, 1, 2).copy(),
                   [Path(e.clean_path).stem for e in entries])
