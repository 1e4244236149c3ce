"""Quantitative comparison metrics.

* Canny edge-map distance between an original and a restored image.
* Gradient difference loss on 64 x 64 patches as a sharpness score.
* Patch mean and standard deviation on [0, 1] intensities.

:func:`run_report` applies them across directories of images aligned by
filename stem and writes a tab-separated record file plus a summary table.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy import ndimage

from . import imageio
from .losses import gdl_sum

log = logging.getLogger(__name__)

PATCH_SIZE = (64, 64)
DEFAULT_THRESHOLDS = (0.1, 0.2)
LUMA = np.array([0.299, 0.587, 0.114])
REPORT_HEADER = "method\timage\tmetric\tpatch\tvalue"


@dataclass(frozen=True)
class PatchSpec:
    label: str
    rect: tuple[int, int, int, int]  # top, left, height, width
    resized_to: tuple[int, int] = PATCH_SIZE

    def __post_init__(self):
        object.__setattr__(self, "rect", tuple(int(v) for v in self.rect))
        if tuple(self.resized_to) != PATCH_SIZE:
            raise ValueError("patches are always resized to 64 x 64")
        top, left, h, w = self.rect
        if top < 0 or left < 0 or h <= 0 or w <= 0:
            raise ValueError(f"invalid patch rectangle {self.rect}")

    @classmethod
    def parse(cls, text: str) -> "PatchSpec":
        """Parse ``label:top,left,height,width``."""
        label, _, coords = text.partition(":")
        parts = coords.split(",")
        if not label or len(parts) != 4:
            raise ValueError(f"patch must look like label:top,left,height,width, got {text!r}")
        return cls(label, tuple(int(p) for p in parts))


def extract_patch(image: np.ndarray, patch: PatchSpec) -> np.ndarray:
    top, left, h, w = patch.rect
    H, W = image.shape[:2]
    if top + h > H or left + w > W:
        raise ValueError(f"patch {patch.label!r} {patch.rect} exceeds image bounds {H}x{W}")
    return imageio.resize(image[top:top + h, left:left + w], patch.resized_to)


# -- Canny ---------------------------------------------------------------------------

def _grayscale01(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        img = img @ LUMA
    return (img + 1.0) / 2.0


def _non_max_suppression(mag: np.ndarray, gy: np.ndarray, gx: np.ndarray) -> np.ndarray:
    """Keep pixels that peak along the quantized gradient direction.

    A pixel must be >= its backward neighbour and > its forward neighbour, so
    a two-pixel plateau yields a one-pixel line.
    """
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    padded = np.pad(mag, 1)
    H, W = mag.shape

    def shifted(dy, dx):
        return padded[1 + dy:1 + dy + H, 1 + dx:1 + dx + W]

    # (backward, forward) neighbour offsets for 0, 45, 90, 135 degrees
    directions = {
        0: ((0, -1), (0, 1)),
        45: ((-1, -1), (1, 1)),
        90: ((-1, 0), (1, 0)),
        135: ((-1, 1), (1, -1)),
    }
    bins = ((np.round(angle / 45.0) % 4) * 45).astype(int)
    keep = np.zeros_like(mag, dtype=bool)
    for deg, (back, fwd) in directions.items():
        sel = bins == deg
        keep |= sel & (mag >= shifted(*back)) & (mag > shifted(*fwd))
    return np.where(keep & (mag > 0), mag, 0.0)


def canny_edges(image: np.ndarray, low: float = DEFAULT_THRESHOLDS[0], high: float = DEFAULT_THRESHOLDS[1],
                sigma: float = 1.4) -> np.ndarray:
    """Binary Canny edge map of a [-1, 1] image (H x W x 3 or H x W).

    Gradient magnitude is rescaled to [0, 1] by its image maximum before the
    ``low``/``high`` hysteresis thresholds are applied.
    """
    if not 0 < low < high:
        raise ValueError("thresholds must satisfy 0 < low < high")
    gray = _grayscale01(image)
    smooth = ndimage.gaussian_filter(gray, sigma, mode="reflect")
    gx = ndimage.sobel(smooth, axis=1, mode="reflect")
    gy = ndimage.sobel(smooth, axis=0, mode="reflect")
    mag = np.hypot(gx, gy)
    peak = mag.max()
    # float dust on flat images must not be blown up into edges
    if peak < 1e-8:
        return np.zeros(gray.shape, dtype=np.uint8)
    nms = _non_max_suppression(mag / peak, gy, gx)
    weak = nms > low
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return np.zeros(gray.shape, dtype=np.uint8)
    strong_labels = np.unique(labels[nms > high])
    strong_labels = strong_labels[strong_labels > 0]
    return np.isin(labels, strong_labels).astype(np.uint8)


def map_distance(edges_a: np.ndarray, edges_b: np.ndarray, metric: str = "l2") -> float:
    """Distance between two binary edge maps.

    ``l2`` (default) is the Euclidean norm of their difference, i.e.
    ``sqrt(#disagreeing pixels)``; ``l1`` is the disagreeing-pixel count.
    """
    if edges_a.shape != edges_b.shape:
        raise ValueError(f"shape mismatch: {edges_a.shape} vs {edges_b.shape}")
    diff = int(np.count_nonzero(np.asarray(edges_a, bool) != np.asarray(edges_b, bool)))
    if metric == "l2":
        return math.sqrt(diff)
    if metric == "l1":
        return float(diff)
    raise ValueError(f"unknown metric {metric!r}")


def edge_distance(a: np.ndarray, b: np.ndarray, thresholds=DEFAULT_THRESHOLDS, metric: str = "l2") -> float:
    """:func:`map_distance` between the Canny edge maps of two images."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    low, high = thresholds
    return map_distance(canny_edges(a, low, high), canny_edges(b, low, high), metric)


# -- patch metrics ---------------------------------------------------------------------

def patch_gdl(original: np.ndarray, generated: np.ndarray, patch: PatchSpec) -> float:
    """Unnormalized GDL (alpha = 1) between the same 64 x 64 patch of two images."""
    po = extract_patch(original, patch).transpose(2, 0, 1)
    pg = extract_patch(generated, patch).transpose(2, 0, 1)
    return float(gdl_sum(torch.from_numpy(po.astype(np.float64)),
                         torch.from_numpy(pg.astype(np.float64)), alpha=1))


def patch_stats(image: np.ndarray, patch: PatchSpec) -> tuple[float, float]:
    """Mean and population std of a patch on [0, 1] intensities, all channels pooled."""
    p = (extract_patch(image, patch).astype(np.float64) + 1.0) / 2.0
    return float(p.mean()), float(p.std())


# -- reports ---------------------------------------------------------------------------

@dataclass
class Record:
    method: str
    image: str
    metric: str
    patch: str
    value: float


@dataclass
class MetricsReport:
    records: list[Record] = field(default_factory=list)
    thresholds: tuple[float, float] = DEFAULT_THRESHOLDS
    patches: list[PatchSpec] = field(default_factory=list)

    def values(self, method: str, metric: str, patch: str = "-") -> list[float]:
        return [r.value for r in self.records
                if r.method == method and r.metric == metric and r.patch == patch]

    def methods(self) -> list[str]:
        return list(dict.fromkeys(r.method for r in self.records))

    def mean(self, method: str, metric: str, patch: str = "-") -> float:
        vals = self.values(method, metric, patch)
        return math.fsum(vals) / len(vals) if vals else float("nan")

    def dumps(self) -> str:
        low, high = self.thresholds
        lines = [f"# canny_low={low!r}\tcanny_high={high!r}\tcanny_sigma=1.4",
                 *(f"# patch {p.label}={','.join(map(str, p.rect))}" for p in self.patches),
                 REPORT_HEADER]
        lines += [f"{r.method}\t{r.image}\t{r.metric}\t{r.patch}\t{r.value!r}" for r in self.records]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "MetricsReport":
        report = cls()
        for line in text.splitlines():
            if not line or line.startswith("#") or line == REPORT_HEADER:
                if line.startswith("# canny_low="):
                    kv = dict(f.split("=", 1) for f in line[2:].split("\t"))
                    report.thresholds = (float(kv["canny_low"]), float(kv["canny_high"]))
                elif line.startswith("# patch "):
                    label, coords = line[len("# patch "):].split("=", 1)
                    report.patches.append(PatchSpec(label, tuple(int(c) for c in coords.split(","))))
                continue
            method, image, metric, patch, value = line.split("\t")
            report.records.append(Record(method, image, metric, patch, float(value)))
        return report

    def summary(self) -> str:
        """Human-readable tables: per-image edge distances with a mean row, then patch metrics."""
        out = []
        methods = [m for m in self.methods() if self.values(m, "edge_distance")]
        images = list(dict.fromkeys(r.image for r in self.records if r.metric == "edge_distance"))
        if images:
            out.append("Edge distance (Canny)")
            out.append("\t".join(["image", *methods]))
            for img in images:
                row = [img]
                for m in methods:
                    v = [r.value for r in self.records
                         if r.method == m and r.image == img and r.metric == "edge_distance"]
                    row.append(f"{v[0]:.2f}" if v else "-")
                out.append("\t".join(row))
            out.append("\t".join(["Mean", *(f"{self.mean(m, 'edge_distance'):.2f}" for m in methods)]))
        for metric, title in (("gdl", "Patch GDL"), ("mean", "Patch mean"), ("std", "Patch std")):
            labels = list(dict.fromkeys(r.patch for r in self.records if r.metric == metric))
            if not labels:
                continue
            out.append("")
            out.append(f"{title} (averaged over images)")
            methods = [m for m in self.methods()
                       if any(r.method == m and r.metric == metric for r in self.records)]
            out.append("\t".join(["patch", *methods]))
            for lab in labels:
                out.append("\t".join([lab, *(f"{self.mean(m, metric, lab):.4f}" for m in methods)]))
        return "\n".join(out) + "\n"

    def write(self, path: str | os.PathLike) -> tuple[Path, Path]:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps())
        summary_path = path.with_suffix(".summary.txt")
        summary_path.write_text(self.summary())
        return path, summary_path


def run_report(original_dir, generated_dirs: list[tuple[str, str | os.PathLike]],
               patch_specs: list[PatchSpec] = (), thresholds=DEFAULT_THRESHOLDS,
               out_path=None, image_size: tuple[int, int] | None = None) -> MetricsReport:
    """Compare each labelled directory against the originals.

    Patch mean/std of the originals themselves are recorded under the method
    name ``original``.

    Images are matched by filename stem; generated images are resized to the
    original's resolution when they differ (or both to ``image_size`` when
    given). Missing files are skipped with a warning. Records are ordered by
    method, then image stem.
    """
    originals = {p.stem: p for p in imageio.list_images(original_dir)}
    report = MetricsReport(thresholds=tuple(thresholds), patches=list(patch_specs))
    cache: dict[str, np.ndarray] = {}
    original_stats: list[Record] = []
    for method, gen_dir in generated_dirs:
        generated = {p.stem: p for p in imageio.list_images(gen_dir)}
        for stem in sorted(originals.keys() ^ generated.keys()):
            log.warning("%s: image %r has no counterpart, skipped", method, stem)
        for stem in sorted(originals.keys() & generated.keys()):
            if stem not in cache:
                cache[stem] = imageio.load_image(originals[stem], image_size)
                for p in patch_specs:
                    mean, std = patch_stats(cache[stem], p)
                    original_stats += [Record("original", stem, "mean", p.label, mean),
                                       Record("original", stem, "std", p.label, std)]
            orig = cache[stem]
            gen = imageio.load_image(generated[stem], orig.shape[:2])
            report.records.append(Record(method, stem, "edge_distance", "-",
                                         edge_distance(orig, gen, thresholds)))
            for p in patch_specs:
                report.records.append(Record(method, stem, "gdl", p.label, patch_gdl(orig, gen, p)))
                mean, std = patch_stats(gen, p)
                report.records.append(Record(method, stem, "mean", p.label, mean))
                report.records.append(Record(method, stem, "std", p.label, std))
    report.records = sorted(original_stats, key=lambda r: r.image) + report.records
    if out_path is not None:
        report.write(out_path)
    return report

