"""Image loading, saving and conversion between 8-bit pixels and [-1, 1] tensors.

Images are handled as float32 arrays of shape (height, width, 3) in RGB order.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

DEFAULT_SIZE = (256, 256)
SUPPORTED_SUFFIXES = (".png", ".jpg", ".jpeg")


class ImageFormatError(ValueError):
    """Raised when a file cannot be decoded as an RGB raster."""


def normalize(pixels: np.ndarray) -> np.ndarray:
    """Map 8-bit pixel values to [-1, 1] via ``v / 127.5 - 1``."""
    return np.asarray(pixels, dtype=np.float32) / np.float32(127.5) - np.float32(1.0)


def denormalize(t: np.ndarray) -> np.ndarray:
    """Inverse of :func:`normalize`, rounding and clipping to uint8."""
    v = np.rint((np.asarray(t, dtype=np.float64) + 1.0) * 127.5)
    return np.clip(v, 0, 255).astype(np.uint8)


def check_tensor(t: np.ndarray) -> None:
    if t.ndim != 3 or t.shape[-1] != 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {t.shape}")
    if t.size and (t.min() < -1.0 or t.max() > 1.0):
        raise ValueError("image values must lie in [-1, 1]")


def resize(t: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize of an H x W x C float image to ``size = (height, width)``.

    Returns the input unchanged (as float32) when it already has that size.
    """
    height, width = size
    if height <= 0 or width <= 0:
        raise ValueError(f"target size must be positive, got {size}")
    t = np.asarray(t, dtype=np.float32)
    if t.shape[:2] == (height, width):
        return t.copy()
    channels = [
        np.asarray(Image.fromarray(np.ascontiguousarray(t[..., c]))
                   .resize((width, height), Image.BILINEAR))
        for c in range(t.shape[-1])
    ]
    return np.stack(channels, axis=-1).astype(np.float32)


def _decode(path: Path) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(f"no such image: {path}")
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("L", "I", "I;16", "F", "1"):
                # grayscale is replicated, not rejected
                im = im.convert("L").convert("RGB")
            else:
                im = im.convert("RGB")
            return np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageFormatError(f"cannot decode {path}: {exc}") from exc


def load_image(path: str | os.PathLike, target_size: tuple[int, int] | None = DEFAULT_SIZE) -> np.ndarray:
    """Load a PNG/JPEG file as a normalized H x W x 3 float32 tensor.

    The image is squashed to ``target_size`` (no cropping, aspect ratio not
    preserved). Pass ``target_size=None`` to keep the native resolution.
    """
    t = normalize(_decode(Path(path)))
    if target_size is not None:
        t = np.clip(resize(t, target_size), -1.0, 1.0)
    return t


def save_image(t: np.ndarray, path: str | os.PathLike) -> Path:
    """Write a [-1, 1] tensor to PNG or JPEG, chosen by file suffix."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in SUPPORTED_SUFFIXES:
        raise ImageFormatError(f"unsupported output format {suffix!r}")
    check_tensor(np.asarray(t))
    fmt = "PNG" if suffix == ".png" else "JPEG"
    Image.fromarray(denormalize(t)).save(path, format=fmt)
    return path


def list_images(directory: str | os.PathLike) -> list[Path]:
    """Sorted list of PNG/JPEG files directly inside ``directory``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"no such directory: {directory}")
    return sorted(p for p in directory.iterdir()
                  if p.is_file() and p.suffix.lower() in SUPPORTED_SUFFIXES)
