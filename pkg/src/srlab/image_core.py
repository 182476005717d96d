"""Image representation, padding, box downsampling and file I/O.

Images live in memory as float64 numpy arrays with intensities in [0, 1]:

* an *image plane* is a 2-D array of shape ``(height, width)``;
* an *RGB image* is a 3-D array of shape ``(height, width, 3)``.

Quantization to 8 bits only happens in :func:`load_image` and
:func:`save_image`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


class ImageError(Exception):
    """Base class for image validation and I/O errors."""


class UnsupportedFormatError(ImageError):
    pass


class ImageShapeError(ImageError, ValueError):
    pass


@dataclass(frozen=True)
class PixelDepth:
    """Maximum representable integer intensity of the source data."""

    max_value: int = 255

    def __post_init__(self):
        if self.max_value <= 0:
            raise ValueError("max_value must be positive")


EIGHT_BIT = PixelDepth(255)


def check_plane(plane: np.ndarray) -> np.ndarray:
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2 or plane.size == 0:
        raise ImageShapeError(f"expected a non-empty 2-D plane, got shape {plane.shape}")
    return plane


def check_rgb(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] == 0 or img.shape[1] == 0:
        raise ImageShapeError(f"expected an (H, W, 3) image, got shape {img.shape}")
    return img


def rgb_from_planes(red, green, blue) -> np.ndarray:
    planes = [check_plane(p) for p in (red, green, blue)]
    if len({p.shape for p in planes}) != 1:
        raise ImageShapeError("all three planes must share dimensions")
    return np.stack(planes, axis=-1)


def planes(img: np.ndarray) -> list[np.ndarray]:
    img = check_rgb(img)
    return [img[:, :, c] for c in range(3)]


def map_planes(fn, img: np.ndarray) -> np.ndarray:
    """Apply a plane -> plane function to each colour channel independently."""
    return np.stack([fn(p) for p in planes(img)], axis=-1)


_PPM_HEADER = re.compile(rb"^(P[1-7])\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s")


def _check_ppm_header(path: Path) -> None:
    with open(path, "rb") as fh:
        head = fh.read(512)
    m = _PPM_HEADER.match(head)
    if m is None or m.group(1) != b"P6":
        raise UnsupportedFormatError(f"{path}: only binary P6 PPM files are supported")
    if int(m.group(4)) != 255:
        raise UnsupportedFormatError(f"{path}: PPM maxval must be 255, got {int(m.group(4))}")


def load_image(path, depth: PixelDepth = EIGHT_BIT) -> np.ndarray:
    """Read a PNG or binary PPM file into an ``(H, W, 3)`` float image.

    Gray sources are replicated into all three channels and alpha is dropped.
    """
    path = Path(path)
    try:
        pil = Image.open(path)
        pil.load()
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise UnsupportedFormatError(f"{path}: cannot decode image ({exc})") from exc

    if pil.format not in ("PNG", "PPM"):
        raise UnsupportedFormatError(f"{path}: unsupported format {pil.format!r}")
    if pil.format == "PPM":
        _check_ppm_header(path)
    if pil.width == 0 or pil.height == 0:
        raise ImageShapeError(f"{path}: zero-dimension image")

    if pil.mode in ("L", "LA"):
        arr = np.asarray(pil.convert("L"), dtype=np.float64)
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    elif pil.mode in ("RGB", "RGBA", "P", "1"):
        arr = np.asarray(pil.convert("RGB"), dtype=np.float64)
    else:
        raise UnsupportedFormatError(f"{path}: unsupported pixel mode {pil.mode!r}")
    return arr / depth.max_value


def quantize(img: np.ndarray, depth: PixelDepth = EIGHT_BIT) -> np.ndarray:
    """Map [0, 1] intensities to integer levels, rounding halves up and clamping."""
    scaled = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * depth.max_value
    return np.floor(scaled + 0.5).astype(np.int64)


def save_image(img: np.ndarray, path) -> None:
    """Write an RGB image as an 8-bit PNG."""
    img = check_rgb(img)
    data = quantize(img).astype(np.uint8)
    path = Path(path)
    try:
        Image.fromarray(data, mode="RGB").save(path, format="PNG")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def pad_replicate(plane: np.ndarray, margin: int) -> np.ndarray:
    if margin < 0:
        raise ValueError("margin must be >= 0")
    return np.pad(check_plane(plane), margin, mode="edge")


def downsample_2x(img: np.ndarray) -> np.ndarray:
    """Average every 2x2 block (box filter), per channel."""
    img = check_rgb(img)
    h, w, _ = img.shape
    if h % 2 or w % 2:
        raise ImageShapeError(f"downsample_2x needs even dimensions, got {w}x{h}")
    blocks = img.reshape(h // 2, 2, w // 2, 2, 3)
    return (blocks[:, 0, :, 0] + blocks[:, 0, :, 1] + blocks[:, 1, :, 0] + blocks[:, 1, :, 1]) / 4.0


def crop_even(img: np.ndarray) -> np.ndarray:
    """Drop a trailing row and/or column so both dimensions are even."""
    img = check_rgb(img)
    h, w, _ = img.shape
    return img[: h - h % 2, : w - w % 2]
