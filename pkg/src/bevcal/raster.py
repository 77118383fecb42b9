"""Raster image container and PNG / PFM file I/O.

Pixel (ix, iy) has its center at continuous coordinate (ix, iy): integer
centers, shared with the annotation UI's click mapping. 8-bit images go
through PNG, 32-bit float images through PFM (1 or 3 channels).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

_PNG_MODES = {1: "L", 2: "LA", 3: "RGB", 4: "RGBA"}


@dataclass(frozen=True)
class RasterImage:
    """Row-major image samples, uint8 or float32, 1-4 channels."""

    data: np.ndarray  # shape (height, width, channels)

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"image data must be HxWxC, got shape {arr.shape}")
        if not 1 <= arr.shape[2] <= 4:
            raise ValueError(f"channels must be 1-4, got {arr.shape[2]}")
        if arr.dtype not in (np.uint8, np.float32):
            raise ValueError(f"dtype must be uint8 or float32, got {arr.dtype}")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def read_image(path: str | Path) -> RasterImage:
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        return RasterImage(read_pfm(path))
    with Image.open(path) as im:
        arr = np.asarray(im)
        if arr.dtype != np.uint8:
            raise ValueError(f"expected an 8-bit image in {path}, got {arr.dtype}")
    return RasterImage(arr)


def write_image(img: RasterImage, path: str | Path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        write_pfm(img.data, path)
        return
    if img.data.dtype != np.uint8:
        raise ValueError("PNG output requires uint8 data; use .pfm for float images")
    arr = img.data[:, :, 0] if img.channels == 1 else img.data
    Image.fromarray(arr, mode=_PNG_MODES[img.channels]).save(path, format="PNG")


def write_pfm(data: np.ndarray, path: str | Path) -> None:
    """Write float32 data as PFM (Pf grayscale or PF color), little-endian."""
    if data.ndim == 2:
        data = data[:, :, None]
    if data.shape[2] not in (1, 3):
        raise ValueError(f"PFM supports 1 or 3 channels, got {data.shape[2]}")
    header = b"PF\n" if data.shape[2] == 3 else b"Pf\n"
    h, w = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(f"{w} {h}\n".encode())
        fh.write(b"-1.0\n")  # negative scale = little-endian
        # PFM stores rows bottom-to-top
        fh.write(np.ascontiguousarray(data[::-1].astype("<f4")).tobytes())


def read_pfm(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic not in (b"PF", b"Pf"):
            raise ValueError(f"not a PFM file: {path}")
        channels = 3 if magic == b"PF" else 1
        w, h = map(int, fh.readline().split())
        scale = float(fh.readline())
        endian = "<" if scale < 0 else ">"
        count = w * h * channels
        data = np.frombuffer(fh.read(count * 4), dtype=f"{endian}f4", count=count)
    arr = data.reshape(h, w, channels)[::-1]
    return np.ascontiguousarray(arr, dtype=np.float32)


def smooth_gradient(width: int, height: int, channels: int = 1) -> RasterImage:
    """Smooth low-frequency uint8 test pattern (sums of shifted sinusoids)."""
    ys, xs = np.mgrid[0:height, 0:width].astype(float)
    base = (
        120.0
        + 60.0 * np.sin(2.0 * np.pi * xs / width)
        + 50.0 * np.cos(2.0 * np.pi * ys / height)
    )
    stack = [base + 8.0 * c for c in range(channels)]
    arr = np.clip(np.stack(stack, axis=2), 0, 255).astype(np.uint8)
    return RasterImage(arr)
