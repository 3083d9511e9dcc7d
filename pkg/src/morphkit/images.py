"""Image tensor conventions and lossless file I/O.

An image is a float32 array of shape (3, H, W) with values in [-1, 1].
The affine mapping between that range and 8-bit PNG values is defined
here and nowhere else.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Map a (3, H, W) image in [-1, 1] to (H, W, 3) uint8."""
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"expected (3, H, W) image, got shape {arr.shape}")
    scaled = np.clip((arr + 1.0) * 127.5, 0.0, 255.0)
    return np.round(scaled).astype(np.uint8).transpose(1, 2, 0)


def from_uint8(pixels: np.ndarray) -> np.ndarray:
    """Map (H, W, 3) uint8 pixels back to a (3, H, W) float32 image in [-1, 1]."""
    arr = np.asarray(pixels, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) pixels, got shape {arr.shape}")
    return (arr.transpose(2, 0, 1) / 127.5 - 1.0).astype(np.float32)


def encode_png(image: np.ndarray) -> bytes:
    """Encode an image to PNG bytes. Deterministic for identical inputs."""
    buf = io.BytesIO()
    Image.fromarray(to_uint8(image)).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        rgb = im.convert("RGB")
        return from_uint8(np.asarray(rgb))


def save_png(image: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(encode_png(image))


def load_png(path: str | Path) -> np.ndarray:
    return decode_png(Path(path).read_bytes())


def resample(image: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinearly resample an image to (H, W). Returns the input unchanged if sizes match."""
    h, w = size
    if image.shape[1:] == (h, w):
        return image
    import torch

    with torch.no_grad():
        t = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))[None]
        out = torch.nn.functional.interpolate(
            t, size=(h, w), mode="bilinear", align_corners=False, antialias=True
        )
    return out[0].numpy()


def montage(grid: np.ndarray, pad: int = 2, pad_value: float = 1.0) -> np.ndarray:
    """Composite an (R, C, 3, H, W) cell grid into one image, row-major.

    Cell (i, j) lands at row i, column j, so with the manifold-grid
    convention content varies along columns and style along rows.
    """
    arr = np.asarray(grid, dtype=np.float32)
    if arr.ndim != 5 or arr.shape[2] != 3:
        raise ValueError(f"expected (R, C, 3, H, W) grid, got shape {arr.shape}")
    rows, cols, _, h, w = arr.shape
    out_h = rows * h + pad * (rows + 1)
    out_w = cols * w + pad * (cols + 1)
    out = np.full((3, out_h, out_w), pad_value, dtype=np.float32)
    for i in range(rows):
        for j in range(cols):
            y = pad + i * (h + pad)
            x = pad + j * (w + pad)
            out[:, y : y + h, x : x + w] = arr[i, j]
    return out
