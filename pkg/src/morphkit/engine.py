"""Inference-time morphing operations.

All operations run on a loaded checkpoint wrapped in a `MorphModel`.
Content/style interpolation parameters live on a 2D manifold; the
truncation remap contracts that manifold toward its diagonal (the basic
transition) by a factor tau, trading diversity for fidelity.  Every
image is decoded one at a time so identical requests produce identical
bytes no matter how they are grouped.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .checkpoint import load_checkpoint, load_module_arrays
from .config import ModelConfig
from .images import resample
from .networks import MorphGenerator, build_generator, lerp


def _check_unit(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def truncate_params(alpha_c: float, alpha_s: float, tau: float) -> tuple[float, float]:
    """Pull (alpha_c, alpha_s) toward the diagonal by tau.

    The remap blends each point with its projection onto the basic
    transition axis (1, 1); diagonal points are fixed and off-diagonal
    distance shrinks by exactly (1 - tau).
    """
    alpha_c = _check_unit("alpha_c", alpha_c)
    alpha_s = _check_unit("alpha_s", alpha_s)
    tau = _check_unit("tau", tau)
    out_c = alpha_c + tau * (alpha_s - alpha_c) / 2.0
    out_s = alpha_s + tau * (alpha_c - alpha_s) / 2.0
    return (min(max(out_c, 0.0), 1.0), min(max(out_s, 0.0), 1.0))


@dataclass(frozen=True)
class MorphParams:
    """Content/style interpolation controls plus truncation strength."""

    alpha_c: float
    alpha_s: float
    tau: float = 0.0

    def __post_init__(self):
        _check_unit("alpha_c", self.alpha_c)
        _check_unit("alpha_s", self.alpha_s)
        _check_unit("tau", self.tau)

    def truncated(self) -> tuple[float, float]:
        return truncate_params(self.alpha_c, self.alpha_s, self.tau)


def check_weights(w: Sequence[float], count: int, name: str = "weights") -> np.ndarray:
    arr = np.asarray(w, dtype=np.float64)
    if arr.shape != (count,):
        raise ValueError(f"{name} must have length {count}")
    if np.any(arr < 0.0):
        raise ValueError(f"{name} entries must be non-negative")
    if abs(float(arr.sum()) - 1.0) > 1e-6:
        raise ValueError(f"{name} must sum to 1 within 1e-6, got {arr.sum():.8f}")
    return arr


class CheckpointLoadError(RuntimeError):
    pass


class MorphModel:
    """A generator snapshot held read-only for inference."""

    def __init__(self, gen: MorphGenerator):
        self.gen = gen.eval()
        for p in self.gen.parameters():
            p.requires_grad_(False)

    @property
    def config(self) -> ModelConfig:
        return self.gen.cfg

    @classmethod
    def from_checkpoint(cls, path: str | Path) -> "MorphModel":
        try:
            ckpt = load_checkpoint(path)
            gen = build_generator(ckpt.config)
            load_module_arrays(gen, ckpt.generator)
        except (ValueError, RuntimeError, KeyError, OSError) as err:
            raise CheckpointLoadError(f"cannot load generator from {path}: {err}") from err
        return cls(gen)

    def needs_resample(self, image: np.ndarray) -> bool:
        return tuple(image.shape[1:]) != tuple(self.config.image_size)

    def prepare(self, image: np.ndarray) -> torch.Tensor:
        arr = np.asarray(image, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise ValueError(f"expected a (3, H, W) image, got shape {arr.shape}")
        if self.needs_resample(arr):
            arr = resample(arr, self.config.image_size)
        return torch.from_numpy(np.ascontiguousarray(arr))[None]

    def encode(self, image: np.ndarray) -> tuple[torch.Tensor, torch.Tensor]:
        with torch.inference_mode():
            x = self.prepare(image)
            return self.gen.encode_content(x), self.gen.encode_style(x)

    def decode_codes(self, content: torch.Tensor, style: torch.Tensor) -> np.ndarray:
        with torch.inference_mode():
            out = self.gen.decode(content, self.gen.map_style(style))
        return out[0].numpy()

    def morph(self, x_a: np.ndarray, x_b: np.ndarray, params: MorphParams) -> np.ndarray:
        """Decode at the truncation-remapped interpolation point."""
        a_c, a_s = params.truncated()
        c_a, s_a = self.encode(x_a)
        c_b, s_b = self.encode(x_b)
        return self.decode_codes(lerp(c_a, c_b, a_c), lerp(s_a, s_b, a_s))

    def morph_sequence(
        self, x_a: np.ndarray, x_b: np.ndarray, n_frames: int, tau: float = 0.0
    ) -> list[np.ndarray]:
        """Basic transition frames at alpha = i/(n-1), content and style together."""
        if n_frames < 2:
            raise ValueError("a sequence needs at least 2 frames")
        c_a, s_a = self.encode(x_a)
        c_b, s_b = self.encode(x_b)
        frames = []
        for i in range(n_frames):
            alpha = i / (n_frames - 1)
            a_c, a_s = truncate_params(alpha, alpha, tau)
            frames.append(self.decode_codes(lerp(c_a, c_b, a_c), lerp(s_a, s_b, a_s)))
        return frames

    def manifold_grid(
        self, x_a: np.ndarray, x_b: np.ndarray, n: int, tau: float = 0.0
    ) -> np.ndarray:
        """(n, n, 3, H, W) cells; content varies along columns, style along rows."""
        if n < 2:
            raise ValueError("grid resolution must be >= 2")
        c_a, s_a = self.encode(x_a)
        c_b, s_b = self.encode(x_b)
        h, w = self.config.image_size
        grid = np.empty((n, n, 3, h, w), dtype=np.float32)
        for i in range(n):
            for j in range(n):
                a_c, a_s = truncate_params(j / (n - 1), i / (n - 1), tau)
                grid[i, j] = self.decode_codes(lerp(c_a, c_b, a_c), lerp(s_a, s_b, a_s))
        return grid

    def multi_morph(
        self,
        images: Sequence[np.ndarray],
        w_c: Sequence[float],
        w_s: Sequence[float],
    ) -> np.ndarray:
        """Weighted-code generalization of two-image morphing."""
        if len(images) < 2:
            raise ValueError("multi-image morphing needs at least 2 images")
        wc = check_weights(w_c, len(images), "w_c")
        ws = check_weights(w_s, len(images), "w_s")
        codes = [self.encode(img) for img in images]
        content = sum(float(w) * c for w, (c, _) in zip(wc, codes))
        style = sum(float(w) * s for w, (_, s) in zip(ws, codes))
        return self.decode_codes(content, style)

    def appearance_transfer(self, source: np.ndarray, target: np.ndarray) -> np.ndarray:
        """Keep the source content, adopt the target style."""
        return self.morph(source, target, MorphParams(alpha_c=0.0, alpha_s=1.0, tau=0.0))

    def interpolate_frames(self, frames: Sequence[np.ndarray], factor: int) -> list[np.ndarray]:
        """Insert factor-1 morphed frames between every adjacent pair.

        Original frames pass through untouched, so the output length is
        (len - 1) * factor + 1.
        """
        if int(factor) != factor or factor < 1:
            raise ValueError("factor must be a positive integer")
        factor = int(factor)
        frames = list(frames)
        if not frames:
            raise ValueError("need at least one frame")
        if factor == 1 or len(frames) == 1:
            return frames
        codes = [self.encode(f) for f in frames]
        out: list[np.ndarray] = [frames[0]]
        for k in range(len(frames) - 1):
            (c_a, s_a), (c_b, s_b) = codes[k], codes[k + 1]
            for i in range(1, factor):
                alpha = i / factor
                out.append(self.decode_codes(lerp(c_a, c_b, alpha), lerp(s_a, s_b, alpha)))
            out.append(frames[k + 1])
        return out
