"""Image-quality metrics and the evaluation protocols.

Full-reference metrics (MSE / PSNR / SSIM) operate on [-1, 1] images,
so the dynamic range is 2.  Distribution distance uses the Frechet
form on Gaussian fits of feature statistics; at desk scale features
come from the trained discriminator's penultimate layer (recorded in
every report), not from a pretrained classifier.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.signal import convolve2d

PEAK = 2.0
PSNR_CAP = 99.0
_SSIM_C1 = (0.01 * PEAK) ** 2
_SSIM_C2 = (0.03 * PEAK) ** 2


def _check_pair(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    return x, y


def mse(x: np.ndarray, y: np.ndarray) -> float:
    x, y = _check_pair(x, y)
    return float(np.mean((x - y) ** 2))


def psnr(x: np.ndarray, y: np.ndarray) -> float:
    """10*log10(peak^2 / MSE) with peak 2, capped at 99 dB for near-zero MSE."""
    err = mse(x, y)
    if err < 1e-10:
        return PSNR_CAP
    return min(PSNR_CAP, float(10.0 * np.log10(PEAK**2 / err)))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


_WINDOW = _gaussian_window()


def ssim(x: np.ndarray, y: np.ndarray) -> float:
    """Structural similarity with an 11x11 Gaussian window, sigma 1.5.

    Channels are scored independently on valid (fully-windowed) regions
    and averaged.
    """
    x, y = _check_pair(x, y)
    if x.ndim == 2:
        x, y = x[None], y[None]
    if x.ndim != 3:
        raise ValueError(f"expected (C, H, W) images, got shape {x.shape}")
    if x.shape[1] < 11 or x.shape[2] < 11:
        raise ValueError("images must be at least 11x11 for SSIM")
    vals = []
    for c in range(x.shape[0]):
        xa, ya = x[c], y[c]
        mu_x = convolve2d(xa, _WINDOW, mode="valid")
        mu_y = convolve2d(ya, _WINDOW, mode="valid")
        xx = convolve2d(xa * xa, _WINDOW, mode="valid") - mu_x**2
        yy = convolve2d(ya * ya, _WINDOW, mode="valid") - mu_y**2
        xy = convolve2d(xa * ya, _WINDOW, mode="valid") - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + _SSIM_C1) * (2.0 * xy + _SSIM_C2)
        den = (mu_x**2 + mu_y**2 + _SSIM_C1) * (xx + yy + _SSIM_C2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


class NumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class FeatureStats:
    """Gaussian fit (mean, covariance) of a feature set."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError("mean must be (F,), cov must be (F, F)")
        if not np.allclose(cov, cov.T, atol=1e-8):
            raise ValueError("covariance must be symmetric within 1e-8")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


def feature_stats(
    images: Sequence[np.ndarray],
    extractor: Callable[[np.ndarray], np.ndarray],
    batch_size: int = 16,
) -> FeatureStats:
    """Mean and unbiased covariance of extracted feature vectors."""
    if len(images) < 2:
        raise ValueError("need at least 2 images for covariance")
    feats = []
    stack = np.stack([np.asarray(im, dtype=np.float32) for im in images])
    for start in range(0, len(images), batch_size):
        feats.append(np.asarray(extractor(stack[start : start + batch_size]), dtype=np.float64))
    f = np.concatenate(feats)
    if f.ndim != 2 or f.shape[0] != len(images):
        raise ValueError(f"extractor must return (N, F) features, got {f.shape}")
    mean = f.mean(axis=0)
    centered = f - mean
    cov = centered.T @ centered / (f.shape[0] - 1)
    return FeatureStats(mean=mean, cov=(cov + cov.T) / 2.0)


def _psd_floor_check(m: np.ndarray, name: str) -> np.ndarray:
    vals = np.linalg.eigvalsh((m + m.T) / 2.0)
    floor = -1e-6 * max(1.0, float(np.abs(vals).max(initial=1.0)))
    if vals.min(initial=0.0) < floor:
        raise NumericalError(f"{name} is not PSD within tolerance (min eigenvalue {vals.min():.3e})")
    return vals


def _sqrt_psd(m: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((m + m.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(a: FeatureStats, b: FeatureStats) -> float:
    """|mu_a - mu_b|^2 + Tr(Ca + Cb - 2 (Ca Cb)^(1/2)).

    The cross square root is computed on the symmetric form
    sqrt(Ca) Cb sqrt(Ca) via eigendecomposition with negative
    eigenvalues clipped at 0.
    """
    if a.dim != b.dim:
        raise ValueError(f"feature dims differ: {a.dim} vs {b.dim}")
    _psd_floor_check(a.cov, "cov_a")
    _psd_floor_check(b.cov, "cov_b")
    root_a = _sqrt_psd(a.cov)
    inner = root_a @ b.cov @ root_a
    vals = np.clip(np.linalg.eigvalsh((inner + inner.T) / 2.0), 0.0, None)
    tr_sqrt = float(np.sqrt(vals).sum())
    diff = a.mean - b.mean
    return float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * tr_sqrt)


@dataclass
class EvalReport:
    protocol: str
    sample_count: int
    metrics: dict[str, float]
    extractor: str | None = None
    notes: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "sample_count": self.sample_count,
            "metrics": {k: float(v) for k, v in self.metrics.items()},
            "extractor": self.extractor,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        """Fixed-order metric table for terminal output."""
        order = ["fid", "fid_blend_baseline", "mse", "psnr", "ssim", "lpips"]
        rows = [(k, self.metrics[k]) for k in order if k in self.metrics]
        rows += [(k, v) for k, v in sorted(self.metrics.items()) if k not in order]
        width = max(len(k) for k, _ in rows)
        lines = [f"protocol: {self.protocol}  (n={self.sample_count})"]
        lines += [f"  {k.ljust(width)}  {v:12.6f}" for k, v in rows]
        if self.extractor:
            lines.append(f"  features: {self.extractor}")
        return "\n".join(lines)


class DiscriminatorFeatures:
    """Penultimate discriminator activations, globally average-pooled."""

    def __init__(self, checkpoint_path: str | Path):
        import torch

        from .checkpoint import load_checkpoint, load_module_arrays
        from .networks import build_discriminator

        ckpt = load_checkpoint(checkpoint_path)
        if not ckpt.discriminator:
            raise ValueError(f"{checkpoint_path} carries no discriminator weights")
        self.disc = build_discriminator(ckpt.config)
        load_module_arrays(self.disc, ckpt.discriminator)
        self.disc.eval()
        for p in self.disc.parameters():
            p.requires_grad_(False)
        self.name = f"disc-penultimate-gap@iter{ckpt.iteration}"
        self._torch = torch

    def __call__(self, images: np.ndarray) -> np.ndarray:
        torch = self._torch
        with torch.inference_mode():
            x = torch.from_numpy(np.ascontiguousarray(images, dtype=np.float32))
            return self.disc.features(x).mean(dim=(2, 3)).numpy()


def evaluate_reconstruction(model, pairs, perceptual: Callable | None = None) -> EvalReport:
    """Score endpoint reconstructions of each input pair against the inputs."""
    from .engine import MorphParams

    if not pairs:
        raise ValueError("need at least one evaluation pair")
    sums = {"mse": 0.0, "psnr": 0.0, "ssim": 0.0}
    if perceptual is not None:
        sums["lpips"] = 0.0
    count = 0
    for x_a, x_b in pairs:
        recon_a = model.morph(x_a, x_b, MorphParams(0.0, 0.0))
        recon_b = model.morph(x_a, x_b, MorphParams(1.0, 1.0))
        for ref, out in ((x_a, recon_a), (x_b, recon_b)):
            sums["mse"] += mse(ref, out)
            sums["psnr"] += psnr(ref, out)
            sums["ssim"] += ssim(ref, out)
            if perceptual is not None:
                sums["lpips"] += float(perceptual(ref, out))
            count += 1
    return EvalReport(
        protocol="reconstruction",
        sample_count=count,
        metrics={k: v / count for k, v in sums.items()},
        notes={"alphas": "0 and 1"},
    )


def evaluate_morphs(
    model,
    pairs,
    reference_images: Sequence[np.ndarray],
    extractor: Callable[[np.ndarray], np.ndarray],
    extractor_name: str,
    with_blend_baseline: bool = True,
) -> EvalReport:
    """Frechet distance of midpoint morphs against a reference image set.

    A naive 50/50 pixel-blend baseline of the same pairs is reported
    alongside for context.
    """
    from .engine import MorphParams

    if not pairs:
        raise ValueError("need at least one evaluation pair")
    morphs = [model.morph(x_a, x_b, MorphParams(0.5, 0.5)) for x_a, x_b in pairs]
    ref_stats = feature_stats(reference_images, extractor)
    metrics = {"fid": fid(feature_stats(morphs, extractor), ref_stats)}
    if with_blend_baseline:
        blends = [0.5 * (np.asarray(x_a) + np.asarray(x_b)) for x_a, x_b in pairs]
        metrics["fid_blend_baseline"] = fid(feature_stats(blends, extractor), ref_stats)
    return EvalReport(
        protocol="morph",
        sample_count=len(pairs),
        metrics=metrics,
        extractor=extractor_name,
        notes={"alpha": "0.5", "reference": "held-out teacher renders"},
    )
