"""Teacher generative models and morphing-triplet sampling.

The teacher supplies training triplets (x_a, x_b, x_mid): two endpoint
renders plus the render of their componentwise-interpolated latents.
The built-in procedural teacher draws one parameterized figure per
class, so latent interpolation produces smooth, semantically meaningful
morphs by construction and every render is cheap, deterministic, and
oracle-checkable on CPU.  Pretrained generators can be wired in by
subclassing :class:`TeacherModel`; weights are never bundled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class TeacherLatent:
    """Noise coordinates plus a convex combination of class embeddings."""

    z: np.ndarray
    e: np.ndarray


@dataclass(frozen=True)
class TrainingTriplet:
    x_a: np.ndarray
    x_b: np.ndarray
    x_mid: np.ndarray
    alpha: float
    label_a: int
    label_b: int
    seed: int


def lerp_latent(a: TeacherLatent, b: TeacherLatent, alpha: float) -> TeacherLatent:
    """Componentwise (1-alpha)*a + alpha*b. Exact at alpha 0 and 1."""
    alpha = float(alpha)
    return TeacherLatent(
        z=(1.0 - alpha) * a.z + alpha * b.z,
        e=(1.0 - alpha) * a.e + alpha * b.e,
    )


class TeacherModel:
    """Interface for class-conditional teachers.

    A teacher maps a latent (z, e) to an image in [-1, 1] and samples
    latent pairs for morphing triplets.  `z` lies within the truncation
    bound `z_bound` per coordinate; `e` is a convex combination of the
    class-embedding basis.
    """

    num_classes: int
    latent_dim: int
    z_bound: float
    image_size: int
    descriptor: str

    def render(self, latent: TeacherLatent, size: tuple[int, int] | None = None) -> np.ndarray:
        raise NotImplementedError

    def check_label(self, label: int) -> int:
        label = int(label)
        if not 0 <= label < self.num_classes:
            raise ValueError(f"class index {label} out of range [0, {self.num_classes})")
        return label

    def one_hot(self, label: int) -> np.ndarray:
        e = np.zeros(self.num_classes, dtype=np.float64)
        e[self.check_label(label)] = 1.0
        return e

    def sample_latent_pair(
        self, rng_seed: int, class_pair: tuple[int, int]
    ) -> tuple[TeacherLatent, TeacherLatent]:
        la, lb = class_pair
        self.check_label(la)
        self.check_label(lb)
        rng = np.random.default_rng(rng_seed)
        return self._draw_pair(rng, (la, lb))

    def _draw_pair(
        self, rng: np.random.Generator, class_pair: tuple[int, int]
    ) -> tuple[TeacherLatent, TeacherLatent]:
        z = rng.uniform(-self.z_bound, self.z_bound, size=(2, self.latent_dim))
        return (
            TeacherLatent(z=z[0], e=self.one_hot(class_pair[0])),
            TeacherLatent(z=z[1], e=self.one_hot(class_pair[1])),
        )

    def sample_triplet(
        self,
        rng_seed: int,
        size: tuple[int, int] | None = None,
        alpha: float | None = None,
    ) -> TrainingTriplet:
        """Sample one triplet: class pair uniform over ordered pairs, alpha ~ U[0,1].

        `alpha` overrides the drawn value without disturbing the rest of
        the stream, so forced-endpoint triplets stay pairable with their
        unforced twins.
        """
        rng = np.random.default_rng(rng_seed)
        la, lb = (int(v) for v in rng.integers(0, self.num_classes, size=2))
        lat_a, lat_b = self._draw_pair(rng, (la, lb))
        drawn = float(rng.uniform(0.0, 1.0))
        a = drawn if alpha is None else float(alpha)
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"alpha {a} outside [0, 1]")
        return TrainingTriplet(
            x_a=self.render(lat_a, size),
            x_b=self.render(lat_b, size),
            x_mid=self.render(lerp_latent(lat_a, lat_b, a), size),
            alpha=a,
            label_a=la,
            label_b=lb,
            seed=int(rng_seed),
        )


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vectorized HSV -> RGB, hue wrapped to [0, 1). Shapes broadcast."""
    h = np.mod(h, 1.0) * 6.0
    i = np.floor(h)
    f = h - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    rgb = np.choose(
        i[None, ...],
        [
            np.stack([v, t, p]),
            np.stack([q, v, p]),
            np.stack([p, v, t]),
            np.stack([p, q, v]),
            np.stack([t, p, v]),
            np.stack([v, p, q]),
        ],
    )
    return rgb


class ProceduralTeacher(TeacherModel):
    """Deterministic figure renderer standing in for a pretrained generator.

    Each class is an archetype (a regular polygon of 3..10 vertices with
    its own hue, stroke weight, texture frequency, and saturation); the
    embedding e mixes archetype parameters linearly, with vertex count
    relaxed to a continuous lobe profile.  z controls rotation,
    translation, scale, aspect, background shade, and the fill-texture
    phase and angle.  Rendering is anti-aliased with 2x supersampling so
    small latent perturbations yield small pixel changes.
    """

    LATENT_DIM = 8

    def __init__(self, num_classes: int = 8, z_bound: float = 0.25, image_size: int = 64):
        if not 2 <= num_classes <= 8:
            raise ValueError("procedural teacher supports 2..8 classes")
        self.num_classes = num_classes
        self.latent_dim = self.LATENT_DIM
        self.z_bound = float(z_bound)
        self.image_size = int(image_size)
        self.descriptor = f"procedural:{num_classes}"
        k = np.arange(num_classes, dtype=np.float64)
        # columns: lobes, hue, stroke ratio, texture frequency, saturation
        self._archetypes = np.stack(
            [
                3.0 + k,
                (k + 0.5) / num_classes,
                0.06 + 0.10 * ((k * 3) % 8) / 7.0,
                3.0 + 0.5 * ((k * 5) % 8),
                0.55 + 0.35 * ((k * 7) % 8) / 7.0,
            ],
            axis=1,
        )

    def shape_params(self, e: np.ndarray) -> np.ndarray:
        """Linear archetype mixture: the class-conditional parameter map."""
        e = np.asarray(e, dtype=np.float64)
        if e.shape != (self.num_classes,):
            raise ValueError(f"embedding must have shape ({self.num_classes},)")
        if np.any(e < -1e-9) or abs(float(e.sum()) - 1.0) > 1e-6:
            raise ValueError("embedding must be a convex combination of class basis vectors")
        return e @ self._archetypes

    def _check_latent(self, latent: TeacherLatent) -> None:
        z = np.asarray(latent.z, dtype=np.float64)
        if z.shape != (self.latent_dim,):
            raise ValueError(f"z must have shape ({self.latent_dim},)")
        if np.any(np.abs(z) > self.z_bound + 1e-9):
            raise ValueError(f"|z| exceeds truncation bound {self.z_bound}")

    def render(self, latent: TeacherLatent, size: tuple[int, int] | None = None) -> np.ndarray:
        self._check_latent(latent)
        lobes, hue, stroke_ratio, tex_freq, sat = self.shape_params(latent.e)
        u = np.asarray(latent.z, dtype=np.float64) / self.z_bound  # in [-1, 1]
        rotation = u[0] * (np.pi / 2.0)
        tx, ty = 0.25 * u[1], 0.25 * u[2]
        radius = 0.42 * np.exp(0.30 * u[3])
        aspect = np.exp(0.35 * u[4])
        bg_shade = 0.62 + 0.15 * u[5]
        tex_phase = np.pi * u[6]
        tex_angle = (np.pi / 4.0) * u[7]

        h, w = (self.image_size, self.image_size) if size is None else (int(size[0]), int(size[1]))
        ss = 2  # supersampling factor
        ys = (np.arange(ss * h, dtype=np.float64) + 0.5) / (ss * h) * 2.0 - 1.0
        xs = (np.arange(ss * w, dtype=np.float64) + 0.5) / (ss * w) * 2.0 - 1.0
        gy, gx = np.meshgrid(ys, xs, indexing="ij")

        # figure-local frame: translate, rotate, then stretch by aspect
        cx, cy = gx - tx, gy - ty
        cr, sr = np.cos(-rotation), np.sin(-rotation)
        lx = (cx * cr - cy * sr) / np.sqrt(aspect)
        ly = (cx * sr + cy * cr) * np.sqrt(aspect)
        rho = np.hypot(lx, ly)
        phi = np.arctan2(ly, lx)

        # lobe profile: tent-weighted integer harmonics keep the boundary
        # continuous in the (fractional) lobe count
        r = np.ones_like(phi)
        for j in range(3, 11):
            wj = max(0.0, 1.0 - abs(j - lobes))
            if wj > 0.0:
                r = r + wj * (0.85 / j) * np.cos(j * phi)

        dist = rho - radius * r  # >0 outside the figure
        edge = 1.5 / (ss * min(h, w))  # ~1.5 supersampled pixels
        fill_a = _smoothstep((edge - dist) / (2.0 * edge) + 0.5)
        half_stroke = 0.5 * stroke_ratio * radius
        stroke_a = _smoothstep((half_stroke - np.abs(dist)) / (2.0 * edge) + 0.5)

        wave = np.sin(
            2.0 * np.pi * tex_freq * (lx * np.cos(tex_angle) + ly * np.sin(tex_angle)) + tex_phase
        )
        fill_v = 0.72 + 0.18 * wave
        fill_rgb = _hsv_to_rgb(np.full_like(fill_v, hue), np.full_like(fill_v, sat), fill_v)
        stroke_rgb = _hsv_to_rgb(
            np.full_like(fill_v, hue), np.full_like(fill_v, min(1.0, sat + 0.2)), np.full_like(fill_v, 0.22)
        )

        img = np.full((3, ss * h, ss * w), bg_shade, dtype=np.float64)
        img = img * (1.0 - fill_a) + fill_rgb * fill_a
        img = img * (1.0 - stroke_a) + stroke_rgb * stroke_a

        # 2x2 box filter down to target resolution, then map [0,1] -> [-1,1]
        img = img.reshape(3, h, ss, w, ss).mean(axis=(2, 4))
        return (img * 2.0 - 1.0).astype(np.float32)
