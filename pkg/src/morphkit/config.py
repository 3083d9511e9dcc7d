"""Model and training configuration.

Width schedules derive from a base width doubled per downsampling stage
and clamped at `width_cap`, which reproduces the reference architecture
table at the paper scale (base 32, cap 2048) and scales every stage
down proportionally for the CPU-sized desk preset (base 16, cap 512).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path


NORM_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    image_size: tuple[int, int] = (64, 64)
    base_width: int = 16
    width_cap: int = 512
    mapping_hidden: int = 128
    mapping_layers: int = 5
    num_classes: int = 8
    preset: str = "desk"

    @classmethod
    def paper(cls, image_size: tuple[int, int] = (128, 128), num_classes: int = 8) -> "ModelConfig":
        return cls(
            image_size=tuple(image_size),
            base_width=32,
            width_cap=2048,
            mapping_hidden=512,
            num_classes=num_classes,
            preset="paper",
        )

    @classmethod
    def desk(cls, image_size: tuple[int, int] = (64, 64), num_classes: int = 8) -> "ModelConfig":
        return cls(
            image_size=tuple(image_size),
            base_width=16,
            width_cap=512,
            mapping_hidden=128,
            num_classes=num_classes,
            preset="desk",
        )

    @classmethod
    def micro(cls, image_size: tuple[int, int] = (16, 16), num_classes: int = 2) -> "ModelConfig":
        """Smallest valid config; used for numeric and unit tests."""
        return cls(
            image_size=tuple(image_size),
            base_width=2,
            width_cap=16,
            mapping_hidden=8,
            num_classes=num_classes,
            preset="micro",
        )

    def __post_init__(self):
        h, w = self.image_size
        if h < 16 or w < 16 or h % 8 or w % 8:
            raise ValueError("image size must be >= 16 and divisible by 8")
        if self.base_width < 1 or self.width_cap < self.base_width:
            raise ValueError("invalid width schedule")
        if self.num_classes < 1:
            raise ValueError("need at least one class")

    def _w(self, doublings: int) -> int:
        return min(self.base_width * (2 ** doublings), self.width_cap)

    @property
    def content_widths(self) -> list[int]:
        """Stem plus three downsampling stages of the content encoder."""
        return [self._w(i) for i in range(4)]

    @property
    def content_channels(self) -> int:
        return self._w(3)

    @property
    def style_widths(self) -> list[int]:
        """Stem plus six downsampling stages of the style encoder."""
        return [self._w(i) for i in range(7)]

    @property
    def style_dim(self) -> int:
        return self._w(6)

    @property
    def decoder_up_widths(self) -> list[int]:
        return [self._w(2), self._w(1), self._w(0)]

    @property
    def disc_widths(self) -> list[int]:
        """Stem plus the four residual stages of the discriminator."""
        return [self._w(0), self._w(0), self._w(1), self._w(1), self._w(2)]

    @property
    def adain_param_count(self) -> int:
        # two AdaIN layers per decoder block, each with a scale and a bias per channel
        widths = [self.content_channels] * 3 + self.decoder_up_widths
        return sum(4 * c for c in widths)

    @property
    def content_code_shape(self) -> tuple[int, int, int]:
        h, w = self.image_size
        return (self.content_channels, h // 8, w // 8)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["image_size"] = list(self.image_size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["image_size"] = tuple(d["image_size"])
        return cls(**d)


def resolve_preset(name: str, image_size: tuple[int, int] | None = None, num_classes: int = 8) -> ModelConfig:
    builders = {"paper": ModelConfig.paper, "desk": ModelConfig.desk, "micro": ModelConfig.micro}
    if name not in builders:
        raise ValueError(f"unknown preset {name!r}; expected one of {sorted(builders)}")
    if image_size is None:
        return builders[name](num_classes=num_classes)
    return builders[name](image_size=image_size, num_classes=num_classes)


@dataclass(frozen=True)
class LossWeights:
    """Loss-term configuration: pixel weight, R1 strength, per-term flags."""

    lambda_pix: float = 0.1
    r1_gamma: float = 1.0
    use_identity: bool = True
    use_morphing: bool = True
    use_swapping: bool = True
    use_cycle: bool = True

    def __post_init__(self):
        if self.lambda_pix < 0 or self.r1_gamma < 0:
            raise ValueError("lambda_pix and r1_gamma must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        return cls(**d)


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 2000
    batch_size: int = 16
    lr_g: float = 1e-4
    lr_d: float = 4e-4
    beta1: float = 0.5
    beta2: float = 0.999
    weights: LossWeights = field(default_factory=LossWeights)
    checkpoint_interval: int = 500
    seed: int = 0
    teacher: str = "procedural:8"
    preset: str = "desk"
    image_size: tuple[int, int] | None = None
    out_dir: str = "runs/default"
    device: str = "cpu"

    def __post_init__(self):
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.checkpoint_interval < 1:
            raise ValueError("checkpoint interval must be >= 1")

    def model_config(self) -> ModelConfig:
        classes = teacher_class_count(self.teacher)
        return resolve_preset(self.preset, self.image_size, num_classes=classes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = self.weights.to_dict()
        if self.image_size is not None:
            d["image_size"] = list(self.image_size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "weights" in d and d["weights"] is not None:
            d["weights"] = LossWeights.from_dict(d["weights"])
        if d.get("image_size") is not None:
            d["image_size"] = tuple(d["image_size"])
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def teacher_class_count(descriptor: str) -> int:
    """Parse 'procedural:<classes>' teacher descriptors."""
    kind, _, arg = descriptor.partition(":")
    if kind != "procedural":
        raise ValueError(f"unknown teacher descriptor {descriptor!r}")
    return int(arg) if arg else 8


def build_teacher(descriptor: str, image_size: int = 64):
    from .teacher import ProceduralTeacher

    return ProceduralTeacher(num_classes=teacher_class_count(descriptor), image_size=image_size)
