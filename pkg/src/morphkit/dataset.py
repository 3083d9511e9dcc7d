"""Offline triplet datasets.

Layout under an export directory:

    dataset.json       schema version, teacher descriptor, image size
    manifest.jsonl     one record per line with keys exactly
                       a, b, mid, alpha, label_a, label_b, seed
    images/            lossless 8-bit PNGs referenced by the records

Exports are pure functions of (seed, count): re-running reproduces the
manifest byte for byte.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path

from .images import load_png, save_png
from .teacher import TeacherModel, TrainingTriplet

SCHEMA_VERSION = 1
_RECORD_KEYS = ("a", "b", "mid", "alpha", "label_a", "label_b", "seed")


@dataclass(frozen=True)
class TripletRecord:
    a: str
    b: str
    mid: str
    alpha: float
    label_a: int
    label_b: int
    seed: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "a": self.a,
                "b": self.b,
                "mid": self.mid,
                "alpha": self.alpha,
                "label_a": self.label_a,
                "label_b": self.label_b,
                "seed": self.seed,
            }
        )


@dataclass
class DatasetManifest:
    schema_version: int
    teacher: str
    image_size: list[int]
    records: list[TripletRecord] = field(default_factory=list)

    @classmethod
    def load(cls, out_dir: str | Path) -> "DatasetManifest":
        out = Path(out_dir)
        meta = json.loads((out / "dataset.json").read_text())
        if meta["schema_version"] != SCHEMA_VERSION:
            raise ValueError(f"unsupported dataset schema {meta['schema_version']}")
        records = []
        with (out / "manifest.jsonl").open() as fh:
            for line in fh:
                obj = json.loads(line)
                if set(obj) != set(_RECORD_KEYS):
                    raise ValueError(f"manifest record keys {sorted(obj)} != {sorted(_RECORD_KEYS)}")
                records.append(TripletRecord(**obj))
        return cls(meta["schema_version"], meta["teacher"], meta["image_size"], records)

    def load_triplet(self, out_dir: str | Path, index: int) -> TrainingTriplet:
        out = Path(out_dir)
        rec = self.records[index]
        if not 0.0 <= rec.alpha <= 1.0:
            raise ValueError(f"record {index} alpha {rec.alpha} outside [0, 1]")
        return TrainingTriplet(
            x_a=load_png(out / rec.a),
            x_b=load_png(out / rec.b),
            x_mid=load_png(out / rec.mid),
            alpha=rec.alpha,
            label_a=rec.label_a,
            label_b=rec.label_b,
            seed=rec.seed,
        )


class ExportError(RuntimeError):
    pass


def export_dataset(
    teacher: TeacherModel,
    count: int,
    out_dir: str | Path,
    rng_seed: int,
    size: tuple[int, int] | None = None,
) -> DatasetManifest:
    """Render `count` triplets to disk; cleans up created files on failure."""
    from .training import derived_seed  # record seeds share the derivation scheme

    if count < 0:
        raise ValueError("count must be >= 0")
    out = Path(out_dir)
    images = out / "images"
    created: list[Path] = []
    h, w = (teacher.image_size, teacher.image_size) if size is None else size
    try:
        out.mkdir(parents=True, exist_ok=True)
        images.mkdir(exist_ok=True)
        records = []
        for i in range(count):
            seed = derived_seed(rng_seed, 3, i)
            trip = teacher.sample_triplet(seed, size=(h, w))
            paths = {}
            for role, img in (("a", trip.x_a), ("b", trip.x_b), ("mid", trip.x_mid)):
                rel = f"images/{i:06d}_{role}.png"
                save_png(img, out / rel)
                created.append(out / rel)
                paths[role] = rel
            records.append(
                TripletRecord(
                    a=paths["a"],
                    b=paths["b"],
                    mid=paths["mid"],
                    alpha=trip.alpha,
                    label_a=trip.label_a,
                    label_b=trip.label_b,
                    seed=seed,
                )
            )
        manifest_path = out / "manifest.jsonl"
        manifest_path.write_text("".join(rec.to_json() + "\n" for rec in records))
        created.append(manifest_path)
        meta_path = out / "dataset.json"
        meta_path.write_text(
            json.dumps(
                {
                    "schema_version": SCHEMA_VERSION,
                    "teacher": teacher.descriptor,
                    "image_size": [h, w],
                    "count": count,
                },
                sort_keys=True,
            )
        )
        created.append(meta_path)
    except OSError as err:
        for path in created:
            try:
                path.unlink(missing_ok=True)
            except OSError:
                pass
        if images.exists() and not any(images.iterdir()):
            shutil.rmtree(images, ignore_errors=True)
        raise ExportError(f"dataset export to {out} failed: {err}") from err
    return DatasetManifest(SCHEMA_VERSION, teacher.descriptor, [h, w], records)
