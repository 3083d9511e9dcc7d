"""Versioned checkpoint archive.

A checkpoint is a ZIP file (stored, not compressed) with a fixed entry
order and zeroed timestamps, so identical state always produces
identical bytes.  Arrays are .npy entries in little-endian layout:

    meta.json                 format tag, version, iteration, RNG state
    config.json               ModelConfig
    train_config.json         optional TrainConfig
    g/<param>.npy             generator weights, by state-dict name
    d/<param>.npy             discriminator weights
    optg/<param>/exp_avg.npy  Adam first moments (same for optd/)
    optg/<param>/exp_avg_sq.npy
    optg/<param>/step.npy
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig, TrainConfig

FORMAT_TAG = "morphkit.checkpoint"
FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _to_little(arr: np.ndarray) -> np.ndarray:
    dt = arr.dtype.newbyteorder("<")
    return np.ascontiguousarray(arr.astype(dt, copy=False))


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, _to_little(arr), allow_pickle=False)
    return buf.getvalue()


def module_arrays(module: torch.nn.Module) -> dict[str, np.ndarray]:
    return {name: t.detach().cpu().numpy() for name, t in module.state_dict().items()}


def load_module_arrays(module: torch.nn.Module, arrays: dict[str, np.ndarray]) -> None:
    state = {name: torch.from_numpy(np.ascontiguousarray(a)) for name, a in arrays.items()}
    module.load_state_dict(state)


def optimizer_arrays(opt: torch.optim.Adam, named_params: list[tuple[str, torch.Tensor]]) -> dict[str, np.ndarray]:
    """Flatten Adam state keyed by parameter name."""
    out: dict[str, np.ndarray] = {}
    for name, param in named_params:
        state = opt.state.get(param)
        if not state:
            continue
        out[f"{name}/exp_avg"] = state["exp_avg"].detach().cpu().numpy()
        out[f"{name}/exp_avg_sq"] = state["exp_avg_sq"].detach().cpu().numpy()
        step = state["step"]
        out[f"{name}/step"] = np.asarray(
            float(step.item() if torch.is_tensor(step) else step), dtype=np.float64
        )
    return out


def load_optimizer_arrays(
    opt: torch.optim.Adam,
    named_params: list[tuple[str, torch.Tensor]],
    arrays: dict[str, np.ndarray],
) -> None:
    for name, param in named_params:
        key = f"{name}/exp_avg"
        if key not in arrays:
            continue
        opt.state[param] = {
            "step": torch.tensor(float(arrays[f"{name}/step"])),
            "exp_avg": torch.from_numpy(np.ascontiguousarray(arrays[f"{name}/exp_avg"])),
            "exp_avg_sq": torch.from_numpy(np.ascontiguousarray(arrays[f"{name}/exp_avg_sq"])),
        }


@dataclass
class Checkpoint:
    config: ModelConfig
    generator: dict[str, np.ndarray]
    discriminator: dict[str, np.ndarray] = field(default_factory=dict)
    opt_g: dict[str, np.ndarray] = field(default_factory=dict)
    opt_d: dict[str, np.ndarray] = field(default_factory=dict)
    iteration: int = 0
    numpy_rng: dict | None = None
    torch_rng: bytes | None = None
    train_config: TrainConfig | None = None


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> Path:
    """Write atomically: temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    entries: dict[str, bytes] = {}
    meta = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "byte_order": "little",
        "iteration": int(ckpt.iteration),
        "numpy_rng": ckpt.numpy_rng,
        "torch_rng": ckpt.torch_rng.hex() if ckpt.torch_rng is not None else None,
    }
    entries["meta.json"] = json.dumps(meta, sort_keys=True, indent=1).encode()
    entries["config.json"] = json.dumps(ckpt.config.to_dict(), sort_keys=True, indent=1).encode()
    if ckpt.train_config is not None:
        entries["train_config.json"] = json.dumps(
            ckpt.train_config.to_dict(), sort_keys=True, indent=1
        ).encode()
    for prefix, arrays in (
        ("g", ckpt.generator),
        ("d", ckpt.discriminator),
        ("optg", ckpt.opt_g),
        ("optd", ckpt.opt_d),
    ):
        for name, arr in arrays.items():
            entries[f"{prefix}/{name}.npy"] = _npy_bytes(np.asarray(arr))

    tmp = path.with_name(path.name + ".tmp")
    with zipfile.ZipFile(tmp, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(entries):
            info = zipfile.ZipInfo(name, date_time=_EPOCH)
            zf.writestr(info, entries[name])
    tmp.replace(path)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    groups: dict[str, dict[str, np.ndarray]] = {"g": {}, "d": {}, "optg": {}, "optd": {}}
    with zipfile.ZipFile(path) as zf:
        names = set(zf.namelist())
        if "meta.json" not in names or "config.json" not in names:
            raise ValueError(f"{path} is not a checkpoint archive")
        meta = json.loads(zf.read("meta.json"))
        if meta.get("format") != FORMAT_TAG:
            raise ValueError(f"unexpected checkpoint format tag {meta.get('format')!r}")
        if meta.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')!r}")
        config = ModelConfig.from_dict(json.loads(zf.read("config.json")))
        train_config = None
        if "train_config.json" in names:
            train_config = TrainConfig.from_dict(json.loads(zf.read("train_config.json")))
        for entry in names:
            if not entry.endswith(".npy"):
                continue
            prefix, _, rest = entry.partition("/")
            arr = np.load(io.BytesIO(zf.read(entry)), allow_pickle=False)
            if arr.dtype.byteorder == ">":
                arr = arr.astype(arr.dtype.newbyteorder("="))
            groups[prefix][rest[: -len(".npy")]] = arr

    return Checkpoint(
        config=config,
        generator=groups["g"],
        discriminator=groups["d"],
        opt_g=groups["optg"],
        opt_d=groups["optd"],
        iteration=int(meta["iteration"]),
        numpy_rng=meta.get("numpy_rng"),
        torch_rng=bytes.fromhex(meta["torch_rng"]) if meta.get("torch_rng") else None,
        train_config=train_config,
    )
