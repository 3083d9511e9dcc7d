"""Distillation training loop.

One iteration is one discriminator update (hinge terms plus R1 on real
data) followed by one generator update (hinge terms plus weighted pixel
terms), sharing a single set of generator outputs.  The two Adam
optimizers run at different rates (TTUR); by default the discriminator
steps 4x faster than the generator.

Every triplet is derived from (seed, iteration, slot), so runs are
reproducible and a resumed run continues the exact data stream of the
original.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .checkpoint import (
    Checkpoint,
    load_checkpoint,
    load_module_arrays,
    load_optimizer_arrays,
    module_arrays,
    optimizer_arrays,
    save_checkpoint,
)
from .config import LossWeights, TrainConfig, build_teacher
from .networks import MorphGenerator, MultiTaskDiscriminator, build_discriminator, build_generator
from .objectives import (
    LossReport,
    TripletBatch,
    build_report,
    d_side_losses,
    g_side_losses,
    generator_outputs,
    total_d_from,
    total_g_from,
)
from .teacher import TeacherModel, TrainingTriplet

ADAM_EPS = 1e-8
_TRAIN_STREAM = 1
_EVAL_STREAM = 2


class TrainingDiverged(RuntimeError):
    """A loss became non-finite; carries the offending report."""

    def __init__(self, iteration: int, report: LossReport):
        super().__init__(f"non-finite loss at iteration {iteration}: {report.to_dict()}")
        self.iteration = iteration
        self.report = report


def derived_seed(base_seed: int, stream: int, *key: int) -> int:
    """Collision-free child seed for a (stream, key...) coordinate."""
    ss = np.random.SeedSequence((int(base_seed), int(stream), *[int(k) for k in key]))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sample_training_batch(
    teacher: TeacherModel,
    base_seed: int,
    iteration: int,
    batch_size: int,
    size: tuple[int, int],
    device: str = "cpu",
) -> TripletBatch:
    triplets = [
        teacher.sample_triplet(derived_seed(base_seed, _TRAIN_STREAM, iteration, j), size=size)
        for j in range(batch_size)
    ]
    return TripletBatch.from_triplets(triplets, device=device)


def sample_eval_triplets(
    teacher: TeacherModel,
    base_seed: int,
    count: int,
    size: tuple[int, int],
    alpha: float | None = None,
) -> list[TrainingTriplet]:
    """Held-out triplets on a stream disjoint from every training seed."""
    return [
        teacher.sample_triplet(derived_seed(base_seed, _EVAL_STREAM, j), size=size, alpha=alpha)
        for j in range(count)
    ]


@dataclass
class TrainState:
    config: TrainConfig
    gen: MorphGenerator
    disc: MultiTaskDiscriminator
    opt_g: torch.optim.Adam
    opt_d: torch.optim.Adam
    teacher: TeacherModel
    iteration: int = 0

    @property
    def model_config(self):
        return self.gen.cfg


def build_train_state(config: TrainConfig) -> TrainState:
    model_cfg = config.model_config()
    torch.manual_seed(config.seed)
    gen = build_generator(model_cfg).to(config.device)
    disc = build_discriminator(model_cfg).to(config.device)
    betas = (config.beta1, config.beta2)
    opt_g = torch.optim.Adam(gen.parameters(), lr=config.lr_g, betas=betas, eps=ADAM_EPS)
    opt_d = torch.optim.Adam(disc.parameters(), lr=config.lr_d, betas=betas, eps=ADAM_EPS)
    teacher = build_teacher(config.teacher)
    return TrainState(config, gen, disc, opt_g, opt_d, teacher)


def _set_requires_grad(module: torch.nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


def train_step(state: TrainState, batch: TripletBatch) -> LossReport:
    """One D update then one G update on a shared generator forward."""
    weights = state.config.weights
    outs = generator_outputs(state.gen, batch, weights)

    d_vals = d_side_losses(state.disc, batch, outs, weights)
    state.opt_d.zero_grad(set_to_none=True)
    total_d_from(d_vals, batch.x_a).backward()
    state.opt_d.step()

    _set_requires_grad(state.disc, False)
    g_vals = g_side_losses(state.disc, batch, outs, weights)
    state.opt_g.zero_grad(set_to_none=True)
    total_g_from(g_vals, weights, batch.x_a).backward()
    state.opt_g.step()
    _set_requires_grad(state.disc, True)

    report = build_report(g_vals, d_vals, weights)
    state.iteration += 1
    if not report.all_finite():
        raise TrainingDiverged(state.iteration, report)
    return report


def state_to_checkpoint(state: TrainState) -> Checkpoint:
    return Checkpoint(
        config=state.model_config,
        generator=module_arrays(state.gen),
        discriminator=module_arrays(state.disc),
        opt_g=optimizer_arrays(state.opt_g, list(state.gen.named_parameters())),
        opt_d=optimizer_arrays(state.opt_d, list(state.disc.named_parameters())),
        iteration=state.iteration,
        torch_rng=bytes(torch.get_rng_state().numpy().tobytes()),
        train_config=state.config,
    )


def load_train_state(path: str | Path, config: TrainConfig | None = None) -> TrainState:
    """Rebuild a resumable state from a checkpoint.

    `config` overrides the stored one (e.g. to extend `iterations`); the
    model architecture always comes from the checkpoint.
    """
    ckpt = load_checkpoint(path)
    if config is None:
        config = ckpt.train_config
    if config is None:
        raise ValueError(f"{path} stores no training config; pass one explicitly")
    state = build_train_state(config)
    if state.model_config != ckpt.config:
        raise ValueError("checkpoint architecture disagrees with the requested config")
    load_module_arrays(state.gen, ckpt.generator)
    load_module_arrays(state.disc, ckpt.discriminator)
    load_optimizer_arrays(state.opt_g, list(state.gen.named_parameters()), ckpt.opt_g)
    load_optimizer_arrays(state.opt_d, list(state.disc.named_parameters()), ckpt.opt_d)
    state.iteration = ckpt.iteration
    if ckpt.torch_rng is not None:
        torch.set_rng_state(torch.frombuffer(bytearray(ckpt.torch_rng), dtype=torch.uint8))
    return state


class Trainer:
    """Runs the loop, writes the JSONL loss log and periodic checkpoints."""

    def __init__(self, config: TrainConfig, resume_from: str | Path | None = None):
        if resume_from is None:
            self.state = build_train_state(config)
        else:
            self.state = load_train_state(resume_from, config)
        self.config = self.state.config
        self.out_dir = Path(self.config.out_dir)
        self.ckpt_dir = self.out_dir / "checkpoints"
        self.log_path = self.out_dir / "train_log.jsonl"
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.ckpt_dir.mkdir(parents=True, exist_ok=True)

    def checkpoint_path(self, iteration: int) -> Path:
        return self.ckpt_dir / f"ckpt_{iteration:07d}.zip"

    def save(self) -> Path:
        return save_checkpoint(self.checkpoint_path(self.state.iteration), state_to_checkpoint(self.state))

    def run(self, on_report=None) -> Path:
        """Train to config.iterations; returns the final checkpoint path."""
        state = self.state
        cfg = self.config
        size = state.model_config.image_size
        last_saved = None
        if state.iteration == 0:
            last_saved = self.save()
        with self.log_path.open("a") as log:
            while state.iteration < cfg.iterations:
                it = state.iteration  # seed coordinate of the upcoming step
                batch = sample_training_batch(
                    state.teacher, cfg.seed, it, cfg.batch_size, size, cfg.device
                )
                try:
                    report = train_step(state, batch)
                except TrainingDiverged as err:
                    log.write(json.dumps({"iteration": err.iteration, "diverged": True, **err.report.to_dict()}) + "\n")
                    raise
                log.write(json.dumps({"iteration": state.iteration, **report.to_dict()}) + "\n")
                if on_report is not None:
                    on_report(state.iteration, report)
                if state.iteration % cfg.checkpoint_interval == 0:
                    last_saved = self.save()
        if last_saved is None or last_saved != self.checkpoint_path(state.iteration):
            last_saved = self.save()
        return last_saved


def train(config: TrainConfig, resume_from: str | Path | None = None, on_report=None) -> Path:
    return Trainer(config, resume_from=resume_from).run(on_report=on_report)
