"""Loss terms for the morphing minimax objective.

Four adversarial terms (identity, morphing, swapping, cycle-swapping)
plus pixel L1 terms on the supervised outputs, combined as

    total_D = sum of hinge D terms            + R1 penalty
    total_G = sum of hinge G terms            + lambda_pix * sum of L1 terms

The morphing term weights both class branches of the interpolated
output by (1-alpha) and alpha; the weights multiply the whole hinge
terms on both sides.  The swapping term is adversarial only.

`full_objective` evaluates everything on shared encodings in one pass
and is the quantity the trainer optimizes; the `*_terms` functions are
straight-line single-term references kept for testing and inspection.
In a `LossReport`, the `adv_*` scalars are the generator-side values;
total_G is exactly their ordered sum plus the weighted pixel terms.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .config import LossWeights
from .networks import MorphGenerator, MultiTaskDiscriminator, lerp
from .teacher import TrainingTriplet


@dataclass
class TripletBatch:
    x_a: torch.Tensor
    x_b: torch.Tensor
    x_mid: torch.Tensor
    alpha: torch.Tensor
    label_a: torch.Tensor
    label_b: torch.Tensor

    @classmethod
    def from_triplets(
        cls,
        triplets: Sequence[TrainingTriplet],
        device: str | torch.device = "cpu",
        dtype: torch.dtype = torch.float32,
    ) -> "TripletBatch":
        def stack(images):
            return torch.from_numpy(np.stack(images)).to(device=device, dtype=dtype)

        return cls(
            x_a=stack([t.x_a for t in triplets]),
            x_b=stack([t.x_b for t in triplets]),
            x_mid=stack([t.x_mid for t in triplets]),
            alpha=torch.tensor([t.alpha for t in triplets], device=device, dtype=dtype),
            label_a=torch.tensor([t.label_a for t in triplets], device=device, dtype=torch.long),
            label_b=torch.tensor([t.label_b for t in triplets], device=device, dtype=torch.long),
        )

    @property
    def size(self) -> int:
        return self.x_a.shape[0]


@dataclass
class LossReport:
    """Per-term scalars of one objective evaluation.

    adv_* are the generator-side adversarial values; r1 belongs to the
    discriminator.  Disabled terms are exactly 0.
    """

    adv_idt: float = 0.0
    adv_mrp: float = 0.0
    adv_swp: float = 0.0
    adv_cyc: float = 0.0
    pix_idt: float = 0.0
    pix_mrp: float = 0.0
    pix_cyc: float = 0.0
    r1: float = 0.0
    total_G: float = 0.0
    total_D: float = 0.0

    def to_dict(self) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "LossReport":
        return cls(**{f.name: float(d[f.name]) for f in fields(cls)})

    def all_finite(self) -> bool:
        return all(np.isfinite(getattr(self, f.name)) for f in fields(self))


def _per_sample(t: torch.Tensor) -> torch.Tensor:
    return t.reshape(t.shape[0], -1).mean(dim=1)


def adv_d(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    """Hinge discriminator loss: mean(max(0,1-real)) + mean(max(0,1+fake))."""
    return F.relu(1.0 - real_scores).mean() + F.relu(1.0 + fake_scores).mean()


def adv_g(fake_scores: torch.Tensor) -> torch.Tensor:
    """Hinge generator loss: -mean(fake)."""
    return -fake_scores.mean()


def weighted_adv_d(real_scores, fake_scores, weight: torch.Tensor) -> torch.Tensor:
    """Per-sample weights multiplying the whole hinge terms."""
    real = (_per_sample(F.relu(1.0 - real_scores)) * weight).mean()
    fake = (_per_sample(F.relu(1.0 + fake_scores)) * weight).mean()
    return real + fake


def weighted_adv_g(fake_scores, weight: torch.Tensor) -> torch.Tensor:
    return (-_per_sample(fake_scores) * weight).mean()


def pixel_l1(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference over all pixels."""
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    return (x - y).abs().mean()


def r1_penalty(
    disc: MultiTaskDiscriminator,
    real: torch.Tensor,
    labels: torch.Tensor,
    gamma: float,
) -> torch.Tensor:
    """(gamma/2) * E[ ||d mean-score / d pixels||^2 ] on real data."""
    if gamma == 0.0:
        return real.new_zeros(())
    x = real.detach().requires_grad_(True)
    scores = _per_sample(disc.score(x, labels))
    (grad,) = torch.autograd.grad(scores.sum(), x, create_graph=True)
    return (gamma / 2.0) * grad.reshape(grad.shape[0], -1).pow(2).sum(dim=1).mean()


@dataclass
class TermValues:
    """One objective term: discriminator side, generator side, pixel part."""

    adv_d: torch.Tensor | None = None
    adv_g: torch.Tensor | None = None
    pix: torch.Tensor | None = None


def identity_terms(gen, disc, x_a, x_b, label_a, label_b) -> TermValues:
    """Reconstruction of both inputs at the transition endpoints."""
    y_aa = gen.generate(x_a, x_b, 0.0, 0.0)
    y_bb = gen.generate(x_a, x_b, 1.0, 1.0)
    return TermValues(
        adv_d=adv_d(disc.score(x_a, label_a), disc.score(y_aa.detach(), label_a))
        + adv_d(disc.score(x_b, label_b), disc.score(y_bb.detach(), label_b)),
        adv_g=adv_g(disc.score(y_aa, label_a)) + adv_g(disc.score(y_bb, label_b)),
        pix=pixel_l1(x_a, y_aa) + pixel_l1(x_b, y_bb),
    )


def morphing_terms(gen, disc, batch: TripletBatch) -> TermValues:
    """Interpolated output judged on both class branches, weighted by alpha."""
    a = batch.alpha
    y_mm = gen.generate(batch.x_a, batch.x_b, a, a)
    det = y_mm.detach()
    d_val = weighted_adv_d(
        disc.score(batch.x_a, batch.label_a), disc.score(det, batch.label_a), 1.0 - a
    ) + weighted_adv_d(disc.score(batch.x_b, batch.label_b), disc.score(det, batch.label_b), a)
    g_val = weighted_adv_g(disc.score(y_mm, batch.label_a), 1.0 - a) + weighted_adv_g(
        disc.score(y_mm, batch.label_b), a
    )
    return TermValues(adv_d=d_val, adv_g=g_val, pix=pixel_l1(batch.x_mid, y_mm))


def swapping_term(gen, disc, x_a, x_b, label_a, label_b) -> TermValues:
    """Content/style swaps judged as the class their style came from; no pixel part."""
    y_ab = gen.generate(x_a, x_b, 0.0, 1.0)
    y_ba = gen.generate(x_a, x_b, 1.0, 0.0)
    return TermValues(
        adv_d=adv_d(disc.score(x_a, label_a), disc.score(y_ba.detach(), label_a))
        + adv_d(disc.score(x_b, label_b), disc.score(y_ab.detach(), label_b)),
        adv_g=adv_g(disc.score(y_ba, label_a)) + adv_g(disc.score(y_ab, label_b)),
    )


def cycle_swapping_terms(gen, disc, x_a, x_b, label_a, label_b) -> TermValues:
    """Re-swap the swapped outputs back and compare against the inputs."""
    y_ab = gen.generate(x_a, x_b, 0.0, 1.0)
    y_ba = gen.generate(x_a, x_b, 1.0, 0.0)
    y_cyc_a = gen.generate(y_ab, x_a, 0.0, 1.0)
    y_cyc_b = gen.generate(y_ba, x_b, 0.0, 1.0)
    return TermValues(
        adv_d=adv_d(disc.score(x_a, label_a), disc.score(y_cyc_a.detach(), label_a))
        + adv_d(disc.score(x_b, label_b), disc.score(y_cyc_b.detach(), label_b)),
        adv_g=adv_g(disc.score(y_cyc_a, label_a)) + adv_g(disc.score(y_cyc_b, label_b)),
        pix=pixel_l1(x_a, y_cyc_a) + pixel_l1(x_b, y_cyc_b),
    )


@dataclass
class GeneratorOutputs:
    """All generator outputs of one step, built on shared encodings."""

    y_aa: torch.Tensor | None = None
    y_bb: torch.Tensor | None = None
    y_mm: torch.Tensor | None = None
    y_ab: torch.Tensor | None = None
    y_ba: torch.Tensor | None = None
    y_cyc_a: torch.Tensor | None = None
    y_cyc_b: torch.Tensor | None = None


def generator_outputs(gen: MorphGenerator, batch: TripletBatch, weights: LossWeights) -> GeneratorOutputs:
    """Encode the input pair once and decode every enabled output in one pass."""
    n = batch.size
    x = torch.cat([batch.x_a, batch.x_b])
    content = gen.encode_content(x)
    style = gen.encode_style(x)
    c_a, c_b = content[:n], content[n:]
    s_a, s_b = style[:n], style[n:]

    need_swaps = weights.use_swapping or weights.use_cycle
    styles = [s_a, s_b]
    if weights.use_morphing:
        styles.append(lerp(s_a, s_b, batch.alpha))
    mapped = gen.map_style(torch.cat(styles))
    a_a, a_b = mapped[:n], mapped[n : 2 * n]
    a_mid = mapped[2 * n :] if weights.use_morphing else None

    contents, adains, order = [], [], []
    if weights.use_identity:
        contents += [c_a, c_b]
        adains += [a_a, a_b]
        order += ["y_aa", "y_bb"]
    if weights.use_morphing:
        contents.append(lerp(c_a, c_b, batch.alpha))
        adains.append(a_mid)
        order.append("y_mm")
    if need_swaps:
        contents += [c_a, c_b]
        adains += [a_b, a_a]
        order += ["y_ab", "y_ba"]
    out = GeneratorOutputs()
    if order:
        decoded = gen.decode(torch.cat(contents), torch.cat(adains))
        for i, name in enumerate(order):
            setattr(out, name, decoded[i * n : (i + 1) * n])
    if weights.use_cycle:
        c_cyc = gen.encode_content(torch.cat([out.y_ab, out.y_ba]))
        cyc = gen.decode(c_cyc, torch.cat([a_a, a_b]))
        out.y_cyc_a, out.y_cyc_b = cyc[:n], cyc[n:]
    return out


def _score_pairs(disc, batch, outs, detach: bool):
    """Branch-selected score maps for every enabled fake.

    Each distinct image goes through the discriminator once; the
    interpolated output is judged on both class branches from the same
    score maps.
    """
    images, selections = [], []  # selections: (name, image index, labels)

    def add(img, *branches):
        if detach:
            img = img.detach()
        idx = len(images)
        images.append(img)
        for name, labels in branches:
            selections.append((name, idx, labels))

    if outs.y_aa is not None:
        add(outs.y_aa, ("aa", batch.label_a))
        add(outs.y_bb, ("bb", batch.label_b))
    if outs.y_mm is not None:
        add(outs.y_mm, ("mm_a", batch.label_a), ("mm_b", batch.label_b))
    if outs.y_ab is not None:
        add(outs.y_ab, ("ab", batch.label_b))
        add(outs.y_ba, ("ba", batch.label_a))
    if outs.y_cyc_a is not None:
        add(outs.y_cyc_a, ("cyc_a", batch.label_a))
        add(outs.y_cyc_b, ("cyc_b", batch.label_b))
    if not images:
        return {}
    maps = disc(torch.cat(images))
    n = batch.size
    rows = torch.arange(n, device=maps.device)
    return {
        name: maps[idx * n : (idx + 1) * n][rows, labels] for name, idx, labels in selections
    }


def d_side_losses(
    disc: MultiTaskDiscriminator, batch: TripletBatch, outs: GeneratorOutputs, weights: LossWeights
) -> dict[str, torch.Tensor]:
    """Discriminator hinge terms on detached fakes, plus the R1 penalty."""
    fake = _score_pairs(disc, batch, outs, detach=True)
    real = disc.score(
        torch.cat([batch.x_a, batch.x_b]), torch.cat([batch.label_a, batch.label_b])
    )
    real_a, real_b = real[: batch.size], real[batch.size :]
    vals: dict[str, torch.Tensor] = {}
    if weights.use_identity:
        vals["adv_idt"] = adv_d(real_a, fake["aa"]) + adv_d(real_b, fake["bb"])
    if weights.use_morphing:
        vals["adv_mrp"] = weighted_adv_d(real_a, fake["mm_a"], 1.0 - batch.alpha) + weighted_adv_d(
            real_b, fake["mm_b"], batch.alpha
        )
    if weights.use_swapping:
        vals["adv_swp"] = adv_d(real_a, fake["ba"]) + adv_d(real_b, fake["ab"])
    if weights.use_cycle:
        vals["adv_cyc"] = adv_d(real_a, fake["cyc_a"]) + adv_d(real_b, fake["cyc_b"])
    if weights.r1_gamma > 0.0:
        vals["r1"] = r1_penalty(
            disc,
            torch.cat([batch.x_a, batch.x_b]),
            torch.cat([batch.label_a, batch.label_b]),
            weights.r1_gamma,
        )
    return vals


def g_side_losses(
    disc: MultiTaskDiscriminator, batch: TripletBatch, outs: GeneratorOutputs, weights: LossWeights
) -> dict[str, torch.Tensor]:
    """Generator hinge terms on attached fakes, plus pixel terms."""
    fake = _score_pairs(disc, batch, outs, detach=False)
    vals: dict[str, torch.Tensor] = {}
    if weights.use_identity:
        vals["adv_idt"] = adv_g(fake["aa"]) + adv_g(fake["bb"])
        vals["pix_idt"] = pixel_l1(batch.x_a, outs.y_aa) + pixel_l1(batch.x_b, outs.y_bb)
    if weights.use_morphing:
        vals["adv_mrp"] = weighted_adv_g(fake["mm_a"], 1.0 - batch.alpha) + weighted_adv_g(
            fake["mm_b"], batch.alpha
        )
        vals["pix_mrp"] = pixel_l1(batch.x_mid, outs.y_mm)
    if weights.use_swapping:
        vals["adv_swp"] = adv_g(fake["ba"]) + adv_g(fake["ab"])
    if weights.use_cycle:
        vals["adv_cyc"] = adv_g(fake["cyc_a"]) + adv_g(fake["cyc_b"])
        vals["pix_cyc"] = pixel_l1(batch.x_a, outs.y_cyc_a) + pixel_l1(batch.x_b, outs.y_cyc_b)
    return vals


_ADV_KEYS = ("adv_idt", "adv_mrp", "adv_swp", "adv_cyc")
_PIX_KEYS = ("pix_idt", "pix_mrp", "pix_cyc")


def total_d_from(vals: dict[str, torch.Tensor], ref: torch.Tensor) -> torch.Tensor:
    total = ref.new_zeros(())
    for key in _ADV_KEYS + ("r1",):
        if key in vals:
            total = total + vals[key]
    return total


def total_g_from(vals: dict[str, torch.Tensor], weights: LossWeights, ref: torch.Tensor) -> torch.Tensor:
    total = ref.new_zeros(())
    for key in _ADV_KEYS:
        if key in vals:
            total = total + vals[key]
    for key in _PIX_KEYS:
        if key in vals:
            total = total + weights.lambda_pix * vals[key]
    return total


def build_report(
    g_vals: dict[str, torch.Tensor],
    d_vals: dict[str, torch.Tensor],
    weights: LossWeights,
) -> LossReport:
    """Float report; totals are the ordered sums of the reported components."""

    def val(d, key):
        return float(d[key]) if key in d else 0.0

    report = LossReport(
        adv_idt=val(g_vals, "adv_idt"),
        adv_mrp=val(g_vals, "adv_mrp"),
        adv_swp=val(g_vals, "adv_swp"),
        adv_cyc=val(g_vals, "adv_cyc"),
        pix_idt=val(g_vals, "pix_idt"),
        pix_mrp=val(g_vals, "pix_mrp"),
        pix_cyc=val(g_vals, "pix_cyc"),
        r1=val(d_vals, "r1"),
    )
    report.total_G = (
        report.adv_idt
        + report.adv_mrp
        + report.adv_swp
        + report.adv_cyc
        + weights.lambda_pix * (report.pix_idt + report.pix_mrp + report.pix_cyc)
    )
    report.total_D = sum(float(d_vals[k]) for k in _ADV_KEYS if k in d_vals) + report.r1
    return report


@dataclass
class ObjectiveValues:
    total_g: torch.Tensor
    total_d: torch.Tensor
    report: LossReport


def full_objective(
    gen: MorphGenerator,
    disc: MultiTaskDiscriminator,
    batch: TripletBatch,
    weights: LossWeights,
) -> ObjectiveValues:
    """Both sides of the minimax objective against the current networks."""
    outs = generator_outputs(gen, batch, weights)
    d_vals = d_side_losses(disc, batch, outs, weights)
    g_vals = g_side_losses(disc, batch, outs, weights)
    ref = batch.x_a
    return ObjectiveValues(
        total_g=total_g_from(g_vals, weights, ref),
        total_d=total_d_from(d_vals, ref),
        report=build_report(g_vals, d_vals, weights),
    )
