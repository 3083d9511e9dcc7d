"""Student generator and multi-task discriminator.

The generator is a content encoder (downsampling + bottleneck residual
blocks, instance-normalized), a style encoder (six downsampling stages
ending in global sum pooling), a five-layer MLP mapping the style code
to AdaIN scale/bias parameters, and an AdaIN decoder mirroring the
content encoder.  All residual blocks are pre-activated.  The
discriminator emits one real/fake score map per class; losses only ever
touch the branch selected by the input's label.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .config import NORM_EPS, ModelConfig


def lerp(a: torch.Tensor, b: torch.Tensor, alpha) -> torch.Tensor:
    """(1-alpha)*a + alpha*b. Exact at the endpoints.

    `alpha` may be a scalar or a per-sample tensor of shape (N,).
    """
    if a.shape != b.shape:
        raise ValueError(f"lerp shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    if torch.is_tensor(alpha) and alpha.dim() > 0:
        alpha = alpha.reshape(-1, *([1] * (a.dim() - 1)))
    return (1.0 - alpha) * a + alpha * b


def _init_weights(module: nn.Module) -> None:
    # fan-in-scaled normal for conv/linear, zero biases
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            fan_in = m.weight[0].numel()
            nn.init.normal_(m.weight, std=(2.0 / fan_in) ** 0.5)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def _pool(x: torch.Tensor) -> torch.Tensor:
    # degenerate spatial sizes (micro tests) skip pooling instead of underflowing
    if x.shape[-1] > 1 and x.shape[-2] > 1:
        return F.avg_pool2d(x, 2)
    return x


class PreactResBlock(nn.Module):
    """Pre-activated residual block: norm-act-conv twice plus a skip."""

    def __init__(self, c_in: int, c_out: int, norm: str = "in", act: str = "relu", pool: bool = False):
        super().__init__()
        self.pool = pool
        if norm == "in":
            self.norm1 = nn.InstanceNorm2d(c_in, affine=True, eps=NORM_EPS)
            self.norm2 = nn.InstanceNorm2d(c_out, affine=True, eps=NORM_EPS)
        elif norm == "none":
            self.norm1 = self.norm2 = nn.Identity()
        else:
            raise ValueError(f"unsupported norm {norm!r}")
        self.act = nn.ReLU() if act == "relu" else nn.LeakyReLU(0.2)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, 1, 1)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, 1, 1)
        self.skip = nn.Conv2d(c_in, c_out, 1, bias=False) if c_in != c_out else nn.Identity()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.conv1(self.act(self.norm1(x)))
        h = self.conv2(self.act(self.norm2(h)))
        out = h + self.skip(x)
        return _pool(out) if self.pool else out


def adain(x: torch.Tensor, scale: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """Normalize each channel over space, then apply style scale and bias."""
    mean = x.mean(dim=(2, 3), keepdim=True)
    var = x.var(dim=(2, 3), unbiased=False, keepdim=True)
    norm = (x - mean) / torch.sqrt(var + NORM_EPS)
    return scale[:, :, None, None] * norm + bias[:, :, None, None]


class AdainResBlock(nn.Module):
    """Pre-activated residual block whose norms take style-derived affines.

    Consumes a (N, 4C) parameter slice: scale/bias for each of the two
    AdaIN layers, both on C channels.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.act = nn.ReLU()
        self.conv1 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.conv2 = nn.Conv2d(channels, channels, 3, 1, 1)

    @property
    def param_count(self) -> int:
        return 4 * self.channels

    def forward(self, x: torch.Tensor, params: torch.Tensor) -> torch.Tensor:
        c = self.channels
        s1, b1, s2, b2 = params[:, :c], params[:, c : 2 * c], params[:, 2 * c : 3 * c], params[:, 3 * c :]
        h = self.conv1(self.act(adain(x, s1, b1)))
        h = self.conv2(self.act(adain(h, s2, b2)))
        return h + x


class ContentEncoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        w = cfg.content_widths
        self.stem = nn.Conv2d(3, w[0], 7, 1, 3)
        self.down = nn.ModuleList(
            [PreactResBlock(w[i], w[i + 1], norm="in", pool=True) for i in range(3)]
        )
        self.bottleneck = nn.ModuleList(
            [PreactResBlock(w[3], w[3], norm="in") for _ in range(3)]
        )
        _init_weights(self)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = F.relu(self.stem(x))
        for blk in self.down:
            h = blk(h)
        for blk in self.bottleneck:
            h = blk(h)
        return h


class StyleEncoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        w = cfg.style_widths
        self.stem = nn.Conv2d(3, w[0], 7, 1, 3)
        self.stem_norm = nn.InstanceNorm2d(w[0], affine=True, eps=NORM_EPS)
        self.down = nn.ModuleList(
            [PreactResBlock(w[i], w[i + 1], norm="in", pool=True) for i in range(6)]
        )
        _init_weights(self)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = F.relu(self.stem_norm(self.stem(x)))
        for blk in self.down:
            h = blk(h)
        return h.sum(dim=(2, 3))  # global sum pooling


class MappingNetwork(nn.Module):
    """MLP from style code to the concatenated AdaIN scale/bias vector."""

    def __init__(self, cfg: ModelConfig, scale_mask: torch.Tensor):
        super().__init__()
        dims = [cfg.style_dim] + [cfg.mapping_hidden] * (cfg.mapping_layers - 1)
        self.hidden = nn.ModuleList(
            [nn.Linear(dims[i], dims[i + 1]) for i in range(cfg.mapping_layers - 1)]
        )
        self.out = nn.Linear(cfg.mapping_hidden, cfg.adain_param_count)
        _init_weights(self)
        # start from identity AdaIN: scales 1, biases 0, no style influence
        nn.init.zeros_(self.out.weight)
        with torch.no_grad():
            self.out.bias.copy_(scale_mask.to(self.out.bias.dtype))

    def forward(self, s: torch.Tensor) -> torch.Tensor:
        h = s
        for layer in self.hidden:
            h = F.relu(layer(h))
        return self.out(h)


class Decoder(nn.Module):
    """AdaIN bottleneck blocks, then upsample/project/refine stages, then RGB."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cc = cfg.content_channels
        self.bottleneck = nn.ModuleList([AdainResBlock(cc) for _ in range(3)])
        self.proj = nn.ModuleList()
        self.up = nn.ModuleList()
        prev = cc
        for width in cfg.decoder_up_widths:
            self.proj.append(nn.Conv2d(prev, width, 1))
            self.up.append(AdainResBlock(width))
            prev = width
        self.to_rgb = nn.Conv2d(prev, 3, 7, 1, 3)
        _init_weights(self)

    @property
    def adain_blocks(self) -> list[AdainResBlock]:
        return list(self.bottleneck) + list(self.up)

    def param_count(self) -> int:
        return sum(b.param_count for b in self.adain_blocks)

    def scale_mask(self) -> torch.Tensor:
        """1 at scale positions, 0 at bias positions of the AdaIN vector."""
        chunks = []
        for blk in self.adain_blocks:
            c = blk.channels
            chunks += [torch.ones(c), torch.zeros(c), torch.ones(c), torch.zeros(c)]
        return torch.cat(chunks)

    def forward(self, content: torch.Tensor, adain_params: torch.Tensor) -> torch.Tensor:
        offsets = torch.split(
            adain_params, [b.param_count for b in self.adain_blocks], dim=1
        )
        h = content
        idx = 0
        for blk in self.bottleneck:
            h = blk(h, offsets[idx])
            idx += 1
        for proj, blk in zip(self.proj, self.up):
            h = proj(F.interpolate(h, scale_factor=2, mode="nearest"))
            h = blk(h, offsets[idx])
            idx += 1
        return torch.tanh(self.to_rgb(h))


class MorphGenerator(nn.Module):
    """Full student generator: encoders, mapping network, AdaIN decoder."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.content_encoder = ContentEncoder(cfg)
        self.style_encoder = StyleEncoder(cfg)
        self.decoder = Decoder(cfg)
        if self.decoder.param_count() != cfg.adain_param_count:
            raise AssertionError("decoder AdaIN layout disagrees with config")
        self.mapping = MappingNetwork(cfg, self.decoder.scale_mask())

    def encode_content(self, x: torch.Tensor) -> torch.Tensor:
        self._check_image(x)
        return self.content_encoder(x)

    def encode_style(self, x: torch.Tensor) -> torch.Tensor:
        self._check_image(x)
        return self.style_encoder(x)

    def map_style(self, s: torch.Tensor) -> torch.Tensor:
        if s.shape[-1] != self.cfg.style_dim:
            raise ValueError(f"style code length {s.shape[-1]} != {self.cfg.style_dim}")
        return self.mapping(s)

    def decode(self, content: torch.Tensor, adain_params: torch.Tensor) -> torch.Tensor:
        expect = self.cfg.content_code_shape
        if tuple(content.shape[1:]) != expect:
            raise ValueError(f"content code shape {tuple(content.shape[1:])} != {expect}")
        if adain_params.shape[-1] != self.cfg.adain_param_count:
            raise ValueError(
                f"AdaIN vector length {adain_params.shape[-1]} != {self.cfg.adain_param_count}"
            )
        return self.decoder(content, adain_params)

    def generate(self, x_a: torch.Tensor, x_b: torch.Tensor, alpha_c, alpha_s) -> torch.Tensor:
        """Decode interpolated codes; interpolation precedes the mapping network."""
        c = lerp(self.encode_content(x_a), self.encode_content(x_b), alpha_c)
        s = lerp(self.encode_style(x_a), self.encode_style(x_b), alpha_s)
        return self.decode(c, self.map_style(s))

    def _check_image(self, x: torch.Tensor) -> None:
        h, w = self.cfg.image_size
        if x.dim() != 4 or tuple(x.shape[1:]) != (3, h, w):
            raise ValueError(f"expected (N, 3, {h}, {w}) input, got {tuple(x.shape)}")


class MultiTaskDiscriminator(nn.Module):
    """One PatchGAN-style score map per class; losses select a single branch."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        w = cfg.disc_widths
        self.stem = nn.Conv2d(3, w[0], 7, 1, 3)
        self.blocks = nn.ModuleList(
            [
                PreactResBlock(w[0], w[1], norm="none", act="lrelu"),
                PreactResBlock(w[1], w[2], norm="none", act="lrelu", pool=True),
                PreactResBlock(w[2], w[3], norm="none", act="lrelu"),
                PreactResBlock(w[3], w[4], norm="none", act="lrelu"),
            ]
        )
        self.act = nn.LeakyReLU(0.2)
        self.head = nn.Conv2d(w[4], cfg.num_classes, 7, 1, 3)
        _init_weights(self)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """Penultimate activation map (input of the class-branch head)."""
        h = self.stem(x)
        for blk in self.blocks:
            h = blk(h)
        return self.act(h)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x))

    def score(self, x: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        """Score map of each sample's labeled branch, shape (N, H/2, W/2)."""
        labels = self._check_labels(labels, x.shape[0])
        maps = self.forward(x)
        return maps[torch.arange(x.shape[0], device=x.device), labels]

    def _check_labels(self, labels: torch.Tensor, n: int) -> torch.Tensor:
        labels = torch.as_tensor(labels, dtype=torch.long)
        if labels.dim() == 0:
            labels = labels.expand(n)
        if labels.shape != (n,):
            raise ValueError(f"labels must have shape ({n},)")
        if bool((labels < 0).any()) or bool((labels >= self.cfg.num_classes).any()):
            raise ValueError(f"class index out of range [0, {self.cfg.num_classes})")
        return labels


def build_generator(cfg: ModelConfig) -> MorphGenerator:
    return MorphGenerator(cfg)


def build_discriminator(cfg: ModelConfig) -> MultiTaskDiscriminator:
    return MultiTaskDiscriminator(cfg)
