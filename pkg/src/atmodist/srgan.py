"""Toy-scale SRGAN super-resolution with a pluggable content loss.

The generator is a residual trunk without batch normalization, upscaling via
sub-pixel (pixel-shuffle) convolutions whose weights are initialized so every
r x r output block is constant at initialization (no checkerboard artifacts),
and regular rather than transposed convolutions throughout. The content loss
is either plain MSE or the scaled squared l2 distance of representation
embeddings from a trained pretext checkpoint.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn

from .errors import ConfigurationError, InputError, TrainingDivergenceError
from .repnet import RepresentationModel

SRBatch = tuple[torch.Tensor, torch.Tensor]  # (low_res, high_res), [B, C, h, w]


@dataclass(frozen=True)
class SRConfig:
    scale_factor: int = 4
    content_loss_kind: str = "mse"      # "mse" | "representation"
    alpha_cnt: float = 1.0
    alpha_adv: float = 1e-3
    lr: float = 1e-4
    epochs: int = 6
    batch_size: int = 16
    in_channels: int = 2
    base_channels: int = 32
    n_res_blocks: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.scale_factor < 2 or self.scale_factor & (self.scale_factor - 1):
            raise ConfigurationError(f"scale factor must be a power of 2 >= 2, got {self.scale_factor}")
        if self.alpha_adv < 0:
            raise ConfigurationError("alpha_adv must be >= 0")
        if self.content_loss_kind not in ("mse", "representation"):
            raise ConfigurationError(f"unknown content loss kind {self.content_loss_kind!r}")


def icnr_(weight: torch.Tensor, scale: int) -> None:
    """Re-initialize a sub-pixel conv weight so pixel shuffle emits constant blocks.

    The scale^2 output channels feeding one high-res channel share one kernel,
    so at initialization every scale x scale block of the upscaled image holds
    a single value."""
    out_ch = weight.shape[0]
    groups = out_ch // scale**2
    if groups * scale**2 != out_ch:
        raise ConfigurationError(f"{out_ch} output channels not divisible by {scale ** 2}")
    with torch.no_grad():
        weight.copy_(torch.repeat_interleave(weight[:groups], scale**2, dim=0))


class _ResBlock(nn.Module):
    """Residual block without batch normalization (generator trunk)."""

    def __init__(self, ch: int):
        super().__init__()
        self.conv1 = nn.Conv2d(ch, ch, 3, padding=1)
        self.conv2 = nn.Conv2d(ch, ch, 3, padding=1)
        self.act = nn.PReLU(ch)

    def forward(self, x):
        return x + self.conv2(self.act(self.conv1(x)))


class _Upscale(nn.Module):
    """Sub-pixel 2x upscale: regular conv, pixel shuffle, activation."""

    def __init__(self, ch: int):
        super().__init__()
        self.conv = nn.Conv2d(ch, ch * 4, 3, padding=1)
        self.shuffle = nn.PixelShuffle(2)
        self.act = nn.PReLU(ch)

    def forward(self, x):
        return self.act(self.shuffle(self.conv(x)))


class Generator(nn.Module):
    def __init__(self, cfg: SRConfig):
        super().__init__()
        ch = cfg.base_channels
        self.head = nn.Sequential(nn.Conv2d(cfg.in_channels, ch, 3, padding=1), nn.PReLU(ch))
        self.trunk = nn.Sequential(*[_ResBlock(ch) for _ in range(cfg.n_res_blocks)])
        self.trunk_tail = nn.Conv2d(ch, ch, 3, padding=1)
        n_up = int(np.log2(cfg.scale_factor))
        self.upscales = nn.Sequential(*[_Upscale(ch) for _ in range(n_up)])
        self.tail = nn.Conv2d(ch, cfg.in_channels, 3, padding=1)

    def forward(self, x):
        h = self.head(x)
        h = h + self.trunk_tail(self.trunk(h))
        return self.tail(self.upscales(h))


class Discriminator(nn.Module):
    def __init__(self, cfg: SRConfig):
        super().__init__()
        ch = cfg.base_channels
        self.features = nn.Sequential(
            nn.Conv2d(cfg.in_channels, ch, 3, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(ch, ch, 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(ch),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(ch, 2 * ch, 3, padding=1, bias=False),
            nn.BatchNorm2d(2 * ch),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(2 * ch, 2 * ch, 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(2 * ch),
            nn.LeakyReLU(0.2, inplace=True),
            nn.AdaptiveAvgPool2d(1),
        )
        self.classifier = nn.Sequential(
            nn.Flatten(),
            nn.Linear(2 * ch, 4 * ch),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Linear(4 * ch, 1),
            nn.Sigmoid(),
        )

    def forward(self, x):
        return self.classifier(self.features(x))


def build_sr_models(cfg: SRConfig) -> tuple[Generator, Discriminator]:
    """Deterministically initialized generator/discriminator pair.

    Upscale convolutions get the checkerboard-suppressing initialization."""
    torch.manual_seed(cfg.seed)
    gen = Generator(cfg)
    disc = Discriminator(cfg)
    for m in list(gen.modules()) + list(disc.modules()):
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="leaky_relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)
    for up in gen.upscales:
        icnr_(up.conv.weight, scale=2)
    # start from the zero map so early training is a gentle regression
    nn.init.zeros_(gen.tail.weight)
    nn.init.zeros_(gen.tail.bias)
    return gen, disc


def content_loss(
    cfg: SRConfig,
    generated: torch.Tensor,
    target: torch.Tensor,
    rep_model: RepresentationModel | None = None,
) -> torch.Tensor:
    """MSE or alpha_cnt-scaled squared-l2 representation distance, batch mean."""
    if generated.shape != target.shape:
        raise InputError(f"shape mismatch {tuple(generated.shape)} vs {tuple(target.shape)}")
    if cfg.content_loss_kind == "mse":
        return torch.mean((generated - target) ** 2)
    if rep_model is None:
        raise ConfigurationError("representation content loss requires a trained checkpoint")
    rep_model.eval()
    diff = rep_model.represent(generated) - rep_model.represent(target)
    return cfg.alpha_cnt * torch.mean(torch.sum(diff**2, dim=1))


def batch_sr_pairs(pairs: Sequence[tuple[np.ndarray, np.ndarray]], batch_size: int) -> list[SRBatch]:
    """Stack (low, high) numpy pairs [h, w, c] into full torch batches."""
    batches = []
    for i in range(0, len(pairs) - len(pairs) % batch_size, batch_size):
        chunk = pairs[i : i + batch_size]
        low = torch.from_numpy(np.stack([p[0] for p in chunk])).permute(0, 3, 1, 2).contiguous()
        high = torch.from_numpy(np.stack([p[1] for p in chunk])).permute(0, 3, 1, 2).contiguous()
        batches.append((low, high))
    return batches


@dataclass
class SRCurves:
    """Per-epoch training curves plus fixed-batch probe losses in epoch one."""

    epochs: list[dict] = field(default_factory=list)
    first_epoch_probe: list[float] = field(default_factory=list)


def train_sr(
    cfg: SRConfig,
    batches: Sequence[SRBatch],
    rep_model: RepresentationModel | None = None,
) -> tuple[Generator, SRCurves]:
    """Alternating Adam updates of discriminator and generator.

    Total generator loss is content_loss + alpha_adv * adversarial loss. The
    first few batches double as a fixed probe set: their mean content loss is
    recorded at the start of training and at quarter points of the first
    epoch."""
    if not batches:
        raise ConfigurationError("empty SR training stream")
    gen, disc = build_sr_models(cfg)
    if cfg.content_loss_kind == "representation" and rep_model is None:
        raise ConfigurationError("representation content loss requires a trained checkpoint")
    if rep_model is not None:
        for p in rep_model.parameters():
            p.requires_grad_(False)

    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.lr)
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.lr)
    bce = nn.BCELoss()
    curves = SRCurves()
    probe_batches = batches[: min(4, len(batches))]
    n = len(batches)
    probe_steps = {0, max(n // 4, 1), max(n // 2, 1), max(3 * n // 4, 1), n}
    last_good = copy.deepcopy(gen.state_dict())

    def probe() -> float:
        gen.eval()
        with torch.no_grad():
            val = float(
                np.mean([content_loss(cfg, gen(lo), hi, rep_model).item() for lo, hi in probe_batches])
            )
        gen.train()
        return val

    step = 0
    for epoch in range(cfg.epochs):
        sums = {"content": 0.0, "adv": 0.0, "disc": 0.0}
        for low, high in batches:
            if epoch == 0 and step in probe_steps:
                curves.first_epoch_probe.append(probe())
            if cfg.alpha_adv > 0:
                opt_d.zero_grad()
                with torch.no_grad():
                    fake = gen(low)
                d_real = disc(high)
                d_fake = disc(fake)
                d_loss = bce(d_real, torch.ones_like(d_real)) + bce(d_fake, torch.zeros_like(d_fake))
                d_loss.backward()
                opt_d.step()
                sums["disc"] += d_loss.item()

            opt_g.zero_grad()
            fake = gen(low)
            c_loss = content_loss(cfg, fake, high, rep_model)
            if cfg.alpha_adv > 0:
                d_out = disc(fake)
                a_loss = bce(d_out, torch.ones_like(d_out))
            else:
                a_loss = torch.zeros(())
            g_loss = c_loss + cfg.alpha_adv * a_loss
            if not torch.isfinite(g_loss):
                raise TrainingDivergenceError("NaN generator loss", last_good=last_good)
            g_loss.backward()
            opt_g.step()
            sums["content"] += c_loss.item()
            sums["adv"] += a_loss.item()
            step += 1
        if epoch == 0:
            curves.first_epoch_probe.append(probe())
        last_good = copy.deepcopy(gen.state_dict())
        curves.epochs.append(
            {
                "epoch": epoch,
                "content_loss": sums["content"] / n,
                "adv_loss": sums["adv"] / n,
                "disc_loss": sums["disc"] / n,
            }
        )
    return gen, curves
