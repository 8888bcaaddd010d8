"""Siamese residual representation network and comparison head.

Both branches are literally one parameter set: the same module evaluates each
input. The designated metric layer is the output of the last residual stage
after its final ReLU, spatially average-pooled to a vector; the l2 difference
of these vectors between two inputs is the learned distance. The comparison
head (needed only for pretext training) concatenates the two pooled vectors
and maps them to lag-class logits.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .errors import ConfigurationError, FormatError, InputError
from .transform import TransformSpec

_CKPT_MAGIC = b"ATMRPNT1"
_CKPT_VERSION = 1


@dataclass(frozen=True)
class RepNetConfig:
    patch_size: int = 32
    in_channels: int = 2
    stem_channels: int = 16
    # (n_residual_blocks, channels) per stage; after the first stage each
    # stage halves resolution with a strided first convolution
    stages: tuple[tuple[int, int], ...] = ((1, 32), (1, 64))
    head_hidden: int = 256
    n_classes: int = 8

    def to_dict(self) -> dict:
        return {
            "patch_size": self.patch_size,
            "in_channels": self.in_channels,
            "stem_channels": self.stem_channels,
            "stages": [list(s) for s in self.stages],
            "head_hidden": self.head_hidden,
            "n_classes": self.n_classes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RepNetConfig":
        return cls(
            patch_size=d["patch_size"],
            in_channels=d["in_channels"],
            stem_channels=d["stem_channels"],
            stages=tuple(tuple(s) for s in d["stages"]),
            head_hidden=d["head_hidden"],
            n_classes=d["n_classes"],
        )


def full_scale_config() -> RepNetConfig:
    """Configuration at the full operating point: 160x160 two-channel
    patches, 23 lag classes, ~2.27M parameters total."""
    return RepNetConfig(
        patch_size=160,
        in_channels=2,
        stem_channels=56,
        stages=((2, 56), (2, 112), (2, 224)),
        head_hidden=256,
        n_classes=23,
    )


class ResidualBlock(nn.Module):
    """Two 3x3 convolutions with BN+ReLU after each, plus a skip connection.

    Skips across a channel or resolution change use a learnable 1x1
    projection (with BN)."""

    def __init__(self, in_ch: int, out_ch: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or in_ch != out_ch:
            self.proj = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )
        else:
            self.proj = nn.Identity()

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + self.proj(x))


class RepresentationModel(nn.Module):
    """Shared-weight encoder plus comparison head for lag classification."""

    def __init__(self, cfg: RepNetConfig):
        super().__init__()
        self.cfg = cfg

        stem = [
            nn.Conv2d(cfg.in_channels, cfg.stem_channels, 8, stride=2, padding=3, bias=False),
            nn.BatchNorm2d(cfg.stem_channels),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, stride=2, padding=1),
        ]
        self.stem = nn.Sequential(*stem)

        blocks = []
        ch = cfg.stem_channels
        size = _conv_out(_conv_out(cfg.patch_size, 8, 2, 3), 3, 2, 1)
        for i, (n_blocks, out_ch) in enumerate(cfg.stages):
            for b in range(n_blocks):
                stride = 2 if (b == 0 and i > 0) else 1
                blocks.append(ResidualBlock(ch, out_ch, stride))
                ch = out_ch
                size = _conv_out(size, 3, stride, 1)
                if size < 1:
                    raise ConfigurationError(
                        f"stage spec reduces spatial size below 1 at stage {i}"
                    )
        self.stages = nn.Sequential(*blocks)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.embed_dim = ch

        self.head = nn.Sequential(
            nn.Linear(2 * ch, cfg.head_hidden),
            nn.ReLU(inplace=True),
            nn.Linear(cfg.head_hidden, cfg.head_hidden),
            nn.ReLU(inplace=True),
            nn.Linear(cfg.head_hidden, cfg.n_classes),
        )

    def represent(self, x: torch.Tensor) -> torch.Tensor:
        """Metric-layer activations for a batch [B, C, H, W] -> [B, D]."""
        if x.ndim != 4 or x.shape[1] != self.cfg.in_channels:
            raise InputError(f"expected [B, {self.cfg.in_channels}, H, W], got {tuple(x.shape)}")
        out = self.stem(x)
        out = self.stages(out)
        return self.pool(out).flatten(1)

    def classify(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        """Lag-class logits for two batches of patches."""
        ra = self.represent(a)
        rb = self.represent(b)
        return self.head(torch.cat([ra, rb], dim=1))

    forward = classify

    @property
    def n_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())


def _conv_out(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def build(cfg: RepNetConfig, seed: int = 0) -> RepresentationModel:
    """Build and deterministically initialize a model (He init on non-bias weights)."""
    torch.manual_seed(seed)
    model = RepresentationModel(cfg)
    for m in model.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)
    return model


# ── Functional surface on single numpy patches [H, W, C] ────────────────

def _to_batch(patch: np.ndarray, cfg: RepNetConfig) -> torch.Tensor:
    patch = np.asarray(patch)
    if patch.ndim != 3 or patch.shape[2] != cfg.in_channels:
        raise InputError(f"expected patch [H, W, {cfg.in_channels}], got {patch.shape}")
    t = torch.from_numpy(np.ascontiguousarray(patch, dtype=np.float32))
    return t.permute(2, 0, 1).unsqueeze(0)


def represent(model: RepresentationModel, patch: np.ndarray) -> np.ndarray:
    """Metric-layer activation vector for one [H, W, C] patch (inference mode)."""
    model.eval()
    with torch.no_grad():
        return model.represent(_to_batch(patch, model.cfg))[0].numpy()


def classify_pair(model: RepresentationModel, patch_a: np.ndarray, patch_b: np.ndarray) -> np.ndarray:
    """Unnormalized lag-class logits for one patch pair (inference mode)."""
    model.eval()
    with torch.no_grad():
        return model.classify(_to_batch(patch_a, model.cfg), _to_batch(patch_b, model.cfg))[0].numpy()


# ── Checkpoints: binary parameter blob + JSON config + TransformSpec ────

def save_checkpoint(model: RepresentationModel, tspec: TransformSpec, ckpt_dir: str | Path) -> None:
    """Write params.bin (versioned header + float32 blob) and config.json."""
    ckpt_dir = Path(ckpt_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    state = model.state_dict()
    manifest = [[name, list(t.shape)] for name, t in state.items()]
    blob = np.concatenate(
        [t.detach().numpy().astype("<f4").ravel() for t in state.values()]
        or [np.zeros(0, "<f4")]
    )
    with open(ckpt_dir / "params.bin", "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<IQ", _CKPT_VERSION, blob.size))
        f.write(blob.tobytes())
    meta = {
        "version": _CKPT_VERSION,
        "repnet": model.cfg.to_dict(),
        "transform": tspec.to_dict(),
        "manifest": manifest,
    }
    (ckpt_dir / "config.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_checkpoint(ckpt_dir: str | Path) -> tuple[RepresentationModel, TransformSpec]:
    """Load a checkpoint written by save_checkpoint."""
    ckpt_dir = Path(ckpt_dir)
    cfg_path = ckpt_dir / "config.json"
    bin_path = ckpt_dir / "params.bin"
    if not cfg_path.exists():
        raise FormatError(f"missing checkpoint config {cfg_path}")
    if not bin_path.exists():
        raise FormatError(f"missing checkpoint parameters {bin_path}")
    meta = json.loads(cfg_path.read_text())
    raw = bin_path.read_bytes()
    if raw[:8] != _CKPT_MAGIC:
        raise FormatError(f"bad checkpoint magic in {bin_path}")
    version, count = struct.unpack("<IQ", raw[8:20])
    if version != _CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    blob = np.frombuffer(raw[20:], dtype="<f4")
    if blob.size != count:
        raise FormatError(f"checkpoint holds {blob.size} floats, header says {count}")

    model = build(RepNetConfig.from_dict(meta["repnet"]))
    state = {}
    offset = 0
    for name, shape in meta["manifest"]:
        n = int(np.prod(shape)) if shape else 1
        state[name] = torch.from_numpy(blob[offset : offset + n].copy()).reshape(shape)
        offset += n
    if offset != blob.size:
        raise FormatError("checkpoint manifest does not account for all parameters")
    model.load_state_dict(state)
    return model, TransformSpec.from_dict(meta["transform"])
