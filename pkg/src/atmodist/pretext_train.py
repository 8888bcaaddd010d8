"""Training harness for the temporal-distance pretext task.

Recipe: SGD with momentum 0.9, initial learning rate 1e-1 decayed by 10x on
eval-loss plateaus down to 1e-5, global gradient-norm clipping at 5.0, and
weight decay 1e-4 on convolution/linear weights only. Training starts with a
curriculum phase on a fixed subset of batches, after which the learning rate
(and momentum state) is reset and training continues on the full stream. The
returned model is the checkpoint with the best eval loss of the full phase.
"""

from __future__ import annotations

import copy
import csv
import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import torch
import torch.nn as nn

from .errors import TrainingDivergenceError
from .field_data import FieldSeries
from .repnet import RepresentationModel
from .sampler import SamplerConfig, sample_pairs
from .transform import TransformSpec

Batch = tuple[torch.Tensor, torch.Tensor, torch.Tensor]  # (a, b, labels)


@dataclass(frozen=True)
class TrainConfig:
    momentum: float = 0.9
    lr: float = 1e-1
    lr_min: float = 1e-5
    lr_decay: float = 0.1
    plateau_patience: int = 3
    plateau_threshold: float = 1e-4
    clip_norm: float = 5.0
    weight_decay: float = 1e-4
    batch_size: int = 64
    epochs: int = 10
    curriculum_epochs: int = 20
    curriculum_batches: int = 2000
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.lr_min <= self.lr:
            raise ValueError("require 0 < lr_min <= lr")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")


@dataclass
class TrainLog:
    """Per-epoch metrics plus curriculum bookkeeping."""

    entries: list[dict] = field(default_factory=list)
    curriculum_digests: list[str] = field(default_factory=list)

    def append(self, **kw) -> None:
        self.entries.append(kw)

    def to_csv(self, path: str | Path) -> None:
        cols = ["epoch", "phase", "train_loss", "train_acc", "eval_loss", "eval_acc", "lr"]
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=cols)
            w.writeheader()
            for e in self.entries:
                w.writerow({c: e[c] for c in cols})


def cross_entropy(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean negative log-likelihood over the batch after softmax."""
    log_probs = logits - torch.logsumexp(logits, dim=1, keepdim=True)
    return -log_probs[torch.arange(len(labels)), labels].mean()


def clip_gradient(grads: Sequence[torch.Tensor], max_norm: float = 5.0):
    """Scale all gradients in place so their global l2 norm is at most max_norm."""
    total = torch.sqrt(sum((g.double() ** 2).sum() for g in grads))
    if not torch.isfinite(total):
        raise TrainingDivergenceError(f"non-finite gradient norm {total.item()}")
    if total > max_norm:
        scale = max_norm / total.item()
        for g in grads:
            g.mul_(scale)
    return grads


def pair_batches(
    series: FieldSeries,
    tspec: TransformSpec,
    sampler_cfg: SamplerConfig,
    time_range: tuple[int, int],
    batch_size: int,
    seed: int,
) -> list[Batch]:
    """Materialize the pair stream for one time range as full batches."""
    cfg = dataclasses.replace(sampler_cfg, seed=seed)
    a_buf, b_buf, y_buf, batches = [], [], [], []
    for s in sample_pairs(series, tspec, cfg, time_range):
        a_buf.append(s.patch_a)
        b_buf.append(s.patch_b)
        y_buf.append(s.lag_class)
        if len(a_buf) == batch_size:
            batches.append(_stack_batch(a_buf, b_buf, y_buf))
            a_buf, b_buf, y_buf = [], [], []
    return batches


def _stack_batch(a_buf, b_buf, y_buf) -> Batch:
    a = torch.from_numpy(np.stack(a_buf)).permute(0, 3, 1, 2).contiguous()
    b = torch.from_numpy(np.stack(b_buf)).permute(0, 3, 1, 2).contiguous()
    return a, b, torch.tensor(y_buf, dtype=torch.long)


def _batch_digest(batches: Iterable[Batch]) -> str:
    h = hashlib.sha256()
    for a, b, y in batches:
        h.update(a.numpy().tobytes())
        h.update(b.numpy().tobytes())
        h.update(y.numpy().tobytes())
    return h.hexdigest()


def _make_optimizer(model: nn.Module, cfg: TrainConfig) -> torch.optim.SGD:
    decay, no_decay = [], []
    for m in model.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            decay.append(m.weight)
            if m.bias is not None:
                no_decay.append(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            no_decay.extend([m.weight, m.bias])
    return torch.optim.SGD(
        [
            {"params": decay, "weight_decay": cfg.weight_decay},
            {"params": no_decay, "weight_decay": 0.0},
        ],
        lr=cfg.lr,
        momentum=cfg.momentum,
    )


def _run_epoch(model, batches, optimizer, cfg) -> tuple[float, float]:
    model.train()
    losses, correct, total = [], 0, 0
    for a, b, y in batches:
        optimizer.zero_grad()
        logits = model.classify(a, b)
        loss = cross_entropy(logits, y)
        if not torch.isfinite(loss):
            raise TrainingDivergenceError("NaN loss during training")
        loss.backward()
        clip_gradient([p.grad for p in model.parameters() if p.grad is not None], cfg.clip_norm)
        optimizer.step()
        losses.append(loss.item())
        correct += (logits.argmax(dim=1) == y).sum().item()
        total += len(y)
    return float(np.mean(losses)), correct / max(total, 1)


def evaluate(model: RepresentationModel, batches: Sequence[Batch]) -> tuple[float, float]:
    """Loss/accuracy with batch norm in inference mode."""
    model.eval()
    losses, correct, total = [], 0, 0
    with torch.no_grad():
        for a, b, y in batches:
            logits = model.classify(a, b)
            losses.append(cross_entropy(logits, y).item())
            correct += (logits.argmax(dim=1) == y).sum().item()
            total += len(y)
    return float(np.mean(losses)) if losses else float("nan"), correct / max(total, 1)


class _PlateauLR:
    """Decay lr by a fixed factor when eval loss stops improving."""

    def __init__(self, cfg: TrainConfig):
        self.lr = cfg.lr
        self.cfg = cfg
        self.best = float("inf")
        self.stale = 0

    def step(self, eval_loss: float) -> float:
        if eval_loss < self.best - self.cfg.plateau_threshold:
            self.best = eval_loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.cfg.plateau_patience:
                self.lr = max(self.lr * self.cfg.lr_decay, self.cfg.lr_min)
                self.stale = 0
        return self.lr


def train(
    model: RepresentationModel,
    train_stream: Callable[[int], Sequence[Batch]],
    eval_batches: Sequence[Batch],
    cfg: TrainConfig,
) -> tuple[RepresentationModel, TrainLog]:
    """Curriculum phase on a fixed batch subset, then full-stream training.

    train_stream(epoch_seed) must return the (freshly sampled) batches for one
    epoch; the curriculum subset is drawn once from train_stream(-1) and
    reused verbatim for every curriculum epoch.
    """
    torch.manual_seed(cfg.seed)
    log = TrainLog()
    epoch_idx = 0

    try:
        # curriculum: fixed subset, never resampled
        subset = list(train_stream(-1))[: cfg.curriculum_batches]
        if subset and cfg.curriculum_epochs > 0:
            optimizer = _make_optimizer(model, cfg)
            for _ in range(cfg.curriculum_epochs):
                log.curriculum_digests.append(_batch_digest(subset))
                train_loss, train_acc = _run_epoch(model, subset, optimizer, cfg)
                eval_loss, eval_acc = evaluate(model, eval_batches)
                log.append(
                    epoch=epoch_idx, phase="curriculum",
                    train_loss=train_loss, train_acc=train_acc,
                    eval_loss=eval_loss, eval_acc=eval_acc, lr=cfg.lr,
                )
                epoch_idx += 1

        # full phase: lr and momentum buffers reset
        optimizer = _make_optimizer(model, cfg)
        scheduler = _PlateauLR(cfg)
        best_loss, best_state = float("inf"), copy.deepcopy(model.state_dict())
        for epoch in range(cfg.epochs):
            batches = train_stream(epoch)
            train_loss, train_acc = _run_epoch(model, batches, optimizer, cfg)
            eval_loss, eval_acc = evaluate(model, eval_batches)
            log.append(
                epoch=epoch_idx, phase="full",
                train_loss=train_loss, train_acc=train_acc,
                eval_loss=eval_loss, eval_acc=eval_acc, lr=scheduler.lr,
            )
            epoch_idx += 1
            if eval_loss < best_loss:
                best_loss = eval_loss
                best_state = copy.deepcopy(model.state_dict())
            lr = scheduler.step(eval_loss)
            for group in optimizer.param_groups:
                group["lr"] = lr
    except TrainingDivergenceError as err:
        err.last_good = model.state_dict()
        raise

    model.load_state_dict(best_state)
    return model, log
