import math

import numpy as np
import pytest
import torch

from atmodist import transform
from atmodist.errors import TrainingDivergenceError
from atmodist.field_data import SyntheticConfig, generate_synthetic
from atmodist.pretext_train import (
    TrainConfig,
    _PlateauLR,
    clip_gradient,
    cross_entropy,
    evaluate,
    pair_batches,
    train,
)
from atmodist.repnet import RepNetConfig, build
from atmodist.sampler import SamplerConfig

TINY_NET = RepNetConfig(patch_size=16, stem_channels=8, stages=((1, 8), (1, 16)), head_hidden=32, n_classes=4)
SAMPLER = SamplerConfig(patch_size=16, pairs_per_timestep=6, max_lag_steps=4, seed=0)


@pytest.fixture(scope="module")
def batches():
    series = generate_synthetic(SyntheticConfig(seed=4, n_times=40))
    tspec = transform.fit(series)
    return pair_batches(series, tspec, SAMPLER, (0, 40), batch_size=16, seed=0)


def test_cross_entropy_uniform_logits():
    logits = torch.zeros(5, 8)
    labels = torch.arange(5)
    assert cross_entropy(logits, labels).item() == pytest.approx(math.log(8))


def test_cross_entropy_confident():
    logits = torch.full((3, 4), -50.0)
    labels = torch.tensor([1, 2, 0])
    logits[torch.arange(3), labels] = 50.0
    assert cross_entropy(logits, labels).item() == pytest.approx(0.0, abs=1e-6)


def test_cross_entropy_matches_torch():
    torch.manual_seed(0)
    logits = torch.randn(32, 8)
    labels = torch.randint(0, 8, (32,))
    ours = cross_entropy(logits, labels)
    ref = torch.nn.functional.cross_entropy(logits, labels)
    torch.testing.assert_close(ours, ref)


def test_clip_gradient_scales_large():
    grads = [torch.full((10,), 3.0), torch.full((10,), 4.0)]
    clip_gradient(grads, max_norm=5.0)
    total = math.sqrt(sum((g**2).sum().item() for g in grads))
    assert total == pytest.approx(5.0, rel=1e-6)
    # direction preserved
    assert torch.allclose(grads[0] / grads[1], torch.full((10,), 0.75))


def test_clip_gradient_leaves_small():
    grads = [torch.full((4,), 0.1)]
    before = grads[0].clone()
    clip_gradient(grads, max_norm=5.0)
    assert torch.equal(grads[0], before)


def test_clip_gradient_nonfinite():
    with pytest.raises(TrainingDivergenceError):
        clip_gradient([torch.tensor([float("nan")])], max_norm=5.0)


def test_plateau_schedule():
    cfg = TrainConfig(lr=0.1, lr_decay=0.1, lr_min=1e-3, plateau_patience=3, plateau_threshold=1e-4)
    sched = _PlateauLR(cfg)
    assert sched.step(1.0) == 0.1
    # improvements below the threshold count as stale
    assert sched.step(1.0 - 5e-5) == 0.1
    assert sched.step(1.0) == 0.1
    assert sched.step(1.0) == pytest.approx(0.01)
    for _ in range(3):
        sched.step(2.0)
    assert sched.lr == pytest.approx(1e-3)
    for _ in range(3):
        sched.step(2.0)
    assert sched.lr == pytest.approx(1e-3)  # floor


def test_pair_batches_shapes(batches):
    assert len(batches) > 0
    a, b, y = batches[0]
    assert a.shape == (16, 2, 16, 16)
    assert b.shape == (16, 2, 16, 16)
    assert y.dtype == torch.long
    assert int(y.min()) >= 0 and int(y.max()) < SAMPLER.max_lag_steps


def test_train_reduces_loss_and_keeps_best(batches):
    model = build(TINY_NET, seed=1)
    eval_batches = batches[-2:]
    train_batches = batches[:-2]
    cfg = TrainConfig(
        lr=0.05, epochs=4, curriculum_epochs=2, curriculum_batches=2,
        batch_size=16, seed=0,
    )
    model, log = train(model, lambda e: train_batches, eval_batches, cfg)

    assert len(log.entries) == 6
    assert [e["phase"] for e in log.entries[:2]] == ["curriculum", "curriculum"]
    assert len(set(log.curriculum_digests)) == 1  # same subset every epoch
    first, last = log.entries[0]["train_loss"], log.entries[-1]["train_loss"]
    assert last < first

    # the returned model carries the best eval loss seen in the full phase
    best_logged = min(e["eval_loss"] for e in log.entries if e["phase"] == "full")
    eval_loss, _ = evaluate(model, eval_batches)
    assert eval_loss == pytest.approx(best_logged, abs=1e-6)


def test_train_divergence_carries_last_good(batches):
    model = build(TINY_NET, seed=1)
    # absurd lr without clipping headroom to force a blow-up
    cfg = TrainConfig(lr=1e6, clip_norm=1e12, epochs=8, curriculum_epochs=0, seed=0)
    with pytest.raises(TrainingDivergenceError) as exc:
        train(model, lambda e: batches[:-1], batches[-1:], cfg)
    assert exc.value.last_good is not None


def test_log_csv_roundtrip(batches, tmp_path):
    model = build(TINY_NET, seed=2)
    cfg = TrainConfig(lr=0.05, epochs=1, curriculum_epochs=1, curriculum_batches=1, seed=0)
    _, log = train(model, lambda e: batches[:2], batches[-1:], cfg)
    path = tmp_path / "log.csv"
    log.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].split(",")[0] == "epoch"
    assert len(lines) == 1 + len(log.entries)
