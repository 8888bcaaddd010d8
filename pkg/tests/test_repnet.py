import numpy as np
import pytest
import torch

from atmodist import repnet, transform
from atmodist.errors import FormatError
from atmodist.field_data import SyntheticConfig, generate_synthetic
from atmodist.repnet import RepNetConfig, build, load_checkpoint, full_scale_config, save_checkpoint

DESK = RepNetConfig()


@pytest.fixture(scope="module")
def model():
    return build(DESK, seed=0)


def test_output_shapes(model):
    a = torch.randn(3, 2, 32, 32)
    b = torch.randn(3, 2, 32, 32)
    emb = model.represent(a)
    assert emb.shape == (3, DESK.stages[-1][1])
    logits = model.classify(a, b)
    assert logits.shape == (3, DESK.n_classes)


def test_embedding_nonnegative(model):
    """The embedding is taken after a ReLU, so it is elementwise >= 0."""
    emb = model.represent(torch.randn(4, 2, 32, 32))
    assert torch.all(emb >= 0)


def test_zero_input_is_finite(model):
    model.eval()
    with torch.no_grad():
        emb = model.represent(torch.zeros(1, 2, 32, 32))
        logits = model.classify(torch.zeros(1, 2, 32, 32), torch.zeros(1, 2, 32, 32))
    assert torch.isfinite(emb).all()
    assert torch.isfinite(logits).all()
    model.train()


def test_build_determinism():
    m1 = build(DESK, seed=11)
    m2 = build(DESK, seed=11)
    for p1, p2 in zip(m1.parameters(), m2.parameters()):
        assert torch.equal(p1, p2)
    m3 = build(DESK, seed=12)
    assert any(
        not torch.equal(p1, p3) for p1, p3 in zip(m1.parameters(), m3.parameters())
    )


def test_weight_sharing(model):
    """Both branches of the classifier run the same trunk."""
    model.eval()
    a = torch.randn(2, 2, 32, 32)
    with torch.no_grad():
        assert torch.equal(model.represent(a), model.represent(a.clone()))
        swapped_ab = model.classify(a, a)
    assert torch.isfinite(swapped_ab).all()
    model.train()


def test_variable_input_size(model):
    """Global average pooling makes the trunk size-agnostic."""
    model.eval()
    with torch.no_grad():
        emb = model.represent(torch.randn(1, 2, 64, 64))
    assert emb.shape == (1, DESK.stages[-1][1])
    model.train()


def test_parameter_count_full_scale():
    m = build(full_scale_config(), seed=0)
    assert abs(m.n_parameters - 2_270_000) / 2_270_000 <= 0.05


def test_functional_wrappers(model):
    patch = np.random.default_rng(0).normal(size=(32, 32, 2)).astype(np.float32)
    vec = repnet.represent(model, patch)
    assert vec.shape == (DESK.stages[-1][1],)
    probs_in = repnet.classify_pair(model, patch, patch)
    assert probs_in.shape == (DESK.n_classes,)


def test_checkpoint_roundtrip(tmp_path):
    series = generate_synthetic(SyntheticConfig(seed=1, n_times=12))
    tspec = transform.fit(series)
    model = build(DESK, seed=3)
    # Run one forward pass in train mode so BN running stats are non-trivial.
    model(torch.randn(4, 2, 32, 32), torch.randn(4, 2, 32, 32))
    save_checkpoint(model, tspec, tmp_path)
    loaded, tspec2 = load_checkpoint(tmp_path)

    model.eval()
    loaded.eval()
    a = torch.randn(2, 2, 32, 32)
    b = torch.randn(2, 2, 32, 32)
    with torch.no_grad():
        torch.testing.assert_close(model.classify(a, b), loaded.classify(a, b))
    assert tspec2.to_dict() == tspec.to_dict()


def test_checkpoint_bad_magic(tmp_path):
    series = generate_synthetic(SyntheticConfig(seed=1, n_times=12))
    tspec = transform.fit(series)
    save_checkpoint(build(DESK, seed=0), tspec, tmp_path)
    blob = (tmp_path / "params.bin").read_bytes()
    (tmp_path / "params.bin").write_bytes(b"XXXXXXXX" + blob[8:])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path)


def test_checkpoint_truncated(tmp_path):
    series = generate_synthetic(SyntheticConfig(seed=1, n_times=12))
    tspec = transform.fit(series)
    save_checkpoint(build(DESK, seed=0), tspec, tmp_path)
    blob = (tmp_path / "params.bin").read_bytes()
    (tmp_path / "params.bin").write_bytes(blob[:-16])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path)
