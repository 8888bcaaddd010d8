"""Shared test utilities: finite-difference gradient checking and chi-square stats."""

import numpy as np
import torch

from atmodist.pretext_train import cross_entropy


def gradient_check(model, batch, eps=1e-5):
    """Max relative error between autograd and central finite differences.

    Runs the model in double precision with batch norm in training mode on a
    fixed batch; the relative error is per-parameter-tensor,
    ||g_fd - g_an|| / max(||g_fd||, ||g_an||)."""
    a, b, y = batch
    model.double().train()

    def loss_fn():
        return cross_entropy(model.classify(a, b), y)

    model.zero_grad()
    loss_fn().backward()
    analytic = {n: p.grad.clone() for n, p in model.named_parameters()}

    worst = 0.0
    for name, p in model.named_parameters():
        flat = p.data.view(-1)
        fd = torch.zeros_like(flat)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + eps
            with torch.no_grad():
                hi = loss_fn().item()
            flat[i] = orig - eps
            with torch.no_grad():
                lo = loss_fn().item()
            flat[i] = orig
            fd[i] = (hi - lo) / (2 * eps)
        g = analytic[name].view(-1)
        denom = max(fd.norm().item(), g.norm().item(), 1e-12)
        worst = max(worst, (fd - g).norm().item() / denom)
    return worst


def chi_square_pvalue(counts, expected_probs):
    """Chi-square goodness-of-fit p-value against given bin probabilities."""
    from scipy import stats

    counts = np.asarray(counts, dtype=float)
    expected = np.asarray(expected_probs, dtype=float)
    expected = expected / expected.sum() * counts.sum()
    keep = expected > 0
    return float(stats.chisquare(counts[keep], expected[keep]).pvalue)
