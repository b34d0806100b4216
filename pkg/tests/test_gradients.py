"""End-to-end gradient integrity of the full model loss."""
import numpy as np
import pytest
import torch

from citeforecast.config import RunConfig
from citeforecast.model import CitationModel, GraphContext
from citeforecast.synth import SyntheticSpec, generate
from citeforecast.training import prediction_loss, total_loss, truth_matrix

from conftest import central_difference_check


def end_to_end(seed):
    ds = generate(SyntheticSpec(n_papers=10, n_authors=8, n_venues=3, n_keywords=5, seed=seed))
    cfg = RunConfig()
    ctx = GraphContext(ds, cfg)
    ids = [p for p in ds.network.papers().tolist() if p in ds.citations]
    torch.manual_seed(seed)
    model = CitationModel(ctx.n_nodes, cfg).double()
    out = model(ctx, ids)
    assert len(out.paper_ids) >= 5
    truth = truth_matrix(ds, out.paper_ids)

    def loss():
        o = model(ctx, ids)
        return total_loss(prediction_loss(o.preds, truth), o.time_loss, cfg.train.beta_time)

    return model, loss


@pytest.mark.parametrize("seed", range(3))
def test_total_loss_gradient_matches_central_differences(seed):
    model, loss = end_to_end(seed)
    params = list(model.parameters())
    rng = np.random.default_rng(seed)
    assert central_difference_check(loss, params, 50, rng) <= 1e-4


def test_sampled_gradients_are_not_trivially_small():
    model, loss = end_to_end(0)
    grads = torch.autograd.grad(loss(), list(model.parameters()))
    flat = torch.cat([g.reshape(-1) for g in grads]).abs()
    # the roundoff allowance in the checker is ~1e-9 here; most entries sit far above it
    assert (flat > 1e-7).double().mean() > 0.8


class _Skewed(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x):
        return x.clone()

    @staticmethod
    def backward(ctx, g):
        return g * 1.001


def test_checker_flags_a_slightly_wrong_gradient():
    x = torch.randn(6, requires_grad=True)
    rng = np.random.default_rng(0)
    assert central_difference_check(lambda: (x**3).sum(), [x], 6, rng) <= 1e-4
    assert central_difference_check(lambda: (_Skewed.apply(x) ** 3).sum(), [x], 6, rng) > 5e-4
