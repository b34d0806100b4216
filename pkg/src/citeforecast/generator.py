"""Log-normal cumulative citation generator.

The cumulative (log-scale) citation count ``t`` years after publication is
``scale * (exp(eta * Phi((ln t - mu) / sigma)) - 1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

SIGMA_FLOOR = 1e-3


@dataclass(frozen=True)
class CurveParams:
    mu: float
    sigma: float
    eta: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class GeneratorConfig:
    alpha_scale: float = 1.0
    horizon: int = 5

    def __post_init__(self):
        if self.alpha_scale <= 0:
            raise ValueError("alpha_scale must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


@dataclass
class CitationSeries:
    paper: int
    values: list[float]


def std_normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def cumulative_citations(params: CurveParams, cfg: GeneratorConfig, t: float) -> float:
    if t < 1:
        raise ValueError("t counts years since publication and starts at 1")
    z = (math.log(t) - params.mu) / params.sigma
    return cfg.alpha_scale * math.expm1(params.eta * std_normal_cdf(z))


def predict_series(params: CurveParams, cfg: GeneratorConfig, paper: int = -1) -> CitationSeries:
    return CitationSeries(paper, [cumulative_citations(params, cfg, t) for t in range(1, cfg.horizon + 1)])


def curve_values(mu, sigma, eta, alpha_scale: float, horizon: int) -> torch.Tensor:
    """Batched generator: (N,) parameters -> (N, horizon) series."""
    t = torch.arange(1, horizon + 1, dtype=mu.dtype)
    z = (torch.log(t)[None, :] - mu[:, None]) / sigma[:, None]
    return alpha_scale * torch.expm1(eta[:, None] * torch.special.ndtr(z))


def fuse(h_g, h_c, lam):
    """Attention mix of trend and importance vectors; returns (h, alpha_g, alpha_c)."""
    logits = torch.stack([h_g @ lam, h_c @ lam], dim=-1)
    w = torch.softmax(logits, dim=-1)
    a_g, a_c = w[..., 0], w[..., 1]
    return a_g[..., None] * h_g + a_c[..., None] * h_c, a_g, a_c


class Fusion(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.lam = nn.Parameter(nn.init.xavier_uniform_(torch.empty(1, dim))[0])

    def forward(self, h_g, h_c):
        return fuse(h_g, h_c, self.lam)


def _mlp(dim, hidden):
    return nn.Sequential(nn.Linear(dim, hidden), nn.ReLU(), nn.Linear(hidden, 1))


class CurveMLPs(nn.Module):
    """Three independent feed-forward heads for mu, sigma and eta."""

    def __init__(self, dim: int = 32, hidden: int = 20):
        super().__init__()
        self.mu = _mlp(dim, hidden)
        self.sigma = _mlp(dim, hidden)
        self.eta = _mlp(dim, hidden)

    def forward(self, h):
        mu = self.mu(h).squeeze(-1)
        sigma = F.softplus(self.sigma(h).squeeze(-1)) + SIGMA_FLOOR
        eta = self.eta(h).squeeze(-1)
        return mu, sigma, eta


def curve_params(h, mlps: CurveMLPs) -> CurveParams:
    with torch.no_grad():
        mu, sigma, eta = mlps(torch.as_tensor(h).unsqueeze(0))
    return CurveParams(float(mu[0]), float(sigma[0]), float(eta[0]))
