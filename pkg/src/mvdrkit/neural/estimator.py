"""Causal dilated-convolution filter estimators.

features [B, T, D] -> speech and noise complex ratio filters, each
[B, T, F, taps], with every real/imag component bounded to (-2, 2).

Two stacks share that contract:

* ``arch="flat"``: a TasNet-style 1-D stack over time, all features
  flattened into channels;
* ``arch="tf"``: the same dilation schedule run as 2-D convolutions over
  (time, frequency), treating each feature block (LPS, each IPD pair, DF) as
  an input plane.  Weights are shared across bins, so the model is far
  smaller and generalizes from little data.

Both are causal in time; the 2-D stack is non-causal along frequency only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from ..masking import bound_mask, tap_count
from .autodiff import causal_conv1d, layer_norm, prelu

__all__ = ["EstimatorConfig", "FilterEstimator", "TFFilterEstimator", "build_estimator", "ARCHS"]

ARCHS = ("tf", "flat")


@dataclass
class EstimatorConfig:
    feature_dim: int
    n_bins: int = 257
    channels: int = 64
    kernel: int = 3
    dilations: list = field(default_factory=lambda: [1, 2, 4, 8])
    repeats: int = 2
    L: int = 1
    K: int = 1
    arch: str = "tf"
    freq_dilation: bool = True

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown estimator arch {self.arch!r}; choose from {ARCHS}")
        if self.arch == "tf":
            if self.feature_dim % self.n_bins:
                raise ValueError(f"tf estimator needs feature_dim ({self.feature_dim}) to be a multiple "
                                 f"of n_bins ({self.n_bins})")
            if self.kernel % 2 == 0:
                raise ValueError("tf estimator needs an odd kernel")

    @property
    def planes(self) -> int:
        return self.feature_dim // self.n_bins

    @property
    def taps(self) -> int:
        return tap_count(self.L, self.K)

    @property
    def output_dim(self) -> int:
        return 2 * self.taps * 2 * self.n_bins

    @property
    def receptive_field(self) -> int:
        return 1 + self.repeats * sum((self.kernel - 1) * d for d in self.dilations)

    def to_dict(self):
        return {"feature_dim": self.feature_dim, "n_bins": self.n_bins, "channels": self.channels,
                "kernel": self.kernel, "dilations": list(self.dilations), "repeats": self.repeats,
                "L": self.L, "K": self.K, "arch": self.arch, "freq_dilation": self.freq_dilation}


def _param(shape, fan_in, generator):
    bound = 1.0 / math.sqrt(fan_in)
    return nn.Parameter((torch.rand(shape, generator=generator, dtype=torch.float64) * 2 - 1) * bound)


class FilterEstimator(nn.Module):
    def __init__(self, config: EstimatorConfig, generator=None):
        super().__init__()
        self.config = c = config
        self.in_w = _param((c.channels, c.feature_dim, 1), c.feature_dim, generator)
        self.in_b = _param((c.channels,), c.feature_dim, generator)
        n_blocks = c.repeats * len(c.dilations)
        fan = c.channels * c.kernel
        self.conv_w = nn.ParameterList(_param((c.channels, c.channels, c.kernel), fan, generator) for _ in range(n_blocks))
        self.conv_b = nn.ParameterList(_param((c.channels,), fan, generator) for _ in range(n_blocks))
        self.slopes = nn.Parameter(torch.full((n_blocks,), 0.25, dtype=torch.float64))
        self.gammas = nn.Parameter(torch.ones(n_blocks, c.channels, dtype=torch.float64))
        self.betas = nn.Parameter(torch.zeros(n_blocks, c.channels, dtype=torch.float64))
        self.out_w = _param((c.output_dim, c.channels, 1), c.channels, generator)
        self.out_b = _param((c.output_dim,), c.channels, generator)

    @property
    def dilation_schedule(self):
        return [d for _ in range(self.config.repeats) for d in self.config.dilations]

    def forward(self, features):
        c = self.config
        if features.shape[-1] != c.feature_dim:
            raise ValueError(f"estimator expects feature dim {c.feature_dim}, got {features.shape[-1]}")
        x = layer_norm(features.to(self.in_w.dtype), dim=-1).transpose(1, 2)  # [B, D, T]
        x = causal_conv1d(x, self.in_w, self.in_b)
        for i, d in enumerate(self.dilation_schedule):
            y = causal_conv1d(x, self.conv_w[i], self.conv_b[i], dilation=d)
            y = layer_norm(prelu(y, self.slopes[i]), self.gammas[i], self.betas[i], dim=1)
            x = x + y
        out = causal_conv1d(x, self.out_w, self.out_b)  # [B, out, T]
        b, _, t = out.shape
        out = bound_mask(out.transpose(1, 2).reshape(b, t, 2, 2, c.taps, c.n_bins))
        filt = torch.complex(out[:, :, :, 0], out[:, :, :, 1]).permute(0, 1, 4, 3, 2)
        # filt: [B, T, F, taps, target]
        return filt[..., 0], filt[..., 1]


def _plane_norm(x, gamma=None, beta=None, eps=1e-8):
    """Normalize each frame over (channel, frequency); x [B, C, T, F]."""
    mu = x.mean((1, 3), keepdim=True)
    var = ((x - mu) ** 2).mean((1, 3), keepdim=True)
    y = (x - mu) / torch.sqrt(var + eps)
    if gamma is not None:
        y = y * gamma[None, :, None, None] + beta[None, :, None, None]
    return y


class TFFilterEstimator(nn.Module):
    """Dilated residual 2-D conv stack over (time, frequency)."""

    def __init__(self, config: EstimatorConfig, generator=None):
        super().__init__()
        self.config = c = config
        k, ch = c.kernel, c.channels
        self.in_w = _param((ch, c.planes, 1, 1), c.planes, generator)
        self.in_b = _param((ch,), c.planes, generator)
        n_blocks = c.repeats * len(c.dilations)
        fan = ch * k * k
        self.conv_w = nn.ParameterList(_param((ch, ch, k, k), fan, generator) for _ in range(n_blocks))
        self.conv_b = nn.ParameterList(_param((ch,), fan, generator) for _ in range(n_blocks))
        self.slopes = nn.Parameter(torch.full((n_blocks,), 0.25, dtype=torch.float64))
        self.gammas = nn.Parameter(torch.ones(n_blocks, ch, dtype=torch.float64))
        self.betas = nn.Parameter(torch.zeros(n_blocks, ch, dtype=torch.float64))
        self.out_w = _param((4 * c.taps, ch, 1, 1), ch, generator)
        self.out_b = _param((4 * c.taps,), ch, generator)

    @property
    def dilation_schedule(self):
        return [d for _ in range(self.config.repeats) for d in self.config.dilations]

    def forward(self, features):
        c = self.config
        if features.shape[-1] != c.feature_dim:
            raise ValueError(f"estimator expects feature dim {c.feature_dim}, got {features.shape[-1]}")
        b, t, _ = features.shape
        x = features.to(self.in_w.dtype).reshape(b, t, c.planes, c.n_bins).permute(0, 2, 1, 3)
        x = F.conv2d(_plane_norm(x), self.in_w, self.in_b)
        half = (c.kernel - 1) // 2
        for i, d in enumerate(self.dilation_schedule):
            fd = d if c.freq_dilation else 1
            y = F.pad(x, (half * fd, half * fd, (c.kernel - 1) * d, 0))  # causal in time only
            y = F.conv2d(y, self.conv_w[i], self.conv_b[i], dilation=(d, fd))
            x = x + _plane_norm(prelu(y, self.slopes[i]), self.gammas[i], self.betas[i])
        out = bound_mask(F.conv2d(x, self.out_w, self.out_b))  # [B, 4*taps, T, F]
        out = out.reshape(b, 2, 2, c.taps, t, c.n_bins).permute(0, 4, 5, 3, 2, 1)
        filt = torch.complex(out[..., 0, :], out[..., 1, :])  # [B, T, F, taps, target]
        return filt[..., 0], filt[..., 1]


def build_estimator(config: EstimatorConfig, generator=None) -> nn.Module:
    cls = TFFilterEstimator if config.arch == "tf" else FilterEstimator
    return cls(config, generator)
