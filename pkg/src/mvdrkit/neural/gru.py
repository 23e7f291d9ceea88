"""GRU layers and the two GRU-Nets that stand in for PCA and matrix inversion.

Gate convention (per step, ``*`` elementwise)::

    r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
    z = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
    n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
    h' = (1 - z) * n + z * h
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import nn

__all__ = ["GruLayer", "gru_forward", "GruNetConfig", "GruNet", "cov_to_real", "real_to_vec", "real_to_mat"]


def _uniform(shape, fan_in, generator=None):
    bound = 1.0 / math.sqrt(fan_in)
    return (torch.rand(shape, generator=generator, dtype=torch.float64) * 2 - 1) * bound


class GruLayer(nn.Module):
    def __init__(self, input_dim: int, hidden_dim: int, generator=None):
        super().__init__()
        self.input_dim, self.hidden_dim = input_dim, hidden_dim
        h = hidden_dim
        # gate blocks stacked as [r; z; n]
        self.w_ih = nn.Parameter(_uniform((3 * h, input_dim), input_dim, generator))
        self.w_hh = nn.Parameter(_uniform((3 * h, h), h, generator))
        self.b_ih = nn.Parameter(_uniform((3 * h,), input_dim, generator))
        self.b_hh = nn.Parameter(_uniform((3 * h,), h, generator))

    def step(self, gx, h):
        """One recurrence step given the precomputed input projection ``gx``."""
        gh = h @ self.w_hh.T + self.b_hh
        xr, xz, xn = gx.chunk(3, -1)
        hr, hz, hn = gh.chunk(3, -1)
        r = torch.sigmoid(xr + hr)
        z = torch.sigmoid(xz + hz)
        n = torch.tanh(xn + r * hn)
        return n + z * (h - n)

    def forward(self, seq, h0=None):
        """seq [T, B, D] -> (outputs [T, B, H], last state [B, H])."""
        if seq.shape[-1] != self.input_dim:
            raise ValueError(f"GRU layer expects input dim {self.input_dim}, got {seq.shape[-1]}")
        h = seq.new_zeros(seq.shape[1], self.hidden_dim) if h0 is None else h0
        outs = []
        # unbind once: per-step indexing would cost a full-size gradient buffer per step
        for gx in (seq @ self.w_ih.T + self.b_ih).unbind(0):
            h = self.step(gx, h)
            outs.append(h)
        return torch.stack(outs), h


def gru_forward(layers, seq, states=None):
    """Run stacked GRU layers; returns (last-layer outputs, per-layer final states)."""
    finals = []
    x = seq
    for i, layer in enumerate(layers):
        x, h = layer(x, None if states is None else states[i])
        finals.append(h)
    return x, finals


@dataclass
class GruNetConfig:
    n_mics: int
    hidden: list = field(default_factory=lambda: [128, 64])
    output: str = "vector"  # "vector": 2M outputs, "matrix": 2M^2 outputs
    input_norm: str = "bin_trace"  # or "none"

    @property
    def input_dim(self) -> int:
        return 2 * self.n_mics ** 2

    @property
    def output_dim(self) -> int:
        return 2 * self.n_mics if self.output == "vector" else 2 * self.n_mics ** 2

    def to_dict(self):
        return {"n_mics": self.n_mics, "hidden": list(self.hidden), "output": self.output,
                "input_norm": self.input_norm}

    @classmethod
    def steering(cls, n_mics, hidden=(500, 250), **kw):
        return cls(n_mics, list(hidden), "vector", **kw)

    @classmethod
    def inverse(cls, n_mics, hidden=(500, 500), **kw):
        return cls(n_mics, list(hidden), "matrix", **kw)


def cov_to_real(cov):
    """[..., M, M] complex -> [..., 2M^2] real: real parts then imaginary parts."""
    flat = cov.flatten(-2)
    return torch.cat([flat.real, flat.imag], dim=-1)


def real_to_vec(x, m):
    return torch.complex(x[..., :m], x[..., m:])


def real_to_mat(x, m):
    n = m * m
    return torch.complex(x[..., :n], x[..., n:]).unflatten(-1, (m, m))


class GruNet(nn.Module):
    """GRU stack + linear layer over a covariance sequence.

    Input ``[..., T, F, M, M]`` complex; time is the recurrence axis and every
    frequency bin (and leading batch entry) is an independent sequence.
    Returns ``[..., T, F, M]`` (vector head) or ``[..., T, F, M, M]``.
    """

    def __init__(self, config: GruNetConfig, generator=None):
        super().__init__()
        self.config = config
        dims = [config.input_dim] + list(config.hidden)
        self.layers = nn.ModuleList(GruLayer(a, b, generator) for a, b in zip(dims[:-1], dims[1:]))
        self.fc_w = nn.Parameter(_uniform((config.output_dim, dims[-1]), dims[-1], generator))
        self.fc_b = nn.Parameter(_uniform((config.output_dim,), dims[-1], generator))

    @torch.no_grad()
    def init_head(self, target, weight_scale=0.1):
        """Point the output at ``target`` (complex [M] or [M, M]) and shrink the head weights.

        The bias then carries the initial output and the GRU features only perturb it.
        """
        self.fc_b.copy_(cov_to_real(target) if target.dim() == 2 else torch.cat([target.real, target.imag]))
        self.fc_w.mul_(weight_scale)

    def normalize(self, cov):
        if self.config.input_norm == "none":
            return cov
        tr = torch.diagonal(cov, dim1=-2, dim2=-1).real.sum(-1)  # [..., T, F]
        scale = tr.mean(-2, keepdim=True).clamp_min(1e-10)
        return cov * (1.0 / scale)[..., None, None]

    def forward(self, cov):
        m = self.config.n_mics
        if cov.shape[-1] != m or cov.shape[-2] != m:
            raise ValueError(f"GRU-Net configured for M={m}, got covariance {tuple(cov.shape)}")
        x = cov_to_real(self.normalize(cov))  # [..., T, F, 2M^2]
        lead, t, f = x.shape[:-3], x.shape[-3], x.shape[-2]
        x = x.reshape(-1, t, f, x.shape[-1]).permute(1, 0, 2, 3).reshape(t, -1, x.shape[-1])
        y, _ = gru_forward(self.layers, x.to(self.fc_w.dtype))
        y = y @ self.fc_w.T + self.fc_b  # [T, B*F, out]
        y = y.reshape(t, -1, f, y.shape[-1]).permute(1, 0, 2, 3).reshape(*lead, t, f, y.shape[-1])
        return real_to_vec(y, m) if self.config.output == "vector" else real_to_mat(y, m)
