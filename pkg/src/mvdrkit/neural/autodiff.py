"""Reverse-mode autodiff substrate.

torch supplies the tape and the elementary derivatives; this module adds
the few composite primitives the networks need and an independent
central-difference checker used to verify every gradient path.
"""
from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

Tensor = torch.Tensor

__all__ = ["Tensor", "causal_conv1d", "layer_norm", "prelu", "numeric_gradient", "check_gradient"]


def causal_conv1d(x, weight, bias=None, dilation: int = 1):
    """x [B, C_in, T], weight [C_out, C_in, k]; output t sees inputs <= t only."""
    k = weight.shape[-1]
    x = F.pad(x, ((k - 1) * dilation, 0))
    return F.conv1d(x, weight, bias, dilation=dilation)


def layer_norm(x, gamma=None, beta=None, dim: int = -1, eps: float = 1e-8):
    """Normalize over one axis (per frame, so causality is kept)."""
    mu = x.mean(dim, keepdim=True)
    var = ((x - mu) ** 2).mean(dim, keepdim=True)
    y = (x - mu) / torch.sqrt(var + eps)
    if gamma is not None:
        shape = [1] * x.ndim
        shape[dim] = -1
        y = y * gamma.reshape(shape) + beta.reshape(shape)
    return y


def prelu(x, slope):
    """max(x, 0) + slope * min(x, 0) with one shared (learnable) slope."""
    return F.prelu(x, torch.as_tensor(slope, dtype=x.dtype).reshape(1))


def numeric_gradient(fn, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of scalar ``fn(ndarray) -> float`` at ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = fn(x)
        flat[i] = old - eps
        down = fn(x)
        flat[i] = old
        gflat[i] = (up - down) / (2 * eps)
    return g


def check_gradient(fn, inputs, eps: float = 1e-6):
    """Largest relative error between autograd and central differences.

    ``fn`` maps float64 tensors to a scalar tensor.  Returns
    ``max |g_auto - g_num| / max |g_num|`` per input, worst over inputs.
    """
    ts = [torch.tensor(np.asarray(a, dtype=np.float64), requires_grad=True) for a in inputs]
    out = fn(*ts)
    auto = torch.autograd.grad(out, ts)
    worst = 0.0
    for k, a in enumerate(inputs):
        def f_k(v, k=k):
            args = [torch.tensor(np.asarray(b, dtype=np.float64)) for b in inputs]
            args[k] = torch.tensor(v)
            with torch.no_grad():
                return float(fn(*args))
        num = numeric_gradient(f_k, np.asarray(a, dtype=np.float64), eps)
        ga = auto[k].numpy()
        scale = max(float(np.max(np.abs(num))), 1e-12)
        worst = max(worst, float(np.max(np.abs(ga - num))) / scale)
    return worst
