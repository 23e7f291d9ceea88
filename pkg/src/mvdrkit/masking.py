"""Complex ratio masks/filters and the speech/noise covariance estimates.

Layout conventions (leading batch dims are allowed everywhere):

* spectrogram ``[..., M, T, F]`` complex
* mask ``[..., T, F]`` complex, shared by all channels
* filter ``[..., T, F, (2L+1)(2K+1)]`` complex, tap ``(dt, df)`` stored at
  index ``(dt + L) * (2K + 1) + (df + K)``
* utterance covariance ``[..., F, M, M]``; frame covariance ``[..., T, F, M, M]``

Functions take torch tensors (autograd flows through) or numpy arrays.
"""
from __future__ import annotations

import torch

from ._compat import numpy_in_numpy_out

__all__ = [
    "NORM_FLOOR",
    "MASK_BOUND",
    "tap_count",
    "center_tap",
    "tap_offsets",
    "bound_mask",
    "shift_tf",
    "apply_crm",
    "apply_crf",
    "center_mask",
    "utterance_cov",
    "framewise_cov",
]

NORM_FLOOR = 1e-10
MASK_BOUND = 2.0


class MaskShapeError(ValueError):
    pass


def tap_count(L: int, K: int) -> int:
    return (2 * L + 1) * (2 * K + 1)


def center_tap(L: int, K: int) -> int:
    return L * (2 * K + 1) + K


def tap_offsets(L: int, K: int):
    return [(dt, df) for dt in range(-L, L + 1) for df in range(-K, K + 1)]


def bound_mask(raw):
    """Squash real network outputs so each component lies in (-2, 2)."""
    return MASK_BOUND * torch.tanh(raw / MASK_BOUND)


@numpy_in_numpy_out
def shift_tf(spec, dt: int, df: int):
    """out[..., t, f] = spec[..., t + dt, f + df], zero outside the grid."""
    T, F = spec.shape[-2], spec.shape[-1]
    out = torch.zeros_like(spec)
    t0, t1 = max(0, -dt), min(T, T - dt)
    f0, f1 = max(0, -df), min(F, F - df)
    if t0 < t1 and f0 < f1:
        out[..., t0:t1, f0:f1] = spec[..., t0 + dt:t1 + dt, f0 + df:f1 + df]
    return out


@numpy_in_numpy_out
def apply_crm(mask, spec):
    if mask.shape[-2:] != spec.shape[-2:]:
        raise MaskShapeError(f"mask {tuple(mask.shape)} does not match spectrogram {tuple(spec.shape)}")
    return mask.unsqueeze(-3) * spec


@numpy_in_numpy_out
def apply_crf(filt, spec, L: int = 1, K: int = 1):
    """Sum over taps of tap-mask times the correspondingly shifted spectrogram."""
    n_taps = tap_count(L, K)
    if filt.shape[-1] != n_taps:
        raise MaskShapeError(f"filter has {filt.shape[-1]} taps, expected {n_taps} for L={L}, K={K}")
    if filt.shape[-3:-1] != spec.shape[-2:]:
        raise MaskShapeError(f"filter {tuple(filt.shape)} does not match spectrogram {tuple(spec.shape)}")
    out = None
    for i, (dt, df) in enumerate(tap_offsets(L, K)):
        term = filt[..., i].unsqueeze(-3) * shift_tf(spec, dt, df)
        out = term if out is None else out + term
    return out


def center_mask(filt, L: int = 1, K: int = 1):
    return filt[..., center_tap(L, K)]


def _normalizer(mask, per_frame: bool, stats):
    power = (mask.conj() * mask).real
    norm = power if per_frame else power.sum(-2, keepdim=True)
    if stats is not None:
        stats["norm_floor"] = stats.get("norm_floor", 0) + int((norm < NORM_FLOOR).sum())
    return norm.clamp_min(NORM_FLOOR)


@numpy_in_numpy_out
def utterance_cov(est, mask, stats=None):
    """sum_t S S^H / sum_t |M|^2 per frequency bin -> [..., F, M, M]."""
    if mask.shape[-2:] != est.shape[-2:]:
        raise MaskShapeError("mask and estimate disagree on (T, F)")
    norm = _normalizer(mask, False, stats)[..., 0, :]  # [..., F]
    cov = torch.einsum("...mtf,...ntf->...fmn", est, est.conj())
    return cov * (1.0 / norm)[..., None, None]  # real reciprocal: cheaper than complex division


@numpy_in_numpy_out
def framewise_cov(est, mask, per_frame_norm: bool = False, stats=None):
    """Per-frame outer products -> [..., T, F, M, M].

    By default every frame is divided by the all-frames normalizer
    sum_t' |M(t', f)|^2; ``per_frame_norm`` divides by |M(t, f)|^2 instead.
    """
    if mask.shape[-2:] != est.shape[-2:]:
        raise MaskShapeError("mask and estimate disagree on (T, F)")
    norm = _normalizer(mask, per_frame_norm, stats)  # [..., T|1, F]
    s = est.movedim(-3, -1)  # [..., T, F, M]
    cov = s.unsqueeze(-1) * s.conj().unsqueeze(-2)
    return cov * (1.0 / norm)[..., None, None]  # real reciprocal: cheaper than complex division
