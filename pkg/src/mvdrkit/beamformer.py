"""MVDR weights (utterance-level, multi-tap and frame-wise) and their application.

Shapes: spectrogram ``[..., D, T, F]``; utterance weights ``[..., F, D]``;
frame weights ``[..., T, F, D]``.  numpy inputs use the reference linear
algebra in :mod:`mvdrkit.linalg`; torch inputs stay differentiable.
"""
from __future__ import annotations

import numpy as np
import torch

from . import linalg
from ._compat import numpy_in_numpy_out
from .masking import shift_tf

DEN_FLOOR = 1e-10

__all__ = [
    "BeamformerError", "mvdr_weights", "steering_from_cov", "multitap_expand",
    "multitap_steering", "adl_weights", "apply_weights", "delay_and_sum_weights",
]


class BeamformerError(ValueError):
    pass


def _is_torch(*xs):
    return any(isinstance(x, torch.Tensor) for x in xs)


def _hdot(a, b):
    """sum(conj(a) * b) over the last axis."""
    return (a.conj() * b).sum(-1)


def mvdr_weights(phi_nn, steer, eps_rel=linalg.EPS_REL, stats=None):
    """h = Phi^-1 v / (v^H Phi^-1 v), per bin, with diagonal loading."""
    if _is_torch(phi_nn, steer):
        x = linalg.solve_loaded_torch(phi_nn, steer, eps_rel, stats)
        return x / _hdot(steer, x)[..., None]
    phi_nn, steer = np.asarray(phi_nn), np.asarray(steer)
    norms = np.linalg.norm(steer, axis=-1)
    if np.any(norms < 1e-10):
        bad = np.argwhere(norms < 1e-10)[0]
        raise BeamformerError(f"degenerate steering vector at bin {tuple(int(i) for i in bad)}")
    x = linalg.solve_loaded(phi_nn, steer, eps_rel)
    return x / _hdot(steer, x)[..., None]


def _to_reference(v, ref_channel):
    lead = v[..., ref_channel:ref_channel + 1]
    mag = abs(lead)
    if _is_torch(v):
        safe = torch.where(mag > 1e-8, lead, torch.full_like(lead, 1e-8))
    else:
        safe = np.where(mag > 1e-8, lead, 1e-8)
    return v / safe


def steering_from_cov(phi_ss, ref_channel=None, n_iter=30):
    """Principal eigenvector of each speech covariance slice.

    With ``ref_channel`` set, the vector is rescaled to have 1 at that
    channel (relative transfer function), so the distortionless output is
    the target as heard at the reference microphone.  Otherwise it is unit
    norm with the largest entry real-positive.  For a fully degenerate slice
    (e.g. identity) some unit vector is returned.
    """
    if _is_torch(phi_ss):
        v = linalg.principal_eigvec_torch(phi_ss, n_iter=n_iter)
    else:
        try:
            v = linalg.principal_eigvec(phi_ss)
        except linalg.EigenConvergenceError as exc:
            idx = tuple(int(i) for i in exc.indices[0])
            raise linalg.EigenConvergenceError(f"steering estimate failed to converge at bin {idx}",
                                               exc.indices) from exc
    return v if ref_channel is None else _to_reference(v, ref_channel)


@numpy_in_numpy_out
def multitap_expand(spec, taps: int):
    """Stack the spectrogram with copies delayed by 1..taps-1 frames on the channel axis."""
    if taps < 1:
        raise BeamformerError("taps must be >= 1")
    if taps == 1:
        return spec
    return torch.cat([shift_tf(spec, -d, 0) for d in range(taps)], dim=-3)


def multitap_steering(steer, taps: int):
    """[v; 0; ...]: the constraint applies to the current frame only."""
    if taps == 1:
        return steer
    if _is_torch(steer):
        return torch.cat([steer] + [torch.zeros_like(steer)] * (taps - 1), dim=-1)
    return np.concatenate([steer] + [np.zeros_like(steer)] * (taps - 1), axis=-1)


def adl_weights(phi_inv, steer, stats=None, check_finite=True):
    """Frame-wise h(t,f) from estimated inverse noise covariance and steering vector.

    Denominators smaller than 1e-10 in modulus are floored (counted in
    ``stats["den_floor"]``).
    """
    torch_path = _is_torch(phi_inv, steer)
    if torch_path:
        num = (phi_inv @ steer[..., None])[..., 0]
    else:
        num = np.einsum("...ij,...j->...i", phi_inv, steer)
    den = _hdot(steer, num)
    small = abs(den) < DEN_FLOOR
    if stats is not None:
        stats["den_floor"] = stats.get("den_floor", 0) + int(small.sum())
    if torch_path:
        den = torch.where(small, torch.full_like(den, DEN_FLOOR), den)
    else:
        den = np.where(small, DEN_FLOOR, den)
    if torch_path:
        h = num / den[..., None]
    else:
        with np.errstate(invalid="ignore"):
            h = num / den[..., None]
    if check_finite:
        finite = torch.isfinite(h).all(-1) if torch_path else np.all(np.isfinite(h), axis=-1)
        if not bool(finite.all()):
            loc = (torch.nonzero(~finite)[0].tolist() if torch_path else np.argwhere(~finite)[0].tolist())
            raise BeamformerError(f"non-finite beamforming weights at (t, f) index {tuple(loc)}")
    return h


def apply_weights(w, spec):
    """h^H Y -> [..., 1, T, F]; utterance or frame-wise weights."""
    torch_path = _is_torch(w, spec)
    d = spec.shape[-3]
    if w.shape[-1] != d:
        raise BeamformerError(f"weights have {w.shape[-1]} channels, spectrogram has {d}")
    if w.ndim == spec.ndim - 1:  # utterance weights [..., F, D]
        eq = "...fd,...dtf->...tf"
    elif w.ndim == spec.ndim:  # frame weights [..., T, F, D]
        eq = "...tfd,...dtf->...tf"
    else:
        raise BeamformerError(f"cannot apply weights {tuple(w.shape)} to spectrogram {tuple(spec.shape)}")
    out = torch.einsum(eq, w.conj(), spec) if torch_path else np.einsum(eq, np.conj(w), spec)
    return out[..., None, :, :]


def delay_and_sum_weights(geometry, doa, freqs):
    """v / M for the plane-wave steering vector: unit gain toward ``doa``."""
    v = geometry.steering(doa, freqs)
    return v / geometry.n_mics
