"""Filter-estimator input features: LPS, IPD and the directional feature.

The directional feature follows the cosine-agreement form: for each mic
pair, cos(observed phase difference - phase difference a plane wave from
the target direction would produce), averaged over pairs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ArrayGeometry, bin_frequencies, default_pairs
from .signal import SAMPLE_RATE, Stft

LPS_FLOOR = 1e-12

__all__ = ["FeatureLayout", "lps", "ipd", "target_phase_difference",
           "directional_feature", "compute_features"]


@dataclass(frozen=True)
class FeatureLayout:
    """Names and widths of the concatenated feature blocks."""

    blocks: tuple  # ((name, dim), ...)

    @property
    def dim(self) -> int:
        return sum(d for _, d in self.blocks)

    def to_dict(self) -> dict:
        return {"blocks": [[n, d] for n, d in self.blocks]}

    @classmethod
    def from_dict(cls, d) -> "FeatureLayout":
        return cls(tuple((n, int(k)) for n, k in d["blocks"]))


def _data(spec):
    return spec.data if isinstance(spec, Stft) else np.asarray(spec)


def _wrap(phase):
    """Wrap to (-pi, pi]."""
    w = np.angle(np.exp(1j * phase))
    return np.where(w <= -np.pi, np.pi, w)


def lps(spec, ref_channel: int = 0) -> np.ndarray:
    y = _data(spec)
    if not 0 <= ref_channel < y.shape[0]:
        raise IndexError(f"reference channel {ref_channel} out of range for {y.shape[0]} channels")
    return np.log(np.abs(y[ref_channel]) ** 2 + LPS_FLOOR)


def _check_pairs(pairs, m):
    for i, j in pairs:
        if i == j or not (0 <= i < m and 0 <= j < m):
            raise ValueError(f"invalid channel pair ({i}, {j}) for {m} channels")


def _pair_phase(y, pairs):
    return np.stack([_wrap(np.angle(y[i]) - np.angle(y[j])) for i, j in pairs])  # [P, T, F]


def ipd(spec, pairs, encoding: str = "angle") -> np.ndarray:
    """Wrapped inter-channel phase differences, [T, P*F] (or [T, 2*P*F] for cos/sin)."""
    y = _data(spec)
    _check_pairs(pairs, y.shape[0])
    ph = _pair_phase(y, pairs)
    if encoding == "angle":
        blocks = list(ph)
    elif encoding == "cossin":
        blocks = [np.cos(p) for p in ph] + [np.sin(p) for p in ph]
    else:
        raise ValueError(f"unknown IPD encoding {encoding!r}")
    return np.concatenate(blocks, axis=-1)


def target_phase_difference(doa, geometry: ArrayGeometry, pairs, fft_size, rate=SAMPLE_RATE):
    """Plane-wave phase difference per pair, [P, F]."""
    v = geometry.steering(doa, bin_frequencies(fft_size, rate))  # [F, M]
    return np.stack([np.angle(v[:, i] * np.conj(v[:, j])) for i, j in pairs])


def directional_feature(spec, doa, geometry: ArrayGeometry, pairs=None,
                        fft_size=None, rate=SAMPLE_RATE) -> np.ndarray:
    y = _data(spec)
    pairs = default_pairs(y.shape[0]) if pairs is None else pairs
    _check_pairs(pairs, y.shape[0])
    fft_size = fft_size or (spec.config.fft_size if isinstance(spec, Stft) else 2 * (y.shape[-1] - 1))
    tpd = target_phase_difference(doa, geometry, pairs, fft_size, rate)
    ph = _pair_phase(y, pairs)
    return np.mean(np.cos(ph - tpd[:, None, :]), axis=0)


def compute_features(spec, doa, geometry: ArrayGeometry, pairs=None, ref_channel=0,
                     ipd_encoding="angle", use_df=True):
    """Concatenate LPS | IPD | DF into a [T, D] array and describe the layout."""
    y = _data(spec)
    pairs = default_pairs(y.shape[0]) if pairs is None else pairs
    blocks = [("lps", lps(y, ref_channel))]
    blocks.append(("ipd", ipd(y, pairs, ipd_encoding)))
    if use_df:
        fft_size = spec.config.fft_size if isinstance(spec, Stft) else None
        blocks.append(("df", directional_feature(y, doa, geometry, pairs, fft_size)))
    layout = FeatureLayout(tuple((n, b.shape[-1]) for n, b in blocks))
    return np.concatenate([b for _, b in blocks], axis=-1), layout
