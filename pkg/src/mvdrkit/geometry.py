"""Microphone-array geometry and far-field plane-wave model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPEED_OF_SOUND = 343.0

__all__ = ["SPEED_OF_SOUND", "ArrayGeometry", "default_pairs", "bin_frequencies"]


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone positions in meters, shaped [M, 3]."""

    positions: tuple

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3 or p.shape[0] < 1:
            raise ValueError("positions must be shaped [M, 3]")
        if len({tuple(np.round(r, 9)) for r in p}) != len(p):
            raise ValueError("microphone positions must be distinct")
        object.__setattr__(self, "positions", tuple(map(tuple, p.tolist())))

    @classmethod
    def ula(cls, n_mics: int = 6, spacing: float = 0.04) -> "ArrayGeometry":
        """Uniform linear array along x, centered on the origin."""
        x = (np.arange(n_mics) - (n_mics - 1) / 2) * spacing
        return cls(np.stack([x, np.zeros(n_mics), np.zeros(n_mics)], axis=1))

    @property
    def n_mics(self) -> int:
        return len(self.positions)

    @property
    def xyz(self) -> np.ndarray:
        return np.asarray(self.positions)

    def delays(self, doa: float) -> np.ndarray:
        """Plane-wave arrival delay of each mic relative to the origin, seconds.

        ``doa`` is the azimuth of the source in the x-y plane (0 = +x axis).
        """
        if not np.isfinite(doa):
            raise ValueError(f"invalid DOA {doa}")
        u = np.array([np.cos(doa), np.sin(doa), 0.0])
        return -(self.xyz @ u) / SPEED_OF_SOUND

    def steering(self, doa: float, freqs) -> np.ndarray:
        """Plane-wave array response exp(-j 2 pi f tau_m), shaped [F, M]."""
        return np.exp(-2j * np.pi * np.asarray(freqs)[:, None] * self.delays(doa)[None, :])

    def to_dict(self) -> dict:
        return {"positions": [list(p) for p in self.positions]}


def default_pairs(n_mics: int):
    """Adjacent pairs plus (first, last)."""
    pairs = [(i, i + 1) for i in range(n_mics - 1)]
    if n_mics > 2:
        pairs.append((0, n_mics - 1))
    return pairs


def bin_frequencies(fft_size: int, rate: int) -> np.ndarray:
    return np.arange(fft_size // 2 + 1) * rate / fft_size
