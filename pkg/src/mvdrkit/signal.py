"""STFT / iSTFT and multi-channel WAV I/O.

Spectrograms are stored channels x frames x bins.  Frames are centered:
the waveform is reflect-padded by ``frame_len // 2`` on both sides so that
frame ``t`` is centered on sample ``t * hop``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io.wavfile

SAMPLE_RATE = 16000

__all__ = [
    "SAMPLE_RATE",
    "StftConfig",
    "MultiWave",
    "Stft",
    "SignalError",
    "WavError",
    "hann",
    "num_frames",
    "stft",
    "istft",
    "istft_torch",
    "read_wav",
    "write_wav",
]


class SignalError(ValueError):
    pass


class WavError(SignalError):
    pass


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 512
    frame_len: int = 512
    hop: int = 256
    window: str = "hann"

    def __post_init__(self):
        if self.window != "hann":
            raise SignalError(f"only the hann window is supported, got {self.window!r}")
        if self.frame_len > self.fft_size:
            raise SignalError("frame_len must not exceed fft_size")
        if self.hop <= 0 or self.frame_len <= 0:
            raise SignalError("hop and frame_len must be positive")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def to_dict(self) -> dict:
        return {"fft_size": self.fft_size, "frame_len": self.frame_len,
                "hop": self.hop, "window": self.window}

    @classmethod
    def from_dict(cls, d: dict) -> "StftConfig":
        return cls(**{k: d[k] for k in ("fft_size", "frame_len", "hop", "window") if k in d})


@dataclass
class MultiWave:
    """M-channel waveform, ``samples`` shaped [M, N]."""

    samples: np.ndarray
    rate: int = SAMPLE_RATE

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim == 1:
            x = x[None]
        if x.ndim != 2 or x.shape[0] < 1:
            raise SignalError("MultiWave needs samples shaped [channels, samples] with >= 1 channel")
        if not np.all(np.isfinite(x)):
            raise SignalError("MultiWave samples must be finite")
        if self.rate != SAMPLE_RATE:
            raise SignalError(f"sample rate {self.rate} unsupported; resample to {SAMPLE_RATE} Hz")
        self.samples = x

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    def __len__(self) -> int:
        return self.samples.shape[1]


@dataclass
class Stft:
    data: np.ndarray  # complex [M, T, F]
    config: StftConfig = field(default_factory=StftConfig)
    length: int | None = None  # waveform length, used to trim istft output

    @property
    def shape(self):
        return self.data.shape


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _padded_window(config: StftConfig) -> np.ndarray:
    w = np.zeros(config.fft_size)
    off = (config.fft_size - config.frame_len) // 2
    w[off:off + config.frame_len] = hann(config.frame_len)
    return w


def num_frames(n_samples: int, config: StftConfig) -> int:
    return 1 + n_samples // config.hop


def stft(wave, config: StftConfig = StftConfig()) -> Stft:
    """Centered STFT of every channel.

    ``wave`` may be a MultiWave or an array shaped [M, N] / [N].
    """
    x = wave.samples if isinstance(wave, MultiWave) else np.atleast_2d(np.asarray(wave, dtype=np.float64))
    if x.size == 0:
        raise SignalError("empty input")
    n = x.shape[-1]
    if n < config.frame_len:
        raise SignalError(f"input of {n} samples is shorter than frame_len={config.frame_len}")
    pad = config.fft_size // 2
    mode = "reflect" if n > pad else "constant"
    xp = np.pad(x, [(0, 0), (pad, pad)], mode=mode)
    t = num_frames(n, config)
    frames = np.lib.stride_tricks.sliding_window_view(xp, config.fft_size, axis=-1)
    frames = frames[:, : (t - 1) * config.hop + 1 : config.hop]
    data = np.fft.rfft(frames * _padded_window(config), axis=-1)
    return Stft(data=data, config=config, length=n)


def _ola_envelope(n_frames: int, config: StftConfig) -> np.ndarray:
    w2 = _padded_window(config) ** 2
    total = (n_frames - 1) * config.hop + config.fft_size
    env = np.zeros(total)
    for t in range(n_frames):
        env[t * config.hop: t * config.hop + config.fft_size] += w2
    return env


def istft(spec: Stft, config: StftConfig | None = None, length: int | None = None) -> MultiWave:
    """Weighted overlap-add inverse of :func:`stft`."""
    if config is not None and config != spec.config:
        raise SignalError(f"config {config} does not match the spectrogram's {spec.config}")
    config = spec.config
    data = np.asarray(spec.data)
    if data.ndim == 2:
        data = data[None]
    if data.shape[-1] != config.n_bins:
        raise SignalError(f"spectrogram has {data.shape[-1]} bins, config expects {config.n_bins}")
    length = length if length is not None else spec.length
    m, t, _ = data.shape
    frames = np.fft.irfft(data, n=config.fft_size, axis=-1) * _padded_window(config)
    total = (t - 1) * config.hop + config.fft_size
    out = np.zeros((m, total))
    for i in range(t):
        out[:, i * config.hop: i * config.hop + config.fft_size] += frames[:, i]
    env = _ola_envelope(t, config)
    out = out / np.maximum(env, 1e-10)
    pad = config.fft_size // 2
    if length is None:
        length = (t - 1) * config.hop
    out = out[:, pad:pad + length]
    if out.shape[1] < length:
        out = np.pad(out, [(0, 0), (0, length - out.shape[1])])
    return MultiWave(out)


def istft_torch(data, config: StftConfig, length: int):
    """Differentiable iSTFT for complex torch tensors shaped [..., T, F].

    Same windowing and normalization as :func:`istft`.
    """
    import torch

    t = data.shape[-2]
    win = torch.as_tensor(_padded_window(config), dtype=data.real.dtype)
    frames = torch.fft.irfft(data, n=config.fft_size, dim=-1) * win
    lead = frames.shape[:-2]
    frames = frames.reshape(-1, t, config.fft_size).transpose(1, 2)
    total = (t - 1) * config.hop + config.fft_size
    out = torch.nn.functional.fold(frames, output_size=(1, total),
                                   kernel_size=(1, config.fft_size), stride=(1, config.hop))
    out = out.reshape(*lead, total)
    env = torch.as_tensor(np.maximum(_ola_envelope(t, config), 1e-10), dtype=out.dtype)
    pad = config.fft_size // 2
    out = (out / env)[..., pad:pad + length]
    if out.shape[-1] < length:
        out = torch.nn.functional.pad(out, (0, length - out.shape[-1]))
    return out


def read_wav(path) -> MultiWave:
    """Read a PCM16 or float32 WAV file."""
    try:
        rate, data = scipy.io.wavfile.read(path)
    except (ValueError, EOFError, OSError) as exc:
        raise WavError(f"{path}: malformed WAV file ({exc})") from exc
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise WavError(f"{path}: unsupported encoding {data.dtype}; expected PCM16 or float32")
    x = x[:, None] if x.ndim == 1 else x
    if x.shape[1] == 0:
        raise WavError(f"{path}: zero channels")
    return MultiWave(x.T.copy(), rate=rate)


def write_wav(path, wave: MultiWave, encoding: str = "float32") -> Path:
    path = Path(path)
    x = wave.samples.T
    if x.shape[1] == 0:
        raise WavError("cannot write a zero-channel file")
    if encoding == "float32":
        data = x.astype(np.float32)
    elif encoding == "pcm16":
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise WavError(f"unsupported encoding {encoding!r}")
    scipy.io.wavfile.write(path, wave.rate, data)
    return path
