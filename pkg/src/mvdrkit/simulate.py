"""Synthetic multi-channel scenes for training and evaluation.

Far-field sources are placed on an array by frequency-domain fractional
delays.  Reverberation is a per-channel exponentially decaying white-noise
tail, which is cheap and controllable but not a physical room model.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.signal

from .geometry import ArrayGeometry
from .signal import SAMPLE_RATE, MultiWave, read_wav, write_wav

MANIFEST_VERSION = 1
ANGLE_BINS = ((0.0, 15.0, "0-15"), (15.0, 45.0, "15-45"), (45.0, 90.0, "45-90"), (90.0, 180.0 + 1e-9, "90-180"))
NO_INTERFERER_BIN = "none"
TAIL_ONSET = 0.0025  # seconds between direct path and reverb tail

__all__ = [
    "Scene", "SceneRender", "DatasetSpec", "SimulationError",
    "synth_speech", "synth_noise", "reverb_tail", "fractional_delay",
    "render_source", "mix_scene", "angle_bin", "nearest_interferer_angle",
    "sample_scene", "render_scene", "generate_dataset", "read_manifest",
]


class SimulationError(ValueError):
    pass


# -- dry sources -------------------------------------------------------------

def synth_speech(n_samples: int, rng: np.random.Generator, rate: int = SAMPLE_RATE,
                 base_f0: float | None = None) -> np.ndarray:
    """Speech-like test signal: voiced syllables with formants, gaps and fricatives.

    Sparse in time-frequency like real speech, which is what masking and
    covariance estimation rely on.  Returned at unit RMS.
    """
    base_f0 = rng.uniform(90.0, 240.0) if base_f0 is None else base_f0
    out = np.zeros(n_samples)
    pos = int(rng.uniform(0.0, 0.1) * rate)
    nyq = rate / 2
    while pos < n_samples:
        if rng.random() < 0.3:
            dur = int(rng.uniform(0.04, 0.1) * rate)
            burst = np.fft.rfft(rng.standard_normal(dur))
            f = np.fft.rfftfreq(dur, 1 / rate)
            burst = np.fft.irfft(burst * (f > rng.uniform(2500, 4500)), n=dur)
            burst *= scipy.signal.windows.tukey(dur, 0.5) * 0.4
            end = min(n_samples, pos + dur)
            out[pos:end] += burst[: end - pos]
            pos = end
        dur = int(rng.uniform(0.12, 0.35) * rate)
        f0 = base_f0 * rng.uniform(0.85, 1.15) * np.linspace(1.0, rng.uniform(0.9, 1.1), dur)
        formants = [(rng.uniform(300, 900), 120.0), (rng.uniform(900, 2400), 160.0), (rng.uniform(2300, 3600), 220.0)]
        phase = 2 * np.pi * np.cumsum(f0) / rate
        syl = np.zeros(dur)
        for k in range(1, int(nyq * 0.95 / f0.max()) + 1):
            fk = k * f0.mean()
            amp = sum(math.exp(-0.5 * ((fk - fc) / bw) ** 2) for fc, bw in formants) + 0.02
            syl += amp / math.sqrt(k) * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
        syl *= scipy.signal.windows.tukey(dur, 0.4) * rng.uniform(0.5, 1.0)
        end = min(n_samples, pos + dur)
        out[pos:end] += syl[: end - pos]
        pos = end + int(rng.uniform(0.03, 0.2) * rate)
    rms = np.sqrt(np.mean(out ** 2))
    return out / rms if rms > 0 else out


def synth_noise(n_samples: int, rng: np.random.Generator, exponent: float = 1.0) -> np.ndarray:
    """Colored (1/f^exponent power) noise at unit RMS."""
    spec = np.fft.rfft(rng.standard_normal(n_samples))
    f = np.arange(spec.size, dtype=np.float64)
    f[0] = 1.0
    x = np.fft.irfft(spec / f ** (exponent / 2), n=n_samples)
    return x / np.sqrt(np.mean(x ** 2))


# -- rendering ---------------------------------------------------------------

def reverb_tail(decay: float, rng: np.random.Generator, rate: int = SAMPLE_RATE) -> np.ndarray:
    """Exponentially decaying noise whose energy falls 60 dB in ``decay`` seconds.

    Total tail energy is decay / (decay + 0.5) relative to a unit direct path.
    """
    if decay <= 0:
        return np.zeros(0)
    onset = int(TAIL_ONSET * rate)
    n = int(1.2 * decay * rate)
    t = np.arange(n) / rate
    tail = rng.standard_normal(n) * np.exp(-3.0 * math.log(10.0) * t / decay)
    tail *= math.sqrt(decay / (decay + 0.5) / np.sum(tail ** 2))
    return np.concatenate([np.zeros(onset), tail])


def fractional_delay(x: np.ndarray, delays: np.ndarray) -> np.ndarray:
    """Delay a 1-D signal by each of ``delays`` (samples, may be fractional or negative)."""
    n = x.size
    pad = int(2 * np.ceil(np.max(np.abs(delays)))) + 64
    nfft = 1 << int(np.ceil(np.log2(n + pad)))
    spec = np.fft.rfft(x, nfft)
    k = np.arange(spec.size)
    shifts = np.exp(-2j * np.pi * k[None, :] * np.asarray(delays)[:, None] / nfft)
    return np.fft.irfft(spec[None] * shifts, n=nfft, axis=-1)[:, :n]


def render_source(dry, doa: float, geometry: ArrayGeometry, reverb_decay: float = 0.0,
                  rng: np.random.Generator | None = None, rate: int = SAMPLE_RATE) -> MultiWave:
    """Place a dry mono source on the array: plane-wave delays plus a reverb tail."""
    dry = np.asarray(dry, dtype=np.float64).ravel()
    if not np.isfinite(doa):
        raise SimulationError(f"invalid DOA {doa}")
    direct = fractional_delay(dry, geometry.delays(doa) * rate)
    if reverb_decay > 0:
        rng = np.random.default_rng(0) if rng is None else rng
        for m in range(geometry.n_mics):
            direct[m] += scipy.signal.fftconvolve(dry, reverb_tail(reverb_decay, rng, rate))[: dry.size]
    return MultiWave(direct, rate)


# -- scenes ------------------------------------------------------------------

@dataclass
class Scene:
    target_doa: float
    interferer_doas: list = field(default_factory=list)
    sir_db: list = field(default_factory=list)
    snr_db: float | None = 20.0  # None: no noise
    reverb_decay: float = 0.0
    noise_doas: list = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        for d in [self.target_doa, *self.interferer_doas, *self.noise_doas]:
            if not (np.isfinite(d) and 0 <= d < 2 * np.pi):
                raise SimulationError(f"DOA {d} outside [0, 2pi)")
        if len(self.sir_db) != len(self.interferer_doas):
            raise SimulationError("one SIR per interferer required")
        if not all(np.isfinite(self.sir_db)):
            raise SimulationError("SIR must be finite")
        if self.snr_db is not None and not np.isfinite(self.snr_db):
            raise SimulationError("SNR must be finite or None")


@dataclass
class SceneRender:
    mixture: MultiWave
    target: MultiWave  # reverberant target image, the training reference
    interferers: list
    noise: MultiWave | None
    target_dry: np.ndarray
    scene: Scene
    angle_deg: float | None

    @property
    def angle_bin(self) -> str:
        return angle_bin(self.angle_deg)

    @property
    def n_speakers(self) -> int:
        return 1 + len(self.scene.interferer_doas)


def nearest_interferer_angle(target_doa, interferer_doas):
    if not interferer_doas:
        return None
    diffs = [abs((np.degrees(d - target_doa) + 180.0) % 360.0 - 180.0) for d in interferer_doas]
    return float(min(diffs))


def angle_bin(angle_deg) -> str:
    if angle_deg is None:
        return NO_INTERFERER_BIN
    for lo, hi, name in ANGLE_BINS:
        if lo <= angle_deg < hi:
            return name
    raise SimulationError(f"angle {angle_deg} outside [0, 180]")


def _power(x):
    return float(np.mean(x ** 2))


def mix_scene(scene: Scene, target_dry, interferer_drys=(), noise_drys=(),
              geometry: ArrayGeometry | None = None, ref_channel: int = 0) -> SceneRender:
    """Render and mix one scene; SIR/SNR are set on the reference channel."""
    geometry = geometry or ArrayGeometry.ula()
    if len(interferer_drys) != len(scene.interferer_doas):
        raise SimulationError("one dry signal per interferer required")
    n = min([len(target_dry)] + [len(x) for x in interferer_drys] + [len(x) for x in noise_drys])
    seeds = np.random.SeedSequence(scene.seed).spawn(1 + len(interferer_drys) + len(noise_drys))
    rngs = [np.random.default_rng(s) for s in seeds]

    target = render_source(target_dry[:n], scene.target_doa, geometry, scene.reverb_decay, rngs[0])
    p_t = _power(target.samples[ref_channel])
    if p_t == 0:
        raise SimulationError("target is silent")
    mixture = target.samples.copy()
    interferers = []
    for i, (dry, doa, sir) in enumerate(zip(interferer_drys, scene.interferer_doas, scene.sir_db)):
        img = render_source(dry[:n], doa, geometry, scene.reverb_decay, rngs[1 + i]).samples
        p_i = _power(img[ref_channel])
        if p_i == 0:
            raise SimulationError(f"interferer {i} is silent; cannot set SIR")
        img = img * math.sqrt(p_t / (p_i * 10 ** (sir / 10)))
        interferers.append(MultiWave(img))
        mixture = mixture + img
    noise = None
    if scene.snr_db is not None and len(noise_drys):
        if len(noise_drys) != len(scene.noise_doas):
            raise SimulationError("one DOA per noise source required")
        img = np.zeros_like(mixture)
        for j, (dry, doa) in enumerate(zip(noise_drys, scene.noise_doas)):
            img += render_source(dry[:n], doa, geometry, scene.reverb_decay,
                                 rngs[1 + len(interferer_drys) + j]).samples
        p_n = _power(img[ref_channel])
        if p_n == 0:
            raise SimulationError("noise is silent; cannot set SNR")
        img *= math.sqrt(p_t / (p_n * 10 ** (scene.snr_db / 10)))
        noise = MultiWave(img)
        mixture = mixture + img
    return SceneRender(
        mixture=MultiWave(mixture), target=target, interferers=interferers, noise=noise,
        target_dry=np.asarray(target_dry[:n], dtype=np.float64), scene=scene,
        angle_deg=nearest_interferer_angle(scene.target_doa, scene.interferer_doas))


# -- datasets ----------------------------------------------------------------

@dataclass
class DatasetSpec:
    n_scenes: int = 8
    seed: int = 0
    duration: float = 1.0
    n_mics: int = 6
    spacing: float = 0.04
    speaker_proportions: dict = field(default_factory=lambda: {1: 1 / 3, 2: 1 / 3, 3: 1 / 3})
    sir_range: tuple = (-6.0, 6.0)
    snr_range: tuple = (5.0, 20.0)
    decay_range: tuple = (0.05, 0.7)
    n_noise_sources: int = 4
    doa_range: tuple = (0.0, math.pi)
    pool_dir: str | None = None
    ref_channel: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        d = dict(d)
        if "speaker_proportions" in d:
            d["speaker_proportions"] = {int(k): float(v) for k, v in d["speaker_proportions"].items()}
        for key in ("sir_range", "snr_range", "decay_range", "doa_range"):
            if key in d:
                d[key] = tuple(float(v) for v in d[key])
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise SimulationError(f"unknown dataset keys: {sorted(unknown)}")
        return cls(**d)

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry.ula(self.n_mics, self.spacing)

    def speaker_counts(self) -> list:
        """Speaker count of every scene; exact largest-remainder apportionment."""
        keys = sorted(self.speaker_proportions)
        total = sum(self.speaker_proportions.values())
        quotas = [self.n_scenes * self.speaker_proportions[k] / total for k in keys]
        counts = [int(math.floor(q)) for q in quotas]
        order = sorted(range(len(keys)), key=lambda i: (-(quotas[i] - counts[i]), i))
        for i in order[: self.n_scenes - sum(counts)]:
            counts[i] += 1
        labels = [k for k, c in zip(keys, counts) for _ in range(c)]
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 1 << 20]))
        return [labels[i] for i in rng.permutation(len(labels))]


def _load_pool(pool_dir):
    files = sorted(Path(pool_dir).glob("*.wav"))
    if not files:
        raise SimulationError(f"empty source pool: {pool_dir}")
    return [read_wav(f).samples[0] for f in files]


def _pool_cut(pool, n, rng):
    x = pool[rng.integers(len(pool))]
    if len(x) < n:
        x = np.pad(x, (0, n - len(x)))
    start = rng.integers(0, len(x) - n + 1)
    x = x[start:start + n]
    rms = np.sqrt(np.mean(x ** 2))
    if rms == 0:
        raise SimulationError("pool cut is silent")
    return x / rms


def sample_scene(spec: DatasetSpec, n_speakers: int, rng: np.random.Generator) -> Scene:
    lo, hi = spec.doa_range
    doas = [float(rng.uniform(lo, hi)) for _ in range(n_speakers)]
    return Scene(
        target_doa=doas[0], interferer_doas=doas[1:],
        sir_db=[float(rng.uniform(*spec.sir_range)) for _ in doas[1:]],
        snr_db=float(rng.uniform(*spec.snr_range)),
        reverb_decay=float(rng.uniform(*spec.decay_range)),
        noise_doas=[float(rng.uniform(0, 2 * math.pi)) for _ in range(spec.n_noise_sources)],
        seed=int(rng.integers(2 ** 31)))


def render_scene(spec: DatasetSpec, index: int, n_speakers: int | None = None, pool=None) -> SceneRender:
    """Scene ``index`` of the dataset described by ``spec`` (deterministic)."""
    if n_speakers is None:
        n_speakers = spec.speaker_counts()[index]
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, index]))
    scene = sample_scene(spec, n_speakers, rng)
    n = int(round(spec.duration * SAMPLE_RATE))
    if spec.pool_dir is not None:
        pool = _load_pool(spec.pool_dir) if pool is None else pool
        drys = [_pool_cut(pool, n, rng) for _ in range(n_speakers)]
    else:
        drys = [synth_speech(n, rng) for _ in range(n_speakers)]
    noises = [synth_noise(n, rng) for _ in range(spec.n_noise_sources)]
    return mix_scene(scene, drys[0], drys[1:], noises, spec.geometry, spec.ref_channel)


def _write_scene(args):
    spec, index, n_speakers, out_dir = args
    r = render_scene(spec, index, n_speakers)
    sid = f"scene_{index:05d}"
    write_wav(out_dir / f"{sid}_mix.wav", r.mixture)
    write_wav(out_dir / f"{sid}_ref.wav", r.target)
    write_wav(out_dir / f"{sid}_dry.wav", MultiWave(r.target_dry))
    s = r.scene
    return {
        "version": MANIFEST_VERSION,
        "id": sid,
        "mixture": f"{sid}_mix.wav",
        "reference": f"{sid}_ref.wav",
        "dry": f"{sid}_dry.wav",
        "n_speakers": r.n_speakers,
        "angle_deg": r.angle_deg,
        "angle_bin": r.angle_bin,
        "doa": s.target_doa,
        "interferer_doas": s.interferer_doas,
        "sir_db": s.sir_db,
        "snr_db": s.snr_db,
        "reverb_decay": s.reverb_decay,
        "noise_doas": s.noise_doas,
        "seed": s.seed,
        "n_mics": spec.n_mics,
        "spacing": spec.spacing,
        "ref_channel": spec.ref_channel,
        "rate": SAMPLE_RATE,
    }


def generate_dataset(spec: DatasetSpec, out_dir, workers: int = 1) -> Path:
    """Write mixture/reference WAVs and ``manifest.jsonl``; returns the manifest path.

    Every scene has its own child seed, so any worker count gives the same files.
    """
    if spec.n_scenes < 1:
        raise SimulationError("n_scenes must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    counts = spec.speaker_counts()
    jobs = [(spec, i, counts[i], out_dir) for i in range(spec.n_scenes)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_write_scene, jobs))
    else:
        rows = [_write_scene(j) for j in jobs]
    path = out_dir / "manifest.jsonl"
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    with open(out_dir / "dataset_spec.json", "w") as fh:
        json.dump(asdict(spec), fh, sort_keys=True, indent=1, default=str)
    return path


def read_manifest(path):
    path = Path(path)
    rows = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    for row in rows:
        if row.get("version") != MANIFEST_VERSION:
            raise SimulationError(f"unsupported manifest version {row.get('version')}")
    return rows
