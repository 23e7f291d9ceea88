"""Joint training, Adam, checkpoint I/O and inference."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import metrics
from .neural.checkpoint import load_checkpoint, save_checkpoint
from .signal import SAMPLE_RATE, MultiWave, istft_torch, read_wav, write_wav
from .simulate import read_manifest
from .system import Separator, SystemConfig, prepare_input

log = logging.getLogger(__name__)

__all__ = ["TrainConfig", "AdamState", "Adam", "NonFiniteGradient", "TrainingAborted",
           "loss_si_snr", "adam_step", "train", "load_model", "save_model",
           "enhance", "infer", "enhance_manifest"]


class NonFiniteGradient(FloatingPointError):
    pass


class TrainingAborted(RuntimeError):
    pass


# -- objective ---------------------------------------------------------------

def si_snr_torch(est, ref):
    """Per-row Si-SNR in dB for [..., N] tensors, clamped to +-60."""
    est = est - est.mean(-1, keepdim=True)
    ref = ref - ref.mean(-1, keepdim=True)
    alpha = (est * ref).sum(-1, keepdim=True) / (ref * ref).sum(-1, keepdim=True)
    target = alpha * ref
    err = est - target
    tiny = torch.finfo(est.dtype).tiny
    ratio = (target * target).sum(-1).clamp_min(tiny) / (err * err).sum(-1).clamp_min(tiny)
    return torch.clamp(10 * torch.log10(ratio), -metrics.CLAMP_DB, metrics.CLAMP_DB)


def loss_si_snr(enhanced, reference):
    """Negative mean Si-SNR over the batch (rows with a silent reference are dropped)."""
    enhanced, reference = torch.atleast_2d(enhanced), torch.atleast_2d(reference)
    live = (reference - reference.mean(-1, keepdim=True)).abs().sum(-1) > 0
    if not bool(live.all()):
        log.warning("skipping %d chunk(s) with a silent reference", int((~live).sum()))
        if not bool(live.any()):
            return None
        enhanced, reference = enhanced[live], reference[live]
    return -si_snr_torch(enhanced, reference).mean()


# -- optimizer ---------------------------------------------------------------

@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params, grads, state: AdamState, lr: float, names=None):
    """In-place Adam update of ``params`` (tensors) from ``grads``."""
    for i, g in enumerate(grads):
        if g is not None and not bool(torch.isfinite(g).all()):
            name = names[i] if names else f"#{i}"
            raise NonFiniteGradient(f"non-finite gradient in parameter {name}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1 - b1 ** state.step, 1 - b2 ** state.step
    with torch.no_grad():
        for p, g, m, v in zip(params, grads, state.m, state.v):
            if g is None:
                continue
            m.mul_(b1).add_(g, alpha=1 - b1)
            v.mul_(b2).addcmul_(g, g, value=1 - b2)
            p.sub_(lr * (m / c1) / (torch.sqrt(v / c2) + state.eps))
    return params, state


class Adam:
    def __init__(self, named_params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.names = [n for n, _ in named_params]
        self.params = [p for _, p in named_params]
        self.lr = lr
        self.state = AdamState([torch.zeros_like(p) for p in self.params],
                               [torch.zeros_like(p) for p in self.params], 0, betas[0], betas[1], eps)

    def step(self):
        adam_step(self.params, [p.grad for p in self.params], self.state, self.lr, self.names)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


# -- configuration -----------------------------------------------------------

@dataclass
class TrainConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    train_manifest: str = ""
    val_manifest: str | None = None
    out_dir: str = "run"
    epochs: int = 60
    max_steps: int | None = None
    batch_size: int = 12
    chunk_seconds: float = 4.0
    lr: float = 1e-3
    seed: int = 0
    grad_clip: float | None = None
    val_every: int | None = None  # steps; default once per epoch
    val_limit: int = 32
    threads: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown train keys: {sorted(unknown)}")
        if isinstance(d.get("system"), dict):
            d["system"] = SystemConfig.from_dict(d["system"])
        return cls(**d)


# -- checkpoints -------------------------------------------------------------

def save_model(path, model: Separator, extra: dict | None = None):
    config = {"kind": "separator", "system": model.config.to_dict(),
              "feature_layout": model.config.feature_layout().to_dict()}
    if extra:
        config.update(extra)
    return save_checkpoint(path, config, dict(model.named_parameters()))


def load_model(path) -> Separator:
    config, params = load_checkpoint(path)
    model = Separator(SystemConfig.from_dict(config["system"]))
    own = dict(model.named_parameters())
    if set(own) != set(params):
        raise ValueError(f"{path}: parameter names do not match the configured model")
    with torch.no_grad():
        for name, p in own.items():
            p.copy_(torch.from_numpy(params[name]).to(p.dtype))
    return model


# -- data --------------------------------------------------------------------

class _Example:
    __slots__ = ("spec", "feats", "ref", "length")

    def __init__(self, spec, feats, ref, length):
        self.spec, self.feats, self.ref, self.length = spec, feats, ref, length


def _load_examples(manifest, config: SystemConfig, chunk_samples: int | None, limit=None):
    root = Path(manifest).parent
    rows = read_manifest(manifest)[:limit]
    out = []
    for row in rows:
        mix = read_wav(root / row["mixture"])
        ref = read_wav(root / row["reference"]).samples[config.ref_channel]
        n = len(mix) if chunk_samples is None else min(len(mix), chunk_samples)
        mix = MultiWave(mix.samples[:, :n])
        spec, feats = prepare_input(mix, row["doa"], config)
        if config.dtype == "float32":  # halves the cache; the model casts to this anyway
            spec, feats = spec.astype(np.complex64), feats.astype(np.float32)
        out.append(_Example(spec, feats, ref[:n], n))
    if not out:
        raise ValueError(f"no examples in {manifest}")
    return out


def _batch(examples, config: SystemConfig):
    n = min(e.length for e in examples)
    t = min(e.spec.shape[1] for e in examples)
    spec = torch.from_numpy(np.stack([e.spec[:, :t] for e in examples])).to(config.complex_dtype)
    feats = torch.from_numpy(np.stack([e.feats[:t] for e in examples])).to(config.torch_dtype)
    ref = torch.from_numpy(np.stack([e.ref[:n] for e in examples])).to(config.torch_dtype)
    return spec, feats, ref, n


def _forward_wave(model, spec, feats, n, stats=None):
    out = model(spec, feats, stats)
    return istft_torch(out, model.config.stft, n)


def validate(model, examples, batch_size=4) -> float:
    scores = []
    with torch.no_grad():
        for i in range(0, len(examples), batch_size):
            spec, feats, ref, n = _batch(examples[i:i + batch_size], model.config)
            est = _forward_wave(model, spec, feats, n)
            for e, r in zip(est.double().numpy(), ref.double().numpy()):
                scores.append(metrics.si_snr(e, r))
    return float(np.mean(scores))


# -- training ----------------------------------------------------------------

def train(config: TrainConfig):
    """Train one system; writes best.ckpt, last.ckpt and train_log.jsonl to ``out_dir``.

    Returns a summary dict (best validation Si-SNR, steps, instability counters).
    """
    torch.set_num_threads(config.threads)
    torch.manual_seed(config.seed)
    sys_cfg = config.system
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    chunk = int(round(config.chunk_seconds * SAMPLE_RATE))
    train_set = _load_examples(config.train_manifest, sys_cfg, chunk)
    val_set = (_load_examples(config.val_manifest, sys_cfg, chunk, config.val_limit) if config.val_manifest
               else train_set[:config.val_limit])

    model = Separator(sys_cfg, seed=config.seed)
    opt = Adam(list(model.named_parameters()), lr=config.lr)
    rng = np.random.default_rng(config.seed)
    steps_per_epoch = math.ceil(len(train_set) / config.batch_size)
    total = config.max_steps or config.epochs * steps_per_epoch
    val_every = config.val_every or steps_per_epoch
    counters = {"nan_loss": 0, "nonfinite_grad": 0, "loading_floor": 0, "cholesky_fallback": 0,
                "den_floor": 0, "norm_floor": 0}
    best = -math.inf
    consecutive_nan = 0
    history = []
    log_path = out_dir / "train_log.jsonl"
    t_start = time.time()
    order = []
    with open(log_path, "w") as log_fh:
        for step in range(1, total + 1):
            if not order:
                order = list(rng.permutation(len(train_set)))
            idx = [order.pop() for _ in range(min(config.batch_size, len(order)))]
            spec, feats, ref, n = _batch([train_set[i] for i in idx], sys_cfg)
            stats = {}
            opt.zero_grad()
            est = _forward_wave(model, spec, feats, n, stats)
            loss = loss_si_snr(est, ref)
            for k, v in stats.items():
                counters[k] = counters.get(k, 0) + v
            if loss is None:
                continue
            if not bool(torch.isfinite(loss)):
                counters["nan_loss"] += 1
                consecutive_nan += 1
                log.warning("step %d: non-finite loss", step)
                if consecutive_nan >= 3:
                    raise TrainingAborted(f"3 consecutive non-finite losses (last at step {step})")
                continue
            consecutive_nan = 0
            loss.backward()
            if config.grad_clip:
                torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            try:
                opt.step()
            except NonFiniteGradient as exc:
                counters["nonfinite_grad"] += 1
                log.warning("step %d: %s; update skipped", step, exc)
            history.append(float(loss.detach()))
            if step % val_every == 0 or step == total:
                val = validate(model, val_set)
                record = {"step": step, "epoch": (step - 1) // steps_per_epoch + 1,
                          "loss": float(np.mean(history[-val_every:])) if history else None,
                          "val_si_snr": val, "elapsed": round(time.time() - t_start, 2),
                          "instability": dict(counters)}
                log_fh.write(json.dumps(record, sort_keys=True) + "\n")
                log_fh.flush()
                log.info("step %d loss %.3f val Si-SNR %.2f dB", step, record["loss"] or float("nan"), val)
                if val > best:
                    best = val
                    save_model(out_dir / "best.ckpt", model, {"step": step, "val_si_snr": val})
    save_model(out_dir / "last.ckpt", model, {"step": total})
    return {"best_val_si_snr": best, "steps": total, "instability": counters,
            "first_loss": history[0] if history else None, "last_loss": history[-1] if history else None,
            "out_dir": str(out_dir)}


# -- inference ---------------------------------------------------------------

def enhance(model: Separator, mixture: MultiWave, doa) -> MultiWave:
    spec, feats = prepare_input(mixture, doa, model.config)
    with torch.no_grad():
        est = _forward_wave(model, torch.from_numpy(spec)[None], torch.from_numpy(feats)[None], len(mixture))
    return MultiWave(est[0].double().numpy())


def infer(checkpoint, mixture_wav, doa, out_wav) -> Path:
    model = load_model(checkpoint)
    mixture = read_wav(mixture_wav)
    return write_wav(out_wav, enhance(model, mixture, doa))


def enhance_manifest(checkpoint, manifest, out_dir) -> Path:
    """Enhance every mixture of a manifest into ``out_dir/<id>.wav``."""
    model = checkpoint if isinstance(checkpoint, Separator) else load_model(checkpoint)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    root = Path(manifest).parent
    for row in read_manifest(manifest):
        est = enhance(model, read_wav(root / row["mixture"]), row["doa"])
        write_wav(out_dir / f"{row['id']}.wav", est)
    return out_dir
