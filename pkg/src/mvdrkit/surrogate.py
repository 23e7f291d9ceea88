"""Supervised check that an inverse GRU-Net can learn loaded matrix inversion.

Sequences of well-conditioned Hermitian PSD matrices (a random unitary
basis with eigenvalues drifting slowly over frames) are fed to a GRU-Net
whose target at every frame is ``inv_loaded`` of that frame's matrix.
Error is the relative Frobenius norm ``||out - target|| / ||target||``,
averaged over a held-out set.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import torch

from .linalg import EPS_REL, inv_loaded
from .neural.gru import GruNet, GruNetConfig
from .train import Adam

__all__ = ["PsdStreams", "relative_frobenius", "inverse_sanity"]


@dataclass
class PsdStreams:
    n_mics: int = 3
    frames: int = 8
    eig_range: tuple = (0.5, 2.0)
    drift: float = 0.1
    eps_rel: float = EPS_REL

    def sample(self, n: int, generator: torch.Generator):
        """-> (inputs [n, T, 1, M, M], targets [n, T, 1, M, M]), complex128."""
        m, t = self.n_mics, self.frames
        lo, hi = self.eig_range
        a = torch.randn(n, m, m, dtype=torch.complex128, generator=generator)
        q, _ = torch.linalg.qr(a)
        base = lo + (hi - lo - self.drift) * torch.rand(n, 1, m, dtype=torch.float64, generator=generator)
        lam = base + self.drift * torch.rand(n, t, m, dtype=torch.float64, generator=generator)
        q = q[:, None]
        phi = (q * lam[..., None, :].to(q.dtype)) @ q.conj().transpose(-1, -2)
        phi = phi[:, :, None]
        target = torch.from_numpy(inv_loaded(phi.numpy(), self.eps_rel))
        return phi, target


def relative_frobenius(est, target) -> float:
    return float((torch.linalg.matrix_norm(est - target) / torch.linalg.matrix_norm(target)).mean())


def inverse_sanity(streams: PsdStreams = PsdStreams(), hidden=(64, 64), steps: int = 1000, batch: int = 128,
                   lr: float = 3e-3, n_eval: int = 512, seed: int = 0) -> dict:
    """Train an inverse GRU-Net on PSD streams; report held-out error before and after."""
    torch.manual_seed(seed)
    cfg = GruNetConfig.inverse(streams.n_mics, hidden, input_norm="none")
    net = GruNet(cfg, torch.Generator().manual_seed(seed))
    train_gen = torch.Generator().manual_seed(seed + 1)
    held_in, held_out = streams.sample(n_eval, torch.Generator().manual_seed(seed + 2))

    def evaluate():
        with torch.no_grad():
            return relative_frobenius(net(held_in), held_out)

    untrained = evaluate()
    opt = Adam(list(net.named_parameters()), lr=lr)
    start = time.time()
    for _ in range(steps):
        x, y = streams.sample(batch, train_gen)
        opt.zero_grad()
        loss = (net(x) - y).abs().pow(2).sum((-2, -1)).mean()
        loss.backward()
        opt.step()
    return {"untrained_error": untrained, "trained_error": evaluate(), "seconds": time.time() - start,
            "steps": steps, "n_mics": streams.n_mics, "hidden": list(hidden)}
