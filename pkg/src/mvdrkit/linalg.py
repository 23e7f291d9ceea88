"""Dense complex linear algebra for small Hermitian matrices.

All functions broadcast over leading batch dimensions, so a whole
[T, F, M, M] covariance sequence can be handled in one call.  The numpy
functions are the reference implementations; the ``*_torch`` variants keep
the same algebra inside an autograd graph.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "LinalgError",
    "EigenConvergenceError",
    "hermitian",
    "matmul",
    "matvec",
    "outer",
    "loading",
    "inv_loaded",
    "solve_loaded",
    "principal_eigvec",
    "fix_phase",
    "solve_loaded_torch",
    "principal_eigvec_torch",
]

EPS_ABS = 1e-10
EPS_REL = 1e-6


class LinalgError(ValueError):
    pass


class EigenConvergenceError(LinalgError):
    def __init__(self, msg, indices=None):
        super().__init__(msg)
        self.indices = indices


def hermitian(a):
    return np.conj(np.swapaxes(np.asarray(a), -1, -2))


def matmul(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise LinalgError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def matvec(a, x):
    a, x = np.asarray(a), np.asarray(x)
    if a.ndim < 2 or a.shape[-1] != x.shape[-1]:
        raise LinalgError(f"cannot apply {a.shape} to vector {x.shape}")
    return np.einsum("...ij,...j->...i", a, x)


def outer(x, y):
    """x y^H."""
    x, y = np.asarray(x), np.asarray(y)
    return x[..., :, None] * np.conj(y)[..., None, :]


def _check_square(a):
    a = np.asarray(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise LinalgError(f"expected square matrices, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise LinalgError("matrix contains NaN or Inf")
    return a


def loading(a, eps_rel=EPS_REL, eps_abs=EPS_ABS):
    """Diagonal loading level max(eps_rel * trace / n, eps_abs), per matrix."""
    n = a.shape[-1]
    tr = np.real(np.trace(a, axis1=-2, axis2=-1))
    return np.maximum(eps_rel * tr / n, eps_abs)


def _loaded(a, eps_rel):
    a = _check_square(a).astype(np.complex128)
    a = 0.5 * (a + hermitian(a))
    lam = loading(a, eps_rel)
    return a + lam[..., None, None] * np.eye(a.shape[-1])


def _cholesky(a):
    """Batched Cholesky; returns (L, ok) with ok False where a is not PD."""
    n = a.shape[-1]
    L = np.zeros_like(a)
    ok = np.ones(a.shape[:-2], dtype=bool)
    for j in range(n):
        d = np.real(a[..., j, j] - np.sum(np.abs(L[..., j, :j]) ** 2, axis=-1))
        ok &= d > 0
        ljj = np.sqrt(np.where(d > 0, d, 1.0))
        L[..., j, j] = ljj
        if j + 1 < n:
            s = a[..., j + 1:, j] - np.einsum("...ik,...k->...i", L[..., j + 1:, :j], np.conj(L[..., j, :j]))
            L[..., j + 1:, j] = s / ljj[..., None]
    return L, ok


def _forward_sub(L, b):
    n = L.shape[-1]
    batch = np.broadcast_shapes(L.shape[:-2], b.shape[:-2])
    x = np.zeros(batch + (n, b.shape[-1]), dtype=np.complex128)
    for i in range(n):
        s = b[..., i, :] - np.einsum("...k,...kc->...c", L[..., i, :i], x[..., :i, :])
        x[..., i, :] = s / L[..., i, i][..., None]
    return x


def _backward_sub_h(L, y):
    """Solve L^H x = y."""
    n = L.shape[-1]
    x = np.zeros_like(y)
    for i in reversed(range(n)):
        s = y[..., i, :] - np.einsum("...k,...kc->...c", np.conj(L[..., i + 1:, i]), x[..., i + 1:, :])
        x[..., i, :] = s / np.conj(L[..., i, i])[..., None]
    return x


def _gauss_jordan(a, b):
    """Solve a x = b (single matrix, b [n, c]) with partial pivoting."""
    n = a.shape[0]
    aug = np.concatenate([a.astype(np.complex128), b.astype(np.complex128)], axis=1)
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if np.abs(aug[piv, col]) == 0:
            raise LinalgError("singular matrix")
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        others = np.arange(n) != col
        aug[others] -= aug[others, col][:, None] * aug[col][None]
    return aug[:, n:]


def _solve_hpd(a, b):
    """Solve a x = b for Hermitian a, b shaped [..., n, c]."""
    L, ok = _cholesky(a)
    x = _backward_sub_h(L, _forward_sub(L, b))
    if not np.all(ok):
        batch = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
        a_b = np.broadcast_to(a, batch + a.shape[-2:])
        b_b = np.broadcast_to(b, batch + b.shape[-2:])
        x = np.array(np.broadcast_to(x, batch + b.shape[-2:]))
        for idx in map(tuple, np.argwhere(~ok)):
            x[idx] = _gauss_jordan(a_b[idx], b_b[idx])
    return x


def inv_loaded(a, eps_rel=EPS_REL):
    """(a + lambda I)^-1 with scale-relative diagonal loading."""
    al = _loaded(a, eps_rel)
    n = al.shape[-1]
    inv = _solve_hpd(al, np.broadcast_to(np.eye(n, dtype=np.complex128), al.shape))
    return 0.5 * (inv + hermitian(inv))


def solve_loaded(a, b, eps_rel=EPS_REL):
    """(a + lambda I)^-1 b without forming the inverse."""
    al = _loaded(a, eps_rel)
    b = np.asarray(b, dtype=np.complex128)
    if b.shape[-1] != al.shape[-1]:
        raise LinalgError(f"right-hand side of length {b.shape[-1]} for {al.shape[-1]}x{al.shape[-1]} system")
    return _solve_hpd(al, b[..., None])[..., 0]


def fix_phase(v):
    """Rotate each vector so its largest-modulus entry is real and positive."""
    idx = np.argmax(np.abs(v), axis=-1)
    lead = np.take_along_axis(v, idx[..., None], axis=-1)
    mag = np.abs(lead)
    rot = np.where(mag > 0, np.conj(lead) / np.where(mag > 0, mag, 1.0), 1.0)
    return v * rot


def _power_step(p, v):
    w = matvec(p, v)
    nw = np.linalg.norm(w, axis=-1, keepdims=True)
    return np.where(nw > 0, w / np.where(nw > 0, nw, 1.0), v)


def principal_eigvec(a, tol=1e-8, max_iter=200, squarings=3, polish=8):
    """Dominant eigenvector of Hermitian PSD matrices by power iteration.

    The iteration runs on ``a`` raised to the power ``2**squarings`` (built by
    repeated squaring), which widens the eigenvalue gap without changing the
    eigenvectors.  Convergence is judged on the original matrix:
    ``||a v - (v^H a v) v|| <= tol * ||a||_F``; ``polish`` extra steps are
    taken after that to tighten the vector itself.
    """
    a = _check_square(a).astype(np.complex128)
    a = 0.5 * (a + hermitian(a))
    fro = np.linalg.norm(a, axis=(-2, -1))
    safe = np.where(fro > 0, fro, 1.0)[..., None, None]
    p = a / safe
    for _ in range(squarings):
        p = p @ p
        p = p / np.maximum(np.linalg.norm(p, axis=(-2, -1)), 1e-300)[..., None, None]
    # start from the heaviest column: exact for diagonal and rank-1 inputs
    cols = np.linalg.norm(a, axis=-2)
    v = np.take_along_axis(a, np.argmax(cols, axis=-1)[..., None, None], axis=-1)[..., 0]
    zero_start = np.linalg.norm(v, axis=-1) == 0
    v[zero_start] = 0
    v[..., 0] = np.where(zero_start, 1.0, v[..., 0])
    v = v / np.linalg.norm(v, axis=-1, keepdims=True)
    for _ in range(max_iter + 1):
        av = matvec(a, v)
        lam = np.real(np.sum(np.conj(v) * av, axis=-1))
        res = np.linalg.norm(av - lam[..., None] * v, axis=-1)
        done = res <= tol * fro
        if np.all(done):
            for _ in range(polish):
                v = _power_step(p, v)
            return fix_phase(v)
        v = np.where(done[..., None], v, _power_step(p, v))
    bad = np.argwhere(~done)
    raise EigenConvergenceError(
        f"power iteration did not converge in {max_iter} iterations for {len(bad)} matrices "
        f"(first at batch index {tuple(bad[0]) if bad.size else ()})", indices=bad)


# -- autograd versions -------------------------------------------------------

def solve_loaded_torch(a, b, eps_rel=EPS_REL, stats=None):
    """Torch version of :func:`solve_loaded` (Cholesky, LU fallback).

    ``stats`` (a dict) accumulates ``loading_floor`` (matrices whose loading
    hit the absolute floor) and ``cholesky_fallback`` counts.
    """
    import torch

    n = a.shape[-1]
    a = 0.5 * (a + a.conj().transpose(-1, -2))
    tr = torch.diagonal(a, dim1=-2, dim2=-1).real.sum(-1)
    lam = torch.clamp(eps_rel * tr / n, min=EPS_ABS)
    eye = torch.eye(n, dtype=a.dtype)
    al = a + lam[..., None, None] * eye
    L, info = torch.linalg.cholesky_ex(al)
    if stats is not None:
        stats["loading_floor"] = stats.get("loading_floor", 0) + int((eps_rel * tr / n < EPS_ABS).sum())
    if bool((info != 0).any()):
        if stats is not None:
            stats["cholesky_fallback"] = stats.get("cholesky_fallback", 0) + int((info != 0).sum())
        return torch.linalg.solve(al, b)
    return torch.cholesky_solve(b[..., None], L)[..., 0]


def principal_eigvec_torch(a, n_iter=30, squarings=3):
    """Differentiable power iteration with a fixed iteration count."""
    import torch

    a = 0.5 * (a + a.conj().transpose(-1, -2))
    fro = torch.linalg.matrix_norm(a).clamp_min(1e-30)
    p = a / fro[..., None, None]
    for _ in range(squarings):
        p = p @ p
        p = p / torch.linalg.matrix_norm(p).clamp_min(1e-30)[..., None, None]
    with torch.no_grad():
        start = torch.linalg.vector_norm(a, dim=-2).argmax(-1)
    v = torch.gather(a, -1, start[..., None, None].expand(*a.shape[:-1], 1))[..., 0]
    v = v + 1e-20
    v = v / torch.linalg.vector_norm(v, dim=-1, keepdim=True)
    for _ in range(n_iter):
        w = (p @ v[..., None])[..., 0]
        v = w / torch.linalg.vector_norm(w, dim=-1, keepdim=True).clamp_min(1e-30)
    with torch.no_grad():
        idx = v.abs().argmax(-1, keepdim=True)
    lead = torch.gather(v, -1, idx)
    return v * (lead.conj() / lead.abs().clamp_min(1e-30))
