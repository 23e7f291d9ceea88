"""numpy <-> torch bridging for functions implemented once in torch."""
from __future__ import annotations

import functools

import numpy as np
import torch


def as_tensor(x):
    if isinstance(x, torch.Tensor):
        return x
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return torch.from_numpy(x.astype(np.complex128))
    if x.dtype.kind in "fiub":
        return torch.from_numpy(x.astype(np.float64))
    return x


def to_numpy(x):
    if isinstance(x, torch.Tensor):
        return x.detach().cpu().numpy()
    if isinstance(x, tuple):
        return tuple(to_numpy(v) for v in x)
    return x


def numpy_in_numpy_out(fn):
    """Accept numpy arrays anywhere torch tensors are expected.

    When any positional array argument is a numpy array the result comes
    back as numpy; torch inputs keep their graph.
    """

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        was_numpy = any(isinstance(a, np.ndarray) for a in args)
        args = [as_tensor(a) if isinstance(a, np.ndarray) else a for a in args]
        out = fn(*args, **kwargs)
        return to_numpy(out) if was_numpy else out

    return wrapper
