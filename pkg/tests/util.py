"""Shared helpers for wiring torch computations to the flat-vector gradient oracle."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import torch


def pack(tensors: Sequence[torch.Tensor]) -> np.ndarray:
    """Flatten a list of tensors into one float64 vector."""
    return np.concatenate([t.detach().numpy().astype(np.float64).ravel() for t in tensors])


def unpack(flat: np.ndarray, shapes: Sequence[tuple[int, ...]]) -> list[torch.Tensor]:
    """Rebuild float64 torch tensors of the given shapes from a flat vector."""
    out = []
    offset = 0
    for shape in shapes:
        n = int(np.prod(shape)) if shape else 1
        chunk = flat[offset : offset + n].reshape(shape)
        out.append(torch.tensor(chunk, dtype=torch.float64))
        offset += n
    assert offset == flat.size
    return out


def scalar_fn_from(loss_of_tensors: Callable[..., torch.Tensor], shapes) -> Callable[[np.ndarray], float]:
    """Turn a tensor-valued loss into a flat-vector scalar function for finite differences."""

    def fn(flat: np.ndarray) -> float:
        tensors = unpack(flat, shapes)
        return float(loss_of_tensors(*tensors).item())

    return fn


def autograd_gradient(loss_of_tensors: Callable[..., torch.Tensor], tensors: Sequence[torch.Tensor]) -> np.ndarray:
    """Analytic gradient of the loss w.r.t. every input, flattened like pack()."""
    leaves = [t.detach().clone().double().requires_grad_(True) for t in tensors]
    loss = loss_of_tensors(*leaves)
    grads = torch.autograd.grad(loss, leaves, allow_unused=True)
    flat = []
    for leaf, g in zip(leaves, grads):
        flat.append((torch.zeros_like(leaf) if g is None else g).numpy().ravel())
    return np.concatenate(flat)
