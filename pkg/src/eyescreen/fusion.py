"""Gated residual fusion between an image embedding and per-feature metadata embeddings.

The correction applied to an embedding ``a`` due to another embedding ``b`` is

    f(a, b) = a * tanh(a * (W @ b))

where ``W`` projects ``b`` into the dimension of ``a``. Because ``|tanh| < 1``
every output entry is bounded by the matching entry of ``a``, so adding the
correction back onto ``a`` is a residual update that cannot blow up the scale
of the embedding. With all-zero ``W`` the correction vanishes and fusion is the
identity.
"""

from __future__ import annotations

from typing import Sequence

import torch
import torch.nn as nn


def elementwise_correction(a: torch.Tensor, b: torch.Tensor, weight: torch.Tensor) -> torch.Tensor:
    """Correction to embedding ``a`` due to embedding ``b``.

    ``a`` has shape (..., d_a), ``b`` has shape (..., d_b) and ``weight`` is the
    (d_a, d_b) projection. Returns a tensor shaped like ``a``.
    """
    if weight.ndim != 2:
        raise ValueError(f"weight must be a matrix, got shape {tuple(weight.shape)}")
    d_a, d_b = weight.shape
    if a.shape[-1] != d_a or b.shape[-1] != d_b:
        raise ValueError(
            f"dimension mismatch: a has dim {a.shape[-1]}, b has dim {b.shape[-1]}, "
            f"weight is {d_a}x{d_b}"
        )
    proj = b @ weight.T
    return a * torch.tanh(a * proj)


def fuse_embeddings(
    x1: torch.Tensor,
    x2: Sequence[torch.Tensor],
    img_from_meta: Sequence[torch.Tensor],
    meta_from_img: Sequence[torch.Tensor],
    sequential: bool = False,
) -> tuple[torch.Tensor, list[torch.Tensor]]:
    """Apply residual cross-modal corrections in both directions.

    ``x1`` is the image embedding, ``x2`` the list of metadata-feature
    embeddings. Each metadata feature i contributes a correction to ``x1``
    through ``img_from_meta[i]`` and receives one from the image through
    ``meta_from_img[i]``.

    By default the update is parallel: the metadata corrections are computed
    from the *original* ``x1``, making the two directions order-independent.
    ``sequential=True`` instead feeds the already-corrected image embedding
    into the metadata updates.
    """
    n = len(x2)
    if len(img_from_meta) != n or len(meta_from_img) != n:
        raise ValueError(
            f"expected {n} correction matrices per direction, "
            f"got {len(img_from_meta)} img_from_meta and {len(meta_from_img)} meta_from_img"
        )
    x1_new = x1
    for x2_i, w in zip(x2, img_from_meta):
        x1_new = x1_new + elementwise_correction(x1, x2_i, w)
    img_source = x1_new if sequential else x1
    x2_new = [
        x2_i + elementwise_correction(x2_i, img_source, v)
        for x2_i, v in zip(x2, meta_from_img)
    ]
    return x1_new, x2_new


def concat_fused(x1: torch.Tensor, x2: Sequence[torch.Tensor]) -> torch.Tensor:
    """Concatenate the image embedding with the metadata embeddings, image first."""
    if not x2:
        return x1
    return torch.cat([x1, *x2], dim=-1)


class CrossModalFusion(nn.Module):
    """Learnable fusion block holding one correction matrix per feature and direction.

    ``img_from_meta[i]`` is (d_img, d_meta_i); ``meta_from_img[i]`` is
    (d_meta_i, d_img). Matrices are initialised uniformly in
    [-1/sqrt(fan_in), 1/sqrt(fan_in)), which keeps early training close to the
    residual identity.
    """

    def __init__(self, img_dim: int, meta_dims: Sequence[int], sequential: bool = False):
        super().__init__()
        if img_dim <= 0 or any(d <= 0 for d in meta_dims):
            raise ValueError(f"embedding dims must be positive, got img={img_dim}, meta={list(meta_dims)}")
        self.img_dim = img_dim
        self.meta_dims = list(meta_dims)
        self.sequential = sequential
        self.img_from_meta = nn.ParameterList(
            nn.Parameter(self._init_matrix(img_dim, d)) for d in meta_dims
        )
        self.meta_from_img = nn.ParameterList(
            nn.Parameter(self._init_matrix(d, img_dim)) for d in meta_dims
        )

    @staticmethod
    def _init_matrix(rows: int, cols: int) -> torch.Tensor:
        bound = 1.0 / cols ** 0.5
        return torch.empty(rows, cols).uniform_(-bound, bound)

    @property
    def n_features(self) -> int:
        return len(self.meta_dims)

    def zero_(self) -> "CrossModalFusion":
        """Zero every correction matrix in place, turning fusion into the identity."""
        with torch.no_grad():
            for p in self.parameters():
                p.zero_()
        return self

    def forward(
        self, x1: torch.Tensor, x2: Sequence[torch.Tensor]
    ) -> tuple[torch.Tensor, list[torch.Tensor]]:
        if len(x2) != self.n_features:
            raise ValueError(f"expected {self.n_features} metadata embeddings, got {len(x2)}")
        return fuse_embeddings(
            x1, x2, list(self.img_from_meta), list(self.meta_from_img), sequential=self.sequential
        )
