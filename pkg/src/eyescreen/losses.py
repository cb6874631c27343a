"""Loss functions for the diagnosis and pretraining objectives.

All reductions are means over the batch. Classification heads are softmax
heads (a logit per class), so every task uses the same stabilised
cross-entropy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import torch

TaskMask = Union[bool, torch.Tensor]


@dataclass
class LossBreakdown:
    """Per-term decomposition of a composite loss.

    ``total`` keeps the autograd graph; ``per_task`` holds the unweighted
    per-task values (0 where masked), ``task_mask`` records which tasks
    actually contributed.
    """

    per_task: torch.Tensor
    reconstruction: torch.Tensor
    total: torch.Tensor
    task_mask: tuple[bool, ...]


def cross_entropy(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean cross entropy of integer labels under softmax(logits).

    ``logits`` is (C,) or (B, C); ``labels`` a scalar or (B,) of class
    indices. Computed via log-sum-exp for stability.
    """
    if logits.ndim == 1:
        logits = logits.unsqueeze(0)
        labels = labels.reshape(1)
    n_classes = logits.shape[-1]
    labels = labels.long()
    if labels.numel() and (labels.min() < 0 or labels.max() >= n_classes):
        bad = labels[(labels < 0) | (labels >= n_classes)][0].item()
        raise ValueError(f"label {bad} out of range for {n_classes} classes")
    log_probs = logits - torch.logsumexp(logits, dim=-1, keepdim=True)
    picked = log_probs.gather(-1, labels.unsqueeze(-1)).squeeze(-1)
    return -picked.mean()


def _masked_ce(logits: torch.Tensor, labels: torch.Tensor, mask: TaskMask) -> tuple[torch.Tensor, bool]:
    """Cross entropy restricted to unmasked samples; (0, False) if none remain."""
    zero = logits.new_zeros(())
    if not isinstance(mask, torch.Tensor):
        if not bool(mask):
            return zero, False
        return cross_entropy(logits, labels), True
    mask = mask.bool()
    if logits.ndim == 1:
        if not mask.reshape(-1)[0]:
            return zero, False
        return cross_entropy(logits, labels), True
    if not mask.any():
        return zero, False
    return cross_entropy(logits[mask], labels[mask]), True


def multitask_loss(
    per_task_logits: Sequence[torch.Tensor],
    labels: Sequence[torch.Tensor],
    mask: Optional[Sequence[TaskMask]] = None,
    weights: Optional[Sequence[float]] = None,
) -> LossBreakdown:
    """Weighted sum of per-task cross entropies.

    ``mask[t]`` may be a bool (whole task present or absent) or a per-sample
    boolean tensor for batches with heterogeneous labels. Raises if every task
    is masked, since that leaves no learning signal.
    """
    n_tasks = len(per_task_logits)
    if len(labels) != n_tasks:
        raise ValueError(f"{n_tasks} logit sets but {len(labels)} label sets")
    if mask is None:
        mask = [True] * n_tasks
    if weights is None:
        weights = [1.0] * n_tasks

    per_task = []
    active = []
    total = per_task_logits[0].new_zeros(())
    for logits, y, m, w in zip(per_task_logits, labels, mask, weights):
        ce, used = _masked_ce(logits, y, m)
        per_task.append(ce)
        active.append(used)
        if used:
            total = total + w * ce
    if not any(active):
        raise ValueError("all tasks masked: no learning signal")
    return LossBreakdown(
        per_task=torch.stack(per_task),
        reconstruction=total.new_zeros(()),
        total=total,
        task_mask=tuple(active),
    )


def pretrain_loss(
    dr_logits: torch.Tensor,
    glaucoma_logits: torch.Tensor,
    reconstruction: torch.Tensor,
    target: torch.Tensor,
    labels: Sequence[torch.Tensor],
    mask: Sequence[TaskMask] = (True, True),
    weights: Sequence[float] = (1.0, 1.0, 1.0),
) -> LossBreakdown:
    """Supervised + self-supervised pretraining objective.

    Two cross-entropy terms (one per pretraining label source, maskable per
    sample because the source datasets each label only one task) plus a pixel
    MSE between the decoder output and the input image.
    """
    if reconstruction.shape != target.shape:
        raise ValueError(
            f"reconstruction shape {tuple(reconstruction.shape)} != target shape {tuple(target.shape)}"
        )
    ce_dr, dr_used = _masked_ce(dr_logits, labels[0], mask[0])
    ce_gl, gl_used = _masked_ce(glaucoma_logits, labels[1], mask[1])
    mse = ((reconstruction - target) ** 2).mean()
    w1, w2, w3 = weights
    total = w3 * mse
    if dr_used:
        total = total + w1 * ce_dr
    if gl_used:
        total = total + w2 * ce_gl
    return LossBreakdown(
        per_task=torch.stack([ce_dr, ce_gl]),
        reconstruction=mse,
        total=total,
        task_mask=(dr_used, gl_used),
    )
