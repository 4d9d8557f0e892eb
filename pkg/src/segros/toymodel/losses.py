"""Reconstruction and i2t objectives, restricted to the plan's loss targets.

Both reconstruction losses read predictions only at ``loss_target_indices``,
so gradient is exactly zero with respect to every other prediction row; the
restriction is structural (index_select), not a soft weighting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..errors import InputError
from ..supervision import SupervisionPlan
from ..textfilter import TokenSequence

__all__ = ["LossReport", "masked_mse", "masked_nll", "i2t_loss"]


@dataclass
class LossReport:
    """Scalar losses for one step plus the per-patch breakdown.

    ``per_position`` has one entry per patch; positions outside the loss
    targets are zero. ``total == reconstruction + i2t_weight * i2t`` exactly.
    """

    reconstruction: float
    i2t: float
    total: float
    per_position: np.ndarray
    i2t_weight: float


def _target_rows(plan: SupervisionPlan) -> torch.Tensor:
    if plan.loss_target_indices.size == 0:
        raise InputError("plan has no loss targets")
    return torch.from_numpy(plan.loss_target_indices)


def _scatter(per_row: torch.Tensor, plan: SupervisionPlan) -> np.ndarray:
    out = np.zeros(plan.n_patches)
    out[plan.loss_target_indices] = per_row.detach().numpy()
    return out


def masked_mse(
    pred: torch.Tensor, target, plan: SupervisionPlan
) -> tuple[torch.Tensor, np.ndarray]:
    """Mean squared error over the loss-target rows only.

    Per-row error is the mean over embedding channels; the loss is the mean
    of those over the target rows. Returns the scalar loss tensor and a
    detached per-patch vector (zeros off-target).
    """
    target_t = torch.as_tensor(np.asarray(target, dtype=np.float64))
    if pred.shape != target_t.shape:
        raise InputError(
            f"prediction shape {tuple(pred.shape)} does not match target {tuple(target_t.shape)}"
        )
    rows = _target_rows(plan)
    diff = pred[rows] - target_t[rows]
    per_row = (diff * diff).mean(dim=1)
    return per_row.mean(), _scatter(per_row, plan)


def masked_nll(
    logits: torch.Tensor, codes, plan: SupervisionPlan
) -> tuple[torch.Tensor, np.ndarray]:
    """Mean cross-entropy over the loss-target rows only.

    ``codes`` gives the true code index for every patch; rows outside the
    targets are ignored entirely.
    """
    codes_arr = np.asarray(codes, dtype=np.int64).reshape(-1)
    if codes_arr.shape[0] != plan.n_patches:
        raise InputError(
            f"{codes_arr.shape[0]} codes for {plan.n_patches} patches"
        )
    vocab = logits.shape[1]
    if codes_arr.min() < 0 or codes_arr.max() >= vocab:
        raise InputError(f"code indices out of range for vocab {vocab}")
    rows = _target_rows(plan)
    per_row = torch.nn.functional.cross_entropy(
        logits[rows], torch.from_numpy(codes_arr[plan.loss_target_indices]), reduction="none"
    )
    return per_row.mean(), _scatter(per_row, plan)


def i2t_loss(model, image: TokenSequence, question_codes, answer_codes) -> float:
    """Mean teacher-forced NLL over the answer positions."""
    return float(model.i2t_nll(image, question_codes, answer_codes).mean())
