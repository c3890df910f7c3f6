"""Regression loss over the seven-value action.

The error is split at the position/rotation boundary and each part is
scored by its Euclidean norm, averaged over the batch. The rotation term
is scaled down (default 0.1) so a radian-scale quaternion error does not
drown metre-scale position error.

The scale constant admits a second reading, as the inverse batch size
applied to one combined norm; pass rotation_scale=None to get that
variant. Both are kept so the choice stays a one-argument switch.
"""

from __future__ import annotations

import torch

ROTATION_SCALE = 0.1


def seven_value_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    rotation_scale: float | None = ROTATION_SCALE,
) -> torch.Tensor:
    if pred.shape != target.shape or pred.shape[-1] != 7:
        raise ValueError(f"expected matching (batch, 7) tensors, got "
                         f"{tuple(pred.shape)} vs {tuple(target.shape)}")
    error = pred - target
    if rotation_scale is None:
        return error.norm(dim=-1).mean()
    position = error[..., :3].norm(dim=-1).mean()
    rotation = error[..., 3:].norm(dim=-1).mean()
    return position + rotation_scale * rotation
