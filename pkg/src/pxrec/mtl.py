"""Multi-task loss combination: fixed weights, homoscedastic uncertainty,
and the positivity-corrected variant used for training.

The uncertainty form can go negative when a weight drifts toward zero
(its log term diverges to -inf); the corrected form replaces log(lambda)
with log(1 + lambda^2) so the combined loss stays nonnegative whenever
both task losses are nonnegative. All three functions accept plain floats
or scalar tensors.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn

# Weights are clipped away from zero after every optimizer step to avoid
# the 1/lambda^2 singularity.
MIN_ABS_WEIGHT = 1e-4

LOSS_FORMS = ("fixed", "kendall", "positive")


def _log(x):
    return torch.log(x) if isinstance(x, torch.Tensor) else math.log(x)


def _log1p(x):
    return torch.log1p(x) if isinstance(x, torch.Tensor) else math.log1p(x)


def _check_nonzero(*weights):
    for w in weights:
        value = float(w.detach()) if isinstance(w, torch.Tensor) else float(w)
        if value == 0.0:
            raise ValueError("task weight must be nonzero")


def joint_loss_fixed(loss_s, loss_r, weight_s=1.0, weight_r=1.0):
    """Static weighted sum of the two task losses."""
    return weight_r * loss_r + weight_s * loss_s


def joint_loss_kendall(loss_s, loss_r, weight_s, weight_r):
    """Homoscedastic-uncertainty combination: L/(2w^2) + log|w| per task.

    Can be negative when |w| < 1, which is the pathology the corrected
    form removes.
    """
    _check_nonzero(weight_s, weight_r)
    total = 0.0
    for loss, w in ((loss_s, weight_s), (loss_r, weight_r)):
        total = total + loss / (2.0 * w ** 2) + _log(abs(w))
    return total


def joint_loss_positive(loss_s, loss_r, weight_s, weight_r):
    """Positivity-corrected combination: L/(2w^2) + log(1 + w^2) per task.

    Nonnegative for any nonzero real weights whenever both losses are >= 0.
    """
    _check_nonzero(weight_s, weight_r)
    total = 0.0
    for loss, w in ((loss_s, weight_s), (loss_r, weight_r)):
        total = total + loss / (2.0 * w ** 2) + _log1p(w ** 2)
    return total


def positive_weight_grad(loss, weight):
    """d/dw of one task's term in the positivity-corrected loss."""
    return -loss / weight ** 3 + 2.0 * weight / (1.0 + weight ** 2)


class TaskWeights(nn.Module):
    """Trainable uncertainty weights for the two tasks, initialized to 1."""

    def __init__(self):
        super().__init__()
        self.weight_s = nn.Parameter(torch.tensor(1.0))
        self.weight_r = nn.Parameter(torch.tensor(1.0))

    @torch.no_grad()
    def clamp_away_from_zero(self, min_abs=MIN_ABS_WEIGHT):
        for w in (self.weight_s, self.weight_r):
            if w.abs() < min_abs:
                w.copy_(torch.where(w < 0, torch.full_like(w, -min_abs),
                                    torch.full_like(w, min_abs)))

    def combine(self, loss_s, loss_r, form, fixed_s=1.0, fixed_r=1.0):
        if form == "fixed":
            return joint_loss_fixed(loss_s, loss_r, fixed_s, fixed_r)
        if form == "kendall":
            return joint_loss_kendall(loss_s, loss_r, self.weight_s, self.weight_r)
        if form == "positive":
            return joint_loss_positive(loss_s, loss_r, self.weight_s, self.weight_r)
        raise ValueError(f"unknown loss form {form!r}; expected one of {LOSS_FORMS}")
