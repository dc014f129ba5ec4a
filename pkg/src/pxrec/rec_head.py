"""Matrix-factorization rating prediction on the shared embedding tables.

Plain dot-product factorization, no bias terms. The training loss consumes
raw scores to stay smooth; clamping to the rating range happens only when
a prediction is reported.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .corpus import RATING_MAX, RATING_MIN


@dataclass(frozen=True)
class RatingPrediction:
    raw: float
    clamped: float


def clamp_rating(value):
    return min(RATING_MAX, max(RATING_MIN, value))


def predict_rating(user_index, item_index, tables):
    """Dot product of the looked-up user and item rows."""
    with torch.no_grad():
        raw = float(tables.lookup_user(user_index) @ tables.lookup_item(item_index))
    return RatingPrediction(raw=raw, clamped=clamp_rating(raw))


def predict_ratings_raw(user_indices, item_indices, tables):
    """Batched raw scores as a tensor that participates in autograd."""
    return (tables.user[user_indices] * tables.item[item_indices]).sum(dim=-1)


def rating_loss(user_indices, item_indices, ratings, tables):
    """Mean squared error between ground-truth ratings and raw predictions."""
    if len(ratings) == 0:
        raise ValueError("rating batch must be nonempty")
    raw = predict_ratings_raw(user_indices, item_indices, tables)
    return torch.mean((ratings - raw) ** 2)
