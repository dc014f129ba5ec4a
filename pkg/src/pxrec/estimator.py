"""Scikit-learn style front door for the joint model.

`ExplainableRecommender` wraps the training loop behind fit/predict so the
model composes with the wider ecosystem (get_params/set_params, cloning,
grid search over hyperparameters). X is a sequence of InteractionRecord
for fit, and a sequence of (user_id, item_id) pairs for predict/generate.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .corpus import DatasetSplit, InteractionRecord, split_dataset
from .decoding import generate_explanation
from .rec_head import clamp_rating
from .trainer import TrainConfig, train


def _check_records(X):
    records = list(X)
    if not records:
        raise ValueError("fit requires at least one interaction record")
    for r in records:
        if not isinstance(r, InteractionRecord):
            raise TypeError(f"expected InteractionRecord, got {type(r).__name__}")
    return records


class ExplainableRecommender(BaseEstimator):
    """Joint rating predictor and explanation generator.

    Parameters mirror the training configuration. With auto_split=True the
    records passed to fit are split 8:1:1 (with user/item train coverage)
    and the validation part drives early stopping; otherwise all records
    are used for training and early stopping keys on the training loss.
    """

    def __init__(self, embedding_dim=64, n_layers=2, n_heads=2, ff_dim=256,
                 max_seq_len=24, dropout=0.0, learning_rate=0.001,
                 batch_size=128, max_epochs=50, patience=5,
                 loss_form="positive", min_count=1, max_words=20,
                 auto_split=True, random_state=0):
        self.embedding_dim = embedding_dim
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.ff_dim = ff_dim
        self.max_seq_len = max_seq_len
        self.dropout = dropout
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.loss_form = loss_form
        self.min_count = min_count
        self.max_words = max_words
        self.auto_split = auto_split
        self.random_state = random_state

    def _config(self):
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            seed=self.random_state,
            loss_form=self.loss_form,
            min_count=self.min_count,
            embedding_dim=self.embedding_dim,
            n_layers=self.n_layers,
            n_heads=self.n_heads,
            ff_dim=self.ff_dim,
            max_seq_len=self.max_seq_len,
            dropout=self.dropout,
        )

    def fit(self, X, y=None):
        records = _check_records(X)
        if self.auto_split:
            split = split_dataset(records, seed=self.random_state)
        else:
            split = DatasetSplit(tuple(range(len(records))), (), (),
                                 seed=self.random_state)
        result = train(self._config(), records, split)
        self.checkpoint_ = result.checkpoint
        self.log_ = result.log
        self.model_ = result.checkpoint.build_model()
        return self

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                "this ExplainableRecommender instance is not fitted yet"
            )

    def _lookup(self, user_id, item_id):
        users = self.checkpoint_.user_index
        items = self.checkpoint_.item_index
        if user_id not in users:
            raise KeyError(f"unknown user ID {user_id!r}")
        if item_id not in items:
            raise KeyError(f"unknown item ID {item_id!r}")
        return users[user_id], items[item_id]

    def predict(self, X):
        """Clamped rating predictions for (user_id, item_id) pairs."""
        self._require_fitted()
        user_table = self.model_.tables.user.detach()
        item_table = self.model_.tables.item.detach()
        out = []
        for user_id, item_id in X:
            u, i = self._lookup(user_id, item_id)
            out.append(clamp_rating(float(user_table[u] @ item_table[i])))
        return np.asarray(out)

    def generate(self, X):
        """Generated explanation word lists for (user_id, item_id) pairs."""
        self._require_fitted()
        out = []
        for user_id, item_id in X:
            u, i = self._lookup(user_id, item_id)
            out.append(generate_explanation(self.model_, self.checkpoint_.vocab,
                                            u, i, max_words=self.max_words))
        return out

    def score(self, X, y):
        """Negative RMSE of rating predictions (higher is better)."""
        predictions = self.predict(X)
        y = np.asarray(y, dtype=float)
        return -float(np.sqrt(np.mean((predictions - y) ** 2)))
