"""The joint model: shared embedding tables, prompt-fed decoder LM, rating
head, and trainable task weights."""

from __future__ import annotations

import torch
import torch.nn as nn

from .corpus import BOS, EOS, PAD
from .embeddings import INIT_RANGE, EmbeddingTables, assemble_prompt
from .lm import IGNORE_INDEX, DecoderLm, nll_from_logits
from .mtl import TaskWeights
from .rec_head import rating_loss


class ExplanationModel(nn.Module):
    def __init__(self, n_users, n_items, config):
        super().__init__()
        self.config = config
        self.tables = EmbeddingTables(n_users, n_items, config.hidden_dim)
        self.word_table = nn.Parameter(
            torch.empty(config.vocab_size, config.hidden_dim).uniform_(-INIT_RANGE, INIT_RANGE)
        )
        self.position_table = nn.Parameter(
            torch.empty(config.max_len, config.hidden_dim).uniform_(-INIT_RANGE, INIT_RANGE)
        )
        self.lm = DecoderLm(config)
        self.task_weights = TaskWeights()

    @property
    def dtype(self):
        return self.word_table.dtype

    @property
    def device(self):
        return self.word_table.device

    def prompt(self, user_index, item_index, token_ids):
        return assemble_prompt(user_index, item_index, token_ids, self.tables,
                               self.word_table, self.position_table,
                               max_len=self.config.max_len)

    def embed_batch(self, user_indices, item_indices, token_lists):
        """Pad and embed a batch of records.

        Returns (embedded (B, L, d), targets (B, L)) where targets carries
        IGNORE_INDEX outside each record's prediction span. Explanations are
        truncated to fit max_len with the end-of-sequence target preserved.
        Padding sits at the tail, so causal attention keeps valid positions
        independent of it.
        """
        limit = self.config.max_len - 3
        token_lists = [list(t)[:limit] for t in token_lists]
        seq_len = 3 + max(len(t) for t in token_lists)
        batch = len(token_lists)

        tokens = torch.full((batch, seq_len - 3), PAD, dtype=torch.long, device=self.device)
        targets = torch.full((batch, seq_len), IGNORE_INDEX, dtype=torch.long,
                             device=self.device)
        for b, ids in enumerate(token_lists):
            n = len(ids)
            if n:
                tokens[b, :n] = torch.tensor(ids, device=self.device)
                targets[b, 2:2 + n] = torch.tensor(ids, device=self.device)
            targets[b, 2 + n] = EOS

        users = torch.as_tensor(user_indices, dtype=torch.long, device=self.device)
        items = torch.as_tensor(item_indices, dtype=torch.long, device=self.device)
        prefix = torch.stack(
            [self.tables.user[users],
             self.tables.item[items],
             self.word_table[BOS].expand(batch, -1)],
            dim=1,
        )
        embedded = torch.cat([prefix, self.word_table[tokens]], dim=1)
        embedded = embedded + self.position_table[:seq_len]
        return embedded, targets

    def sequence_nll(self, user_indices, item_indices, token_lists):
        """Eq-structured generation loss: mean over records of per-record mean NLL."""
        embedded, targets = self.embed_batch(user_indices, item_indices, token_lists)
        logits = self.lm.logits(embedded)
        return nll_from_logits(logits, targets)

    def rating_mse(self, user_indices, item_indices, ratings):
        users = torch.as_tensor(user_indices, dtype=torch.long, device=self.device)
        items = torch.as_tensor(item_indices, dtype=torch.long, device=self.device)
        ratings = torch.as_tensor(ratings, dtype=self.dtype, device=self.device)
        return rating_loss(users, items, ratings, self.tables)

    def task_losses(self, user_indices, item_indices, ratings, token_lists):
        loss_s = self.sequence_nll(user_indices, item_indices, token_lists)
        loss_r = self.rating_mse(user_indices, item_indices, ratings)
        return loss_s, loss_r
