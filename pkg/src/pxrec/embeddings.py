"""User/item embedding tables and continuous-prompt assembly.

The same tables feed both the prompt path (as the first two positions of
the language-model input) and the rating head (as factorization factors),
so gradients from both tasks accumulate on the same rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .corpus import BOS, EOS

INIT_RANGE = 0.1


class EmbeddingTables(nn.Module):
    """The user matrix and item matrix, both of width `dim`.

    `dim` must equal the language model's hidden width: rows are prepended
    to the token embedding sequence without any adapter projection.
    """

    def __init__(self, n_users, n_items, dim):
        super().__init__()
        self.n_users = n_users
        self.n_items = n_items
        self.dim = dim
        self.user = nn.Parameter(torch.empty(n_users, dim).uniform_(-INIT_RANGE, INIT_RANGE))
        self.item = nn.Parameter(torch.empty(n_items, dim).uniform_(-INIT_RANGE, INIT_RANGE))

    def lookup_user(self, index):
        """Row `index` of the user table, i.e. U^T applied to a one-hot vector."""
        if not 0 <= index < self.n_users:
            raise IndexError(f"user index {index} outside [0, {self.n_users})")
        return self.user[index]

    def lookup_item(self, index):
        if not 0 <= index < self.n_items:
            raise IndexError(f"item index {index} outside [0, {self.n_items})")
        return self.item[index]


@dataclass
class PromptSequence:
    """An embedded input sequence [u, i, bos, e_1..e_n] with its targets.

    `embedded` has shape (length, dim) and already includes positional
    vectors. `targets` holds the teacher-forcing target for each position
    starting at the bos slot: [e_1, ..., e_n, eos].
    """

    embedded: torch.Tensor
    targets: tuple[int, ...]

    @property
    def length(self):
        return self.embedded.shape[0]


def assemble_prompt(user_index, item_index, token_ids, tables, word_table,
                    position_table, max_len=None):
    """Build one training sequence for a (user, item, explanation) record.

    Position 1 is the user vector, position 2 the item vector, position 3
    the begin-of-sequence embedding, then the explanation words. Sequences
    longer than `max_len` are truncated with the end-of-sequence target kept.
    """
    token_ids = list(token_ids)
    limit = position_table.shape[0] if max_len is None else max_len
    if len(token_ids) + 3 > limit:
        token_ids = token_ids[:limit - 3]
    u = tables.lookup_user(user_index)
    v = tables.lookup_item(item_index)
    rows = torch.stack([u, v, word_table[BOS]] + [word_table[t] for t in token_ids])
    embedded = rows + position_table[: rows.shape[0]]
    targets = tuple(token_ids) + (EOS,)
    return PromptSequence(embedded=embedded, targets=targets)
