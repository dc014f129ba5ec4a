"""Greedy autoregressive explanation generation.

Starts from [user, item, bos], appends the highest-probability token at
every step, and stops on the end-of-sequence token or the word limit.
Ties are broken by the lowest vocabulary index. Only greedy decoding is
provided; the strategy argument exists as a seam for alternatives.
"""

from __future__ import annotations

import torch

from .corpus import BOS, EOS, PAD, UNK

STRATEGIES = ("greedy",)

# Tokens a degenerate model must never emit; eos stays available as the
# stop condition.
_MASKED = (BOS, PAD, UNK)


def generate_explanation(model, vocab, user_index, item_index, max_words=20,
                         strategy="greedy"):
    """Generate one explanation as a word list (bos/eos excluded)."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown decoding strategy {strategy!r}")
    if max_words < 1:
        raise ValueError("max_words must be at least 1")
    # The model can only attend to max_len positions including the prompt.
    cap = min(max_words, model.config.max_len - 3)

    ids = []
    with torch.no_grad():
        while len(ids) < cap:
            prompt = model.prompt(user_index, item_index, ids)
            hidden = model.lm(prompt.embedded.unsqueeze(0))
            # Hidden state at the last real position predicts the next word.
            logits = model.lm.out_proj(hidden[0, 2 + len(ids)])
            logits[list(_MASKED)] = float("-inf")
            # numpy argmax guarantees lowest-index tie-breaking
            nxt = int(logits.cpu().numpy().argmax())
            if nxt == EOS:
                break
            ids.append(nxt)
    return vocab.detokenize(ids)


def generate_corpus(model, vocab, pairs, max_words=20):
    """Elementwise greedy generation for a list of (user, item) index pairs."""
    return [generate_explanation(model, vocab, u, i, max_words=max_words)
            for u, i in pairs]
