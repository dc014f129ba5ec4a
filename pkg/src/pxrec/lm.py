"""Small decoder-only transformer with causal masking.

Pre-norm blocks with GELU feed-forward, learned absolute positions
(owned by the joint model), and a linear vocabulary projection followed
by softmax for next-word prediction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

# Floor applied inside -log so exact-zero probabilities cannot produce inf.
PROB_FLOOR = 1e-12

# Targets matrix entries at non-predicting positions.
IGNORE_INDEX = -1


@dataclass
class LmConfig:
    vocab_size: int
    hidden_dim: int = 64
    n_layers: int = 2
    n_heads: int = 2
    ff_dim: int = 256
    max_len: int = 24
    dropout: float = 0.0

    def __post_init__(self):
        if self.hidden_dim % self.n_heads != 0:
            raise ValueError("hidden_dim must be divisible by n_heads")
        if self.max_len < 3:
            raise ValueError("max_len must be at least 3")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


class CausalSelfAttention(nn.Module):
    def __init__(self, config):
        super().__init__()
        self.n_heads = config.n_heads
        self.head_dim = config.hidden_dim // config.n_heads
        self.qkv = nn.Linear(config.hidden_dim, 3 * config.hidden_dim)
        self.proj = nn.Linear(config.hidden_dim, config.hidden_dim)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, x):
        b, s, d = x.shape
        q, k, v = self.qkv(x).split(d, dim=2)
        q = q.view(b, s, self.n_heads, self.head_dim).transpose(1, 2)
        k = k.view(b, s, self.n_heads, self.head_dim).transpose(1, 2)
        v = v.view(b, s, self.n_heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        mask = torch.triu(torch.ones(s, s, dtype=torch.bool, device=x.device), 1)
        scores = scores.masked_fill(mask, float("-inf"))
        attn = self.dropout(torch.softmax(scores, dim=-1))
        out = (attn @ v).transpose(1, 2).reshape(b, s, d)
        return self.proj(out)


class Block(nn.Module):
    def __init__(self, config):
        super().__init__()
        self.ln1 = nn.LayerNorm(config.hidden_dim)
        self.attn = CausalSelfAttention(config)
        self.ln2 = nn.LayerNorm(config.hidden_dim)
        self.ff = nn.Sequential(
            nn.Linear(config.hidden_dim, config.ff_dim),
            nn.GELU(),
            nn.Linear(config.ff_dim, config.hidden_dim),
            nn.Dropout(config.dropout),
        )

    def forward(self, x):
        x = x + self.attn(self.ln1(x))
        x = x + self.ff(self.ln2(x))
        return x


class DecoderLm(nn.Module):
    """Stack of causal blocks plus the vocabulary projection (W, b)."""

    def __init__(self, config):
        super().__init__()
        self.config = config
        self.blocks = nn.ModuleList(Block(config) for _ in range(config.n_layers))
        self.ln_final = nn.LayerNorm(config.hidden_dim)
        self.out_proj = nn.Linear(config.hidden_dim, config.vocab_size)

    def forward(self, x):
        """Map embedded inputs (batch, seq, dim) to hidden states of the same shape."""
        if x.shape[-2] > self.config.max_len:
            raise ValueError(
                f"sequence length {x.shape[-2]} exceeds maximum {self.config.max_len}"
            )
        for block in self.blocks:
            x = block(x)
        return self.ln_final(x)

    def logits(self, x):
        return self.out_proj(self.forward(x))


def project_vocab(hidden, lm):
    """softmax(W h + b): the next-token distribution for one hidden state."""
    return torch.softmax(lm.out_proj(hidden), dim=-1)


def nll_from_logits(logits, targets):
    """Sequence negative log-likelihood with the paper-style double mean.

    `targets` is (batch, seq) with IGNORE_INDEX at non-predicting positions.
    Each record is averaged over its own target count first, then the batch
    is averaged, so variable-length records carry equal weight.
    """
    logp = F.log_softmax(logits, dim=-1)
    logp = logp.clamp(min=math.log(PROB_FLOOR))
    mask = targets != IGNORE_INDEX
    counts = mask.sum(dim=-1)
    if (counts == 0).any():
        raise ValueError("every record in the batch needs at least one target")
    safe = targets.clamp(min=0)
    picked = logp.gather(-1, safe.unsqueeze(-1)).squeeze(-1)
    per_record = (-picked * mask).sum(dim=-1) / counts
    return per_record.mean()
