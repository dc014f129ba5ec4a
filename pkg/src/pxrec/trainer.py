"""Joint training loop, validation, checkpoint persistence, and a
finite-difference gradient checker.

Checkpoint file layout: magic bytes "PXR1", an 8-byte little-endian length,
a UTF-8 JSON metadata document (format version, training config, vocabulary,
user/item ID lists, tensor manifest with shapes), then the raw little-endian
float32 tensor payloads in manifest order.
"""

from __future__ import annotations

import copy
import json
import math
import random
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .corpus import Vocabulary
from .lm import LmConfig
from .model import ExplanationModel

CHECKPOINT_MAGIC = b"PXR1"
CHECKPOINT_VERSION = 1

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class TrainingError(Exception):
    """Raised when the training loop cannot continue."""


class CheckpointError(Exception):
    """Raised for unreadable, corrupted, or unsupported checkpoint files."""


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 128
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    loss_form: str = "positive"
    # Constants used only when loss_form == "fixed"; setting one to zero
    # disables that task entirely (e.g. rating-only training).
    fixed_weight_s: float = 1.0
    fixed_weight_r: float = 1.0
    # Multiplier applied to the rating loss before combination; useful for
    # task-imbalance experiments.
    rating_loss_scale: float = 1.0
    min_count: int = 1
    embedding_dim: int = 64
    n_layers: int = 2
    n_heads: int = 2
    ff_dim: int = 256
    max_seq_len: int = 24
    dropout: float = 0.0
    double_precision: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")

    def lm_config(self, vocab_size):
        return LmConfig(
            vocab_size=vocab_size,
            hidden_dim=self.embedding_dim,
            n_layers=self.n_layers,
            n_heads=self.n_heads,
            ff_dim=self.ff_dim,
            max_len=self.max_seq_len,
            dropout=self.dropout,
        )

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class Checkpoint:
    config: TrainConfig
    vocab: Vocabulary
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    tensors: dict[str, np.ndarray]
    best_val_loss: float | None
    epoch: int
    version: int = CHECKPOINT_VERSION

    @property
    def user_index(self):
        return {u: k for k, u in enumerate(self.user_ids)}

    @property
    def item_index(self):
        return {i: k for k, i in enumerate(self.item_ids)}

    def build_model(self):
        dtype = torch.float64 if self.config.double_precision else torch.float32
        model = ExplanationModel(
            len(self.user_ids), len(self.item_ids),
            self.config.lm_config(len(self.vocab)),
        ).to(dtype)
        state = {name: torch.from_numpy(arr.copy()).to(dtype)
                 for name, arr in self.tensors.items()}
        model.load_state_dict(state)
        model.eval()
        return model


def checkpoint_from_model(model, config, vocab, user_ids, item_ids,
                          best_val_loss, epoch):
    tensors = {
        name: param.detach().cpu().to(torch.float32).numpy().copy()
        for name, param in model.state_dict().items()
    }
    return Checkpoint(config=config, vocab=vocab, user_ids=tuple(user_ids),
                      item_ids=tuple(item_ids), tensors=tensors,
                      best_val_loss=best_val_loss, epoch=epoch)


def save_checkpoint(checkpoint, path):
    manifest = []
    payloads = []
    offset = 0
    for name in sorted(checkpoint.tensors):
        arr = np.ascontiguousarray(checkpoint.tensors[name], dtype="<f4")
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset,
                         "nbytes": arr.nbytes})
        payloads.append(arr.tobytes())
        offset += arr.nbytes
    meta = {
        "version": checkpoint.version,
        "config": asdict(checkpoint.config),
        "vocab": list(checkpoint.vocab.words[4:]),
        "users": list(checkpoint.user_ids),
        "items": list(checkpoint.item_ids),
        "best_val_loss": checkpoint.best_val_loss,
        "epoch": checkpoint.epoch,
        "tensors": manifest,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for payload in payloads:
            fh.write(payload)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("bad magic bytes: not a checkpoint file")
    if len(data) < 12:
        raise CheckpointError("truncated checkpoint header")
    (meta_len,) = struct.unpack("<Q", data[4:12])
    if len(data) < 12 + meta_len:
        raise CheckpointError("truncated metadata block")
    try:
        meta = json.loads(data[12:12 + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable metadata: {exc}") from None
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {meta.get('version')!r}; "
            f"expected {CHECKPOINT_VERSION}"
        )
    payload = data[12 + meta_len:]
    expected = sum(entry["nbytes"] for entry in meta["tensors"])
    if len(payload) != expected:
        raise CheckpointError(
            f"payload length {len(payload)} does not match manifest ({expected})"
        )
    tensors = {}
    for entry in meta["tensors"]:
        start, end = entry["offset"], entry["offset"] + entry["nbytes"]
        arr = np.frombuffer(payload[start:end], dtype="<f4").reshape(entry["shape"])
        tensors[entry["name"]] = arr.copy()
    return Checkpoint(
        config=TrainConfig.from_dict(meta["config"]),
        vocab=Vocabulary(meta["vocab"]),
        user_ids=tuple(meta["users"]),
        item_ids=tuple(meta["items"]),
        tensors=tensors,
        best_val_loss=meta["best_val_loss"],
        epoch=meta["epoch"],
    )


def _index_records(records):
    user_ids = sorted({r.user_id for r in records})
    item_ids = sorted({r.item_id for r in records})
    return user_ids, item_ids


def _encode(records, vocab, user_index, item_index):
    users = [user_index[r.user_id] for r in records]
    items = [item_index[r.item_id] for r in records]
    ratings = [r.rating for r in records]
    tokens = [vocab.tokenize(r.explanation) for r in records]
    return users, items, ratings, tokens


def _combine(model, config, loss_s, loss_r):
    loss_r = loss_r * config.rating_loss_scale
    return model.task_weights.combine(
        loss_s, loss_r, config.loss_form,
        fixed_s=config.fixed_weight_s, fixed_r=config.fixed_weight_r,
    )


def validate(model, config, records, vocab, user_index, item_index,
             chunk_size=256):
    """Joint validation loss plus components; None for an empty set."""
    if not records:
        return None
    users, items, ratings, tokens = _encode(records, vocab, user_index, item_index)
    total_s = total_r = 0.0
    with torch.no_grad():
        for start in range(0, len(records), chunk_size):
            sl = slice(start, start + chunk_size)
            loss_s, loss_r = model.task_losses(users[sl], items[sl],
                                               ratings[sl], tokens[sl])
            n = len(ratings[sl])
            total_s += float(loss_s) * n
            total_r += float(loss_r) * n
        loss_s = total_s / len(records)
        loss_r = total_r / len(records)
        joint = float(_combine(model, config, loss_s, loss_r))
    return {"joint": joint, "loss_s": loss_s, "loss_r": loss_r}


class EarlyStopper:
    """Strict-improvement patience counter over a monitored loss."""

    def __init__(self, patience):
        self.patience = patience
        self.best = math.inf
        self.best_step = 0
        self._step = 0
        self._stale = 0

    def update(self, monitor):
        """Record one epoch's monitor value; returns True on improvement."""
        self._step += 1
        if monitor < self.best:
            self.best = monitor
            self.best_step = self._step
            self._stale = 0
            return True
        self._stale += 1
        return False

    @property
    def should_stop(self):
        return self._stale >= self.patience


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: list[dict] = field(default_factory=list)


def train(config, records, split, vocab=None):
    """Optimize the joint loss over all parameters including task weights.

    Returns the checkpoint of the best-validation-loss epoch and a
    per-epoch log. Early stopping: strict-improvement patience on the
    validation joint loss (training loss if the validation set is empty).
    """
    if vocab is None:
        train_records = [records[i] for i in split.train]
        vocab = Vocabulary.from_records(train_records, min_count=config.min_count)
    user_ids, item_ids = _index_records(records)
    user_index = {u: k for k, u in enumerate(user_ids)}
    item_index = {i: k for k, i in enumerate(item_ids)}

    torch.manual_seed(config.seed)
    dtype = torch.float64 if config.double_precision else torch.float32
    model = ExplanationModel(len(user_ids), len(item_ids),
                             config.lm_config(len(vocab))).to(dtype)

    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate,
                                 betas=ADAM_BETAS, eps=ADAM_EPS)

    train_records = [records[i] for i in split.train]
    val_records = [records[i] for i in split.validation]
    users, items, ratings, tokens = _encode(train_records, vocab,
                                            user_index, item_index)

    rng = random.Random(config.seed)
    log = []
    stopper = EarlyStopper(config.patience)
    best_state = None
    best_val = None

    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order = list(range(len(train_records)))
        rng.shuffle(order)
        sum_s = sum_r = 0.0
        for batch_idx, start in enumerate(range(0, len(order), config.batch_size)):
            idx = order[start:start + config.batch_size]
            loss_s, loss_r = model.task_losses(
                [users[i] for i in idx], [items[i] for i in idx],
                [ratings[i] for i in idx], [tokens[i] for i in idx],
            )
            joint = _combine(model, config, loss_s, loss_r)
            if not torch.isfinite(joint):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {batch_idx}"
                )
            optimizer.zero_grad()
            joint.backward()
            optimizer.step()
            model.task_weights.clamp_away_from_zero()
            sum_s += float(loss_s.detach()) * len(idx)
            sum_r += float(loss_r.detach()) * len(idx)

        model.eval()
        epoch_s = sum_s / len(train_records)
        epoch_r = sum_r / len(train_records)
        with torch.no_grad():
            train_joint = float(_combine(model, config, epoch_s, epoch_r))
        val = validate(model, config, val_records, vocab, user_index, item_index)
        log.append({
            "epoch": epoch,
            "train_loss": train_joint,
            "val_loss": None if val is None else val["joint"],
            "L_S": epoch_s,
            "L_R": epoch_r,
            "lambda_S": float(model.task_weights.weight_s.detach()),
            "lambda_R": float(model.task_weights.weight_r.detach()),
        })

        monitor = train_joint if val is None else val["joint"]
        if stopper.update(monitor):
            best_state = copy.deepcopy(model.state_dict())
            best_val = None if val is None else val["joint"]
        elif stopper.should_stop:
            break

    model.load_state_dict(best_state)
    checkpoint = checkpoint_from_model(model, config, vocab, user_ids, item_ids,
                                       best_val, stopper.best_step)
    return TrainResult(checkpoint=checkpoint, log=log)


def write_epoch_log(log, path):
    with open(path, "w", encoding="utf-8") as fh:
        for entry in log:
            fh.write(json.dumps(entry) + "\n")


def gradient_check(model, loss_fn, epsilon=1e-5):
    """Compare autograd gradients against central finite differences.

    `loss_fn` must be a zero-argument callable returning a scalar tensor
    computed from the model's current parameters. The model must be in
    double precision. Returns per-parameter-group max relative error.
    """
    params = dict(model.named_parameters())
    for name, p in params.items():
        if p.dtype != torch.float64:
            raise ValueError(f"gradient_check requires float64 parameters ({name})")

    model.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {name: p.grad.detach().clone() if p.grad is not None
                else torch.zeros_like(p) for name, p in params.items()}

    report = {}
    with torch.no_grad():
        for name, p in params.items():
            flat = p.view(-1)
            grad = analytic[name].view(-1)
            worst = 0.0
            for k in range(flat.numel()):
                orig = float(flat[k])
                flat[k] = orig + epsilon
                hi = float(loss_fn())
                flat[k] = orig - epsilon
                lo = float(loss_fn())
                flat[k] = orig
                fd = (hi - lo) / (2.0 * epsilon)
                a = float(grad[k])
                denom = max(abs(a), abs(fd))
                if denom < 1e-8:
                    err = abs(a - fd)
                else:
                    err = abs(a - fd) / denom
                worst = max(worst, err)
            report[name] = worst
    return report
