"""Corpus loading, vocabulary construction, dataset splitting, and synthesis.

The on-disk corpus format is UTF-8 text, one record per line, with five
tab-separated fields:

    user_id <TAB> item_id <TAB> rating <TAB> explanation <TAB> features

The explanation is a space-separated word sequence; features is a
comma-separated list of feature words, each of which must occur in the
explanation. Lines starting with '#' are comments.
"""

from __future__ import annotations

import hashlib
import random
from collections import Counter
from dataclasses import dataclass

import numpy as np

# Reserved vocabulary indices. These are fixed by the file/checkpoint formats.
BOS, EOS, PAD, UNK = 0, 1, 2, 3
SPECIAL_TOKENS = ("<bos>", "<eos>", "<pad>", "<unk>")

RATING_MIN = 1.0
RATING_MAX = 5.0


class CorpusError(Exception):
    """Base class for corpus file problems."""


class CorpusParseError(CorpusError):
    """A line could not be parsed at all."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class CorpusValidationError(CorpusError):
    """A parsed record violates an invariant."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


@dataclass(frozen=True)
class InteractionRecord:
    """One (user, item, rating, explanation, features) sample."""

    user_id: str
    item_id: str
    rating: float
    explanation: tuple[str, ...]
    features: frozenset[str]

    def __post_init__(self):
        if not self.user_id or not self.item_id:
            raise CorpusValidationError("user_id and item_id must be nonempty")
        if not (RATING_MIN <= self.rating <= RATING_MAX):
            raise CorpusValidationError(
                f"rating {self.rating} outside [{RATING_MIN}, {RATING_MAX}]"
            )
        if len(self.explanation) < 1:
            raise CorpusValidationError("explanation must have at least one word")
        if not self.features:
            raise CorpusValidationError("feature set must be nonempty")
        missing = self.features - set(self.explanation)
        if missing:
            raise CorpusValidationError(
                f"feature words {sorted(missing)} not present in explanation"
            )


def parse_record(line, line_number=None):
    fields = line.split("\t")
    if len(fields) != 5:
        raise CorpusParseError(
            f"expected 5 tab-separated fields, got {len(fields)}", line_number
        )
    user_id, item_id, rating_s, explanation_s, features_s = fields
    try:
        rating = float(rating_s)
    except ValueError:
        raise CorpusParseError(f"unparseable rating {rating_s!r}", line_number) from None
    explanation = tuple(w.lower() for w in explanation_s.split())
    features = frozenset(f.strip().lower() for f in features_s.split(",") if f.strip())
    try:
        return InteractionRecord(user_id, item_id, rating, explanation, features)
    except CorpusValidationError as exc:
        raise CorpusValidationError(str(exc), line_number) from None


def format_record(record):
    return "\t".join(
        [
            record.user_id,
            record.item_id,
            f"{record.rating:.3f}",
            " ".join(record.explanation),
            ",".join(sorted(record.features)),
        ]
    )


def load_corpus(path):
    """Read a corpus file.

    Returns (records, feature_set) where feature_set is the union of all
    per-record feature sets. Records preserve file order.
    """
    records = []
    features = set()
    with open(path, encoding="utf-8") as fh:
        for line_number, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            record = parse_record(line, line_number)
            records.append(record)
            features |= record.features
    return records, frozenset(features)


def save_corpus(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(format_record(record) + "\n")


class Vocabulary:
    """Word-index bijection with four reserved specials at indices 0-3.

    Non-special words are ordered by corpus frequency (descending), ties
    broken lexicographically, so construction is deterministic.
    """

    def __init__(self, words):
        words = list(words)
        if len(set(words)) != len(words):
            raise ValueError("duplicate words in vocabulary")
        if any(w in SPECIAL_TOKENS for w in words):
            raise ValueError("special token markers may not appear as words")
        self._words = list(SPECIAL_TOKENS) + words
        self._index = {w: i for i, w in enumerate(self._words)}

    @classmethod
    def from_records(cls, records, min_count=1):
        counts = Counter(w for r in records for w in r.explanation)
        kept = [w for w, c in counts.items() if c >= min_count]
        kept.sort(key=lambda w: (-counts[w], w))
        return cls(kept)

    def __len__(self):
        return len(self._words)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self._words == other._words

    @property
    def words(self):
        """All stored words including the special markers, index order."""
        return tuple(self._words)

    @property
    def content_hash(self):
        digest = hashlib.sha256("\n".join(self._words).encode("utf-8"))
        return digest.hexdigest()

    def index(self, word):
        return self._index.get(word, UNK)

    def word(self, index):
        if not 0 <= index < len(self._words):
            raise IndexError(f"token index {index} outside vocabulary of size {len(self)}")
        return self._words[index]

    def __contains__(self, word):
        return word in self._index

    def tokenize(self, words):
        return [self.index(w) for w in words]

    def detokenize(self, indices):
        return [self.word(i) for i in indices]


@dataclass(frozen=True)
class DatasetSplit:
    """Train/validation/test partition of record indices."""

    train: tuple[int, ...]
    validation: tuple[int, ...]
    test: tuple[int, ...]
    seed: int

    def __post_init__(self):
        parts = [set(self.train), set(self.validation), set(self.test)]
        total = len(self.train) + len(self.validation) + len(self.test)
        if len(parts[0] | parts[1] | parts[2]) != total:
            raise ValueError("split parts overlap or contain duplicates")


def split_dataset(records, seed, ratios=(0.8, 0.1, 0.1)):
    """Random 8:1:1 split with train coverage of every user and item.

    One record per otherwise-uncovered user/item is pinned to train before
    the shuffle, so coverage dominates the ratio when records are scarce.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    n = len(records)
    rng = random.Random(seed)

    by_user: dict[str, list[int]] = {}
    by_item: dict[str, list[int]] = {}
    for idx, record in enumerate(records):
        by_user.setdefault(record.user_id, []).append(idx)
        by_item.setdefault(record.item_id, []).append(idx)

    pinned: set[int] = set()
    covered_users: set[str] = set()
    covered_items: set[str] = set()

    def pin(idx):
        pinned.add(idx)
        covered_users.add(records[idx].user_id)
        covered_items.add(records[idx].item_id)

    for user in sorted(by_user):
        if user not in covered_users:
            pin(rng.choice(by_user[user]))
    for item in sorted(by_item):
        if item not in covered_items:
            pin(rng.choice(by_item[item]))

    rest = [i for i in range(n) if i not in pinned]
    rng.shuffle(rest)

    n_val = min(int(round(n * ratios[1])), len(rest))
    n_test = min(int(round(n * ratios[2])), len(rest) - n_val)
    validation = sorted(rest[:n_val])
    test = sorted(rest[n_val:n_val + n_test])
    train = sorted(set(rest[n_val + n_test:]) | pinned)
    return DatasetSplit(tuple(train), tuple(validation), tuple(test), seed)


# Template substrate for synthetic corpora. Every template embeds at least
# one feature placeholder so generated records satisfy the feature invariant.
FEATURE_POOL = (
    "gym", "pool", "breakfast", "wifi", "parking", "bar",
    "spa", "view", "shuttle", "terrace", "sauna", "garden",
)

SINGLE_TEMPLATES = (
    "the {a} was really great",
    "loved the {a} here",
    "the {a} area had excellent facilities",
    "the {a} could have been better",
    "a clean and quiet {a}",
    "would come back just for the {a}",
)

DOUBLE_TEMPLATES = (
    "the {a} and the {b} were both excellent",
    "great {a} but the {b} was disappointing",
)


def generate_synthetic_corpus(path, n_users, n_items, n_records,
                              latent_rank=4, noise_sd=0.1, seed=0,
                              latent_spread=0.15):
    """Write a synthetic corpus file and return its records.

    Ratings are clamped-to-[1,5] dot products of rank-`latent_rank` latent
    vectors plus Gaussian noise; latents are drawn around sqrt(3/rank) so
    dot products center near 3 and the structure is exactly low-rank.
    Explanations come from fixed templates embedding each item's assigned
    feature words. Output is byte-identical for a fixed seed.
    """
    for name, value in [("n_users", n_users), ("n_items", n_items),
                        ("n_records", n_records), ("latent_rank", latent_rank)]:
        if value < 1:
            raise ValueError(f"{name} must be >= 1, got {value}")
    if noise_sd < 0 or latent_spread < 0:
        raise ValueError("noise_sd and latent_spread must be nonnegative")

    rng = np.random.default_rng(seed)
    center = (3.0 / latent_rank) ** 0.5
    user_latents = rng.normal(center, latent_spread, size=(n_users, latent_rank))
    item_latents = rng.normal(center, latent_spread, size=(n_items, latent_rank))

    item_features = []
    for _ in range(n_items):
        k = int(rng.integers(1, 3))
        picks = rng.choice(len(FEATURE_POOL), size=k, replace=False)
        item_features.append([FEATURE_POOL[int(p)] for p in sorted(picks)])

    records = []
    for r in range(n_records):
        # Cover every user and item first, then sample freely.
        if r < max(n_users, n_items):
            u, v = r % n_users, r % n_items
        else:
            u = int(rng.integers(n_users))
            v = int(rng.integers(n_items))
        raw = float(user_latents[u] @ item_latents[v])
        if noise_sd > 0:
            raw += float(rng.normal(0.0, noise_sd))
        rating = min(RATING_MAX, max(RATING_MIN, raw))

        feats = item_features[v]
        if len(feats) == 2 and rng.random() < 0.5:
            template = DOUBLE_TEMPLATES[int(rng.integers(len(DOUBLE_TEMPLATES)))]
            text = template.format(a=feats[0], b=feats[1])
            used = frozenset(feats)
        else:
            feat = feats[int(rng.integers(len(feats)))]
            template = SINGLE_TEMPLATES[int(rng.integers(len(SINGLE_TEMPLATES)))]
            text = template.format(a=feat)
            used = frozenset([feat])
        records.append(
            InteractionRecord(f"u{u}", f"i{v}", rating, tuple(text.split()), used)
        )

    save_corpus(records, path)
    return records
