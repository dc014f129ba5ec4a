"""Evaluation suite: explainability metrics (USR, FCR, DIV) and textual
quality metrics (corpus-level BLEU-1/4, sentence-averaged ROUGE-1/2).

Conventions: BLEU aggregates clipped n-gram counts over the whole corpus
before combining (strict geometric mean, no smoothing, brevity penalty
from corpus-aggregated lengths); ROUGE is computed per sentence and
arithmetic-averaged. Word sequences are compared case-folded.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .decoding import generate_corpus


@dataclass(frozen=True)
class GeneratedSample:
    generated: tuple[str, ...]
    reference: tuple[str, ...]
    features: frozenset[str]


@dataclass(frozen=True)
class EvaluationReport:
    div: float
    usr: float
    fcr: float
    bleu1: float
    bleu4: float
    rouge1_precision: float
    rouge1_recall: float
    rouge1_f1: float
    rouge2_precision: float
    rouge2_recall: float
    rouge2_f1: float

    # Column order follows the evaluation table convention used throughout.
    COLUMNS = ("DIV", "USR", "FCR", "BLEU-1", "BLEU-4",
               "R1-Pre", "R1-Rec", "R1-F1", "R2-Pre", "R2-Rec", "R2-F1")

    def values(self):
        return (self.div, self.usr, self.fcr, self.bleu1, self.bleu4,
                self.rouge1_precision, self.rouge1_recall, self.rouge1_f1,
                self.rouge2_precision, self.rouge2_recall, self.rouge2_f1)

    def as_dict(self):
        return dict(zip(self.COLUMNS, self.values()))

    def format_table(self):
        width = 8
        header = "".join(c.rjust(width) for c in self.COLUMNS)
        row = "".join(f"{v:{width}.2f}" for v in self.values())
        return header + "\n" + row


def _fold(words):
    return tuple(w.lower() for w in words)


def extract_features(words, feature_set):
    """Exact word-match intersection with the dataset feature set."""
    return frozenset(_fold(words)) & frozenset(feature_set)


def usr(sequences):
    """Unique sentence ratio: exactly-distinct sequences over total."""
    if not sequences:
        raise ValueError("usr is undefined for an empty corpus")
    distinct = {_fold(s) for s in sequences}
    return len(distinct) / len(sequences)


def fcr(samples, feature_set):
    """Feature coverage ratio: distinct generated features over |F|."""
    if not feature_set:
        raise ValueError("fcr is undefined for an empty feature set")
    shown = set()
    for sample in samples:
        shown |= sample.features
    return len(shown) / len(feature_set)


def div(samples):
    """Mean pairwise feature-set intersection size (lower is better).

    Uses per-feature occurrence counts: sum_f c_f (c_f - 1) / 2 over the
    number of unordered pairs, which equals the brute-force pairwise sum.
    """
    n = len(samples)
    if n < 2:
        raise ValueError("div needs at least two samples")
    counts = Counter()
    for sample in samples:
        counts.update(sample.features)
    shared = sum(c * (c - 1) // 2 for c in counts.values())
    return shared / (n * (n - 1) / 2)


def _ngrams(words, n):
    return Counter(tuple(words[k:k + n]) for k in range(len(words) - n + 1))


def bleu_n(pairs, n):
    """Corpus-level BLEU-n (percentage) with strict geometric mean."""
    if not pairs:
        raise ValueError("bleu is undefined for an empty corpus")
    gen_len = ref_len = 0
    clipped = [0] * n
    total = [0] * n
    for generated, reference in pairs:
        generated, reference = _fold(generated), _fold(reference)
        gen_len += len(generated)
        ref_len += len(reference)
        for k in range(1, n + 1):
            gen_counts = _ngrams(generated, k)
            ref_counts = _ngrams(reference, k)
            clipped[k - 1] += sum(min(c, ref_counts[g]) for g, c in gen_counts.items())
            total[k - 1] += sum(gen_counts.values())
    if gen_len == 0 or any(t == 0 for t in total):
        return 0.0
    precisions = [c / t for c, t in zip(clipped, total)]
    if any(p == 0.0 for p in precisions):
        return 0.0
    geo = math.exp(sum(math.log(p) for p in precisions) / n)
    brevity = math.exp(min(0.0, 1.0 - ref_len / gen_len))
    return 100.0 * brevity * geo


def rouge_n(pairs, n):
    """Sentence-averaged ROUGE-n (precision, recall, F1) percentages."""
    if not pairs:
        raise ValueError("rouge is undefined for an empty corpus")
    p_sum = r_sum = f_sum = 0.0
    for generated, reference in pairs:
        gen_counts = _ngrams(_fold(generated), n)
        ref_counts = _ngrams(_fold(reference), n)
        overlap = sum(min(c, ref_counts[g]) for g, c in gen_counts.items())
        gen_total = sum(gen_counts.values())
        ref_total = sum(ref_counts.values())
        p = overlap / gen_total if gen_total else 0.0
        r = overlap / ref_total if ref_total else 0.0
        f = 2 * p * r / (p + r) if (p + r) else 0.0
        p_sum += p
        r_sum += r
        f_sum += f
    m = len(pairs)
    return (100.0 * p_sum / m, 100.0 * r_sum / m, 100.0 * f_sum / m)


def build_samples(generated_corpus, references, feature_set):
    return [
        GeneratedSample(generated=tuple(g), reference=tuple(r),
                        features=extract_features(g, feature_set))
        for g, r in zip(generated_corpus, references)
    ]


def evaluate_samples(samples, feature_set):
    """All nine metrics from already-generated samples."""
    sequences = [s.generated for s in samples]
    pairs = [(s.generated, s.reference) for s in samples]
    r1 = rouge_n(pairs, 1)
    r2 = rouge_n(pairs, 2)
    return EvaluationReport(
        div=div(samples),
        usr=usr(sequences),
        fcr=fcr(samples, feature_set),
        bleu1=bleu_n(pairs, 1),
        bleu4=bleu_n(pairs, 4),
        rouge1_precision=r1[0], rouge1_recall=r1[1], rouge1_f1=r1[2],
        rouge2_precision=r2[0], rouge2_recall=r2[1], rouge2_f1=r2[2],
    )


def evaluate(checkpoint, records, test_indices, feature_set, max_words=20):
    """Generate explanations for a test split and score them."""
    if not test_indices:
        raise ValueError("test split must be nonempty")
    model = checkpoint.build_model()
    user_index = checkpoint.user_index
    item_index = checkpoint.item_index
    test_records = [records[i] for i in test_indices]
    pairs = [(user_index[r.user_id], item_index[r.item_id]) for r in test_records]
    generated = generate_corpus(model, checkpoint.vocab, pairs, max_words=max_words)
    references = [r.explanation for r in test_records]
    samples = build_samples(generated, references, feature_set)
    return evaluate_samples(samples, feature_set)
