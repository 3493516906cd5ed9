"""QA evaluation metrics: substring exact match, token F1, perturbation
success rate, abstention rate, original-vs-shuffled drop, and the
cluster/answer fidelity check for representative decoding.

Answer normalization follows the usual QA-evaluation convention: lowercase,
punctuation replaced by spaces, whitespace collapsed, and the articles
a/an/the dropped. Abstention matching is deliberately NOT normalized: the
abstention target is a trained literal string and is matched exactly after
trimming.
"""

from __future__ import annotations

import string
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import (
    MismatchedPartition,
    MissingFullAnswers,
    MissingRepresentativeAnswer,
    PositionMismatch,
)

ABSTENTION = "I don't know"

_ARTICLES = frozenset({"a", "an", "the"})
_PUNCT_TO_SPACE = str.maketrans({ch: " " for ch in string.punctuation})


@dataclass(frozen=True)
class NormalizedAnswer:
    raw: str
    tokens: tuple[str, ...]

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def normalize_answer(text):
    """Lowercase, split punctuation to spaces, drop articles, tokenize."""
    lowered = text.lower().translate(_PUNCT_TO_SPACE)
    tokens = tuple(tok for tok in lowered.split() if tok not in _ARTICLES)
    return NormalizedAnswer(raw=text, tokens=tokens)


def sub_em(prediction, gold_answers):
    """1 if any normalized gold answer is a substring of the normalized
    prediction, else 0."""
    if not gold_answers:
        raise ValueError("gold_answers must be non-empty")
    pred = normalize_answer(prediction).text
    return int(any(normalize_answer(g).text in pred for g in gold_answers))


def _f1_single(pred_tokens, gold_tokens):
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    same = sum(common.values())
    if same == 0:
        return 0.0
    precision = same / len(pred_tokens)
    recall = same / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def token_f1(prediction, gold_answers):
    """Max token-level F1 of the prediction against any gold alias."""
    if not gold_answers:
        raise ValueError("gold_answers must be non-empty")
    pred_tokens = normalize_answer(prediction).tokens
    return max(_f1_single(pred_tokens, normalize_answer(g).tokens) for g in gold_answers)


@dataclass(frozen=True)
class PermutationOutcome:
    """Correctness flags for the document-order perturbations of one query
    with the gold document pinned at ``gold_position`` (1-based slot)."""

    gold_position: int
    correct_flags: tuple[bool, ...]


def psr(outcomes, position):
    """Perturbation success rate: the pooled fraction of document-order
    perturbations at ``position`` that produced an incorrect answer."""
    if not outcomes:
        raise ValueError("outcomes must be non-empty")
    wrong = 0
    total = 0
    for out in outcomes:
        if out.gold_position != position:
            raise PositionMismatch(
                f"outcome recorded at position {out.gold_position}, expected {position}"
            )
        if not out.correct_flags:
            raise ValueError("every outcome needs at least one flag")
        wrong += sum(1 for flag in out.correct_flags if not flag)
        total += len(out.correct_flags)
    return wrong / total


def abstention_rate(predictions, abstention=ABSTENTION):
    """Fraction of predictions exactly equal to the abstention string after
    trimming surrounding whitespace (case-sensitive)."""
    if not predictions:
        raise ValueError("predictions must be non-empty")
    return sum(1 for p in predictions if p.strip() == abstention) / len(predictions)


def shuffle_drop(subem_original, subem_shuffled):
    """Score drop from the original to the shuffled document order."""
    return subem_original - subem_shuffled


def cluster_answer_fidelity(partition, bundle, reps):
    """(precision, recall, f1) of representative answers against the decoded
    answers of every state, micro-averaged over states.

    Per cluster, precision counts members whose normalized answer equals the
    representative's; recall counts how much of that answer's total support
    the cluster captured. Requires a decoded answer for all N permutations.
    """
    if bundle.answers is None or any(a is None for a in bundle.answers):
        raise MissingFullAnswers("fidelity needs a decoded answer for every permutation")
    labels = partition.assignment.labels
    if labels.shape[0] != bundle.n_states:
        raise MismatchedPartition("partition does not cover the bundle")
    if len(reps.clusters) != partition.k:
        raise MismatchedPartition("representative set does not match the partition")
    normalized = [normalize_answer(a).text for a in bundle.answers]
    counts = Counter(normalized)
    match_total = 0
    support_total = 0
    for j, rep in enumerate(reps.clusters):
        if rep.representative_answer is None:
            raise MissingRepresentativeAnswer(f"cluster {j} has no decoded answer")
        rep_answer = normalize_answer(rep.representative_answer).text
        members = np.flatnonzero(labels == j)
        match_total += sum(1 for i in members if normalized[i] == rep_answer)
        support_total += counts[rep_answer]
    precision = match_total / len(normalized)
    recall = match_total / support_total if support_total else 0.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1
