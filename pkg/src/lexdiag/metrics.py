"""Text overlap and classification metrics.

One tokenization is used everywhere a metric or a lexical check runs:
lower-case, punctuation stripped, whitespace split. Reports carry this
descriptor so scores stay comparable across runs.

ROUGE-N is reported as an F1 (equal-weight harmonic mean of n-gram precision
and recall) rather than bare recall. BLEU-N is the arithmetic mean of the
brevity-adjusted BLEU-1..4 scores; the conventional geometric composite is
computed alongside for reference.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLabelsError

TOKENIZATION = "lowercase, punctuation stripped, whitespace split"

_PUNCT = re.compile(r"[^a-z0-9\s]+")


def tokenize(text: str) -> list[str]:
    return _PUNCT.sub(" ", text.lower()).split()


def ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def rouge_n(candidate: str, reference: str, n: int) -> float:
    """Clipped n-gram overlap, folded into an F1."""
    cand = ngrams(tokenize(candidate), n)
    ref = ngrams(tokenize(reference), n)
    total_cand = sum(cand.values())
    total_ref = sum(ref.values())
    if total_cand == 0 or total_ref == 0:
        return 0.0
    overlap = sum(min(count, ref[gram]) for gram, count in cand.items())
    return _f1(overlap / total_cand, overlap / total_ref)


def _lcs_length(a: list[str], b: list[str]) -> int:
    # One-row dynamic program; len(b)+1 ints of state.
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[len(b)]


def rouge_l(candidate: str, reference: str) -> float:
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return 0.0
    lcs = _lcs_length(cand, ref)
    return _f1(lcs / len(cand), lcs / len(ref))


@dataclass(frozen=True)
class BleuBreakdown:
    per_n: tuple[float, float, float, float]  # brevity-adjusted BLEU-1..4
    arithmetic: float
    geometric: float
    brevity_penalty: float


def bleu(candidate: str, reference: str, max_n: int = 4) -> BleuBreakdown:
    """Clipped n-gram precisions with a brevity penalty.

    Each per-n score is already multiplied by the brevity penalty. The
    arithmetic composite is the mean of the per-n scores; the geometric
    composite is the usual exp-mean-log form and is zero whenever any
    precision is zero.
    """
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        zeros = tuple(0.0 for _ in range(max_n))
        return BleuBreakdown(zeros, 0.0, 0.0, 0.0)
    if len(cand) >= len(ref):
        bp = 1.0
    else:
        bp = float(np.exp(1.0 - len(ref) / len(cand)))
    precisions = []
    for n in range(1, max_n + 1):
        cand_grams = ngrams(cand, n)
        total = sum(cand_grams.values())
        if total == 0:
            precisions.append(0.0)
            continue
        ref_grams = ngrams(ref, n)
        clipped = sum(min(c, ref_grams[g]) for g, c in cand_grams.items())
        precisions.append(clipped / total)
    per_n = tuple(bp * p for p in precisions)
    arithmetic = float(np.mean(per_n))
    if all(p > 0.0 for p in precisions):
        geometric = bp * float(np.exp(np.mean(np.log(precisions))))
    else:
        geometric = 0.0
    return BleuBreakdown(per_n, arithmetic, geometric, bp)


@dataclass(frozen=True)
class TextScore:
    rouge1: float
    rouge2: float
    rougeL: float
    bleu1: float
    bleu2: float
    bleuN: float

    def as_dict(self) -> dict[str, float]:
        return {
            "rouge1": self.rouge1,
            "rouge2": self.rouge2,
            "rougeL": self.rougeL,
            "bleu1": self.bleu1,
            "bleu2": self.bleu2,
            "bleuN": self.bleuN,
        }


def score_text(candidate: str, reference: str) -> TextScore:
    b = bleu(candidate, reference)
    return TextScore(
        rouge1=rouge_n(candidate, reference, 1),
        rouge2=rouge_n(candidate, reference, 2),
        rougeL=rouge_l(candidate, reference),
        bleu1=b.per_n[0],
        bleu2=b.per_n[1],
        bleuN=b.arithmetic,
    )


# ---------------------------------------------------------------------------
# binary classification


def classification_metrics(
    scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5
) -> dict[str, float]:
    """Threshold metrics plus rank AUC for binary labels in {0, 1}.

    Precision, recall, F1 and F2 fall back to 0.0 when their denominator is
    empty (no predicted positives, for instance). AUC needs both classes
    present and raises otherwise.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError(
            f"need both classes, got {n_pos} positive / {n_neg} negative"
        )
    predicted = scores >= threshold
    tp = int(np.sum(predicted & (labels == 1)))
    fp = int(np.sum(predicted & (labels == 0)))
    fn = int(np.sum(~predicted & (labels == 1)))
    tn = int(np.sum(~predicted & (labels == 0)))
    accuracy = (tp + tn) / len(labels)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return {
        "accuracy": accuracy,
        "precision": precision,
        "recall": recall,
        "f1": _fbeta(precision, recall, 1.0),
        "f2": _fbeta(precision, recall, 2.0),
        "auc": rank_auc(scores, labels),
    }


def _fbeta(precision: float, recall: float, beta: float) -> float:
    denom = beta * beta * precision + recall
    if denom == 0.0:
        return 0.0
    return (1.0 + beta * beta) * precision * recall / denom


def rank_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """AUC via the rank-sum statistic, with average ranks on ties."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError("rank AUC needs both classes")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=float)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        # ranks are 1-based; tied scores share the average rank
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    pos_rank_sum = float(np.sum(ranks[labels == 1]))
    u_stat = pos_rank_sum - n_pos * (n_pos + 1) / 2.0
    return u_stat / (n_pos * n_neg)
