"""Masked-node recovery benchmark comparing the corrected objective to a
naive positive-negative baseline.

Mid-consultation the domain scorer faces a censored view of every case:
facts confirmed so far are known positives, while the missing facts still
to be asked about sit indistinguishably inside the unlabeled candidate
pool. This benchmark reproduces that condition offline. Each case reveals
only part of its masked-fact set as positive supervision; the rest stays
hidden among the unlabeled nodes. Both objectives train on the identical
censored batches, then both are scored against the full ground truth.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .datagen import CaseRecord
from .embeddings import EmbeddingProvider
from .errors import LexdiagError
from .graph import fact
from .metrics import classification_metrics
from .pu_model import PuModel, PuModelConfig
from .pu_train import (
    PuTrainCase,
    PuTrainConfig,
    evaluate_case_scores,
    train_domain_pn,
    train_domain_pu,
)

__all__ = [
    "BenchmarkReport",
    "censored_cases",
    "run_pu_vs_pn",
    "truth_cases",
]


@dataclass(frozen=True)
class BenchmarkReport:
    """Outcome of one censored-recovery comparison."""

    pu: dict[str, float]
    pn: dict[str, float]
    margin: float  # pu F1 minus pn F1
    prior: float  # pooled positive fraction among scored nodes
    cases: int
    revealed: int  # positives shown to both trainers
    hidden: int  # positives left inside the unlabeled pools
    seconds: float

    def to_dict(self) -> dict[str, object]:
        return {
            "cases": self.cases,
            "revealed": self.revealed,
            "hidden": self.hidden,
            "prior": self.prior,
            "pu": dict(self.pu),
            "pn": dict(self.pn),
            "margin": self.margin,
            "seconds": self.seconds,
        }


def _usable(record: CaseRecord) -> bool:
    # The censored split needs one revealed and one hidden positive per
    # case, and the truth split needs a nonempty negative side.
    return (
        len(record.removed) >= 2
        and bool(set(record.candidates) - set(record.removed))
    )


def _case(record: CaseRecord, provider: EmbeddingProvider, positives: list[str]) -> PuTrainCase:
    unlabeled = sorted(set(record.candidates) - set(positives))
    return PuTrainCase(
        case_id=record.case_id,
        graph=record.subgraph,
        h_text=provider.embed_text(record.reconstructed_description),
        positives=tuple(fact(label) for label in sorted(positives)),
        unlabeled=tuple(fact(label) for label in unlabeled),
    )


def truth_cases(records: list[CaseRecord], provider: EmbeddingProvider) -> list[PuTrainCase]:
    """Fully labeled view: every masked fact marked positive."""
    return [_case(r, provider, sorted(r.removed)) for r in records if _usable(r)]


def censored_cases(
    records: list[CaseRecord],
    provider: EmbeddingProvider,
    *,
    reveal: float = 0.5,
    seed: int = 0,
) -> list[PuTrainCase]:
    """Censored view: a seeded fraction of each case's masked facts is
    revealed as positive; the remainder joins the unlabeled pool.

    Always reveals at least one fact and always hides at least one, so
    both supervision regimes stay representable in every case.
    """
    if not 0.0 < reveal < 1.0:
        raise LexdiagError(f"reveal fraction must lie strictly inside (0, 1), got {reveal}")
    rng = np.random.default_rng(seed)
    out: list[PuTrainCase] = []
    for record in records:
        if not _usable(record):
            continue
        removed = sorted(record.removed)
        k = min(max(1, round(reveal * len(removed))), len(removed) - 1)
        revealed = sorted(rng.choice(removed, size=k, replace=False).tolist())
        out.append(_case(record, provider, revealed))
    if not out:
        raise LexdiagError("no case offers at least two masked facts plus a negative candidate")
    return out


def run_pu_vs_pn(
    records: list[CaseRecord],
    provider: EmbeddingProvider,
    *,
    reveal: float = 0.5,
    censor_seed: int = 0,
    model_seed: int = 0,
    epochs: int = 100,
    lr: float = 1e-4,
) -> BenchmarkReport:
    """Train both objectives on the same censored batches and score them
    on the full truth.

    The corrected objective receives the pooled ground-truth positive
    fraction as its class prior: in deployment that quantity is the one
    thing the masking procedure fixes by construction.
    """
    start = time.monotonic()
    usable = [r for r in records if _usable(r)]
    truth = truth_cases(usable, provider)
    censored = censored_cases(usable, provider, reveal=reveal, seed=censor_seed)

    n_pos = sum(len(c.positives) for c in truth)
    n_all = sum(len(c.positives) + len(c.unlabeled) for c in truth)
    prior = n_pos / n_all
    revealed = sum(len(c.positives) for c in censored)

    labels = sorted({node.label for r in usable for node in r.subgraph.nodes})
    dim = provider.dim

    pu_model = PuModel(PuModelConfig(dim=dim, seed=model_seed), labels=labels)
    train_domain_pu(
        pu_model, censored, PuTrainConfig(epochs=epochs, lr=lr, seed=model_seed, prior=prior)
    )
    pn_model = PuModel(PuModelConfig(dim=dim, seed=model_seed), labels=labels)
    train_domain_pn(
        pn_model, censored, PuTrainConfig(epochs=epochs, lr=lr, seed=model_seed)
    )

    pu_scores, y = evaluate_case_scores(pu_model, truth)
    pn_scores, _ = evaluate_case_scores(pn_model, truth)
    pu = classification_metrics(pu_scores, y)
    pn = classification_metrics(pn_scores, y)
    return BenchmarkReport(
        pu=pu,
        pn=pn,
        margin=pu["f1"] - pn["f1"],
        prior=prior,
        cases=len(truth),
        revealed=revealed,
        hidden=n_pos - revealed,
        seconds=time.monotonic() - start,
    )
