"""Question-selection training trace on a synthetic corpus.

Runs the full offline pipeline at small scale, then prints how the
per-case reward and sliding-window regret evolve over the training
horizon. Useful for eyeballing whether exploration settles.

Usage:
    python3 scripts/bandit_trace.py [--cases 12] [--seed 7] [--horizon 30]
"""

from __future__ import annotations

import argparse
import statistics
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from lexdiag.bandit import BanditConfig, train_purl
from lexdiag.datagen import DatagenConfig, load_corpus, run_synth_datagen
from lexdiag.embeddings import TokenHashProvider
from lexdiag.pipelines import bandit_cases_from_records, corpus_labels, pu_cases_from_records
from lexdiag.pu_model import PuModel, PuModelConfig
from lexdiag.pu_train import PuTrainConfig, train_domain_pu


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cases", type=int, default=12)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--dim", type=int, default=16)
    ap.add_argument("--pu-epochs", type=int, default=20)
    ap.add_argument("--horizon", type=int, default=30)
    ap.add_argument("--lam", type=float, default=0.5)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory(prefix="bandit-trace-") as tmp:
        corpus = Path(tmp) / "corpus"
        _, gateway = run_synth_datagen(
            args.cases, DatagenConfig(seed=args.seed, mask_ratio=0.4, n_hop=2), corpus
        )
        _, records = load_corpus(corpus)

    provider = TokenHashProvider(dim=args.dim, seed=0)
    split = pu_cases_from_records(records, provider)
    model = PuModel(
        PuModelConfig(dim=args.dim, seed=args.seed), labels=corpus_labels(records)
    )
    train_domain_pu(model, split.cases, PuTrainConfig(epochs=args.pu_epochs, seed=args.seed))

    cases = bandit_cases_from_records(records, provider)
    cfg = BanditConfig(horizon=args.horizon, lam=args.lam, seed=args.seed)
    result = train_purl(cases, model, gateway, cfg)

    n_arms = {case.case_id: len(case.candidates) for case in cases}
    print(f"trained {len(result.states)} per-case policies, horizon {args.horizon}")
    for case_id in sorted(result.rewards):
        rewards = [r.r_total for r in result.rewards[case_id]]
        regret = result.regret[case_id]
        arms = {row["arm"] for row in result.logs if row["case_id"] == case_id}
        print(
            f"{case_id}: arms visited {len(arms)}/{n_arms[case_id]}, "
            f"mean reward {statistics.fmean(rewards):.3f}, "
            f"window regret {regret[0]:.3f} -> {regret[-1]:.3f}"
        )
    pooled = [
        r.r_total for series in result.rewards.values() for r in series
    ]
    print(f"pooled mean fused reward {statistics.fmean(pooled):.3f}")


if __name__ == "__main__":
    main()
