"""Censored masked-node recovery: corrected objective vs naive baseline.

Generates a synthetic corpus, reveals only part of each case's masked
facts to both trainers, and scores both models against the full truth.
Prints one JSON report; see lexdiag.pu_benchmark for the construction.

Usage:
    python3 scripts/pu_vs_pn.py [--cases 50] [--corpus-seed 42] [--out report.json]
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from lexdiag.datagen import DatagenConfig, load_corpus, run_synth_datagen
from lexdiag.embeddings import TokenHashProvider
from lexdiag.pu_benchmark import run_pu_vs_pn


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cases", type=int, default=50)
    ap.add_argument("--corpus-seed", type=int, default=42)
    ap.add_argument("--mask-ratio", type=float, default=0.4)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--reveal", type=float, default=0.5)
    ap.add_argument("--censor-seed", type=int, default=0)
    ap.add_argument("--model-seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--lr", type=float, default=1e-4)
    ap.add_argument("--out", type=Path, default=None, help="also write the JSON report here")
    args = ap.parse_args()

    with tempfile.TemporaryDirectory(prefix="pu-vs-pn-") as tmp:
        corpus_dir = Path(tmp) / "corpus"
        run_synth_datagen(
            args.cases,
            DatagenConfig(seed=args.corpus_seed, mask_ratio=args.mask_ratio, n_hop=2),
            corpus_dir,
        )
        _, records = load_corpus(corpus_dir)

    provider = TokenHashProvider(dim=args.dim, seed=0)
    report = run_pu_vs_pn(
        records,
        provider,
        reveal=args.reveal,
        censor_seed=args.censor_seed,
        model_seed=args.model_seed,
        epochs=args.epochs,
        lr=args.lr,
    )
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    print(text)
    if args.out is not None:
        args.out.write_text(text + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
