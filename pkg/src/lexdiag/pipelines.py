"""Glue between the corpus on disk and the training/serving entry points.

Each helper takes typed config sections plus loaded corpus records and
returns the inputs the model layers expect. The CLI and the HTTP service
both go through here, so a checkpoint trained from the command line is
byte-compatible with what the service loads.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bandit import (
    BanditConfig,
    BanditTrainCase,
    PurlResult,
    load_bandits,
    save_bandits,
    train_purl,
    write_training_log,
)
from .config import AppConfig
from .datagen import REVIEW_APPROVED, CaseRecord, load_corpus, records_in_split
from .embeddings import EmbeddingProvider, make_provider
from .errors import CheckpointError, ConfigError, LexdiagError
from .gateway import HttpLlmBackend, LlmGateway, ScriptedMockBackend
from .graph import FactRuleGraph, fact, graph_from_dict
from .pu_model import PuModel, PuModelConfig
from .pu_train import PuTrainCase, PuTrainConfig, PuTrainResult, train_domain_pu
from .session import ModelBundle
from .util import read_json

PU_CHECKPOINT = "pu_model.npz"
BANDIT_ARCHIVE = "bandits.npz"
BANDIT_LOG = "bandit_log.jsonl"


def provider_from_config(config: AppConfig) -> EmbeddingProvider:
    emb = config.embedding
    settings: dict = {
        "provider": emb.provider,
        "dim": emb.dim,
        "seed": emb.seed,
        "timeout": emb.timeout,
        "retries": emb.retries,
    }
    if emb.provider == "http":
        if not emb.url:
            raise ConfigError(["embedding.url: required for the http provider"])
        settings["url"] = emb.url
    return make_provider(settings)


def gateway_from_config(config: AppConfig) -> LlmGateway:
    gw = config.gateway
    if gw.backend == "scripted-mock":
        if not gw.fixtures:
            raise ConfigError(
                ["gateway.fixtures: required for the scripted-mock backend"]
            )
        return LlmGateway(ScriptedMockBackend.from_file(gw.fixtures))
    if not gw.url:
        raise ConfigError(["gateway.url: required for the http backend"])
    backend = HttpLlmBackend(
        url=gw.url,
        token_env=gw.token_env,
        temperature=gw.temperature,
        top_p=gw.top_p,
        max_tokens=gw.max_tokens,
        timeout=gw.timeout,
        retries=gw.retries,
    )
    return LlmGateway(backend)


# ---------------------------------------------------------------------------
# corpus -> training cases


def _require(record: CaseRecord, *fields: str) -> None:
    missing = [f for f in fields if not getattr(record, f)]
    if missing:
        raise LexdiagError(
            f"record {record.case_id!r} is missing {', '.join(missing)}"
        )


@dataclass(frozen=True)
class PuCaseSplit:
    """Training cases plus the ids that could not form a labeled batch."""

    cases: list[PuTrainCase]
    skipped: tuple[str, ...]


def pu_cases_from_records(
    records: list[CaseRecord], provider: EmbeddingProvider
) -> PuCaseSplit:
    """Masked facts become positives; the other candidates stay unlabeled.

    A record whose candidate set adds nothing beyond its own masked facts
    has no unlabeled side and is reported in ``skipped`` rather than
    silently dropped.
    """
    cases: list[PuTrainCase] = []
    skipped: list[str] = []
    for record in sorted(records, key=lambda r: r.case_id):
        _require(record, "subgraph", "reconstructed_description", "candidates")
        positives = tuple(fact(label) for label in sorted(record.removed))
        unlabeled = tuple(
            fact(label)
            for label in sorted(set(record.candidates) - set(record.removed))
        )
        if not positives or not unlabeled:
            skipped.append(record.case_id)
            continue
        cases.append(
            PuTrainCase(
                case_id=record.case_id,
                graph=record.subgraph,
                h_text=provider.embed_text(record.reconstructed_description),
                positives=positives,
                unlabeled=unlabeled,
            )
        )
    return PuCaseSplit(cases=cases, skipped=tuple(skipped))


def bandit_cases_from_records(
    records: list[CaseRecord], provider: EmbeddingProvider
) -> list[BanditTrainCase]:
    cases: list[BanditTrainCase] = []
    for record in sorted(records, key=lambda r: r.case_id):
        _require(
            record,
            "subgraph",
            "reconstructed_description",
            "reconstructed_view",
            "candidates",
            "questions",
        )
        cases.append(
            BanditTrainCase(
                case_id=record.case_id,
                graph=record.subgraph,
                h_text=provider.embed_text(record.reconstructed_description),
                candidates=tuple(fact(label) for label in record.candidates),
                base_view=record.reconstructed_view,
                questions=record.questions,
            )
        )
    return cases


def corpus_labels(records: list[CaseRecord]) -> list[str]:
    """Every node label seen anywhere in the corpus, sorted."""
    labels = {
        node.label
        for record in records
        if record.graph is not None
        for node in record.graph.nodes
    }
    return sorted(labels)


# ---------------------------------------------------------------------------
# pipeline stages


def train_pu_stage(
    config: AppConfig,
    records: list[CaseRecord],
    provider: EmbeddingProvider,
    *,
    epochs: int | None = None,
    seed: int | None = None,
) -> tuple[PuTrainResult, PuCaseSplit]:
    split = pu_cases_from_records(records, provider)
    if not split.cases:
        raise LexdiagError("no record could form a PU training batch")
    run_seed = config.seed if seed is None else seed
    model = PuModel(
        PuModelConfig(
            dim=config.embedding.dim,
            conv_layers=config.pu.conv_layers,
            mlp_layers=config.pu.mlp_layers,
            seed=run_seed,
        ),
        labels=corpus_labels(records),
    )
    train_config = PuTrainConfig(
        epochs=config.pu.epochs if epochs is None else epochs,
        lr=config.pu.lr,
        correction_discount=config.pu.correction_discount,
        batch_size=config.pu.batch_size,
        prior=config.pu.prior,
        seed=run_seed,
    )
    return train_domain_pu(model, split.cases, train_config), split


def train_bandit_stage(
    config: AppConfig,
    records: list[CaseRecord],
    provider: EmbeddingProvider,
    model: PuModel,
    gateway: LlmGateway,
    *,
    seed: int | None = None,
) -> tuple[PurlResult, dict[str, np.ndarray]]:
    cases = bandit_cases_from_records(records, provider)
    bandit_config = BanditConfig(
        hidden=config.bandit.hidden,
        nu=config.bandit.nu,
        kappa=config.bandit.kappa,
        horizon=config.bandit.horizon,
        lr=config.bandit.lr,
        gd_steps=config.bandit.gd_steps,
        lam=config.bandit.lam,
        seed=config.seed if seed is None else seed,
    )
    result = train_purl(cases, model, gateway, bandit_config)
    case_embeddings = {case.case_id: case.h_text for case in cases}
    return result, case_embeddings


def save_bandit_stage(
    config: AppConfig,
    result: PurlResult,
    case_embeddings: dict[str, np.ndarray],
) -> Path:
    out_dir = Path(config.paths.checkpoints)
    out_dir.mkdir(parents=True, exist_ok=True)
    archive = out_dir / BANDIT_ARCHIVE
    save_bandits(archive, result.states, case_embeddings)
    write_training_log(out_dir / BANDIT_LOG, result.logs)
    return archive


def load_global_graph(corpus_dir: str | Path) -> FactRuleGraph:
    path = Path(corpus_dir) / "global_graph.json"
    if not path.exists():
        raise CheckpointError(f"global graph {path} does not exist")
    return graph_from_dict(read_json(path))


def bundle_from_artifacts(
    config: AppConfig, provider: EmbeddingProvider | None = None
) -> ModelBundle:
    """Assembles the serving bundle from checkpoints written by the stages."""
    if provider is None:
        provider = provider_from_config(config)
    checkpoints = Path(config.paths.checkpoints)
    model = PuModel.load(checkpoints / PU_CHECKPOINT)
    states, case_embeddings = load_bandits(checkpoints / BANDIT_ARCHIVE)
    global_graph = load_global_graph(config.paths.corpus)
    return ModelBundle(
        provider=provider,
        pu=model,
        global_graph=global_graph,
        bandits=states,
        case_embeddings=case_embeddings,
        n_hop=config.session.n_hop,
        max_turns=config.session.max_turns,
    )


def split_records(config: AppConfig, split: str) -> list[CaseRecord]:
    manifest, records = load_corpus(config.paths.corpus)
    if split == "all":
        return [r for r in records if r.review_status == REVIEW_APPROVED]
    return records_in_split(manifest, records, split)
