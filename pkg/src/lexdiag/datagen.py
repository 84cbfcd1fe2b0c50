"""Corpus construction: from raw case texts to a reviewed, split dataset.

Each input document becomes a :class:`CaseRecord` through a fixed sequence
of gateway calls: case-type classification, IRAC compression, fact-rule
graph extraction, narrative reconstruction, court views, and a ten-question
comprehension set. A seeded mask drops part of each case's fact nodes, so
every record carries both the full artifacts and their masked counterparts;
the removed labels are the recovery targets the scorer and the bandit later
train against. A failed gateway call rejects the record and the pipeline
moves on.

Corpus layout on disk (deterministic, no timestamps):

    cases.jsonl                one row per record, graphs by reference
    graphs/<id>.json           full extracted graph
    graphs/<id>.masked.json    masked graph
    graphs/<id>.subgraph.json  n-hop expansion that defines the arm pool
    global_graph.json          merge of all approved case graphs
    manifest.json              seed, splits, counts, corpus hash
    review_export.jsonl        reviewer-facing digest of every record
    review_decisions.jsonl     optional approve/reject rows, read if present
    fixtures.jsonl             scripted-mock responses (synthetic corpora)

The synthetic generator at the bottom produces templated criminal matters
with known golden graphs for the test suite and the offline experiments.
Its narrative sentences quote fact labels verbatim, which is what lets a
simulated client answer questions about them later.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    EmptyTextError,
    LexdiagError,
    InsufficientCorpusError,
    ResponseParseError,
    TooFewFactsError,
)
from .gateway import (
    IRAC_SECTIONS,
    LlmGateway,
    PromptKind,
    RcQuestion,
    RcQuestionSet,
    ScriptedMockBackend,
    append_stop_token,
    confirmed_key,
    fixture_rows_to_file,
    render_question_set,
    text_key,
)
from .graph import (
    FactRuleGraph,
    Relation,
    build_graph,
    candidate_facts,
    graph_from_dict,
    graph_to_dict,
    mask_graph,
    merge_graphs,
    n_hop_subgraph,
)
from .util import (
    canonical_json,
    derive_seed,
    read_json,
    read_jsonl,
    stable_digest,
    write_json,
    write_jsonl,
)

MANIFEST_VERSION = 1

REVIEW_APPROVED = "approved"
REVIEW_REJECTED = "rejected"
REVIEW_UNREVIEWED = "unreviewed"

# Cause string distinguishing a reviewer veto from a failed build; resumed
# runs rebuild the latter but not the former.
REVIEW_DECISION_CAUSE = "rejected by review decision"


@dataclass(frozen=True)
class DatagenConfig:
    seed: int = 0
    mask_ratio: float = 0.25
    n_hop: int = 2

    def __post_init__(self):
        if not 0.0 < self.mask_ratio < 1.0:
            raise ValueError(f"mask_ratio must be in (0, 1), got {self.mask_ratio}")
        if self.n_hop < 0:
            raise ValueError("n_hop must be nonnegative")


@dataclass
class CaseRecord:
    """Everything the pipeline knows about one case.

    Graph fields hold live objects in memory; on disk they become relative
    file references. ``subgraph`` and ``candidates`` stay empty until
    finalization, which computes them against the merged corpus graph.
    """

    case_id: str
    raw_text: str
    case_type: str | None = None
    irac: dict[str, str] | None = None
    fact_description: str | None = None
    court_view: str | None = None
    questions: RcQuestionSet | None = None
    graph: FactRuleGraph | None = None
    masked_graph: FactRuleGraph | None = None
    removed: tuple[str, ...] = ()
    reconstructed_description: str | None = None
    reconstructed_view: str | None = None
    subgraph: FactRuleGraph | None = None
    candidates: tuple[str, ...] = ()
    review_status: str = REVIEW_UNREVIEWED
    reject_cause: str | None = None


@dataclass(frozen=True)
class CorpusManifest:
    seed: int
    n_hop: int
    mask_ratio: float
    counts: dict[str, int]
    splits: dict[str, tuple[str, ...]]
    global_graph_ref: str
    corpus_hash: str

    def to_dict(self) -> dict:
        return {
            "format": MANIFEST_VERSION,
            "seed": self.seed,
            "n_hop": self.n_hop,
            "mask_ratio": self.mask_ratio,
            "counts": dict(self.counts),
            "splits": {name: list(ids) for name, ids in self.splits.items()},
            "global_graph": self.global_graph_ref,
            "corpus_hash": self.corpus_hash,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CorpusManifest":
        if data.get("format") != MANIFEST_VERSION:
            raise ValueError(f"unsupported manifest format {data.get('format')!r}")
        return cls(
            seed=int(data["seed"]),
            n_hop=int(data["n_hop"]),
            mask_ratio=float(data["mask_ratio"]),
            counts={k: int(v) for k, v in data["counts"].items()},
            splits={k: tuple(v) for k, v in data["splits"].items()},
            global_graph_ref=data["global_graph"],
            corpus_hash=data["corpus_hash"],
        )


# ---------------------------------------------------------------------------
# identities and seeds


def case_id_for_text(text: str) -> str:
    """Content-addressed case id; whitespace-insensitive."""
    norm = " ".join(text.split())
    if not norm:
        raise EmptyTextError("case text is empty")
    return "case-" + stable_digest(norm)[:12]


def mask_seed(corpus_seed: int, case_id: str) -> int:
    """The per-case masking stream. Fixture authors must use the same one."""
    return derive_seed(corpus_seed, "mask", case_id)


# ---------------------------------------------------------------------------
# IRAC section parsing


def parse_irac(text: str) -> dict[str, str]:
    """Split a four-section summary into its labeled parts.

    Sections must appear in the canonical order; each runs to the start of
    the next header.
    """
    positions = []
    missing = []
    for header in IRAC_SECTIONS:
        idx = text.find(header)
        if idx < 0:
            missing.append(header)
        positions.append(idx)
    if missing:
        raise ResponseParseError(
            f"summary lacks sections: {', '.join(missing)}", raw=text
        )
    if positions != sorted(positions):
        raise ResponseParseError("summary sections are out of order", raw=text)
    out = {}
    for i, header in enumerate(IRAC_SECTIONS):
        start = positions[i] + len(header)
        end = positions[i + 1] if i + 1 < len(IRAC_SECTIONS) else len(text)
        out[header.rstrip(":").lower()] = text[start:end].strip()
    return out


# ---------------------------------------------------------------------------
# building one record


def build_case(raw_text: str, gateway: LlmGateway, cfg: DatagenConfig) -> CaseRecord:
    """Run the full per-case pipeline; gateway failures reject, not raise.

    The returned record is ``unreviewed`` on success and ``rejected`` with a
    cause string when any step fails, so a caller can keep batching.
    """
    case_id = case_id_for_text(raw_text)
    rec = CaseRecord(case_id=case_id, raw_text=raw_text)
    try:
        rec.case_type = gateway.classify_case_type(case_id, raw_text)
        rec.irac = parse_irac(gateway.irac_summarize(case_id, raw_text))
        graph, _degraded = gateway.extract_graph(raw_text, case_id)
        if len(graph.facts()) < 2:
            raise TooFewFactsError(
                f"extraction found {len(graph.facts())} fact nodes, need at least 2"
            )
        rec.graph = FactRuleGraph(graph.nodes, graph.edges, case_id)
        masked, removed_nodes = mask_graph(
            rec.graph, cfg.mask_ratio, mask_seed(cfg.seed, case_id)
        )
        rec.masked_graph = masked
        rec.removed = tuple(n.label for n in removed_nodes)
        rec.fact_description = gateway.reconstruct_case(case_id, raw_text, [])
        rec.reconstructed_description = gateway.reconstruct_case(
            case_id, raw_text, list(rec.removed)
        )
        # The gold view is the one written with every fact confirmed; the
        # zero-confirmed key stays reserved for the masked (cold) view.
        all_facts = [n.label for n in rec.graph.facts()]
        gold = gateway.generate_court_view(
            case_id,
            rec.fact_description,
            [(label, "established in the record") for label in all_facts],
        )
        rec.court_view = gold.text
        cold = gateway.generate_court_view(
            case_id, rec.reconstructed_description, []
        )
        rec.reconstructed_view = cold.text
        rec.questions = gateway.generate_questions(case_id, rec.court_view)
    except LexdiagError as exc:
        rec.review_status = REVIEW_REJECTED
        rec.reject_cause = f"{type(exc).__name__}: {exc}"
        return rec
    rec.review_status = REVIEW_UNREVIEWED
    return rec


# ---------------------------------------------------------------------------
# serialization of records


def _graph_refs(rec: CaseRecord) -> dict[str, str | None]:
    return {
        "graph": f"graphs/{rec.case_id}.json" if rec.graph else None,
        "masked_graph": f"graphs/{rec.case_id}.masked.json"
        if rec.masked_graph
        else None,
        "subgraph": f"graphs/{rec.case_id}.subgraph.json" if rec.subgraph else None,
    }


def row_from_record(rec: CaseRecord) -> dict:
    refs = _graph_refs(rec)
    return {
        "case_id": rec.case_id,
        "raw_text": rec.raw_text,
        "case_type": rec.case_type,
        "irac": rec.irac,
        "fact_description": rec.fact_description,
        "court_view": rec.court_view,
        "questions": [[q.question, q.answer] for q in rec.questions]
        if rec.questions is not None
        else None,
        "graph": refs["graph"],
        "masked_graph": refs["masked_graph"],
        "removed": list(rec.removed),
        "reconstructed_description": rec.reconstructed_description,
        "reconstructed_view": rec.reconstructed_view,
        "subgraph": refs["subgraph"],
        "candidates": list(rec.candidates),
        "review_status": rec.review_status,
        "reject_cause": rec.reject_cause,
    }


def record_from_row(row: dict, corpus_dir: str | Path) -> CaseRecord:
    corpus_dir = Path(corpus_dir)

    def load(ref):
        return graph_from_dict(read_json(corpus_dir / ref)) if ref else None

    questions = row.get("questions")
    return CaseRecord(
        case_id=row["case_id"],
        raw_text=row["raw_text"],
        case_type=row.get("case_type"),
        irac=row.get("irac"),
        fact_description=row.get("fact_description"),
        court_view=row.get("court_view"),
        questions=tuple(RcQuestion(q, a) for q, a in questions)
        if questions is not None
        else None,
        graph=load(row.get("graph")),
        masked_graph=load(row.get("masked_graph")),
        removed=tuple(row.get("removed", ())),
        reconstructed_description=row.get("reconstructed_description"),
        reconstructed_view=row.get("reconstructed_view"),
        subgraph=load(row.get("subgraph")),
        candidates=tuple(row.get("candidates", ())),
        review_status=row.get("review_status", REVIEW_UNREVIEWED),
        reject_cause=row.get("reject_cause"),
    )


def _populated_problems(rec: CaseRecord) -> list[str]:
    problems = []
    for name in (
        "case_type",
        "irac",
        "fact_description",
        "court_view",
        "questions",
        "graph",
        "masked_graph",
        "reconstructed_description",
        "reconstructed_view",
    ):
        if getattr(rec, name) is None:
            problems.append(f"{rec.case_id}: {name} missing")
    if rec.questions is not None and len(rec.questions) != 10:
        problems.append(f"{rec.case_id}: {len(rec.questions)} questions, need 10")
    if not rec.removed:
        problems.append(f"{rec.case_id}: no removed labels")
    return problems


# ---------------------------------------------------------------------------
# review decisions


def _load_decisions(path: Path, records: dict[str, CaseRecord]) -> dict[str, str]:
    """Validate the decisions file exhaustively before applying any of it."""
    decisions: dict[str, str] = {}
    problems: list[str] = []
    for i, row in enumerate(read_jsonl(path)):
        cid = row.get("case_id")
        verb = row.get("decision")
        where = f"decision row {i + 1}"
        if cid not in records:
            problems.append(f"{where}: unknown case id {cid!r}")
            continue
        if verb not in ("approve", "reject"):
            problems.append(f"{where}: decision must be approve or reject, got {verb!r}")
            continue
        if cid in decisions:
            problems.append(f"{where}: duplicate decision for {cid!r}")
            continue
        if verb == "approve" and records[cid].review_status == REVIEW_REJECTED:
            problems.append(f"{where}: cannot approve {cid!r}, its build failed")
            continue
        decisions[cid] = verb
    if problems:
        raise ConfigError(problems)
    return decisions


# ---------------------------------------------------------------------------
# finalization


def _split_ids(approved_ids: list[str], seed: int) -> dict[str, tuple[str, ...]]:
    """8:1:1 assignment over a seeded shuffle of the approved ids."""
    n = len(approved_ids)
    rng = np.random.default_rng(derive_seed(seed, "splits"))
    order = [approved_ids[i] for i in rng.permutation(n)]
    n_test = max(1, n // 10)
    n_dev = max(1, n // 10)
    return {
        "test": tuple(sorted(order[:n_test])),
        "dev": tuple(sorted(order[n_test : n_test + n_dev])),
        "train": tuple(sorted(order[n_test + n_dev :])),
    }


def _write_graph(path: Path, graph: FactRuleGraph) -> None:
    write_json(path, graph_to_dict(graph))


def finalize_corpus(
    records: list[CaseRecord], out_dir: str | Path, cfg: DatagenConfig
) -> CorpusManifest:
    """Review, merge, expand, split, and write the corpus directory.

    The review export is written before any split assignment so the
    reviewer sees the corpus exactly as built. An optional
    ``review_decisions.jsonl`` in the output directory overrides the
    default approve-everything-that-built policy.
    """
    out_dir = Path(out_dir)
    graphs_dir = out_dir / "graphs"
    graphs_dir.mkdir(parents=True, exist_ok=True)
    records = sorted(records, key=lambda r: r.case_id)
    by_id = {r.case_id: r for r in records}
    if len(by_id) != len(records):
        raise ValueError("duplicate case ids in record list")

    export_rows = []
    for rec in records:
        export_rows.append(
            {
                "case_id": rec.case_id,
                "review_status": rec.review_status,
                "reject_cause": rec.reject_cause,
                "case_type": rec.case_type,
                "n_facts": len(rec.graph.facts()) if rec.graph else 0,
                "removed": list(rec.removed),
                "narrative_preview": " ".join(rec.raw_text.split())[:160],
            }
        )
    write_jsonl(out_dir / "review_export.jsonl", export_rows)

    decisions_path = out_dir / "review_decisions.jsonl"
    decisions = _load_decisions(decisions_path, by_id) if decisions_path.exists() else {}
    for rec in records:
        if rec.review_status == REVIEW_REJECTED:
            continue
        verb = decisions.get(rec.case_id)
        if verb == "reject":
            rec.review_status = REVIEW_REJECTED
            rec.reject_cause = REVIEW_DECISION_CAUSE
        else:
            rec.review_status = REVIEW_APPROVED

    approved = [r for r in records if r.review_status == REVIEW_APPROVED]
    if len(approved) < 10:
        raise InsufficientCorpusError(
            f"need at least 10 approved cases, have {len(approved)}"
        )
    problems = [p for rec in approved for p in _populated_problems(rec)]
    if problems:
        raise LexdiagError("approved record incomplete: " + "; ".join(problems))

    global_graph = merge_graphs(r.graph for r in approved)
    for rec in records:
        rec.subgraph = None
        rec.candidates = ()
    for rec in approved:
        rec.subgraph = n_hop_subgraph(
            global_graph, rec.masked_graph.sorted_nodes(), cfg.n_hop
        )
        rec.candidates = tuple(
            n.label for n in candidate_facts(rec.subgraph, rec.masked_graph)
        )

    splits = _split_ids([r.case_id for r in approved], cfg.seed)

    expected_files = {"global_graph.json"}
    _write_graph(out_dir / "global_graph.json", global_graph)
    for rec in records:
        refs = _graph_refs(rec)
        for attr, ref in (
            ("graph", refs["graph"]),
            ("masked_graph", refs["masked_graph"]),
            ("subgraph", refs["subgraph"]),
        ):
            if ref:
                _write_graph(out_dir / ref, getattr(rec, attr))
                expected_files.add(Path(ref).name)
    # Drop graph files for records that no longer reference them, so a
    # resumed run and a fresh run produce identical directories.
    for stale in graphs_dir.glob("*.json"):
        if stale.name not in expected_files:
            stale.unlink()

    write_jsonl(out_dir / "cases.jsonl", [row_from_record(r) for r in records])

    cases_text = (out_dir / "cases.jsonl").read_text(encoding="utf-8")
    global_text = (out_dir / "global_graph.json").read_text(encoding="utf-8")
    manifest = CorpusManifest(
        seed=cfg.seed,
        n_hop=cfg.n_hop,
        mask_ratio=cfg.mask_ratio,
        counts={
            "total": len(records),
            "approved": len(approved),
            "rejected": sum(1 for r in records if r.review_status == REVIEW_REJECTED),
        },
        splits=splits,
        global_graph_ref="global_graph.json",
        corpus_hash=stable_digest(cases_text + global_text),
    )
    write_json(out_dir / "manifest.json", manifest.to_dict())
    return manifest


# ---------------------------------------------------------------------------
# the batch driver


def run_datagen(
    texts: list[str],
    gateway: LlmGateway,
    cfg: DatagenConfig,
    out_dir: str | Path,
) -> CorpusManifest:
    """Build records for every input text, resuming from a prior run.

    Records already present in ``cases.jsonl`` are reused unless their
    build was rejected, in which case they get another attempt. Duplicate
    input texts collapse to one record via content addressing.
    """
    out_dir = Path(out_dir)
    (out_dir / "graphs").mkdir(parents=True, exist_ok=True)
    prior: dict[str, dict] = {}
    cases_path = out_dir / "cases.jsonl"
    if cases_path.exists():
        for row in read_jsonl(cases_path):
            prior[row["case_id"]] = row

    records = []
    seen: set[str] = set()
    for text in texts:
        case_id = case_id_for_text(text)
        if case_id in seen:
            continue
        seen.add(case_id)
        row = prior.get(case_id)
        built_ok = row is not None and (
            row["review_status"] != REVIEW_REJECTED
            or row.get("reject_cause") == REVIEW_DECISION_CAUSE
        )
        if built_ok:
            rec = record_from_row(row, out_dir)
            # Review state is derived at finalize time from the decisions
            # file, so a resumed record reverts to its build status.
            rec.review_status = REVIEW_UNREVIEWED
            rec.reject_cause = None
            records.append(rec)
        else:
            records.append(build_case(text, gateway, cfg))
    return finalize_corpus(records, out_dir, cfg)


def load_corpus(
    corpus_dir: str | Path,
) -> tuple[CorpusManifest, list[CaseRecord]]:
    corpus_dir = Path(corpus_dir)
    manifest = CorpusManifest.from_dict(read_json(corpus_dir / "manifest.json"))
    records = [
        record_from_row(row, corpus_dir)
        for row in read_jsonl(corpus_dir / "cases.jsonl")
    ]
    return manifest, records


def records_in_split(
    manifest: CorpusManifest, records: list[CaseRecord], split: str
) -> list[CaseRecord]:
    wanted = set(manifest.splits[split])
    return [r for r in records if r.case_id in wanted]


# ---------------------------------------------------------------------------
# synthetic corpus
#
# Five criminal-matter archetypes. Every fact label carries at least one
# content word that no other label, rule, or template sentence uses; the
# lexical answer judge depends on that, and a test enforces it.


@dataclass(frozen=True)
class Archetype:
    name: str
    case_type: str
    facts: tuple[str, ...]
    rules: tuple[str, ...]


ARCHETYPES: tuple[Archetype, ...] = (
    Archetype(
        "burglary",
        "Criminal Law",
        (
            "forced entry through the rear window",
            "a crowbar recovered from the hedge",
            "pawnshop receipts for the missing jewelry",
            "a neighbor heard breaking glass",
            "muddy bootprints on the carpet",
            "the alarm wires were snipped",
            "a glove dropped beside the safe",
            "the getaway sedan idled outside",
            "a fence resold the silverware",
            "the latch showed fresh toolmarks",
            "a lookout whistled from the corner",
            "the basement hatch stood unlocked",
        ),
        (
            "the unlawful entry statute",
            "the stolen property ordinance",
            "the burglary tools code",
        ),
    ),
    Archetype(
        "arson",
        "Criminal Law",
        (
            "an accelerant odor near the porch",
            "a scorched gasoline can in the alley",
            "the insurance policy was doubled recently",
            "char patterns traced to the fuse box",
            "a matchbook from the defendant's diner",
            "smoke stains above the storeroom door",
            "the sprinkler valve was wrenched shut",
            "a bystander saw flames from the overpass",
            "burn blisters on the defendant's forearm",
            "the deed transfer collapsed weeks earlier",
            "melted wiring behind the paneling",
            "a kerosene purchase on the receipt roll",
        ),
        (
            "the arson liability statute",
            "the insurance fraud ordinance",
            "the reckless burning code",
        ),
    ),
    Archetype(
        "embezzlement",
        "Criminal Law",
        (
            "a shell company billed phantom invoices",
            "the ledger showed altered totals",
            "wire transfers routed through a cousin",
            "the auditor flagged vanished deposits",
            "a forged signature on the payroll checks",
            "the vault count came up short",
            "a bonus scheme hid the skimming",
            "offshore statements arrived at a mailbox",
            "the treasurer shredded quarterly reports",
            "a casino marker matched the shortfall",
            "petty cash vouchers lacked countersignatures",
            "the bookkeeper resigned without notice",
        ),
        (
            "the fiduciary duty statute",
            "the false accounting ordinance",
            "the wage trust code",
        ),
    ),
    Archetype(
        "smuggling",
        "Criminal Law",
        (
            "crates mislabeled as machine parts",
            "a hidden compartment under the truck bed",
            "the cargo manifest omitted two pallets",
            "customs seals were glued back together",
            "a dockworker took envelopes of cash",
            "the trawler met a skiff offshore",
            "duty stamps were counterfeited in bulk",
            "a warehouse held unmarked cartons",
            "the border log showed midnight crossings",
            "a bribed inspector waved the convoy",
            "tunnel spoil piled behind the barn",
            "the airstrip lights ran without clearance",
        ),
        (
            "the customs declaration statute",
            "the contraband transport ordinance",
            "the import duty code",
        ),
    ),
    Archetype(
        "poaching",
        "Criminal Law",
        (
            "snare lines strung along the ridge",
            "a freezer full of untagged venison",
            "spotlighting gear in the pickup cab",
            "the warden found spent rifle brass",
            "antlers sawn from a fresh carcass",
            "an out-of-season permit was photocopied",
            "gut piles dumped by the creek",
            "a taxidermist logged suspicious trophies",
            "night shots echoed across the preserve",
            "the blind overlooked a baited meadow",
            "tire ruts crossed the refuge boundary",
            "a decoy elk drew the first shot",
        ),
        (
            "the wildlife protection statute",
            "the hunting season ordinance",
            "the public lands code",
        ),
    ),
)

SENTENCE_FRAMES = (
    "Regarding {label}, the report records it plainly.",
    "Witness statements establish {label}.",
    "The file notes {label} among the central facts.",
    "Officers confirmed {label} during the follow-up.",
)

SYNTH_MIN_FACTS = 6
SYNTH_MAX_FACTS = 10

_COURT_HEADER = "The court has reviewed this {name} matter."
_COURT_LINE = "It is established that {label}; this bears on {rule}."
_COURT_CLOSE_FULL = "Accordingly the stated elements are satisfied."
_COURT_CLOSE_COLD = "On the present record the court cannot reach a final conclusion."
_COURT_CLOSE_PARTIAL = "Material aspects remain unconfirmed."
_ENHANCED_LINE = "It is further established that {label}; this bears on {rule}."
_QUESTION_FRAME = "What does the record establish about {label}?"
_DESC_HEADER = "The established facts are as follows."
_DESC_GAP = "Some aspects of the record are unavailable."


@dataclass(frozen=True)
class SynthCase:
    case_id: str
    archetype: str
    raw_text: str
    graph: FactRuleGraph
    removed: tuple[str, ...]


def _fact_sentences(labels: list[str]) -> list[str]:
    return [
        SENTENCE_FRAMES[j % len(SENTENCE_FRAMES)].format(label=label)
        for j, label in enumerate(labels)
    ]


def _synth_one(
    index: int, cfg: DatagenConfig, fixtures: dict[tuple[str, str, str], str]
) -> SynthCase:
    arche = ARCHETYPES[index % len(ARCHETYPES)]
    rng = np.random.default_rng(derive_seed(cfg.seed, "synth", str(index)))
    k = int(rng.integers(SYNTH_MIN_FACTS, SYNTH_MAX_FACTS + 1))
    picked = sorted(int(p) for p in rng.choice(len(arche.facts), size=k, replace=False))
    labels = [arche.facts[p] for p in picked]
    rule_of = {arche.facts[p]: arche.rules[p % len(arche.rules)] for p in picked}

    lines = [
        f"Docket entry {index + 1:04d}.",
        f"The charge under review is {arche.name}.",
        "Investigators compiled the following record.",
        *_fact_sentences(labels),
        "The file is submitted for review.",
    ]
    raw_text = "\n".join(lines)
    case_id = case_id_for_text(raw_text)

    edges: list[tuple[str, str, Relation]] = []
    for j, p in enumerate(picked):
        label = arche.facts[p]
        rel = Relation.VIOLATES if p % 2 == 0 else Relation.COMPLIES_WITH
        edges.append((label, rule_of[label], rel))
        if j > 0:
            edges.append((label, labels[j - 1], Relation.DEPENDS_ON))
    rules_used = sorted(set(rule_of.values()))
    graph = build_graph(labels, rules_used, edges, case_id)

    masked, removed_nodes = mask_graph(
        graph, cfg.mask_ratio, mask_seed(cfg.seed, case_id)
    )
    removed = tuple(n.label for n in removed_nodes)
    present = [lbl for lbl in labels if lbl not in removed]

    # -- textual artifacts -------------------------------------------------
    description = "\n".join([_DESC_HEADER, *_fact_sentences(labels)])
    masked_description = "\n".join(
        [_DESC_HEADER]
        + [
            s
            for lbl, s in zip(labels, _fact_sentences(labels))
            if lbl not in removed
        ]
        + [_DESC_GAP]
    )
    header = _COURT_HEADER.format(name=arche.name)
    full_view = "\n".join(
        [header]
        + [_COURT_LINE.format(label=lbl, rule=rule_of[lbl]) for lbl in labels]
        + [_COURT_CLOSE_FULL]
    )
    cold_view = "\n".join(
        [header]
        + [_COURT_LINE.format(label=lbl, rule=rule_of[lbl]) for lbl in present]
        + [_COURT_CLOSE_COLD]
    )
    questions = tuple(
        RcQuestion(
            _QUESTION_FRAME.format(label=labels[q % len(labels)]),
            labels[q % len(labels)],
        )
        for q in range(10)
    )
    irac_text = "\n".join(
        [
            f"Issue: whether the {arche.name} charge is sustained on this record.",
            f"Rule: the matter is governed by {', '.join(rules_used)}.",
            f"Analysis: the record turns on {labels[0]} and {labels[-1]}.",
            "Conclusion: the elements are addressed in the court view.",
        ]
    )

    # -- fixtures ----------------------------------------------------------
    tkey = text_key(raw_text)

    def put(kind: PromptKind, disc: str, response: str) -> None:
        fixtures[(kind.value, case_id, disc)] = response

    put(PromptKind.CLASSIFY_CASE_TYPE, tkey, arche.case_type)
    put(PromptKind.IRAC_SUMMARIZE, tkey, irac_text)
    put(
        PromptKind.EXTRACT_FACT_RULE_GRAPH,
        tkey,
        canonical_json(graph_to_dict(graph)),
    )
    put(PromptKind.RECONSTRUCT_CASE, "-", description)
    put(PromptKind.RECONSTRUCT_CASE, "-" + "|".join(sorted(removed)), masked_description)
    # Consultations open on the masked description and re-extract its graph.
    put(
        PromptKind.EXTRACT_FACT_RULE_GRAPH,
        text_key(masked_description),
        canonical_json(graph_to_dict(masked)),
    )
    put(
        PromptKind.GENERATE_COURT_VIEW,
        confirmed_key(labels),
        append_stop_token(full_view, True),
    )
    put(PromptKind.GENERATE_COURT_VIEW, "", append_stop_token(cold_view, False))
    put(PromptKind.GENERATE_QUESTIONS, "", render_question_set(questions))
    for lbl in removed:
        put(
            PromptKind.RECONSTRUCT_CASE,
            "+" + lbl,
            cold_view + "\n" + _ENHANCED_LINE.format(label=lbl, rule=rule_of[lbl]),
        )
    # Verdict fixtures for every state a consultation can reach by
    # confirming removed facts: proper subsets stay No, the full removed
    # set flips to Yes.
    cold_lines = [header] + [
        _COURT_LINE.format(label=lbl, rule=rule_of[lbl]) for lbl in present
    ]
    subset_sizes = range(1, len(removed)) if len(removed) <= 6 else (1,)
    for size in subset_sizes:
        for subset in itertools.combinations(sorted(removed), size):
            partial = "\n".join(
                cold_lines
                + [_COURT_LINE.format(label=lbl, rule=rule_of[lbl]) for lbl in subset]
                + [_COURT_CLOSE_PARTIAL]
            )
            put(
                PromptKind.GENERATE_COURT_VIEW,
                confirmed_key(list(subset)),
                append_stop_token(partial, False),
            )
    put(
        PromptKind.GENERATE_COURT_VIEW,
        confirmed_key(list(removed)),
        append_stop_token(full_view, True),
    )

    # A consultation opened on the masked description alone derives its own
    # content-addressed case id. The same scripted answers apply under that
    # id, so service clients need no knowledge of the corpus id.
    session_cid = case_id_for_text(masked_description)
    session_key = (
        PromptKind.EXTRACT_FACT_RULE_GRAPH.value,
        session_cid,
        text_key(masked_description),
    )
    if session_key in fixtures:
        raise LexdiagError(
            f"two cases mask down to the same narrative ({session_cid})"
        )
    fixtures[session_key] = canonical_json(graph_to_dict(masked))
    for (kind, cid, disc), response in list(fixtures.items()):
        if cid == case_id and kind == PromptKind.GENERATE_COURT_VIEW.value:
            fixtures[(kind, session_cid, disc)] = response
    return SynthCase(case_id, arche.name, raw_text, graph, removed)


def synth_corpus(
    n_cases: int, cfg: DatagenConfig
) -> tuple[list[SynthCase], dict[tuple[str, str, str], str]]:
    """Templated cases with golden graphs plus a complete mock fixture set.

    The masking decision inside is the same seeded call ``build_case`` will
    make, so the masked-reconstruction fixtures line up with the pipeline's
    own removals.
    """
    if n_cases < 1:
        raise ValueError("n_cases must be positive")
    fixtures: dict[tuple[str, str, str], str] = {}
    cases = [_synth_one(i, cfg, fixtures) for i in range(n_cases)]
    if len({c.case_id for c in cases}) != len(cases):
        raise LexdiagError("synthetic case id collision")
    return cases, fixtures


def run_synth_datagen(
    n_cases: int, cfg: DatagenConfig, out_dir: str | Path
) -> tuple[CorpusManifest, LlmGateway]:
    """Generate, fixture, and build a synthetic corpus in one call."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cases, fixtures = synth_corpus(n_cases, cfg)
    fixture_rows_to_file(out_dir / "fixtures.jsonl", fixtures)
    gateway = LlmGateway(ScriptedMockBackend(fixtures))
    manifest = run_datagen([c.raw_text for c in cases], gateway, cfg, out_dir)
    return manifest, gateway
