"""Builds the bundled demo corpus under demo/.

Eleven hand-written intake matters with complete scripted-gateway
fixtures. The first case is the showcase: its narrative hides a stamped
harbor-office slip (an alibi-style fact) behind the masking step, and its
rules are not shared with any other case, so the only askable candidates
are exactly its own masked facts. A consultation on it therefore asks
about the alibi and completes in two answers.

The corpus seed is searched so the seeded masking lands on the showcase's
alibi fact. Output is deterministic; re-running overwrites demo/ in place.

Usage: python3 scripts/build_demo.py
"""

from __future__ import annotations

import itertools
import sys
from dataclasses import dataclass
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from lexdiag.datagen import case_id_for_text, mask_seed
from lexdiag.gateway import (
    PromptKind,
    RcQuestion,
    append_stop_token,
    confirmed_key,
    fixture_rows_to_file,
    render_question_set,
    text_key,
)
from lexdiag.graph import (
    Relation,
    build_graph,
    candidate_facts,
    mask_graph,
    merge_graphs,
    n_hop_subgraph,
    graph_to_dict,
)
from lexdiag.util import canonical_json

DEMO_DIR = Path(__file__).resolve().parent.parent / "demo"
N_HOP = 2
MASK_RATIO = 0.25

ALIBI_FACT = "the accused retained a stamped harbor-office slip for the relevant evening"


@dataclass(frozen=True)
class DemoCase:
    title: str
    facts: tuple[str, ...]
    rules: tuple[str, ...]


SHOWCASE = DemoCase(
    title="the shuttered vault matter",
    facts=(
        "the vault door stood ajar before the morning shift arrived",
        "the duty ledger carries an unsigned overnight entry",
        ALIBI_FACT,
        "a second set of boot prints crossed the loading bay",
        "the alarm circuit had been bridged with copper wire",
    ),
    rules=("the unlawful entry statute", "the presence and alibi provision"),
)

RECORDS_RULES = (
    "the records retention order",
    "the certified copy directive",
    "the filing window regulation",
)

WAREHOUSE_RULES = (
    "the bonded storage code",
    "the manifest accuracy rule",
    "the customs transit clause",
)

DEMO_CASES: tuple[DemoCase, ...] = (
    SHOWCASE,
    DemoCase(
        "the misfiled deed matter",
        (
            "the deed folder was logged into the wrong ward index",
            "the clerk's initials differ between the two intake cards",
            "the property schedule page shows a fresh crease pattern",
            "the request slip cites a file number never issued",
        ),
        RECORDS_RULES,
    ),
    DemoCase(
        "the duplicate seal matter",
        (
            "two impressions of the registry seal appear on one certificate",
            "the sealing wax batch matches a discontinued supply",
            "the attestation line was typed after the signature dried",
            "the certificate margin carries an erased docket number",
            "the copy ledger lists a single issuance for that day",
        ),
        RECORDS_RULES,
    ),
    DemoCase(
        "the vanished registry page matter",
        (
            "page forty-one of the registry volume is absent from the binding",
            "the stub edge shows a clean razor cut",
            "the reading room register names one visitor that afternoon",
            "the microfilm archive holds no image for the missing page",
        ),
        RECORDS_RULES,
    ),
    DemoCase(
        "the backdated stamp matter",
        (
            "the date stamp ink overlays the archival dust layer",
            "the receipt counterfoils skip a serial number",
            "the office calendar marks the claimed date as a closure day",
            "the stamp pad in evidence had been refilled recently",
            "the submissions log was rebound out of sequence",
        ),
        RECORDS_RULES,
    ),
    DemoCase(
        "the unlogged courier matter",
        (
            "a courier pouch entered the annex without a gate record",
            "the pouch manifest count disagrees with the shelf count",
            "the annex camera loop repeats an eleven minute segment",
            "the dispatch book shows pressure marks from a removed page",
        ),
        RECORDS_RULES,
    ),
    DemoCase(
        "the short pallet matter",
        (
            "the receiving tally records three pallets fewer than the waybill",
            "the dock scale ticket was voided without countersignature",
            "the shrink wrap on row nine had been re-taped at the corners",
            "the yard log places an unscheduled lorry at bay six",
        ),
        WAREHOUSE_RULES,
    ),
    DemoCase(
        "the switched crate matter",
        (
            "the crate stencils use a paint shade retired last season",
            "the gross weight entry was corrected twice in different hands",
            "the inner packing straw differs from the declared origin",
            "the consignment photographs show mismatched hinge hardware",
            "the tally clerk kept a private copy of the load sheet",
        ),
        WAREHOUSE_RULES,
    ),
    DemoCase(
        "the broken seal matter",
        (
            "the container seal number returns no match in the issuance roll",
            "the seal fragments were found swept behind the bay door",
            "the transit report claims an unbroken run from the border",
            "the relief watchman traded shifts without an entry",
        ),
        WAREHOUSE_RULES,
    ),
    DemoCase(
        "the idle forklift matter",
        (
            "the forklift hour meter gained a night of use over the weekend",
            "the charging bay log shows no plug-in for that interval",
            "the high rack camera was angled toward the ceiling",
            "the aisle dust pattern shows recent double tracks",
            "the keys cabinet seal was re-glued along one edge",
        ),
        WAREHOUSE_RULES,
    ),
    DemoCase(
        "the missing waybill matter",
        (
            "the waybill folio is absent from the carrier's book",
            "the carbon copy retains impressions of a heavier load",
            "the border post recorded the vehicle an hour early",
            "the escort fee receipt names a firm struck from the register",
        ),
        WAREHOUSE_RULES,
    ),
)

_FRAMES = (
    "The examiner records that {label}.",
    "Field notes state that {label}.",
    "An annexed affidavit sets out that {label}.",
    "The screening sheet adds that {label}.",
)

_DESC_HEADER = "Case file summary."
_DESC_LINE = "It is recorded that {label}."
_DESC_GAP = "Portions of the file could not be located."
_VIEW_HEADER = "Upon review of {title}, the court notes as follows."
_VIEW_LINE = "The court credits that {label}, which engages {rule}."
_VIEW_CLOSE_FULL = "The elements being satisfied, judgment may issue."
_VIEW_CLOSE_COLD = "The record as it stands does not support final judgment."
_VIEW_CLOSE_PARTIAL = "Further confirmation remains outstanding."
_ENHANCED_LINE = "It is additionally credited that {label}, which engages {rule}."
_QUESTION_FRAME = "Can the record speak to {label}?"


def narrative_for(index: int, case: DemoCase) -> str:
    lines = [
        f"Intake memorandum {index + 1:02d}.",
        f"Matter referred: {case.title}.",
        "Screening notes follow.",
    ]
    for i, label in enumerate(case.facts):
        lines.append(_FRAMES[i % len(_FRAMES)].format(label=label))
    lines.append("Prepared for counsel review.")
    return "\n".join(lines)


def graph_for(case: DemoCase, case_id: str):
    rule_of = {
        label: case.rules[i % len(case.rules)]
        for i, label in enumerate(case.facts)
    }
    edges = []
    for i, label in enumerate(case.facts):
        rel = Relation.VIOLATES if i % 2 == 0 else Relation.COMPLIES_WITH
        edges.append((label, rule_of[label], rel))
        if i > 0:
            edges.append((label, case.facts[i - 1], Relation.DEPENDS_ON))
    rules_used = sorted(set(rule_of.values()))
    return build_graph(list(case.facts), rules_used, edges, case_id), rule_of


def author_fixtures(
    index: int,
    case: DemoCase,
    corpus_seed: int,
    fixtures: dict[tuple[str, str, str], str],
) -> tuple[str, str, tuple[str, ...]]:
    """Writes every scripted answer one case needs; returns its identity."""
    raw_text = narrative_for(index, case)
    case_id = case_id_for_text(raw_text)
    graph, rule_of = graph_for(case, case_id)
    masked, removed_nodes = mask_graph(
        graph, MASK_RATIO, mask_seed(corpus_seed, case_id)
    )
    removed = tuple(n.label for n in removed_nodes)
    present = [lbl for lbl in case.facts if lbl not in removed]

    description = "\n".join(
        [_DESC_HEADER] + [_DESC_LINE.format(label=lbl) for lbl in case.facts]
    )
    masked_description = "\n".join(
        [_DESC_HEADER]
        + [_DESC_LINE.format(label=lbl) for lbl in present]
        + [_DESC_GAP]
    )
    header = _VIEW_HEADER.format(title=case.title)
    view_lines = lambda labels: [
        _VIEW_LINE.format(label=lbl, rule=rule_of[lbl]) for lbl in labels
    ]
    full_view = "\n".join([header] + view_lines(case.facts) + [_VIEW_CLOSE_FULL])
    cold_view = "\n".join([header] + view_lines(present) + [_VIEW_CLOSE_COLD])
    questions = tuple(
        RcQuestion(
            _QUESTION_FRAME.format(label=case.facts[q % len(case.facts)]),
            case.facts[q % len(case.facts)],
        )
        for q in range(10)
    )
    irac_text = "\n".join(
        [
            f"Issue: whether {case.title} supports judgment on this record.",
            f"Rule: the matter engages {', '.join(sorted(set(rule_of.values())))}.",
            f"Analysis: the screening record centres on {case.facts[0]} "
            f"and {case.facts[-1]}.",
            "Conclusion: the assembled record is addressed in the court view.",
        ]
    )

    def put(kind: PromptKind, disc: str, response: str) -> None:
        fixtures[(kind.value, case_id, disc)] = response

    put(PromptKind.CLASSIFY_CASE_TYPE, text_key(raw_text), "Criminal Law")
    put(PromptKind.IRAC_SUMMARIZE, text_key(raw_text), irac_text)
    put(
        PromptKind.EXTRACT_FACT_RULE_GRAPH,
        text_key(raw_text),
        canonical_json(graph_to_dict(graph)),
    )
    put(PromptKind.RECONSTRUCT_CASE, "-", description)
    put(
        PromptKind.RECONSTRUCT_CASE,
        "-" + "|".join(sorted(removed)),
        masked_description,
    )
    # Consultations open on the masked description and re-extract its graph.
    put(
        PromptKind.EXTRACT_FACT_RULE_GRAPH,
        text_key(masked_description),
        canonical_json(graph_to_dict(masked)),
    )
    put(
        PromptKind.GENERATE_COURT_VIEW,
        confirmed_key(list(case.facts)),
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
    for size in range(1, len(removed)):
        for subset in itertools.combinations(sorted(removed), size):
            partial = "\n".join(
                [header]
                + view_lines(present)
                + view_lines(subset)
                + [_VIEW_CLOSE_PARTIAL]
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

    # Duplicates under the id a consultation derives from the masked
    # narrative itself, so service clients work from the text alone.
    session_cid = case_id_for_text(masked_description)
    fixtures[
        (
            PromptKind.EXTRACT_FACT_RULE_GRAPH.value,
            session_cid,
            text_key(masked_description),
        )
    ] = canonical_json(graph_to_dict(masked))
    for (kind, cid, disc), response in list(fixtures.items()):
        if cid == case_id and kind == PromptKind.GENERATE_COURT_VIEW.value:
            fixtures[(kind, session_cid, disc)] = response
    return case_id, raw_text, removed


def candidate_map(corpus_seed: int) -> dict[str, tuple[set[str], set[str]]]:
    """Per case: (removed labels, candidate labels) at this corpus seed."""
    graphs = []
    maskings = {}
    for index, case in enumerate(DEMO_CASES):
        case_id = case_id_for_text(narrative_for(index, case))
        graph, _ = graph_for(case, case_id)
        masked, removed_nodes = mask_graph(
            graph, MASK_RATIO, mask_seed(corpus_seed, case_id)
        )
        graphs.append(graph)
        maskings[case_id] = (masked, {n.label for n in removed_nodes})
    global_graph = merge_graphs(graphs)
    out = {}
    for case_id, (masked, removed) in maskings.items():
        sub = n_hop_subgraph(global_graph, masked.sorted_nodes(), N_HOP)
        cands = {n.label for n in candidate_facts(sub, masked)}
        out[case_id] = (removed, cands)
    return out


def find_seed() -> int:
    """First corpus seed whose masking plants the showcase alibi fact."""
    showcase_id = case_id_for_text(narrative_for(0, SHOWCASE))
    for seed in range(1000):
        per_case = candidate_map(seed)
        removed, cands = per_case[showcase_id]
        if ALIBI_FACT not in removed:
            continue
        if cands != removed:
            continue  # showcase candidates must be exactly its masked facts
        if all(r <= c for r, c in per_case.values()):
            return seed
    raise RuntimeError("no corpus seed under 1000 plants the alibi fact")


def main() -> None:
    seed = find_seed()
    narratives_dir = DEMO_DIR / "narratives"
    narratives_dir.mkdir(parents=True, exist_ok=True)
    for stale in narratives_dir.glob("*.txt"):
        stale.unlink()

    fixtures: dict[tuple[str, str, str], str] = {}
    for index, case in enumerate(DEMO_CASES):
        case_id, raw_text, removed = author_fixtures(index, case, seed, fixtures)
        slug = case.title.removeprefix("the ").removesuffix(" matter")
        name = f"{index + 1:02d}-{slug.replace(' ', '-')}.txt"
        (narratives_dir / name).write_text(raw_text + "\n", encoding="utf-8")
        marker = " *" if ALIBI_FACT in removed else ""
        print(f"{name}: {case_id} masks {len(removed)} fact(s){marker}")

    fixture_rows_to_file(DEMO_DIR / "fixtures.jsonl", fixtures)
    (DEMO_DIR / "demo.yaml").write_text(
        "\n".join(
            [
                f"seed: {seed}",
                "paths:",
                "  corpus: demo-build/corpus",
                "  checkpoints: demo-build/checkpoints",
                "embedding:",
                "  dim: 12",
                "  seed: 3",
                "gateway:",
                "  backend: scripted-mock",
                "  fixtures: demo/fixtures.jsonl",
                "pu:",
                "  epochs: 40",
                "  mlp_layers: 3",
                "bandit:",
                "  horizon: 8",
            ]
        )
        + "\n",
        encoding="utf-8",
    )
    print(f"seed {seed}, {len(fixtures)} fixtures -> {DEMO_DIR}")


if __name__ == "__main__":
    main()
