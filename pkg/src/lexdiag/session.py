"""The consultation loop: draft a view, check the verdict, ask, repeat.

A session opens on a client narrative, maps it to a fact-rule graph, and
drafts a court view. A Yes verdict completes immediately. A No verdict
sends the candidate facts from the n-hop expansion of the narrative graph
through the nearest trained bandit, which picks the node whose answer it
expects to help most; the client's reply is appended to the narrative as a
confirmed-fact line and the loop repeats. A turn cap forces completion,
as does running out of candidates.

States and the transitions between them are enforced, not conventions:
Deliberating -> AwaitingAnswer | Complete, AwaitingAnswer -> Deliberating,
and anything -> Aborted when a backend call fails mid-step.

The simulation entry point replays a held-out corpus record against a
scripted client who answers from the record's full fact description, and
reports question efficiency, masked-fact recovery, and text overlap with
the gold view.
"""

from __future__ import annotations

import itertools
import re
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .bandit import BanditState, build_arm_contexts, nearest_case, ucb_select
from .datagen import CaseRecord, case_id_for_text
from .embeddings import EmbeddingProvider
from .errors import EmptyTextError, LexdiagError, WrongStateError
from .gateway import LlmGateway, confirmed_fact_line
from .graph import FactRuleGraph, NodeId, candidate_facts, n_hop_subgraph
from .metrics import score_text
from .pu_model import PuModel


class SessionState(str, Enum):
    AWAITING_ANSWER = "AwaitingAnswer"
    DELIBERATING = "Deliberating"
    COMPLETE = "Complete"
    ABORTED = "Aborted"


_ALLOWED_TRANSITIONS = {
    (SessionState.DELIBERATING, SessionState.AWAITING_ANSWER),
    (SessionState.DELIBERATING, SessionState.COMPLETE),
    (SessionState.AWAITING_ANSWER, SessionState.DELIBERATING),
}

UNKNOWN_ANSWER = "I don't know"

DEFAULT_MAX_TURNS = 8


def is_substantive(answer: str) -> bool:
    """Whether an answer carries information the court view can use."""
    return " ".join(answer.split()).casefold() != UNKNOWN_ANSWER.casefold()


@dataclass(frozen=True)
class TranscriptEntry:
    role: str  # "question" | "answer"
    text: str
    node_label: str
    at: float


@dataclass
class ModelBundle:
    """Everything inference needs, loaded once and shared across sessions."""

    provider: EmbeddingProvider
    pu: PuModel
    global_graph: FactRuleGraph
    bandits: dict[str, BanditState]
    case_embeddings: dict[str, np.ndarray]
    n_hop: int = 2
    max_turns: int = DEFAULT_MAX_TURNS


@dataclass
class DialogueSession:
    session_id: str
    narrative: str
    case_id: str
    state: SessionState = SessionState.DELIBERATING
    max_turns: int = DEFAULT_MAX_TURNS
    turn: int = 0  # questions asked so far
    confirmed: list[tuple[NodeId, str]] = field(default_factory=list)
    transcript: list[TranscriptEntry] = field(default_factory=list)
    draft_view: str = ""
    last_verdict: bool | None = None
    forced_complete: bool = False
    bandit_id: str = ""
    pending_node: NodeId | None = None
    abort_cause: str | None = None
    abort_exc: BaseException | None = field(default=None, repr=False)
    extracted: FactRuleGraph | None = field(default=None, repr=False)
    subgraph: FactRuleGraph | None = field(default=None, repr=False)
    asked: set[NodeId] = field(default_factory=set, repr=False)


def _transition(session: DialogueSession, new_state: SessionState) -> None:
    if new_state is SessionState.ABORTED:
        session.state = new_state
        return
    if (session.state, new_state) not in _ALLOWED_TRANSITIONS:
        raise WrongStateError(
            f"illegal transition {session.state.value} -> {new_state.value}"
        )
    session.state = new_state


def _abort(session: DialogueSession, exc: LexdiagError) -> None:
    session.abort_cause = f"{type(exc).__name__}: {exc}"
    session.abort_exc = exc
    _transition(session, SessionState.ABORTED)


def session_invariant_problems(session: DialogueSession) -> list[str]:
    """Violations of the session's structural invariants, if any."""
    problems = []
    if session.turn > session.max_turns:
        problems.append(f"turn {session.turn} exceeds cap {session.max_turns}")
    questions = sum(1 for e in session.transcript if e.role == "question")
    expected = len(session.confirmed) + (
        1 if session.state is SessionState.AWAITING_ANSWER else 0
    )
    if questions != expected:
        problems.append(
            f"{questions} questions on transcript, expected {expected}"
        )
    if session.state is SessionState.COMPLETE:
        if not session.draft_view.strip():
            problems.append("complete with empty draft view")
        if session.last_verdict is not True and not session.forced_complete:
            problems.append("complete without Yes verdict or forced flag")
    return problems


# ---------------------------------------------------------------------------
# the deliberation step


def _substantive(session: DialogueSession) -> list[tuple[NodeId, str]]:
    return [(n, a) for n, a in session.confirmed if is_substantive(a)]


def _current_description(session: DialogueSession) -> str:
    lines = [
        confirmed_fact_line(node.label, answer)
        for node, answer in _substantive(session)
    ]
    if not lines:
        return session.narrative
    return session.narrative + "\n" + "\n".join(lines)


def _known_graph(session: DialogueSession) -> FactRuleGraph:
    base = session.extracted
    extra = {n for n, _ in _substantive(session)}
    return FactRuleGraph(base.nodes | extra, base.edges, base.case_id)


def _candidates(
    session: DialogueSession, bundle: ModelBundle
) -> tuple[FactRuleGraph, FactRuleGraph | None, list[NodeId]]:
    known = _known_graph(session)
    seeds = [n for n in known.sorted_nodes() if n in bundle.global_graph]
    if not seeds:
        return known, None, []
    sub = n_hop_subgraph(bundle.global_graph, seeds, bundle.n_hop)
    cands = [n for n in candidate_facts(sub, known) if n not in session.asked]
    return known, sub, cands


def _deliberate(
    session: DialogueSession,
    bundle: ModelBundle,
    gateway: LlmGateway,
    clock: Callable[[], float],
) -> None:
    confirmed = [(n.label, a) for n, a in _substantive(session)]
    view = gateway.generate_court_view(
        session.case_id, _current_description(session), confirmed
    )
    session.draft_view = view.text
    session.last_verdict = view.verdict
    if view.verdict:
        _transition(session, SessionState.COMPLETE)
        return
    _known, sub, cands = _candidates(session, bundle)
    session.subgraph = sub
    if not cands or session.turn >= session.max_turns:
        session.forced_complete = True
        _transition(session, SessionState.COMPLETE)
        return
    h_text = bundle.provider.embed_text(_current_description(session))
    contexts, _probs = build_arm_contexts(bundle.pu, sub, h_text, cands)
    arm, _values = ucb_select(bundle.bandits[session.bandit_id], contexts)
    node = cands[arm]
    edges = [e for e in sub.sorted_edges() if e.source == node or e.target == node]
    question = gateway.node_question(node, edges)
    session.pending_node = node
    session.asked.add(node)
    session.turn += 1
    session.transcript.append(
        TranscriptEntry("question", question, node.label, clock())
    )
    _transition(session, SessionState.AWAITING_ANSWER)


# ---------------------------------------------------------------------------
# public operations


def open_session(
    narrative: str,
    bundle: ModelBundle,
    gateway: LlmGateway,
    *,
    session_id: str | None = None,
    case_id: str | None = None,
    clock: Callable[[], float] = time.time,
) -> DialogueSession:
    """Start a consultation and run its first deliberation.

    ``case_id`` defaults to the content-addressed id of the narrative; a
    simulation passes its corpus id instead so scripted fixtures line up.
    """
    if not narrative.strip():
        raise EmptyTextError("narrative is empty")
    session = DialogueSession(
        session_id=session_id or uuid.uuid4().hex[:16],
        narrative=narrative,
        case_id=case_id or case_id_for_text(narrative),
        max_turns=bundle.max_turns,
    )
    try:
        session.extracted, _degraded = gateway.extract_graph(
            narrative, session.case_id
        )
        emb = bundle.provider.embed_text(narrative)
        session.bandit_id = nearest_case(emb, bundle.case_embeddings)
        _deliberate(session, bundle, gateway, clock)
    except LexdiagError as exc:
        _abort(session, exc)
    return session


def submit_answer(
    session: DialogueSession,
    answer: str,
    bundle: ModelBundle,
    gateway: LlmGateway,
    *,
    clock: Callable[[], float] = time.time,
) -> DialogueSession:
    """Record the client's answer to the pending question and loop once."""
    if session.state is not SessionState.AWAITING_ANSWER:
        raise WrongStateError(
            f"cannot accept an answer in state {session.state.value}"
        )
    if not answer.strip():
        raise EmptyTextError("answer is empty")
    node = session.pending_node
    _transition(session, SessionState.DELIBERATING)
    session.transcript.append(
        TranscriptEntry("answer", answer, node.label, clock())
    )
    session.confirmed.append((node, answer))
    session.pending_node = None
    try:
        _deliberate(session, bundle, gateway, clock)
    except LexdiagError as exc:
        _abort(session, exc)
    return session


# ---------------------------------------------------------------------------
# the scripted client


_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


@dataclass
class ClientOracle:
    """Answers questions from a hidden full case record.

    Reveals only the sentences of the fact description that mention the
    queried node's label; anything else gets a flat "I don't know".
    """

    record: CaseRecord
    unknown: str = UNKNOWN_ANSWER

    def answer(self, node: NodeId) -> str:
        text = self.record.fact_description or ""
        needle = node.label.casefold()
        hits = []
        for line in text.splitlines():
            for sent in _SENTENCE_SPLIT.split(line):
                sent = sent.strip()
                if sent and needle in sent.casefold():
                    hits.append(sent)
        return " ".join(hits) if hits else self.unknown


# ---------------------------------------------------------------------------
# offline evaluation


@dataclass(frozen=True)
class SimulationReport:
    case_id: str
    turns: int
    recovery_rate: float
    rouge1: float
    rouge2: float
    rougeL: float
    bleu1: float
    bleu2: float
    bleuN: float
    forced_complete: bool

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "turns": self.turns,
            "recovery_rate": self.recovery_rate,
            "rouge1": self.rouge1,
            "rouge2": self.rouge2,
            "rougeL": self.rougeL,
            "bleu1": self.bleu1,
            "bleu2": self.bleu2,
            "bleuN": self.bleuN,
            "forced_complete": self.forced_complete,
        }


def _sim_clock() -> Callable[[], float]:
    counter = itertools.count()
    return lambda: float(next(counter))


def simulate(
    record: CaseRecord,
    bundle: ModelBundle,
    gateway: LlmGateway,
) -> SimulationReport:
    """Run one held-out case end to end against the scripted client.

    The session opens on the masked description; recovery is the fraction
    of originally removed facts the loop asked about and got a substantive
    answer for (vacuously 1.0 when nothing was removed). Timestamps come
    from a deterministic counter so repeated runs are identical.
    """
    for name in ("reconstructed_description", "fact_description", "court_view"):
        if not getattr(record, name):
            raise LexdiagError(
                f"case {record.case_id!r} lacks {name}, cannot simulate"
            )
    oracle = ClientOracle(record)
    clock = _sim_clock()
    session = open_session(
        record.reconstructed_description,
        bundle,
        gateway,
        session_id=f"sim-{record.case_id}",
        case_id=record.case_id,
        clock=clock,
    )
    while session.state is SessionState.AWAITING_ANSWER:
        reply = oracle.answer(session.pending_node)
        submit_answer(session, reply, bundle, gateway, clock=clock)
    if session.state is SessionState.ABORTED:
        exc = session.abort_exc
        message = f"case {record.case_id!r}: {exc}"
        try:
            wrapped = type(exc)(message)
        except TypeError:
            wrapped = LexdiagError(message)
        raise wrapped from exc

    removed = set(record.removed)
    recovered = {
        node.label
        for node, answer in session.confirmed
        if node.label in removed and is_substantive(answer)
    }
    recovery = 1.0 if not removed else len(recovered) / len(removed)
    scores = score_text(session.draft_view, record.court_view)
    return SimulationReport(
        case_id=record.case_id,
        turns=session.turn,
        recovery_rate=recovery,
        forced_complete=session.forced_complete,
        **scores.as_dict(),
    )


def simulate_corpus(
    records: list[CaseRecord],
    bundle: ModelBundle,
    gateway: LlmGateway,
) -> list[SimulationReport]:
    ordered = sorted(records, key=lambda r: r.case_id)
    return [simulate(r, bundle, gateway) for r in ordered]
