"""The only module that talks to a language model.

Every generation need in the system routes through one of the prompt kinds
below. Two backends satisfy them:

* ``scripted-mock`` answers from a fixture table keyed by
  (kind, case id, discriminator) and never touches the network. Missing
  court-view fixtures degrade to a templated refusal with a No verdict so a
  consultation always terminates; answer judging is a lexical containment
  check (a question counts as answered when its gold answer's key phrases
  all appear in the view under test). The whole test suite and the demo
  corpus run on this backend.

* ``http`` posts rendered prompts to a completion service, authenticated
  with a bearer token taken from the environment, never from config files
  or flags.

Generated court views end in a bracketed verdict trailer built from three
tokens: "[", "->" and "]" around Yes or No, rendered exactly as
"[ -> Yes ]". A trailing bracketed group that is not one of the two legal
trailers is a malformed token, not a missing one.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Protocol

from .errors import (
    BackendUnavailableError,
    EmptyTextError,
    MalformedTokenError,
    ResponseParseError,
)
from .graph import Edge, FactRuleGraph, NodeId, Relation, graph_from_dict
from .metrics import tokenize
from .util import canonical_json, read_jsonl, stable_digest


class PromptKind(str, Enum):
    CLASSIFY_CASE_TYPE = "ClassifyCaseType"
    IRAC_SUMMARIZE = "IracSummarize"
    EXTRACT_FACT_RULE_GRAPH = "ExtractFactRuleGraph"
    RECONSTRUCT_CASE = "ReconstructCase"
    GENERATE_QUESTIONS = "GenerateQuestions"
    ANSWER_AND_SCORE = "AnswerAndScore"
    GENERATE_COURT_VIEW = "GenerateCourtView"
    NODE_TO_QUESTION = "NodeToQuestion"


CASE_TYPES = (
    "Contract Law",
    "Criminal Law",
    "Property Law",
    "Intellectual Property Law",
    "Business Law",
    "Tax Law",
    "Estate and Trust Law",
    "Family Law",
    "Administrative Law",
    "Civil Law",
    "Tort Law",
    "Bankruptcy Law",
    "Environmental Law",
)

IRAC_SECTIONS = ("Issue:", "Rule:", "Analysis:", "Conclusion:")

PROMPTS: dict[PromptKind, str] = {
    PromptKind.CLASSIFY_CASE_TYPE: (
        "You are a legal intake assistant. Read the case description and "
        "reply with exactly one category name from this list and nothing "
        "else: {categories}.\n\nCase description:\n{text}"
    ),
    PromptKind.IRAC_SUMMARIZE: (
        "Summarize the following case in four labeled sections: Issue, "
        "Rule, Analysis, Conclusion. Begin each section with its label and "
        "a colon.\n\nCase description:\n{text}"
    ),
    PromptKind.EXTRACT_FACT_RULE_GRAPH: (
        "From the case description, list the factual circumstances as Fact "
        "nodes and the legal provisions they touch as Rule nodes, then "
        "connect them with directed edges using only the relation types "
        "Depends On (fact to fact), Complies With (fact to rule) and "
        "Violates (fact to rule). Reply as a JSON object with keys "
        "\"facts\", \"rules\" and \"edges\", where each edge has \"source\", "
        "\"target\" and \"relation\".\n\nCase description:\n{text}"
    ),
    PromptKind.RECONSTRUCT_CASE: (
        "Rewrite the case description below as a coherent narrative. "
        "Disregard the following aspects entirely; do not mention them or "
        "hint at them: {disregard}.\n\nCase description:\n{text}"
    ),
    PromptKind.GENERATE_QUESTIONS: (
        "Write exactly 10 unique comprehension questions about the court "
        "view below, each with its answer. Number them 1 to 10 and format "
        "every line as: N. Q: <question> A: <answer>.\n\nCourt view:\n{text}"
    ),
    PromptKind.ANSWER_AND_SCORE: (
        "Decide from the court view alone whether the stated answer to the "
        "question can be recovered. Reply with the single word Correct or "
        "Incorrect.\n\nCourt view:\n{view}\n\nQuestion: {question}\n"
        "Reference answer: {answer}"
    ),
    PromptKind.GENERATE_COURT_VIEW: (
        "Act as the court. Using the case description and the confirmed "
        "facts below, write the court's view of the case. End your reply "
        "with the trailer \"[ -> Yes ]\" if the record supports a "
        "confident disposition, otherwise \"[ -> No ]\".\n\n"
        "Case description:\n{text}\n\nConfirmed facts:\n{confirmed}"
    ),
    PromptKind.NODE_TO_QUESTION: (
        "Regarding your case: can you tell me more about {label}? "
        "For example, {hint}."
    ),
}


# ---------------------------------------------------------------------------
# stop-token grammar

STOP_OPEN = "["
STOP_ARROW = "->"
STOP_CLOSE = "]"

_VERDICT_RE = re.compile(r"\[\s*->\s*(Yes|No)\s*\]\s*$")
_TRAILER_RE = re.compile(r"\[[^\[\]]*\]\s*$")


def render_stop_token(verdict: bool) -> str:
    word = "Yes" if verdict else "No"
    return f"{STOP_OPEN} {STOP_ARROW} {word} {STOP_CLOSE}"


def append_stop_token(text: str, verdict: bool) -> str:
    return f"{text} {render_stop_token(verdict)}"


def parse_stop_token(text: str) -> tuple[str, bool | None]:
    """Split a generated view into (body, verdict).

    Returns verdict None when the text has no trailing bracketed group.
    A trailing bracketed group whose inner token is not a legal verdict
    raises MalformedTokenError.
    """
    match = _VERDICT_RE.search(text)
    if match:
        return text[: match.start()].rstrip(), match.group(1) == "Yes"
    trailer = _TRAILER_RE.search(text)
    if trailer:
        raise MalformedTokenError(
            f"trailing group {text[trailer.start():]!r} is not a verdict trailer"
        )
    return text, None


# ---------------------------------------------------------------------------
# backends


@dataclass(frozen=True)
class LlmRequest:
    kind: PromptKind
    case_id: str
    discriminator: str
    prompt: str
    payload: dict = field(default_factory=dict)

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.kind.value, self.case_id, self.discriminator)


@dataclass(frozen=True)
class LlmResponse:
    text: str
    degraded: bool = False


class LlmBackend(Protocol):
    def complete(self, request: LlmRequest) -> LlmResponse: ...


def load_fixtures(path: str | Path) -> dict[tuple[str, str, str], str]:
    if not Path(path).exists():
        raise BackendUnavailableError(f"fixture file {path} does not exist")
    fixtures = {}
    for row in read_jsonl(path):
        key = row["key"]
        fixtures[(key["kind"], key["case_id"], key["discriminator"])] = row[
            "response"
        ]
    return fixtures


def dump_fixture_rows(fixtures: dict[tuple[str, str, str], str]) -> list[dict]:
    rows = []
    for (kind, case_id, discriminator), response in sorted(fixtures.items()):
        rows.append(
            {
                "key": {
                    "kind": kind,
                    "case_id": case_id,
                    "discriminator": discriminator,
                },
                "response": response,
            }
        )
    return rows


class ScriptedMockBackend:
    """Deterministic offline backend answering from a fixture table."""

    def __init__(self, fixtures: dict[tuple[str, str, str], str] | None = None):
        self.fixtures = dict(fixtures or {})
        self.call_history: list[LlmRequest] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedMockBackend":
        return cls(load_fixtures(path))

    def add_fixture(self, kind: PromptKind, case_id: str, discriminator: str,
                    response: str) -> None:
        self.fixtures[(kind.value, case_id, discriminator)] = response

    def complete(self, request: LlmRequest) -> LlmResponse:
        self.call_history.append(request)
        hit = self.fixtures.get(request.key)
        if hit is not None:
            return LlmResponse(hit)
        if request.kind is PromptKind.ANSWER_AND_SCORE:
            # lexical stand-in for a judge: the reference answer must be
            # fully covered by the view's tokens
            view_tokens = set(tokenize(request.payload.get("view", "")))
            answer_tokens = set(tokenize(request.payload.get("answer", "")))
            ok = bool(answer_tokens) and answer_tokens <= view_tokens
            return LlmResponse("Correct" if ok else "Incorrect")
        if request.kind is PromptKind.GENERATE_COURT_VIEW:
            text = (
                "On the record as presented, the court is unable to reach "
                "an affirmative disposition and further factual development "
                "is required. " + render_stop_token(False)
            )
            return LlmResponse(text, degraded=True)
        if request.kind is PromptKind.EXTRACT_FACT_RULE_GRAPH:
            # unscripted narrative: no facts recovered, flow still terminates
            return LlmResponse('{"facts": [], "rules": [], "edges": []}',
                               degraded=True)
        if (request.kind is PromptKind.RECONSTRUCT_CASE
                and request.discriminator.startswith("+")):
            # unknown enhancement: hand back the base view unchanged
            base = request.payload.get("text")
            if base is not None:
                return LlmResponse(base, degraded=True)
        raise BackendUnavailableError(
            f"no fixture for {request.key} and no fallback applies"
        )


class HttpLlmBackend:
    """POSTs rendered prompts to a completion endpoint.

    The bearer token comes from the environment variable named by
    ``token_env``; configuration files never carry credentials. Concurrent
    callers share a bounded slot pool and failures retry with exponential
    backoff.
    """

    def __init__(
        self,
        url: str,
        token_env: str = "LEXDIAG_LLM_TOKEN",
        temperature: float = 0.8,
        top_p: float = 0.9,
        max_tokens: int = 4096,
        timeout: float = 60.0,
        retries: int = 2,
        backoff: float = 0.5,
        max_concurrency: int = 4,
    ):
        import threading

        self.url = url
        self.token_env = token_env
        self.temperature = temperature
        self.top_p = top_p
        self.max_tokens = max_tokens
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._slots = threading.BoundedSemaphore(max(1, max_concurrency))

    def complete(self, request: LlmRequest) -> LlmResponse:
        import time

        import httpx

        headers = {}
        token = os.environ.get(self.token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body = {
            "prompt": request.prompt,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
        }
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt and self.backoff:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = httpx.post(
                        self.url, json=body, headers=headers,
                        timeout=self.timeout,
                    )
                resp.raise_for_status()
                return LlmResponse(str(resp.json()["text"]))
            except Exception as exc:  # noqa: BLE001 - one failure surface
                last_error = exc
        raise BackendUnavailableError(f"completion service failed: {last_error}")


def make_backend(settings: dict) -> LlmBackend:
    kind = settings.get("backend", "scripted-mock")
    if kind == "scripted-mock":
        fixtures_path = settings.get("fixtures")
        if fixtures_path:
            return ScriptedMockBackend.from_file(fixtures_path)
        return ScriptedMockBackend()
    if kind == "http":
        return HttpLlmBackend(
            url=settings["url"],
            token_env=settings.get("token_env", "LEXDIAG_LLM_TOKEN"),
            temperature=float(settings.get("temperature", 0.8)),
            top_p=float(settings.get("top_p", 0.9)),
            max_tokens=int(settings.get("max_tokens", 4096)),
            timeout=float(settings.get("timeout", 60.0)),
            retries=int(settings.get("retries", 2)),
            backoff=float(settings.get("backoff", 0.5)),
            max_concurrency=int(settings.get("max_concurrency", 4)),
        )
    raise ValueError(f"unknown llm backend {kind!r}")


# ---------------------------------------------------------------------------
# typed results


@dataclass(frozen=True)
class CourtView:
    text: str  # body with the verdict trailer stripped
    verdict: bool | None
    degraded: bool = False


@dataclass(frozen=True)
class RcQuestion:
    question: str
    answer: str


RcQuestionSet = tuple[RcQuestion, ...]

RC_QUESTION_COUNT = 10

_QUESTION_LINE = re.compile(r"^\s*(\d+)\.\s*Q:\s*(.+?)\s*A:\s*(.+?)\s*$")


def parse_question_set(raw: str) -> RcQuestionSet:
    """Parse the numbered question/answer list format."""
    questions: list[RcQuestion] = []
    offset = 0
    for line in raw.splitlines():
        stripped = line.strip()
        if stripped:
            m = _QUESTION_LINE.match(line)
            if not m:
                raise ResponseParseError(
                    f"unparseable question line {stripped!r}",
                    raw=raw, offset=offset,
                )
            number = int(m.group(1))
            if number != len(questions) + 1:
                raise ResponseParseError(
                    f"question numbering jumps to {number}", raw=raw, offset=offset
                )
            questions.append(RcQuestion(m.group(2), m.group(3)))
        offset += len(line) + 1
    if len(questions) != RC_QUESTION_COUNT:
        raise ResponseParseError(
            f"expected {RC_QUESTION_COUNT} questions, got {len(questions)}",
            raw=raw, offset=len(raw),
        )
    return tuple(questions)


def render_question_set(questions: RcQuestionSet) -> str:
    return "\n".join(
        f"{i + 1}. Q: {q.question} A: {q.answer}" for i, q in enumerate(questions)
    )


@dataclass(frozen=True)
class RcScore:
    score: float
    correct: tuple[bool, ...]


def text_key(text: str) -> str:
    """Discriminator for operations keyed by their input text."""
    return stable_digest(" ".join(text.split()))[:16]


def confirmed_key(labels: list[str]) -> str:
    return ",".join(sorted(labels))


def confirmed_fact_line(label: str, answer: str) -> str:
    """The literal line format a confirmed answer contributes to a narrative."""
    return f"Confirmed fact — {label}: {answer}"


# ---------------------------------------------------------------------------
# the gateway


class LlmGateway:
    """Typed operations over a backend. One instance per corpus or service."""

    def __init__(self, backend: LlmBackend):
        self.backend = backend

    # -- corpus construction ----------------------------------------------

    def classify_case_type(self, case_id: str, text: str) -> str:
        prompt = PROMPTS[PromptKind.CLASSIFY_CASE_TYPE].format(
            categories=", ".join(CASE_TYPES), text=text
        )
        request = LlmRequest(
            PromptKind.CLASSIFY_CASE_TYPE, case_id, text_key(text), prompt
        )
        reply = self.backend.complete(request).text.strip()
        if reply not in CASE_TYPES:
            raise ResponseParseError(
                f"case type {reply!r} is not a known category", raw=reply
            )
        return reply

    def irac_summarize(self, case_id: str, text: str) -> str:
        prompt = PROMPTS[PromptKind.IRAC_SUMMARIZE].format(text=text)
        request = LlmRequest(
            PromptKind.IRAC_SUMMARIZE, case_id, text_key(text), prompt
        )
        reply = self.backend.complete(request).text
        for section in IRAC_SECTIONS:
            if section not in reply:
                raise ResponseParseError(
                    f"summary is missing its {section[:-1]} section",
                    raw=reply, offset=len(reply),
                )
        return reply.strip()

    def extract_graph(
        self, text: str, case_id: str = ""
    ) -> tuple[FactRuleGraph, bool]:
        """Returns (graph, degraded)."""
        prompt = PROMPTS[PromptKind.EXTRACT_FACT_RULE_GRAPH].format(text=text)
        request = LlmRequest(
            PromptKind.EXTRACT_FACT_RULE_GRAPH, case_id, text_key(text), prompt
        )
        reply = self.backend.complete(request)
        import json

        try:
            data = json.loads(reply.text)
        except json.JSONDecodeError as exc:
            raise ResponseParseError(
                f"graph reply is not valid JSON: {exc.msg}",
                raw=reply.text, offset=exc.pos,
            ) from None
        try:
            graph = graph_from_dict(data)
        except (KeyError, TypeError, ValueError) as exc:
            raise ResponseParseError(
                f"graph reply is malformed: {exc}", raw=reply.text
            ) from None
        return graph, reply.degraded

    def reconstruct_case(
        self, case_id: str, text: str, disregard: list[str]
    ) -> str:
        ordered = sorted(disregard)
        prompt = PROMPTS[PromptKind.RECONSTRUCT_CASE].format(
            disregard="; ".join(ordered) if ordered else "nothing",
            text=text,
        )
        request = LlmRequest(
            PromptKind.RECONSTRUCT_CASE,
            case_id,
            "-" + "|".join(ordered),
            prompt,
            payload={"text": text},
        )
        reply = self.backend.complete(request)
        if not reply.text.strip():
            raise ResponseParseError("reconstruction came back empty", raw=reply.text)
        return reply.text.strip()

    def enhanced_view(
        self, case_id: str, base_view: str, fact_label: str
    ) -> tuple[str, bool]:
        """The base court view rewritten as if ``fact_label`` were known.

        Returns (text, degraded). On the mock backend a missing fixture
        degrades to the unchanged base view.
        """
        prompt = PROMPTS[PromptKind.RECONSTRUCT_CASE].format(
            disregard="nothing", text=f"{base_view}\nAdditional fact: {fact_label}"
        )
        request = LlmRequest(
            PromptKind.RECONSTRUCT_CASE,
            case_id,
            "+" + fact_label,
            prompt,
            payload={"text": base_view},
        )
        reply = self.backend.complete(request)
        return reply.text.strip(), reply.degraded

    def generate_questions(self, case_id: str, view_text: str) -> RcQuestionSet:
        prompt = PROMPTS[PromptKind.GENERATE_QUESTIONS].format(text=view_text)
        request = LlmRequest(
            PromptKind.GENERATE_QUESTIONS, case_id, "", prompt
        )
        return parse_question_set(self.backend.complete(request).text)

    # -- scoring -----------------------------------------------------------

    def rc_score(
        self, view_text: str, questions: RcQuestionSet, case_id: str = ""
    ) -> RcScore:
        """Fraction of questions whose answers the view can reproduce."""
        if not questions:
            raise ValueError("rc_score needs at least one question")
        flags = []
        for i, q in enumerate(questions):
            prompt = PROMPTS[PromptKind.ANSWER_AND_SCORE].format(
                view=view_text, question=q.question, answer=q.answer
            )
            request = LlmRequest(
                PromptKind.ANSWER_AND_SCORE,
                case_id,
                f"q{i + 1}:{text_key(view_text)}",
                prompt,
                payload={"view": view_text, "question": q.question,
                         "answer": q.answer},
            )
            reply = self.backend.complete(request).text.strip()
            if reply not in ("Correct", "Incorrect"):
                raise ResponseParseError(
                    f"judge replied {reply!r}, expected Correct or Incorrect",
                    raw=reply,
                )
            flags.append(reply == "Correct")
        return RcScore(sum(flags) / len(flags), tuple(flags))

    # -- consultation ------------------------------------------------------

    def generate_court_view(
        self,
        case_id: str,
        description: str,
        confirmed: list[tuple[str, str]],
    ) -> CourtView:
        if not description.strip():
            raise EmptyTextError("court view needs a case description")
        confirmed_lines = "\n".join(
            confirmed_fact_line(label, answer) for label, answer in confirmed
        )
        prompt = PROMPTS[PromptKind.GENERATE_COURT_VIEW].format(
            text=description, confirmed=confirmed_lines or "none yet"
        )
        request = LlmRequest(
            PromptKind.GENERATE_COURT_VIEW,
            case_id,
            confirmed_key([label for label, _ in confirmed]),
            prompt,
            payload={"text": description},
        )
        reply = self.backend.complete(request)
        body, verdict = parse_stop_token(reply.text)
        return CourtView(text=body, verdict=verdict, degraded=reply.degraded)

    def node_question(self, node: NodeId, edges: list[Edge]) -> str:
        """Render the follow-up question for a candidate node.

        Pure template work; no backend round trip. The hint comes from the
        node's first incident relation in a fixed order.
        """
        hint = "any details you remember about it"
        incident = sorted(
            e for e in edges if e.source == node or e.target == node
        )
        for e in incident:
            other = e.target if e.source == node else e.source
            if e.relation is Relation.DEPENDS_ON:
                hint = f"how it relates to {other.label}"
            elif e.relation is Relation.COMPLIES_WITH:
                hint = f"whether it was in line with {other.label}"
            else:
                hint = f"whether it ran against {other.label}"
            break
        return PROMPTS[PromptKind.NODE_TO_QUESTION].format(
            label=node.label, hint=hint
        )


def fixture_rows_to_file(path: str | Path,
                         fixtures: dict[tuple[str, str, str], str]) -> None:
    rows = dump_fixture_rows(fixtures)
    text = "".join(canonical_json(row) + "\n" for row in rows)
    Path(path).write_text(text, encoding="utf-8")
