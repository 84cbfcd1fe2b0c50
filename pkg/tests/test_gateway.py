"""Gateway behavior: stop-token grammar, parsers, mock fixtures, http backend."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lexdiag.errors import (
    BackendUnavailableError,
    EmptyTextError,
    MalformedTokenError,
    ResponseParseError,
)
from lexdiag.gateway import (
    CASE_TYPES,
    HttpLlmBackend,
    LlmGateway,
    LlmRequest,
    PromptKind,
    RcQuestion,
    ScriptedMockBackend,
    append_stop_token,
    confirmed_fact_line,
    dump_fixture_rows,
    load_fixtures,
    make_backend,
    parse_question_set,
    parse_stop_token,
    render_question_set,
    render_stop_token,
    text_key,
)
from lexdiag.graph import Relation, build_graph, fact, graph_to_dict
from lexdiag.util import canonical_json


class TestStopToken:
    def test_render_exact_strings(self):
        assert render_stop_token(True) == "[ -> Yes ]"
        assert render_stop_token(False) == "[ -> No ]"

    def test_parse_yes(self):
        body, verdict = parse_stop_token("Court finds X. [ -> Yes ]")
        assert body == "Court finds X."
        assert verdict is True

    def test_parse_no_token_returns_none(self):
        body, verdict = parse_stop_token("Court finds X.")
        assert body == "Court finds X."
        assert verdict is None

    def test_interior_whitespace_tolerated(self):
        for raw in ("end [->No]", "end [  ->   No  ]", "end [\n->\nNo\n]"):
            body, verdict = parse_stop_token(raw)
            assert (body, verdict) == ("end", False)

    def test_malformed_inner_token(self):
        for raw in (
            "view [ -> Maybe ]",
            "view [ -> yes ]",
            "view [ > Yes ]",
            "view [ - > Yes ]",
            "view [Yes]",
            "view []",
        ):
            with pytest.raises(MalformedTokenError):
                parse_stop_token(raw)

    def test_token_not_at_end_is_no_token(self):
        body, verdict = parse_stop_token("[ -> Yes ] and more words")
        assert verdict is None
        assert body == "[ -> Yes ] and more words"

    def test_earlier_trailer_ignored(self):
        body, verdict = parse_stop_token("x [ -> No ] y [ -> Yes ]")
        assert body == "x [ -> No ] y"
        assert verdict is True

    def test_trailing_whitespace_after_token(self):
        body, verdict = parse_stop_token("done [ -> No ]   \n")
        assert (body, verdict) == ("done", False)

    @given(st.text(max_size=200), st.booleans())
    @settings(max_examples=200)
    def test_round_trip(self, text, verdict):
        body, parsed = parse_stop_token(append_stop_token(text, verdict))
        assert parsed is verdict
        assert body == text.rstrip()


class TestQuestionSetParse:
    def make_lines(self, n):
        return "\n".join(
            f"{i + 1}. Q: what is item {i + 1}? A: item {i + 1} answer"
            for i in range(n)
        )

    def test_well_formed_ten(self):
        qs = parse_question_set(self.make_lines(10))
        assert len(qs) == 10
        assert qs[0].question == "what is item 1?"
        assert qs[9].answer == "item 10 answer"

    def test_round_trip(self):
        raw = self.make_lines(10)
        assert render_question_set(parse_question_set(raw)) == raw

    def test_blank_lines_tolerated(self):
        raw = self.make_lines(10).replace("\n", "\n\n", 3)
        assert len(parse_question_set(raw)) == 10

    def test_wrong_count(self):
        with pytest.raises(ResponseParseError):
            parse_question_set(self.make_lines(9))
        with pytest.raises(ResponseParseError):
            parse_question_set(self.make_lines(11))

    def test_numbering_jump_reports_offset(self):
        raw = self.make_lines(10).replace("3. Q:", "7. Q:", 1)
        with pytest.raises(ResponseParseError) as err:
            parse_question_set(raw)
        assert raw[err.value.offset :].startswith("7. Q:")

    def test_garbage_line_reports_offset(self):
        good = self.make_lines(10)
        raw = good + "\nnot a question line"
        with pytest.raises(ResponseParseError) as err:
            parse_question_set(raw)
        assert raw[err.value.offset :] == "not a question line"


class TestScriptedMock:
    def test_fixture_hit(self):
        backend = ScriptedMockBackend()
        backend.add_fixture(PromptKind.IRAC_SUMMARIZE, "c1", "d", "the summary")
        req = LlmRequest(PromptKind.IRAC_SUMMARIZE, "c1", "d", "p")
        assert backend.complete(req).text == "the summary"
        assert backend.complete(req).degraded is False

    def test_missing_court_view_degrades_to_no(self):
        backend = ScriptedMockBackend()
        req = LlmRequest(PromptKind.GENERATE_COURT_VIEW, "missing", "", "p")
        reply = backend.complete(req)
        assert reply.degraded is True
        body, verdict = parse_stop_token(reply.text)
        assert verdict is False
        assert body

    def test_missing_extract_degrades_to_empty_graph(self):
        backend = ScriptedMockBackend()
        req = LlmRequest(PromptKind.EXTRACT_FACT_RULE_GRAPH, "", "k", "p")
        reply = backend.complete(req)
        assert reply.degraded is True
        assert '"facts": []' in reply.text

    def test_missing_enhancement_returns_base(self):
        backend = ScriptedMockBackend()
        req = LlmRequest(
            PromptKind.RECONSTRUCT_CASE, "c1", "+some fact", "p",
            payload={"text": "the base view"},
        )
        reply = backend.complete(req)
        assert reply.text == "the base view"
        assert reply.degraded is True

    def test_missing_masked_reconstruction_is_an_error(self):
        backend = ScriptedMockBackend()
        req = LlmRequest(PromptKind.RECONSTRUCT_CASE, "c1", "-x|y", "p")
        with pytest.raises(BackendUnavailableError):
            backend.complete(req)

    def test_lexical_judge(self):
        backend = ScriptedMockBackend()
        req = LlmRequest(
            PromptKind.ANSWER_AND_SCORE, "c1", "q1:k", "p",
            payload={"view": "The tenant paid rent on time.",
                     "question": "q", "answer": "paid rent"},
        )
        assert backend.complete(req).text == "Correct"
        req2 = LlmRequest(
            PromptKind.ANSWER_AND_SCORE, "c1", "q2:k", "p",
            payload={"view": "The tenant paid rent on time.",
                     "question": "q", "answer": "broke the lease"},
        )
        assert backend.complete(req2).text == "Incorrect"

    def test_empty_answer_is_incorrect(self):
        backend = ScriptedMockBackend()
        req = LlmRequest(
            PromptKind.ANSWER_AND_SCORE, "c1", "q1:k", "p",
            payload={"view": "anything", "question": "q", "answer": "  "},
        )
        assert backend.complete(req).text == "Incorrect"

    def test_call_history_records_requests(self):
        backend = ScriptedMockBackend()
        backend.add_fixture(PromptKind.IRAC_SUMMARIZE, "c1", "d", "s")
        backend.complete(LlmRequest(PromptKind.IRAC_SUMMARIZE, "c1", "d", "p"))
        assert [r.key for r in backend.call_history] == [
            ("IracSummarize", "c1", "d")
        ]

    def test_fixture_file_round_trip(self, tmp_path):
        backend = ScriptedMockBackend()
        backend.add_fixture(PromptKind.IRAC_SUMMARIZE, "c1", "d", "s")
        backend.add_fixture(PromptKind.GENERATE_COURT_VIEW, "c1", "a,b", "v")
        path = tmp_path / "fixtures.jsonl"
        rows = dump_fixture_rows(backend.fixtures)
        path.write_text(
            "".join(canonical_json(r) + "\n" for r in rows), encoding="utf-8"
        )
        assert load_fixtures(path) == backend.fixtures


def one_case_gateway():
    """Gateway over a mock with a small hand-authored fixture set."""
    backend = ScriptedMockBackend()
    text = "A tenant stopped paying rent after the landlord cut the heating."
    graph = build_graph(
        ["tenant stopped paying rent", "landlord cut the heating"],
        ["habitability duty"],
        [
            ("tenant stopped paying rent", "landlord cut the heating",
             Relation.DEPENDS_ON),
            ("landlord cut the heating", "habitability duty",
             Relation.VIOLATES),
        ],
        case_id="case-1",
    )
    backend.add_fixture(
        PromptKind.CLASSIFY_CASE_TYPE, "case-1", text_key(text), "Contract Law"
    )
    backend.add_fixture(
        PromptKind.IRAC_SUMMARIZE,
        "case-1",
        text_key(text),
        "Issue: rent. Rule: habitability. Analysis: withheld. Conclusion: offset.",
    )
    backend.add_fixture(
        PromptKind.EXTRACT_FACT_RULE_GRAPH,
        "case-1",
        text_key(text),
        canonical_json(graph_to_dict(graph)),
    )
    return LlmGateway(backend), backend, text, graph


class TestGatewayOperations:
    def test_classify_valid_category(self):
        gateway, _, text, _ = one_case_gateway()
        assert gateway.classify_case_type("case-1", text) == "Contract Law"

    def test_classify_rejects_unknown_category(self):
        gateway, backend, text, _ = one_case_gateway()
        backend.add_fixture(
            PromptKind.CLASSIFY_CASE_TYPE, "case-1", text_key(text), "Space Law"
        )
        with pytest.raises(ResponseParseError):
            gateway.classify_case_type("case-1", text)

    def test_case_type_list_is_thirteen_strong(self):
        assert len(CASE_TYPES) == 13
        assert len(set(CASE_TYPES)) == 13

    def test_irac_requires_all_sections(self):
        gateway, backend, text, _ = one_case_gateway()
        assert "Issue:" in gateway.irac_summarize("case-1", text)
        backend.add_fixture(
            PromptKind.IRAC_SUMMARIZE, "case-1", text_key(text),
            "Issue: x. Rule: y. Analysis: z.",
        )
        with pytest.raises(ResponseParseError) as err:
            gateway.irac_summarize("case-1", text)
        assert "Conclusion" in str(err.value)

    def test_extract_graph_bit_identical(self):
        gateway, _, text, graph = one_case_gateway()
        extracted, degraded = gateway.extract_graph(text, case_id="case-1")
        assert extracted == graph
        assert degraded is False

    def test_extract_graph_bad_json_carries_offset(self):
        gateway, backend, text, _ = one_case_gateway()
        backend.add_fixture(
            PromptKind.EXTRACT_FACT_RULE_GRAPH, "case-1", text_key(text),
            '{"facts": [,]}',
        )
        with pytest.raises(ResponseParseError) as err:
            gateway.extract_graph(text, case_id="case-1")
        assert err.value.raw == '{"facts": [,]}'
        assert err.value.offset > 0

    def test_extract_graph_degraded_fallback(self):
        gateway, _, _, _ = one_case_gateway()
        extracted, degraded = gateway.extract_graph("never seen before")
        assert len(extracted) == 0
        assert degraded is True

    def test_reconstruct_keyed_by_sorted_disregard(self):
        gateway, backend, _, _ = one_case_gateway()
        backend.add_fixture(
            PromptKind.RECONSTRUCT_CASE, "case-1", "-alpha|beta", "shortened"
        )
        out = gateway.reconstruct_case("case-1", "base", ["beta", "alpha"])
        assert out == "shortened"

    def test_enhanced_view_fixture_and_fallback(self):
        gateway, backend, _, _ = one_case_gateway()
        backend.add_fixture(
            PromptKind.RECONSTRUCT_CASE, "case-1", "+alibi", "view with alibi"
        )
        text, degraded = gateway.enhanced_view("case-1", "view", "alibi")
        assert (text, degraded) == ("view with alibi", False)
        text, degraded = gateway.enhanced_view("case-1", "view", "unknown")
        assert (text, degraded) == ("view", True)

    def test_generate_questions(self):
        gateway, backend, _, _ = one_case_gateway()
        raw = "\n".join(
            f"{i + 1}. Q: point {i + 1}? A: detail {i + 1}" for i in range(10)
        )
        backend.add_fixture(PromptKind.GENERATE_QUESTIONS, "case-1", "", raw)
        qs = gateway.generate_questions("case-1", "the view")
        assert len(qs) == 10

    def test_rc_score_quantization(self):
        gateway, _, _, _ = one_case_gateway()
        questions = tuple(
            RcQuestion(f"q{i}", f"keyword{i}") for i in range(10)
        )
        for hits in (0, 3, 7, 10):
            view = " ".join(f"keyword{i}" for i in range(hits))
            result = gateway.rc_score(view, questions, case_id="case-1")
            assert result.score == hits / 10
            assert sum(result.correct) == hits

    def test_rc_score_full_view_is_one(self):
        gateway, _, _, _ = one_case_gateway()
        questions = (RcQuestion("q", "the heating failed"),)
        full = "The court observes the heating failed in winter."
        assert gateway.rc_score(full, questions).score == 1.0
        assert gateway.rc_score("", questions).score == 0.0

    def test_rc_score_needs_questions(self):
        gateway, _, _, _ = one_case_gateway()
        with pytest.raises(ValueError):
            gateway.rc_score("view", ())

    def test_court_view_fixture_verdicts(self):
        gateway, backend, _, _ = one_case_gateway()
        backend.add_fixture(
            PromptKind.GENERATE_COURT_VIEW, "case-1", "",
            "No finding is possible yet. [ -> No ]",
        )
        backend.add_fixture(
            PromptKind.GENERATE_COURT_VIEW, "case-1", "alibi",
            "The court holds for the defendant. [ -> Yes ]",
        )
        base = gateway.generate_court_view("case-1", "desc", [])
        assert base.verdict is False
        assert base.degraded is False
        done = gateway.generate_court_view(
            "case-1", "desc", [("alibi", "I was away")]
        )
        assert done.verdict is True
        assert done.text == "The court holds for the defendant."

    def test_court_view_confirmed_order_does_not_matter(self):
        gateway, backend, _, _ = one_case_gateway()
        backend.add_fixture(
            PromptKind.GENERATE_COURT_VIEW, "case-1", "a,b", "Held. [ -> Yes ]"
        )
        view = gateway.generate_court_view(
            "case-1", "desc", [("b", "x"), ("a", "y")]
        )
        assert view.verdict is True

    def test_court_view_unknown_case_degrades(self):
        gateway, _, _, _ = one_case_gateway()
        view = gateway.generate_court_view("nobody", "desc", [])
        assert view.verdict is False
        assert view.degraded is True

    def test_court_view_malformed_token_propagates(self):
        gateway, backend, _, _ = one_case_gateway()
        backend.add_fixture(
            PromptKind.GENERATE_COURT_VIEW, "case-1", "", "Hmm. [ -> Maybe ]"
        )
        with pytest.raises(MalformedTokenError):
            gateway.generate_court_view("case-1", "desc", [])

    def test_court_view_requires_description(self):
        gateway, _, _, _ = one_case_gateway()
        with pytest.raises(EmptyTextError):
            gateway.generate_court_view("case-1", "   ", [])

    def test_confirmed_fact_line_format(self):
        line = confirmed_fact_line("alibi", "I was in Lyon")
        assert line == "Confirmed fact — alibi: I was in Lyon"


class TestNodeQuestion:
    def graph(self):
        return build_graph(
            ["signed waiver", "injury on site"],
            ["duty of care"],
            [
                ("injury on site", "signed waiver", Relation.DEPENDS_ON),
                ("injury on site", "duty of care", Relation.VIOLATES),
            ],
        )

    def test_depends_hint(self):
        gateway = LlmGateway(ScriptedMockBackend())
        g = self.graph()
        q = gateway.node_question(fact("injury on site"), sorted(g.edges))
        assert q.startswith(
            "Regarding your case: can you tell me more about injury on site?"
        )
        assert "For example," in q

    def test_rule_relation_hints(self):
        gateway = LlmGateway(ScriptedMockBackend())
        g = self.graph()
        q = gateway.node_question(fact("signed waiver"), sorted(g.edges))
        assert "injury on site" in q

    def test_no_edges_generic_hint(self):
        gateway = LlmGateway(ScriptedMockBackend())
        q = gateway.node_question(fact("lonely fact"), [])
        assert "any details you remember" in q

    def test_deterministic(self):
        gateway = LlmGateway(ScriptedMockBackend())
        g = self.graph()
        edges = list(g.edges)
        q1 = gateway.node_question(fact("injury on site"), edges)
        q2 = gateway.node_question(fact("injury on site"), list(reversed(edges)))
        assert q1 == q2


class TestHttpBackend:
    def make_transport(self, monkeypatch, responses, calls):
        import httpx

        def fake_post(url, json=None, headers=None, timeout=None):
            calls.append({"url": url, "json": json, "headers": headers})
            action = responses[min(len(calls) - 1, len(responses) - 1)]
            if isinstance(action, Exception):
                raise action

            class R:
                status_code = 200

                def raise_for_status(self):
                    pass

                def json(self):
                    return {"text": action}

            return R()

        monkeypatch.setattr(httpx, "post", fake_post)

    def test_success_and_body_shape(self, monkeypatch):
        calls = []
        self.make_transport(monkeypatch, ["the reply"], calls)
        monkeypatch.setenv("LEXDIAG_LLM_TOKEN", "sekrit")
        backend = HttpLlmBackend("http://llm.local/v1", backoff=0.0)
        reply = backend.complete(
            LlmRequest(PromptKind.IRAC_SUMMARIZE, "c", "d", "the prompt")
        )
        assert reply.text == "the reply"
        assert set(calls[0]["json"]) == {
            "prompt", "temperature", "top_p", "max_tokens"
        }
        assert calls[0]["json"]["prompt"] == "the prompt"
        assert calls[0]["json"]["temperature"] == 0.8
        assert calls[0]["json"]["top_p"] == 0.9
        assert calls[0]["json"]["max_tokens"] == 4096
        assert calls[0]["headers"]["Authorization"] == "Bearer sekrit"

    def test_no_token_no_header(self, monkeypatch):
        calls = []
        self.make_transport(monkeypatch, ["ok"], calls)
        monkeypatch.delenv("LEXDIAG_LLM_TOKEN", raising=False)
        backend = HttpLlmBackend("http://llm.local/v1", backoff=0.0)
        backend.complete(LlmRequest(PromptKind.IRAC_SUMMARIZE, "c", "d", "p"))
        assert "Authorization" not in calls[0]["headers"]

    def test_retries_then_unavailable(self, monkeypatch):
        calls = []
        self.make_transport(
            monkeypatch,
            [ConnectionError("down"), ConnectionError("down"),
             ConnectionError("down")],
            calls,
        )
        backend = HttpLlmBackend("http://llm.local/v1", retries=2, backoff=0.0)
        with pytest.raises(BackendUnavailableError):
            backend.complete(
                LlmRequest(PromptKind.IRAC_SUMMARIZE, "c", "d", "p")
            )
        assert len(calls) == 3

    def test_retry_recovers(self, monkeypatch):
        calls = []
        self.make_transport(
            monkeypatch, [ConnectionError("blip"), "recovered"], calls
        )
        backend = HttpLlmBackend("http://llm.local/v1", retries=2, backoff=0.0)
        reply = backend.complete(
            LlmRequest(PromptKind.IRAC_SUMMARIZE, "c", "d", "p")
        )
        assert reply.text == "recovered"
        assert len(calls) == 2


class TestBackendFactory:
    def test_mock_default(self):
        assert isinstance(make_backend({}), ScriptedMockBackend)

    def test_mock_with_fixture_file(self, tmp_path):
        path = tmp_path / "f.jsonl"
        rows = dump_fixture_rows(
            {("IracSummarize", "c", "d"): "seeded"}
        )
        path.write_text(
            "".join(canonical_json(r) + "\n" for r in rows), encoding="utf-8"
        )
        backend = make_backend({"backend": "scripted-mock", "fixtures": str(path)})
        assert backend.fixtures[("IracSummarize", "c", "d")] == "seeded"

    def test_http(self):
        backend = make_backend(
            {"backend": "http", "url": "http://x", "temperature": 0.5}
        )
        assert isinstance(backend, HttpLlmBackend)
        assert backend.temperature == 0.5

    def test_unknown(self):
        with pytest.raises(ValueError):
            make_backend({"backend": "telepathy"})
