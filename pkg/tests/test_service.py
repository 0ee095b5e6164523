import json
import threading
import time

import pytest
from fastapi.testclient import TestClient

from tutorkit import corpus as corpus_mod
from tutorkit.audit import SolutionDisclosure
from tutorkit.config import AppConfig
from tutorkit.gateway import Backend, MockBackend, ModelResponse, TransientBackendError
from tutorkit.gateway import extract_reference_block
from tutorkit.service import ApiError, TutorService, create_app


def make_service(backend=None, enforce=False, **config_kw):
    cfg = AppConfig(tasks_dir="tasks", enforce_guardrails=enforce,
                    rate_limit_per_minute=0, **config_kw)
    return TutorService(cfg, backend=backend or MockBackend())


# -- sessions -----------------------------------------------------------------

def test_create_session_stores_greeting_turn_zero():
    service = make_service()
    session = service.create_session("happy_strings", "tok1")
    assert len(session.turns) == 1
    greeting = session.turns[0]
    assert greeting.index == 0
    assert greeting.prompt_text == ""
    assert greeting.response_text
    assert session.anonymous_student_id == "tok1"


def test_multiple_sessions_per_task_get_distinct_ids():
    service = make_service()
    a = service.create_session("happy_strings", "tok1")
    b = service.create_session("happy_strings", "tok1")
    assert a.session_id != b.session_id


def test_unknown_task_is_task_not_found():
    service = make_service()
    with pytest.raises(ApiError) as exc:
        service.create_session("bogus", "tok1")
    assert exc.value.code == "TaskNotFound"


def test_anonymous_id_minted_when_no_token():
    service = make_service()
    session = service.create_session("happy_strings")
    assert len(session.anonymous_student_id) == 32  # 128-bit hex


# -- messages -----------------------------------------------------------------

def test_closed_ktc_succeeds_without_code():
    service = make_service()
    session = service.create_session("happy_strings", "tok1")
    result = service.post_message(session.session_id, "closed", "KTC")
    assert result.turn.index == 1
    assert result.turn.closed_type.value == "KTC"
    assert result.turn.response_text


def test_closed_kc_succeeds_without_code():
    service = make_service()
    session = service.create_session("happy_strings", "tok1")
    result = service.post_message(session.session_id, "closed", "KC")
    assert result.turn.response_text


@pytest.mark.parametrize("ft", ["KM", "KP", "KR"])
def test_closed_code_prompts_without_code_need_code(ft):
    service = make_service()
    session = service.create_session("happy_strings", "tok1")
    with pytest.raises(ApiError) as exc:
        service.post_message(session.session_id, "closed", ft)
    assert exc.value.code == "NeedsCode"
    # With code attached the same request goes through.
    result = service.post_message(session.session_id, "closed", ft, student_code="x = 1")
    assert result.turn.index == 1


def test_open_empty_text_is_payload_invalid():
    service = make_service()
    session = service.create_session("happy_strings", "tok1")
    with pytest.raises(ApiError) as exc:
        service.post_message(session.session_id, "open", text="")
    assert exc.value.code == "PayloadInvalid"


def test_closed_kcr_is_payload_invalid():
    service = make_service()
    session = service.create_session("happy_strings", "tok1")
    with pytest.raises(ApiError) as exc:
        service.post_message(session.session_id, "closed", "KCR")
    assert exc.value.code == "PayloadInvalid"


def test_unknown_session_is_session_not_found():
    service = make_service()
    with pytest.raises(ApiError) as exc:
        service.post_message("nope", "open", text="hi")
    assert exc.value.code == "SessionNotFound"


def test_backend_failure_stores_error_turn_and_surfaces():
    class AlwaysDown(Backend):
        def generate(self, messages, cfg):
            raise TransientBackendError("down")

    service = make_service(backend=AlwaysDown())
    session = service.create_session("happy_strings", "tok1")
    with pytest.raises(ApiError) as exc:
        service.post_message(session.session_id, "open", text="hello?")
    assert exc.value.code == "BackendFailure"
    stored = service.store.sessions[session.session_id].prompt_turns
    assert len(stored) == 1
    assert stored[0].response_error is True
    # Crash safety: turn is complete (prompt + flagged response), not dangling.
    assert stored[0].prompt_text == "hello?"


def test_audit_record_computed_and_stored_per_turn():
    service = make_service()
    session = service.create_session("happy_strings", "tok1")
    result = service.post_message(session.session_id, "open", text="how do I start?")
    assert result.turn.turn_id in service.audit_records
    assert service.audit_records[result.turn.turn_id].step_profile is not None


# -- per-session FIFO -----------------------------------------------------------

class ConcurrencyProbe(Backend):
    """Counts overlapping generate() calls."""

    def __init__(self, delay=0.02):
        self.delay = delay
        self.inflight = 0
        self.max_inflight = 0
        self._lock = threading.Lock()

    def generate(self, messages, cfg):
        with self._lock:
            self.inflight += 1
            self.max_inflight = max(self.max_inflight, self.inflight)
        time.sleep(self.delay)
        with self._lock:
            self.inflight -= 1
        return ModelResponse(text="one step: 1. think.", finish_reason="complete")


def test_concurrent_posts_to_one_session_serialize():
    probe = ConcurrencyProbe()
    service = make_service(backend=probe)
    session = service.create_session("happy_strings", "tok1")

    def post(i):
        service.post_message(session.session_id, "open", text=f"question {i}")

    threads = [threading.Thread(target=post, args=(i,)) for i in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    assert probe.max_inflight == 1
    turns = service.store.sessions[session.session_id].prompt_turns
    assert [t.index for t in turns] == [1, 2, 3, 4, 5, 6]
    assert all(t.response_text for t in turns)


def test_two_sessions_can_overlap():
    probe = ConcurrencyProbe(delay=0.05)
    service = make_service(backend=probe)
    s1 = service.create_session("happy_strings", "tok1")
    s2 = service.create_session("happy_strings", "tok2")

    threads = [
        threading.Thread(target=service.post_message, args=(s1.session_id, "open"),
                         kwargs={"text": "a"}),
        threading.Thread(target=service.post_message, args=(s2.session_id, "open"),
                         kwargs={"text": "b"}),
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert probe.max_inflight == 2  # serialization is per session, not global


# -- ratings -------------------------------------------------------------------

def test_rating_ack_and_comment_stored():
    service = make_service()
    session = service.create_session("happy_strings", "tok1")
    result = service.post_message(session.session_id, "open", text="hello")
    ack = service.rate_response(result.turn.turn_id, "up")
    assert ack["ok"]
    service.rate_response(result.turn.turn_id, "down", "confidently wrong")
    merged = service.store.find_turn(result.turn.turn_id)
    assert merged.rating == "down"
    assert merged.comment == "confidently wrong"


def test_rating_unknown_turn_is_session_not_found():
    service = make_service()
    with pytest.raises(ApiError) as exc:
        service.rate_response("ghost", "up")
    assert exc.value.code == "SessionNotFound"


# -- export --------------------------------------------------------------------

def test_export_validates_and_conserves_counts():
    service = make_service()
    for token in ("tok1", "tok2"):
        session = service.create_session("happy_strings", token)
        for i in range(3):
            service.post_message(session.session_id, "open", text=f"q{i} from {token}")

    lines = [json.dumps(e, sort_keys=True) for e in service.export_corpus()]
    report = corpus_mod.validate_corpus(lines)
    assert report.ok, report.violations

    events = [e for _, e, _ in corpus_mod.iter_events(lines) if e]
    turns = [e for e in events if e["kind"] == "turn_recorded" and e["index"] > 0]
    prompts = [t for t in turns if t["prompt_text"]]
    responses = [t for t in turns if t["response_text"]]
    assert len(prompts) == len(responses) == 6


def test_export_filters_by_task():
    service = make_service()
    s1 = service.create_session("happy_strings", "tok1")
    s2 = service.create_session("rental_properties", "tok1")
    service.post_message(s1.session_id, "open", text="a")
    service.post_message(s2.session_id, "open", text="b")
    events = list(service.export_corpus(task_id="rental_properties"))
    session_events = [e for e in events if e["kind"] == "session_started"]
    assert len(session_events) == 1
    assert session_events[0]["task_id"] == "rental_properties"


def test_export_filters_by_date_range():
    stamps = iter(["2025-01-10T00:00:00Z", "2025-01-20T00:00:00Z"])
    service = TutorService(
        AppConfig(tasks_dir="tasks", rate_limit_per_minute=0),
        backend=MockBackend(),
        clock=lambda: next(stamps, "2025-01-31T00:00:00Z"),
    )
    early = service.create_session("happy_strings", "tok1")
    late = service.create_session("happy_strings", "tok1")
    events = list(service.export_corpus(date_from="2025-01-15T00:00:00Z"))
    started = [e["session_id"] for e in events if e["kind"] == "session_started"]
    assert started == [late.session_id]
    events = list(service.export_corpus(date_to="2025-01-15T00:00:00Z"))
    started = [e["session_id"] for e in events if e["kind"] == "session_started"]
    assert started == [early.session_id]


def test_export_empty_store_is_valid_empty_stream():
    service = make_service()
    events = list(service.export_corpus())
    assert events == []
    assert corpus_mod.validate_corpus([]).ok


def test_export_contains_no_identifiers_beyond_anonymous_ids():
    service = make_service()
    session = service.create_session("happy_strings")
    service.post_message(session.session_id, "open", text="hi")
    fields = set()
    for event in service.export_corpus():
        fields.update(event.keys())
    assert "anonymous_student_id" in fields
    assert not fields & {"name", "email", "ip_address", "user_id"}


# -- rate limiting ----------------------------------------------------------------

def test_rate_limit_kicks_in_per_token():
    fake_now = {"t": 0.0}
    cfg = AppConfig(tasks_dir="tasks", rate_limit_per_minute=3)
    service = TutorService(cfg, backend=MockBackend(), monotonic=lambda: fake_now["t"])
    session = service.create_session("happy_strings", "tok1")
    for i in range(3):
        service.post_message(session.session_id, "open", text=f"q{i}")
    with pytest.raises(ApiError) as exc:
        service.post_message(session.session_id, "open", text="q3")
    assert exc.value.code == "RateLimited"
    fake_now["t"] += 61.0
    service.post_message(session.session_id, "open", text="q4")  # window slid


# -- enforcement -------------------------------------------------------------------

class LeakOnceBackend(Backend):
    """Leaks the reference solution on the first call, then behaves."""

    def __init__(self):
        self.calls = 0

    def generate(self, messages, cfg):
        self.calls += 1
        if self.calls == 1:
            ref = extract_reference_block(messages[0].content)
            return ModelResponse(text=f"Here:\n```python\n{ref}\n```", finish_reason="complete")
        return ModelResponse(text="Let's go one step at a time instead.",
                             finish_reason="complete")


def test_enforcement_regenerates_leaked_solution():
    service = make_service(backend=LeakOnceBackend(), enforce=True)
    session = service.create_session("happy_strings", "tok1")
    result = service.post_message(session.session_id, "open", text="give me the solution")
    assert result.enforcement_failed is False
    record = service.audit_records[result.turn.turn_id]
    assert record.solution_disclosure is not SolutionDisclosure.COMPLETE
    assert "one step" in result.turn.response_text


def test_without_enforcement_leak_is_stored_but_flagged_in_audit():
    service = make_service(backend=LeakOnceBackend(), enforce=False)
    session = service.create_session("happy_strings", "tok1")
    result = service.post_message(session.session_id, "open", text="give me the solution")
    record = service.audit_records[result.turn.turn_id]
    assert record.solution_disclosure is SolutionDisclosure.COMPLETE


class AlwaysLeakBackend(Backend):
    def generate(self, messages, cfg):
        ref = extract_reference_block(messages[0].content)
        return ModelResponse(text=f"```python\n{ref}\n```", finish_reason="complete")


def test_enforcement_exhaustion_flags_and_stores():
    service = make_service(backend=AlwaysLeakBackend(), enforce=True)
    session = service.create_session("happy_strings", "tok1")
    result = service.post_message(session.session_id, "open", text="solution please")
    assert result.enforcement_failed is True
    record = service.audit_records[result.turn.turn_id]
    assert record.solution_disclosure is SolutionDisclosure.COMPLETE


# -- HTTP layer ----------------------------------------------------------------------

@pytest.fixture()
def client():
    service = make_service()
    return TestClient(create_app(service), raise_server_exceptions=False)


def test_http_task_catalog_excludes_reference_solution(client):
    resp = client.get("/tasks")
    assert resp.status_code == 200
    body = resp.json()
    assert {t["task_id"] for t in body} == {"happy_strings", "recursion_snippets",
                                            "rental_properties"}
    assert "reference_solution" not in json.dumps(body)


def test_http_full_flow_with_streaming(client):
    created = client.post("/sessions", json={"task_id": "happy_strings",
                                             "student_token": "tok9"})
    assert created.status_code == 200
    session_id = created.json()["session_id"]

    resp = client.post(f"/sessions/{session_id}/messages",
                       json={"mode": "closed", "closed_type": "KC", "stream": True})
    assert resp.status_code == 200
    assert resp.headers["content-type"].startswith("text/event-stream")
    events = [json.loads(line[6:]) for line in resp.text.splitlines()
              if line.startswith("data: ")]
    assert events[-1]["type"] == "done"
    streamed = "".join(e["text"] for e in events if e["type"] == "chunk")
    assert streamed == events[-1]["turn"]["response_text"]

    turn_id = events[-1]["turn"]["turn_id"]
    rated = client.post(f"/turns/{turn_id}/rating",
                        json={"thumb": "down", "comment": "too brief"})
    assert rated.status_code == 200

    export = client.get("/export")
    lines = [l for l in export.text.splitlines() if l.strip()]
    assert corpus_mod.validate_corpus(lines).ok


def test_http_error_codes(client):
    assert client.post("/sessions", json={"task_id": "nope"}).status_code == 404
    created = client.post("/sessions", json={"task_id": "happy_strings"})
    sid = created.json()["session_id"]
    needs_code = client.post(f"/sessions/{sid}/messages",
                             json={"mode": "closed", "closed_type": "KM"})
    assert needs_code.status_code == 422
    assert needs_code.json()["code"] == "NeedsCode"
    bad = client.post(f"/sessions/{sid}/messages", json={"mode": "open", "text": ""})
    assert bad.status_code == 400
    missing = client.post("/sessions/ghost/messages", json={"mode": "open", "text": "x"})
    assert missing.status_code == 404


def test_http_needs_code_surfaces_in_stream(client):
    created = client.post("/sessions", json={"task_id": "happy_strings"})
    sid = created.json()["session_id"]
    resp = client.post(f"/sessions/{sid}/messages",
                       json={"mode": "closed", "closed_type": "KR", "stream": True})
    events = [json.loads(line[6:]) for line in resp.text.splitlines()
              if line.startswith("data: ")]
    assert events[-1]["type"] == "error"
    assert events[-1]["code"] == "NeedsCode"


def test_event_log_file_persistence(tmp_path):
    path = tmp_path / "corpus.jsonl"
    service = make_service(corpus_path=str(path))
    session = service.create_session("happy_strings", "tok1")
    service.post_message(session.session_id, "open", text="hello")

    reloaded = make_service(corpus_path=str(path))
    assert session.session_id in reloaded.store.sessions
    assert len(reloaded.store.sessions[session.session_id].prompt_turns) == 1
