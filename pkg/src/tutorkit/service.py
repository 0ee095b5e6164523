"""Session service: creates sessions, serializes turns per session, calls
the gateway, appends to the corpus event log, and accepts ratings.

The core logic lives in TutorService (plain objects, injectable clock and
id factory so simulations replay byte-identically); create_app wraps it in
a FastAPI HTTP layer.
"""

from __future__ import annotations

import json
import logging
import secrets
import threading
import time
from collections import defaultdict, deque
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Callable, Iterator, Optional

from . import audit as audit_mod
from . import corpus as corpus_mod
from .config import AppConfig
from .gateway import Backend, MockBackend, OpenAIChatBackend, complete
from .model import (
    ChatSession,
    ChatTurn,
    FeedbackType,
    Task,
)
from .prompts import (
    ContextBudget,
    Message,
    NeedsCode,
    PromptTemplates,
    UnsupportedClosedPrompt,
    build_system_prompt,
    compose_context,
    render_closed_prompt,
)
from .tasks import load_task_catalog

log = logging.getLogger("tutorkit.service")

ERROR_RESPONSE_TEXT = "[the tutor could not answer; please try again]"


class ApiError(Exception):
    """Service-level error with a machine-readable code."""

    def __init__(self, code: str, message: str, turn_id: Optional[str] = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.turn_id = turn_id

    HTTP_STATUS = {
        "TaskNotFound": 404,
        "SessionNotFound": 404,
        "NeedsCode": 422,
        "RateLimited": 429,
        "BackendFailure": 502,
        "PayloadInvalid": 400,
    }

    def to_dict(self) -> dict:
        body = {"code": self.code, "message": self.message}
        if self.turn_id:
            body["turn_id"] = self.turn_id
        return body


def utc_now_iso() -> str:
    return datetime.now(tz=timezone.utc).isoformat().replace("+00:00", "Z")


def random_student_id() -> str:
    return secrets.token_hex(16)  # 128-bit anonymous identifier


class EventStore:
    """Append-only event log with derived session views. Appends are
    atomic per event; an optional JSONL file mirrors every append."""

    def __init__(self, path: Optional[str] = None):
        self.path = path
        self._lock = threading.Lock()
        self.events: list[dict] = []
        self.sessions: dict[str, ChatSession] = {}
        self._turn_pos: dict[str, tuple[str, int]] = {}
        if path:
            try:
                for event in corpus_mod.read_events(path):
                    self._apply(event)
                    self.events.append(event)
            except FileNotFoundError:
                pass

    def append(self, event: dict) -> None:
        with self._lock:
            self._apply(event)
            self.events.append(event)
            if self.path:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(event, ensure_ascii=False, sort_keys=True) + "\n")

    def _apply(self, event: dict) -> None:
        kind = event["kind"]
        if kind == "session_started":
            session = ChatSession(
                session_id=event["session_id"],
                anonymous_student_id=event["anonymous_student_id"],
                task_id=event["task_id"],
                started_at=event.get("started_at", ""),
            )
            self.sessions[session.session_id] = session
        elif kind == "turn_recorded":
            closed = event.get("closed_type")
            turn = ChatTurn(
                turn_id=event["turn_id"],
                session_id=event["session_id"],
                index=event["index"],
                mode=event["mode"],
                closed_type=FeedbackType(closed) if closed else None,
                prompt_text=event.get("prompt_text", ""),
                response_text=event.get("response_text", ""),
                prompt_at=event.get("prompt_at", ""),
                response_at=event.get("response_at", ""),
                response_error=bool(event.get("response_error", False)),
            )
            session = self.sessions[turn.session_id]
            self._turn_pos[turn.turn_id] = (turn.session_id, len(session.turns))
            session.turns.append(turn)
        elif kind == "response_rated":
            sid, pos = self._turn_pos[event["turn_id"]]
            session = self.sessions[sid]
            session.turns[pos] = session.turns[pos].with_rating(
                event["rating"], event.get("comment")
            )

    def find_turn(self, turn_id: str) -> Optional[ChatTurn]:
        pos = self._turn_pos.get(turn_id)
        if pos is None:
            return None
        sid, idx = pos
        return self.sessions[sid].turns[idx]


class RateLimiter:
    """Sliding-window limiter per student token."""

    def __init__(self, per_minute: int, clock: Callable[[], float]):
        self.per_minute = per_minute
        self.clock = clock
        self._events: dict[str, deque] = defaultdict(deque)
        self._lock = threading.Lock()

    def check(self, token: str) -> bool:
        if self.per_minute <= 0:
            return True
        now = self.clock()
        with self._lock:
            window = self._events[token]
            while window and now - window[0] > 60.0:
                window.popleft()
            if len(window) >= self.per_minute:
                return False
            window.append(now)
            return True


@dataclass
class TurnResult:
    turn: ChatTurn
    audit_record: audit_mod.AdherenceRecord
    enforcement_failed: bool = False


class TutorService:
    """All session behaviour, independent of the HTTP layer."""

    def __init__(
        self,
        config: AppConfig,
        backend: Optional[Backend] = None,
        tasks: Optional[dict] = None,
        clock: Optional[Callable[[], str]] = None,
        id_factory: Optional[Callable[[str], str]] = None,
        monotonic: Optional[Callable[[], float]] = None,
    ):
        self.config = config
        self.tasks: dict[str, Task] = tasks or load_task_catalog(config.tasks_dir)
        self.templates = PromptTemplates(config.template_dir, config.locale)
        if backend is not None:
            self.backend = backend
        elif config.backend_url:
            self.backend = OpenAIChatBackend(config.backend_url)
        else:
            self.backend = MockBackend()
        self.store = EventStore(config.corpus_path)
        self.clock = clock or utc_now_iso
        self._counter = 0
        self._id_factory = id_factory or self._default_id
        self.rate_limiter = RateLimiter(config.rate_limit_per_minute, monotonic or time.monotonic)
        self._session_locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._locks_guard = threading.Lock()
        self.audit_records: dict[str, audit_mod.AdherenceRecord] = {}
        self.budget = ContextBudget(
            max_tokens=config.max_context_tokens,
            keep_recent_turns=config.keep_recent_turns,
        )

    def _default_id(self, kind: str) -> str:
        self._counter += 1
        return f"{kind}-{secrets.token_hex(6)}"

    def _session_lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._session_locks[session_id]

    # -- sessions ----------------------------------------------------------

    def create_session(self, task_id: str, student_token: Optional[str] = None) -> ChatSession:
        if task_id not in self.tasks:
            raise ApiError("TaskNotFound", f"unknown task {task_id!r}")
        student = student_token or random_student_id()
        session_id = self._id_factory("session")
        now = self.clock()
        self.store.append({
            "kind": "session_started",
            "session_id": session_id,
            "anonymous_student_id": student,
            "task_id": task_id,
            "started_at": now,
        })
        greeting = ChatTurn(
            turn_id=f"{session_id}-t0000",
            session_id=session_id,
            index=0,
            mode="open",
            prompt_text="",
            response_text=self.templates.greeting,
            prompt_at=now,
            response_at=now,
        )
        self.store.append(corpus_mod.turn_to_event(greeting))
        return self.store.sessions[session_id]

    def get_session(self, session_id: str) -> ChatSession:
        session = self.store.sessions.get(session_id)
        if session is None:
            raise ApiError("SessionNotFound", f"unknown session {session_id!r}")
        return session

    # -- turns -------------------------------------------------------------

    def post_message(
        self,
        session_id: str,
        mode: str,
        closed_type: Optional[str] = None,
        text: Optional[str] = None,
        student_code: Optional[str] = None,
    ) -> TurnResult:
        session = self.get_session(session_id)
        if not self.rate_limiter.check(session.anonymous_student_id):
            raise ApiError("RateLimited", "too many prompts, slow down")
        task = self.tasks[session.task_id]

        if mode == "closed":
            if not closed_type:
                raise ApiError("PayloadInvalid", "closed mode requires closed_type")
            try:
                ft = FeedbackType(closed_type)
            except ValueError:
                raise ApiError("PayloadInvalid", f"unknown feedback type {closed_type!r}") from None
            try:
                rendered = render_closed_prompt(ft, student_code, task, self.templates)
            except UnsupportedClosedPrompt as exc:
                raise ApiError("PayloadInvalid", str(exc)) from None
            if isinstance(rendered, NeedsCode):
                raise ApiError(
                    "NeedsCode",
                    f"the {ft.value} prompt needs your current code attached",
                )
            prompt_text = rendered.content
        elif mode == "open":
            if not (text and text.strip()):
                raise ApiError("PayloadInvalid", "open mode requires non-empty text")
            prompt_text = text
            if student_code and student_code.strip():
                prompt_text += f"\n\n```python\n{student_code.strip()}\n```"
            ft = None
        else:
            raise ApiError("PayloadInvalid", f"mode must be open|closed, got {mode!r}")

        # Strict per-session serialization: response(i) completes and is
        # persisted before prompt(i+1) is accepted.
        with self._session_lock(session_id):
            session = self.get_session(session_id)
            index = len(session.prompt_turns) + 1
            prompt_at = self.clock()
            system_prompt = build_system_prompt(task, mode, self.templates)
            messages = compose_context(session, prompt_text, system_prompt, self.budget)

            response, record, enforcement_failed = self._generate_audited(
                messages, task, session
            )

            turn = ChatTurn(
                turn_id=f"{session_id}-t{index:04d}",
                session_id=session_id,
                index=index,
                mode=mode,
                closed_type=ft if mode == "closed" else None,
                prompt_text=prompt_text,
                response_text=response.text if response.finish_reason != "error"
                else ERROR_RESPONSE_TEXT,
                prompt_at=prompt_at,
                response_at=self.clock(),
                response_error=response.finish_reason == "error",
            )
            self.store.append(corpus_mod.turn_to_event(turn))
            record.turn_id = turn.turn_id
            self.audit_records[turn.turn_id] = record

        if response.finish_reason == "error":
            raise ApiError("BackendFailure", "backend failed after retries", turn_id=turn.turn_id)
        if enforcement_failed:
            log.warning("enforcement failed for turn %s: response still discloses the solution",
                        turn.turn_id)
        return TurnResult(turn=turn, audit_record=record, enforcement_failed=enforcement_failed)

    def _generate_audited(self, messages, task, session):
        """Generate once; in enforcement mode, regenerate while the draft
        fully discloses the solution, up to the configured retry count."""
        pending = ChatTurn(
            turn_id="pending", session_id=session.session_id, index=-1,
            mode="open", prompt_text=messages[-1].content, response_text="",
        )
        prior_templates = self._prior_templates(session)
        attempts = self.config.audit.enforcement_retries + 1 if self.config.enforce_guardrails else 1
        response = None
        record = None
        from dataclasses import replace as _replace
        for attempt in range(attempts):
            response = complete(self.backend, messages, self.config.generation)
            draft = _replace(pending, response_text=response.text)
            record = audit_mod.audit_response(draft, task, prior_templates, self.config.audit)
            if not self.config.enforce_guardrails:
                return response, record, False
            if response.finish_reason == "error":
                return response, record, False
            if record.solution_disclosure is not audit_mod.SolutionDisclosure.COMPLETE:
                return response, record, False
            messages = messages + [Message(
                "system",
                "Your previous draft revealed the complete solution. Regenerate the "
                f"answer without it (attempt {attempt + 2}).",
            )]
        return response, record, True

    def _prior_templates(self, session) -> tuple:
        from . import codeparse
        templates = []
        for turn in session.turns:
            if turn.is_greeting:
                continue
            for block in codeparse.extract_code_blocks(turn.response_text):
                structure = codeparse.analyze_structure(block)
                if codeparse.is_skeleton(structure) and structure.def_names:
                    templates.append(frozenset(structure.def_names))
        return tuple(templates)

    # -- ratings -----------------------------------------------------------

    def rate_response(self, turn_id: str, thumb: str, comment: Optional[str] = None) -> dict:
        if thumb not in ("up", "down"):
            raise ApiError("PayloadInvalid", "thumb must be up|down")
        turn = self.store.find_turn(turn_id)
        if turn is None:
            raise ApiError("SessionNotFound", f"unknown turn {turn_id!r}")
        self.store.append({
            "kind": "response_rated",
            "turn_id": turn_id,
            "rating": thumb,
            "comment": comment,
            "rated_at": self.clock(),
        })
        return {"ok": True, "turn_id": turn_id, "rating": thumb}

    # -- export ------------------------------------------------------------

    def export_corpus(
        self,
        task_id: Optional[str] = None,
        date_from: Optional[str] = None,
        date_to: Optional[str] = None,
    ) -> Iterator[dict]:
        """Re-serialize the merged session views as a clean event stream."""
        wanted_sessions = []
        for session_id in sorted(self.store.sessions):
            session = self.store.sessions[session_id]
            if task_id and session.task_id != task_id:
                continue
            if date_from and session.started_at < date_from:
                continue
            if date_to and session.started_at > date_to:
                continue
            wanted_sessions.append(session)
        for session in wanted_sessions:
            yield from corpus_mod.session_to_events(session)


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------

from pydantic import BaseModel


class CreateSessionBody(BaseModel):
    task_id: str
    student_token: Optional[str] = None


class MessageBody(BaseModel):
    mode: str
    closed_type: Optional[str] = None
    text: Optional[str] = None
    student_code: Optional[str] = None
    stream: bool = False


class RatingBody(BaseModel):
    thumb: str
    comment: Optional[str] = None


def create_app(service: TutorService):
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse, StreamingResponse

    app = FastAPI(title="tutorkit")
    app.state.service = service

    def turn_payload(turn: ChatTurn) -> dict:
        return {
            "turn_id": turn.turn_id,
            "session_id": turn.session_id,
            "index": turn.index,
            "mode": turn.mode,
            "closed_type": turn.closed_type.value if turn.closed_type else None,
            "prompt_text": turn.prompt_text,
            "response_text": turn.response_text,
            "rating": turn.rating,
            "comment": turn.comment,
            "response_error": turn.response_error,
        }

    def session_payload(session: ChatSession) -> dict:
        return {
            "session_id": session.session_id,
            "anonymous_student_id": session.anonymous_student_id,
            "task_id": session.task_id,
            "started_at": session.started_at,
            "turns": [turn_payload(t) for t in session.turns],
        }

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=ApiError.HTTP_STATUS.get(exc.code, 400),
                            content=exc.to_dict())

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    @app.get("/tasks")
    def list_tasks():
        # The reference solution must never leave the server.
        return [
            {
                "task_id": t.task_id,
                "title": t.title,
                "description": t.description,
                "concept_tags": list(t.concept_tags),
            }
            for t in service.tasks.values()
        ]

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        session = service.create_session(body.task_id, body.student_token)
        return session_payload(session)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return session_payload(service.get_session(session_id))

    @app.get("/students/{student_token}/sessions")
    def list_sessions(student_token: str):
        return [
            session_payload(s)
            for s in service.store.sessions.values()
            if s.anonymous_student_id == student_token
        ]

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody):
        if not body.stream:
            result = service.post_message(
                session_id, body.mode, body.closed_type, body.text, body.student_code
            )
            return turn_payload(result.turn)

        def sse() -> Iterator[str]:
            try:
                result = service.post_message(
                    session_id, body.mode, body.closed_type, body.text, body.student_code
                )
            except ApiError as exc:
                yield "data: " + json.dumps({"type": "error", **exc.to_dict()}) + "\n\n"
                return
            text = result.turn.response_text
            for start in range(0, len(text), 64):
                chunk = text[start:start + 64]
                yield "data: " + json.dumps({"type": "chunk", "text": chunk}) + "\n\n"
            yield "data: " + json.dumps({"type": "done", "turn": turn_payload(result.turn)}) + "\n\n"

        return StreamingResponse(sse(), media_type="text/event-stream")

    @app.post("/turns/{turn_id}/rating")
    def rate(turn_id: str, body: RatingBody):
        return service.rate_response(turn_id, body.thumb, body.comment)

    @app.get("/export")
    def export(task_id: Optional[str] = None, date_from: Optional[str] = None,
               date_to: Optional[str] = None):
        def ndjson() -> Iterator[str]:
            for event in service.export_corpus(task_id, date_from, date_to):
                yield json.dumps(event, ensure_ascii=False, sort_keys=True) + "\n"

        return StreamingResponse(ndjson(), media_type="application/x-ndjson")

    return app
