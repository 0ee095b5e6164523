"""Append-only JSONL event log for chat corpora, plus structural validation.

Event kinds
-----------
``session_started``   session_id, anonymous_student_id, task_id, started_at
``turn_recorded``     turn_id, session_id, index, mode, closed_type,
                      prompt_text, response_text, prompt_at, response_at
``response_rated``    turn_id, rating, comment, rated_at

Turns are immutable once recorded; ratings are later events merged at read
time (last write wins on re-rating).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, TextIO

from .model import (
    OFFERABLE_CLOSED_TYPES,
    ChatSession,
    ChatTurn,
    FeedbackType,
)

EVENT_KINDS = ("session_started", "turn_recorded", "response_rated")


@dataclass(frozen=True)
class Violation:
    locator: str  # e.g. "line 12" or "session s1 turn 3"
    message: str

    def __str__(self) -> str:
        return f"{self.locator}: {self.message}"


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, locator: str, message: str) -> None:
        self.violations.append(Violation(locator, message))


# ---------------------------------------------------------------------------
# Event I/O
# ---------------------------------------------------------------------------

def iter_events(lines: Iterable[str]) -> Iterator[tuple[int, Optional[dict], Optional[str]]]:
    """Yield (line_number, event_dict, parse_error) per non-blank line."""
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            event = json.loads(line)
        except json.JSONDecodeError as exc:
            yield lineno, None, f"malformed JSON: {exc.msg}"
            continue
        if not isinstance(event, dict):
            yield lineno, None, "event must be a JSON object"
            continue
        yield lineno, event, None


def read_events(path) -> list[dict]:
    """Read a corpus file, raising on malformed lines (strict mode)."""
    events = []
    with open(path, encoding="utf-8") as fh:
        for lineno, event, err in iter_events(fh):
            if err:
                raise ValueError(f"{path}:{lineno}: {err}")
            events.append(event)
    return events


def write_events(events: Iterable[dict], fh: TextIO) -> None:
    for event in events:
        fh.write(json.dumps(event, ensure_ascii=False, sort_keys=True) + "\n")


def turn_to_event(turn: ChatTurn) -> dict:
    event = {
        "kind": "turn_recorded",
        "turn_id": turn.turn_id,
        "session_id": turn.session_id,
        "index": turn.index,
        "mode": turn.mode,
        "closed_type": turn.closed_type.value if turn.closed_type else None,
        "prompt_text": turn.prompt_text,
        "response_text": turn.response_text,
        "prompt_at": turn.prompt_at,
        "response_at": turn.response_at,
    }
    if turn.response_error:
        event["response_error"] = True
    return event


def session_to_events(session: ChatSession) -> Iterator[dict]:
    """Serialize one session (with any ratings) back into event form."""
    yield {
        "kind": "session_started",
        "session_id": session.session_id,
        "anonymous_student_id": session.anonymous_student_id,
        "task_id": session.task_id,
        "started_at": session.started_at,
    }
    for turn in session.turns:
        yield turn_to_event(turn)
        if turn.rating is not None:
            yield {
                "kind": "response_rated",
                "turn_id": turn.turn_id,
                "rating": turn.rating,
                "comment": turn.comment,
                "rated_at": turn.response_at,
            }


def corpus_to_events(sessions: Iterable[ChatSession]) -> Iterator[dict]:
    for session in sessions:
        yield from session_to_events(session)


# ---------------------------------------------------------------------------
# Session assembly
# ---------------------------------------------------------------------------

def build_sessions(events: Iterable[dict]) -> dict:
    """Fold an event stream into {session_id: ChatSession}.

    Assumes a structurally valid stream; run validate_corpus first when the
    provenance is untrusted. Ratings merge last-write-wins.
    """
    sessions: dict[str, ChatSession] = {}
    turns_by_id: dict[str, tuple[str, int]] = {}  # turn_id -> (session_id, position)
    for event in events:
        kind = event.get("kind")
        if kind == "session_started":
            session = ChatSession(
                session_id=event["session_id"],
                anonymous_student_id=event["anonymous_student_id"],
                task_id=event["task_id"],
                started_at=event.get("started_at", ""),
            )
            sessions[session.session_id] = session
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
            session = sessions[turn.session_id]
            turns_by_id[turn.turn_id] = (turn.session_id, len(session.turns))
            session.turns.append(turn)
        elif kind == "response_rated":
            sid, pos = turns_by_id[event["turn_id"]]
            session = sessions[sid]
            session.turns[pos] = session.turns[pos].with_rating(
                event["rating"], event.get("comment")
            )
    for session in sessions.values():
        session.turns.sort(key=lambda t: t.index)
    return sessions


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

_REQUIRED_FIELDS = {
    "session_started": ("session_id", "anonymous_student_id", "task_id"),
    "turn_recorded": ("turn_id", "session_id", "index", "mode",
                      "prompt_text", "response_text"),
    "response_rated": ("turn_id", "rating"),
}

_OFFERABLE_NAMES = {ft.value for ft in OFFERABLE_CLOSED_TYPES}


def validate_corpus(lines: Iterable[str], task_ids: Optional[set] = None) -> ValidationReport:
    """Check every type invariant across a raw corpus stream.

    Returns an empty report iff the stream is clean. Malformed records
    become violations with a line locator; nothing raises.
    """
    report = ValidationReport()
    seen_sessions: dict[str, dict] = {}
    seen_turn_ids: dict[str, int] = {}
    turn_indices: dict[str, list[int]] = {}

    for lineno, event, err in iter_events(lines):
        loc = f"line {lineno}"
        if err:
            report.add(loc, err)
            continue
        kind = event.get("kind")
        if kind not in EVENT_KINDS:
            report.add(loc, f"unknown event kind {kind!r}")
            continue
        missing = [f for f in _REQUIRED_FIELDS[kind] if event.get(f) in (None, "") and f not in ("prompt_text",)]
        if missing:
            report.add(loc, f"{kind} missing field(s): {', '.join(missing)}")
            continue

        if kind == "session_started":
            sid = event["session_id"]
            if sid in seen_sessions:
                report.add(loc, f"duplicate session_id {sid!r}")
            seen_sessions[sid] = event
            turn_indices.setdefault(sid, [])
            if task_ids is not None and event["task_id"] not in task_ids:
                report.add(loc, f"unknown task_id {event['task_id']!r}")

        elif kind == "turn_recorded":
            sid = event["session_id"]
            tid = event["turn_id"]
            if sid not in seen_sessions:
                report.add(loc, f"turn references unknown session {sid!r}")
            if tid in seen_turn_ids:
                report.add(loc, f"duplicate turn_id {tid!r} (first at line {seen_turn_ids[tid]})")
            seen_turn_ids[tid] = lineno

            index = event["index"]
            if not isinstance(index, int) or index < 0:
                report.add(loc, f"index must be an integer >= 0, got {index!r}")
            else:
                turn_indices.setdefault(sid, []).append(index)

            mode = event["mode"]
            closed_type = event.get("closed_type")
            if mode not in ("open", "closed"):
                report.add(loc, f"mode must be open|closed, got {mode!r}")
            if mode == "closed":
                if closed_type not in _OFFERABLE_NAMES:
                    report.add(loc, f"closed_type not offerable: {closed_type!r}")
            elif closed_type:
                report.add(loc, f"open turn must not carry closed_type {closed_type!r}")

            if index != 0 and not str(event.get("prompt_text", "")).strip():
                report.add(loc, "turn has empty prompt_text (only the index-0 greeting may)")
            if index == 0 and str(event.get("prompt_text", "")).strip():
                report.add(loc, "greeting turn (index 0) must be response-only")
            if not str(event.get("response_text", "")).strip() and not event.get("response_error"):
                report.add(loc, "turn has empty response_text and no response_error flag")

        elif kind == "response_rated":
            if event["turn_id"] not in seen_turn_ids:
                report.add(loc, f"rating references unknown turn {event['turn_id']!r}")
            if event["rating"] not in ("up", "down"):
                report.add(loc, f"rating must be up|down, got {event['rating']!r}")

    for sid, indices in turn_indices.items():
        ordered = sorted(indices)
        if len(set(ordered)) != len(ordered):
            report.add(f"session {sid}", "duplicate turn index")
            continue
        # Prompt turns must run 1..n gap-free; a single greeting at 0 is optional.
        prompt_part = [i for i in ordered if i != 0]
        expected = list(range(1, len(prompt_part) + 1))
        if prompt_part != expected:
            report.add(f"session {sid}", f"index gap: got {ordered}")

    return report
