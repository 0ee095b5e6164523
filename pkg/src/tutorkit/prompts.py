"""Prompt construction: guardrailed system prompt, closed-prompt templates,
and conversation assembly with a context budget.

Template wording lives in data files (one per feedback type, selectable by
locale) so instructors can swap it without code changes; the behavioural
invariants (which types exist, which need student code) are fixed here.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

from .model import OFFERABLE_CLOSED_TYPES, ChatSession, FeedbackType, Task

#: The five always-on constraint clauses of the system prompt. Keys are
#: stable identifiers; values are fragments the rendered prompt must contain.
CONSTRAINT_CLAUSES: dict[str, str] = {
    "one_step_per_response": "exactly one problem-solving step per response",
    "no_complete_solution": "Never give away the complete solution",
    "simple_examples_only": "keep it simple and unrelated to this task",
    "templates_comments_only": "key sections contain only comments",
    "point_out_mistakes_without_correcting": "do not hand back corrected code",
}

#: Closed prompts that cannot work without the student's code attached.
REQUIRES_STUDENT_CODE: dict[FeedbackType, bool] = {
    FeedbackType.KTC: False,
    FeedbackType.KC: False,
    FeedbackType.KM: True,
    FeedbackType.KH: False,
    FeedbackType.KP: True,
    FeedbackType.KR: True,
}

DEFAULT_LOCALE = "en"


def contains_clause(prompt_text: str, clause_key: str) -> bool:
    """Clause presence check that ignores line wrapping inside templates."""
    flat = " ".join(prompt_text.split())
    return CONSTRAINT_CLAUSES[clause_key] in flat


class UnsupportedClosedPrompt(ValueError):
    """Raised for feedback types that are never offered as buttons."""


@dataclass(frozen=True)
class NeedsCode:
    """Outcome signalling that the student must attach code first."""

    feedback_type: FeedbackType


@dataclass(frozen=True)
class Message:
    role: str  # "system" | "user" | "assistant"
    content: str


MessageSequence = list


@dataclass(frozen=True)
class SystemPromptSpec:
    """What goes into one rendered system prompt."""

    task: Task
    mode: str  # "open" | "closed"
    constraints: tuple = tuple(CONSTRAINT_CLAUSES)
    locale: str = DEFAULT_LOCALE

    def __post_init__(self):
        if self.mode not in ("open", "closed"):
            raise ValueError(f"mode must be open|closed, got {self.mode!r}")
        missing = set(CONSTRAINT_CLAUSES) - set(self.constraints)
        if missing:
            raise ValueError(f"system prompt must keep the core constraints; missing {sorted(missing)}")


@dataclass(frozen=True)
class ClosedPromptTemplate:
    feedback_type: FeedbackType
    template_text: str
    requires_student_code: bool

    def render(self, task: Task, student_code: Optional[str]) -> str:
        text = self.template_text.replace("{{task_description}}", task.description)
        return text.replace("{{student_code}}", student_code or "")


class PromptTemplates:
    """All template texts for one locale."""

    def __init__(self, template_dir=None, locale: str = DEFAULT_LOCALE):
        if template_dir is None:
            template_dir = resources.files("tutorkit").joinpath("data/templates")
        base = Path(str(template_dir)) / locale
        self.locale = locale
        self.system_text = (base / "system.txt").read_text(encoding="utf-8")
        self.mode_blocks = {
            "open": (base / "mode_open.txt").read_text(encoding="utf-8"),
            "closed": (base / "mode_closed.txt").read_text(encoding="utf-8"),
        }
        self.greeting = (base / "greeting.txt").read_text(encoding="utf-8").strip()
        self.closed: dict[FeedbackType, ClosedPromptTemplate] = {}
        for ft in OFFERABLE_CLOSED_TYPES:
            text = (base / f"{ft.value}.txt").read_text(encoding="utf-8").strip()
            self.closed[ft] = ClosedPromptTemplate(
                feedback_type=ft,
                template_text=text,
                requires_student_code=REQUIRES_STUDENT_CODE[ft],
            )


def build_system_prompt(task: Task, mode: str, templates: Optional[PromptTemplates] = None) -> str:
    """Render the system prompt: task context verbatim + constraints + mode block.

    The context block is identical for both modes; only the trailing
    mode-specific instruction differs.
    """
    spec = SystemPromptSpec(task=task, mode=mode)  # validates mode + constraints
    templates = templates or PromptTemplates()
    context = templates.system_text
    context = context.replace("{{task_description}}", spec.task.description)
    context = context.replace("{{reference_solution}}", spec.task.reference_solution)
    return context.rstrip() + "\n\n" + templates.mode_blocks[spec.mode].strip() + "\n"


def render_closed_prompt(
    ft: FeedbackType,
    student_code: Optional[str] = None,
    task: Optional[Task] = None,
    templates: Optional[PromptTemplates] = None,
):
    """Return the user message for a closed prompt, or NeedsCode.

    Raises UnsupportedClosedPrompt for the two never-offered types.
    """
    if ft not in OFFERABLE_CLOSED_TYPES:
        raise UnsupportedClosedPrompt(f"{ft.value} is not offered as a closed prompt")
    templates = templates or PromptTemplates()
    template = templates.closed[ft]
    if template.requires_student_code and not (student_code and student_code.strip()):
        return NeedsCode(ft)
    text = template.template_text
    if task is not None:
        text = text.replace("{{task_description}}", task.description)
    text = text.replace("{{student_code}}", (student_code or "").strip())
    return Message("user", text)


def whitespace_tokens(text: str) -> int:
    return len(text.split())


@dataclass(frozen=True)
class ContextBudget:
    max_tokens: int = 8000
    keep_recent_turns: int = 4
    count_tokens: Callable = whitespace_tokens


def _summarize_turns(turns) -> Message:
    snippets = []
    for turn in turns:
        words = turn.prompt_text.split()[:8]
        if words:
            snippets.append(f"[{turn.index}] " + " ".join(words))
    summary = (
        f"Summary of {len(turns)} earlier exchanges in this session. "
        "The student previously asked: " + "; ".join(snippets)
    )
    return Message("system", summary)


def compose_context(
    session: ChatSession,
    new_prompt: str,
    system_prompt: str,
    budget: ContextBudget = ContextBudget(),
) -> MessageSequence:
    """System prompt + prior turns in order + the new user prompt.

    When the sequence exceeds the token budget, the oldest turns collapse
    into one synthetic summary message and the newest ones stay verbatim.
    Deterministic for fixed inputs.
    """
    def turn_messages(turns):
        messages = []
        for turn in turns:
            if not turn.is_greeting:
                messages.append(Message("user", turn.prompt_text))
            messages.append(Message("assistant", turn.response_text))
        return messages

    full = [Message("system", system_prompt)]
    full += turn_messages(session.turns)
    full.append(Message("user", new_prompt))

    total = sum(budget.count_tokens(m.content) for m in full)
    if total <= budget.max_tokens:
        return full

    prompt_turns = session.prompt_turns
    keep = prompt_turns[-budget.keep_recent_turns:] if budget.keep_recent_turns else []
    old = prompt_turns[: len(prompt_turns) - len(keep)]
    squeezed = [Message("system", system_prompt)]
    if old:
        squeezed.append(_summarize_turns(old))
    squeezed += turn_messages(keep)
    squeezed.append(Message("user", new_prompt))
    return squeezed
