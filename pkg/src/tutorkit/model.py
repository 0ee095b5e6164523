"""Shared domain vocabulary: tasks, sessions, turns, and category codes.

Everything here is immutable value data. The event-log serialization and
validation live in `tutorkit.corpus`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Union


class FeedbackType(str, Enum):
    """Tutoring feedback types a prompt can request or a response can carry."""

    KR = "KR"    # knowledge of result (correct / incorrect verdict)
    KCR = "KCR"  # knowledge of correct result (the solution itself)
    KP = "KP"    # knowledge of performance (how far along the attempt is)
    KTC = "KTC"  # knowledge about task constraints
    KC = "KC"    # knowledge about concepts
    KM = "KM"    # knowledge about mistakes
    KH = "KH"    # knowledge on how to proceed
    KMC = "KMC"  # knowledge about meta-cognition


#: The six feedback types offered as predefined closed-prompt buttons.
#: KCR and KMC are deliberately never offered.
OFFERABLE_CLOSED_TYPES: tuple[FeedbackType, ...] = (
    FeedbackType.KTC,
    FeedbackType.KC,
    FeedbackType.KM,
    FeedbackType.KH,
    FeedbackType.KP,
    FeedbackType.KR,
)


class PromptAuxCategory(str, Enum):
    """Non-feedback categories observed in student prompts."""

    TEC = "TEC"    # technical question about the tool
    SoI = "SoI"    # social interaction
    ANS = "ANS"    # answer to a question the tutor asked
    WHAT = "WHAT"  # clarification question
    OFT = "OFT"    # off-topic
    TR = "TR"      # new task request
    IN = "IN"      # incomprehensible
    HACK = "HACK"  # prompt injection attempt


class ResponseAuxCategory(str, Enum):
    """Non-feedback categories observed in generated responses."""

    OFF = "OFF"    # marked as offensive
    DENY = "DENY"  # denied request
    SoI = "SoI"    # social
    TEC = "TEC"    # technical
    OFT = "OFT"    # off-topic
    TE = "TE"      # technical error (spurious refusal)
    TR = "TR"      # new task


Code = Union[FeedbackType, PromptAuxCategory, ResponseAuxCategory]

# Canonical rendering order: feedback types first, then aux categories.
_CODE_ORDER: dict[str, int] = {
    name: i
    for i, name in enumerate(
        ["KR", "KCR", "KP", "KTC", "KC", "KM", "KH", "KMC",
         "TEC", "SoI", "ANS", "WHAT", "OFT", "TR", "IN", "HACK",
         "OFF", "DENY", "TE"]
    )
}

MAX_CODES_PER_UNIT = 3


class InvalidCategorySet(ValueError):
    pass


def parse_code(name: str, side: str) -> Code:
    """Resolve a code name for the given side ("prompt" or "response").

    Feedback types are valid on both sides; aux names resolve to the
    side-specific enum (TEC/SoI/OFT/TR exist in both aux lists).
    """
    try:
        return FeedbackType(name)
    except ValueError:
        pass
    aux_enum = PromptAuxCategory if side == "prompt" else ResponseAuxCategory
    try:
        return aux_enum(name)
    except ValueError:
        raise InvalidCategorySet(f"unknown {side}-side code {name!r}") from None


@dataclass(frozen=True)
class CategorySet:
    """1..3 codes attached to one prompt or one response."""

    codes: frozenset
    side: str  # "prompt" | "response"

    def __post_init__(self):
        if self.side not in ("prompt", "response"):
            raise InvalidCategorySet(f"bad side {self.side!r}")
        if not 1 <= len(self.codes) <= MAX_CODES_PER_UNIT:
            raise InvalidCategorySet(
                f"category set must hold 1..{MAX_CODES_PER_UNIT} codes, got {len(self.codes)}"
            )
        for code in self.codes:
            if self.side == "prompt" and isinstance(code, ResponseAuxCategory):
                raise InvalidCategorySet(f"{code.value} is response-side only")
            if self.side == "response" and isinstance(code, PromptAuxCategory):
                raise InvalidCategorySet(f"{code.value} is prompt-side only")
            if not isinstance(code, (FeedbackType, PromptAuxCategory, ResponseAuxCategory)):
                raise InvalidCategorySet(f"not a code: {code!r}")

    @classmethod
    def from_names(cls, names, side: str) -> "CategorySet":
        return cls(frozenset(parse_code(n, side) for n in names), side)

    @property
    def feedback_types(self) -> frozenset:
        return frozenset(c for c in self.codes if isinstance(c, FeedbackType))

    @property
    def is_aux_only(self) -> bool:
        return not self.feedback_types

    def names(self) -> list[str]:
        """Code names in canonical order (stable across runs)."""
        return sorted((c.value for c in self.codes), key=_CODE_ORDER.__getitem__)

    def __str__(self) -> str:
        return ",".join(self.names())


@dataclass(frozen=True)
class Task:
    """One programming task: the problem statement plus its reference solution."""

    task_id: str
    title: str
    description: str
    reference_solution: str
    concept_tags: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.task_id:
            raise ValueError("task_id must be non-empty")
        if not self.description.strip():
            raise ValueError(f"task {self.task_id}: description must be non-empty")
        if not self.reference_solution.strip():
            raise ValueError(f"task {self.task_id}: reference_solution must be non-empty")


@dataclass(frozen=True)
class ChatTurn:
    """One student prompt paired with one generated response.

    ``index`` 0 is reserved for the session greeting, which has no prompt;
    student-initiated turns start at 1 and are gap-free per session.
    """

    turn_id: str
    session_id: str
    index: int
    mode: str  # "open" | "closed"
    prompt_text: str
    response_text: str
    closed_type: Optional[FeedbackType] = None
    rating: Optional[str] = None  # "up" | "down"
    comment: Optional[str] = None
    prompt_at: str = ""
    response_at: str = ""
    response_error: bool = False

    @property
    def is_greeting(self) -> bool:
        return self.index == 0

    def with_rating(self, rating: str, comment: Optional[str]) -> "ChatTurn":
        return replace(self, rating=rating, comment=comment)


@dataclass
class ChatSession:
    """An ordered, task-specific conversation for one anonymous student."""

    session_id: str
    anonymous_student_id: str
    task_id: str
    started_at: str = ""
    turns: list = field(default_factory=list)

    @property
    def prompt_turns(self) -> list:
        """Turns carrying a student prompt (i.e. everything but the greeting)."""
        return [t for t in self.turns if not t.is_greeting]
