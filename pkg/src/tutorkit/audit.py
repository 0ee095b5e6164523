"""Adherence auditing: how well does a generated response respect the
tutoring constraints (stepwise hints, no solutions, simple examples,
comment-only templates, no silent code corrections)?

All detectors are pure functions over text; thresholds live in AuditConfig
so instructors can recalibrate without touching code. Correctness is a
human judgement and only ever enters through annotation files.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Optional

from . import codeparse
from .model import ChatSession, Task


class StepProfile(str, Enum):
    SINGLE_STEP = "SingleStep"
    MULTIPLE_STEPS = "MultipleSteps"
    MULTIPLE_WITH_EXPLICIT_NEXT = "MultipleWithExplicitNext"


class SolutionDisclosure(str, Enum):
    NONE = "None"
    PARTIAL = "Partial"
    COMPLETE = "Complete"


class ExampleComplexity(str, Enum):
    NO_EXAMPLE = "NoExample"
    SIMPLE = "Simple"
    COMPLEX = "Complex"


class TemplateStatus(str, Enum):
    NO_TEMPLATE = "NoTemplate"
    PROVIDED = "Provided"
    COMPLETED = "Completed"


class Correctness(str, Enum):
    CORRECT = "Correct"
    PARTIALLY_CORRECT = "PartiallyCorrect"
    INCORRECT = "Incorrect"


def load_cue_lexicon(path=None) -> tuple:
    """Next-step cue phrases, one per line; '#' lines are comments."""
    if path is None:
        from importlib import resources
        path = resources.files("tutorkit").joinpath("data/lexicons/next_step_cues.txt")
    from pathlib import Path
    cues = []
    for line in Path(str(path)).read_text(encoding="utf-8").splitlines():
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            cues.append(stripped.lower())
    return tuple(cues)


DEFAULT_NEXT_STEP_CUES = load_cue_lexicon()


@dataclass(frozen=True)
class AuditConfig:
    complete_threshold: float = 0.8
    partial_threshold: float = 0.4
    correction_threshold: float = 0.6
    example_max_lines: int = 10
    example_max_control_flow: int = 1
    next_step_cues: tuple = DEFAULT_NEXT_STEP_CUES
    enforcement_retries: int = 2


@dataclass
class AdherenceRecord:
    turn_id: str
    step_profile: StepProfile
    solution_disclosure: SolutionDisclosure
    example_complexity: ExampleComplexity
    template_status: TemplateStatus
    code_correction: bool
    similarity_score: Optional[float] = None  # present iff the response has a code block
    correctness: Optional[Correctness] = None  # unset until annotations are imported
    low_confidence: bool = False

    def to_dict(self) -> dict:
        return {
            "turn_id": self.turn_id,
            "step_profile": self.step_profile.value,
            "solution_disclosure": self.solution_disclosure.value,
            "example_complexity": self.example_complexity.value,
            "template_status": self.template_status.value,
            "code_correction": self.code_correction,
            "similarity_score": self.similarity_score,
            "correctness": self.correctness.value if self.correctness else None,
            "low_confidence": self.low_confidence,
        }


# ---------------------------------------------------------------------------
# Detectors
# ---------------------------------------------------------------------------

_NUMBERED_ITEM_RE = re.compile(r"^\s*\d+[.)]\s+", re.MULTILINE)
_STEP_HEADING_RE = re.compile(r"^\s*(?:#{1,6}\s*|\*\*\s*)?step\s+\d+\b", re.IGNORECASE | re.MULTILINE)


def count_step_markers(response_text: str) -> int:
    """Count numbered list items and "Step k" headings in the prose."""
    prose = codeparse.strip_code_blocks(response_text)
    return len(_NUMBERED_ITEM_RE.findall(prose)) + len(_STEP_HEADING_RE.findall(prose))


def has_next_step_cue(response_text: str, cues: Iterable[str]) -> bool:
    prose = codeparse.strip_code_blocks(response_text).lower()
    return any(cue in prose for cue in cues)


def count_solution_steps(response_text: str, cfg: AuditConfig = AuditConfig()) -> StepProfile:
    """One step marker (or plain prose) is a single step; several markers are
    multiple steps, softened when the text singles out where to begin."""
    markers = count_step_markers(response_text)
    if markers <= 1:
        return StepProfile.SINGLE_STEP
    if has_next_step_cue(response_text, cfg.next_step_cues):
        return StepProfile.MULTIPLE_WITH_EXPLICIT_NEXT
    return StepProfile.MULTIPLE_STEPS


def detect_solution_disclosure(
    code_blocks: list, reference_solution: str, cfg: AuditConfig = AuditConfig()
) -> tuple[SolutionDisclosure, Optional[float], bool]:
    """Grade how much of the reference solution the blocks give away.

    Returns (disclosure, max similarity, low_confidence). Similarity is the
    LCS ratio of normalized tokens against the reference token stream, so a
    skeleton can score high without disclosing anything executable.
    """
    if not code_blocks:
        return SolutionDisclosure.NONE, None, False
    best = SolutionDisclosure.NONE
    max_sim = 0.0
    low_confidence = False
    for block in code_blocks:
        sim = codeparse.token_similarity(block, reference_solution)
        structure = codeparse.analyze_structure(block)
        low_confidence = low_confidence or structure.low_confidence
        max_sim = max(max_sim, sim)
        if sim >= cfg.complete_threshold and structure.executable_shaped:
            best = SolutionDisclosure.COMPLETE
        elif sim >= cfg.partial_threshold and structure.executable_shaped:
            if best is not SolutionDisclosure.COMPLETE:
                best = SolutionDisclosure.PARTIAL
    return best, max_sim, low_confidence


def classify_example_complexity(code_block: str, cfg: AuditConfig = AuditConfig()) -> ExampleComplexity:
    """Simple means short and at most one control-flow construct (inclusive)."""
    structure = codeparse.analyze_structure(code_block)
    if (
        structure.line_count <= cfg.example_max_lines
        and structure.control_flow_count <= cfg.example_max_control_flow
    ):
        return ExampleComplexity.SIMPLE
    return ExampleComplexity.COMPLEX


def assess_template(code_block: str, prior_templates: Iterable[frozenset] = ()) -> TemplateStatus:
    """Provided: headers whose bodies are only comments/placeholders.
    Completed: an earlier-issued skeleton's functions, now implemented."""
    structure = codeparse.analyze_structure(code_block)
    if codeparse.is_skeleton(structure):
        return TemplateStatus.PROVIDED
    names = frozenset(structure.def_names)
    if names and structure.executable_shaped:
        for template_names in prior_templates:
            if template_names and names == template_names:
                return TemplateStatus.COMPLETED
    return TemplateStatus.NO_TEMPLATE


def detect_code_correction(
    student_code: Optional[str], response_code: Optional[str], cfg: AuditConfig = AuditConfig()
) -> bool:
    """True when the response echoes the student's code with edits applied."""
    if not student_code or not response_code:
        return False
    student_tokens = codeparse.tokenize(student_code)
    response_tokens = codeparse.tokenize(response_code)
    if not student_tokens or student_tokens == response_tokens:
        return False
    sim = codeparse.lcs_length(response_tokens, student_tokens) / len(student_tokens)
    return sim >= cfg.correction_threshold


# ---------------------------------------------------------------------------
# Composite audit
# ---------------------------------------------------------------------------

def audit_response(
    turn,
    task: Task,
    prior_templates: Iterable[frozenset] = (),
    cfg: AuditConfig = AuditConfig(),
) -> AdherenceRecord:
    """Run detectors (1)-(5) over one turn; correctness stays unset."""
    blocks = codeparse.extract_code_blocks(turn.response_text)
    step_profile = count_solution_steps(turn.response_text, cfg)
    disclosure, similarity, low_confidence = detect_solution_disclosure(
        blocks, task.reference_solution, cfg
    )

    template_status = TemplateStatus.NO_TEMPLATE
    for block in blocks:
        status = assess_template(block, prior_templates)
        if status is TemplateStatus.COMPLETED:
            template_status = status
            break
        if status is TemplateStatus.PROVIDED:
            template_status = status

    prompt_blocks = codeparse.extract_code_blocks(turn.prompt_text)
    student_code = prompt_blocks[-1] if prompt_blocks else None
    correction = any(detect_code_correction(student_code, block, cfg) for block in blocks)

    # A block already accounted for as a (partial) solution, template, or
    # correction is not an "example"; examples are task-unrelated snippets.
    example = ExampleComplexity.NO_EXAMPLE
    if (
        blocks
        and disclosure is SolutionDisclosure.NONE
        and template_status is TemplateStatus.NO_TEMPLATE
        and not correction
    ):
        grades = [classify_example_complexity(b, cfg) for b in blocks]
        example = (
            ExampleComplexity.COMPLEX
            if ExampleComplexity.COMPLEX in grades
            else ExampleComplexity.SIMPLE
        )

    return AdherenceRecord(
        turn_id=turn.turn_id,
        step_profile=step_profile,
        solution_disclosure=disclosure,
        example_complexity=example,
        template_status=template_status,
        code_correction=correction,
        similarity_score=similarity,
        low_confidence=low_confidence,
    )


def audit_session(session: ChatSession, task: Task, cfg: AuditConfig = AuditConfig()) -> list:
    """Audit every prompt-bearing turn, tracking issued templates in order."""
    records = []
    prior_templates: list[frozenset] = []
    for turn in session.turns:
        if turn.is_greeting:
            continue
        records.append(audit_response(turn, task, tuple(prior_templates), cfg))
        for block in codeparse.extract_code_blocks(turn.response_text):
            structure = codeparse.analyze_structure(block)
            if codeparse.is_skeleton(structure) and structure.def_names:
                prior_templates.append(frozenset(structure.def_names))
    return records


def audit_corpus(sessions: dict, tasks: dict, cfg: AuditConfig = AuditConfig()) -> dict:
    """{turn_id: AdherenceRecord} for every prompt-bearing turn in the corpus."""
    records: dict[str, AdherenceRecord] = {}
    for session in sessions.values():
        task = tasks[session.task_id]
        for record in audit_session(session, task, cfg):
            records[record.turn_id] = record
    return records


# ---------------------------------------------------------------------------
# Correctness annotations (human judgement, imported, never computed)
# ---------------------------------------------------------------------------

def load_correctness_annotations(path) -> dict:
    """Read (turn_id, correctness, annotator, note) rows from CSV or JSONL."""
    annotations: dict[str, Correctness] = {}
    path = str(path)
    if path.endswith(".csv"):
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                annotations[row["turn_id"]] = Correctness(row["correctness"])
    else:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                annotations[row["turn_id"]] = Correctness(row["correctness"])
    return annotations


def apply_annotations(records: dict, annotations: dict) -> dict:
    out = {}
    for turn_id, record in records.items():
        if turn_id in annotations:
            out[turn_id] = replace(record, correctness=annotations[turn_id])
        else:
            out[turn_id] = record
    return out
