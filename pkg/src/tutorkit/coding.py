"""Deterministic category coding of prompts and responses.

Closed prompts are coded mechanically from the pressed button. Open text
runs through plain-text rule lexicons (versioned data files); a
human-override channel imports gold annotations, which always win and are
recorded as provenance. Reruns over the same (corpus, rule_version) are
bit-identical.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from . import codeparse
from .model import (
    CategorySet,
    PromptAuxCategory,
    ResponseAuxCategory,
)

MAX_CODES = 3


@dataclass(frozen=True)
class Rule:
    code_name: str
    pattern: re.Pattern
    source_line: int

    def describe(self) -> str:
        return f"{self.code_name}@{self.source_line}"


@dataclass
class RuleSet:
    rules: list
    version: str

    def apply(self, text: str) -> tuple[list, list]:
        """Return (code names in priority order, rule hits). Capped at 3."""
        codes: list[str] = []
        hits: list[str] = []
        for rule in self.rules:
            if rule.code_name in codes:
                continue
            if rule.pattern.search(text):
                codes.append(rule.code_name)
                hits.append(rule.describe())
                if len(codes) == MAX_CODES:
                    break
        return codes, hits


def load_rules(path) -> RuleSet:
    text = Path(path).read_text(encoding="utf-8")
    version_tag = "0"
    rules = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            m = re.match(r"#\s*version:\s*(\S+)", stripped)
            if m:
                version_tag = m.group(1)
            continue
        code_name, _, pattern = stripped.partition("\t")
        if not pattern:
            raise ValueError(f"{path}:{lineno}: expected 'CODE<TAB>regex'")
        rules.append(Rule(code_name, re.compile(pattern, re.IGNORECASE), lineno))
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]
    return RuleSet(rules=rules, version=f"{version_tag}+{digest}")


def default_rules() -> tuple[RuleSet, RuleSet]:
    base = resources.files("tutorkit").joinpath("data/lexicons")
    return (
        load_rules(str(base.joinpath("prompt_rules.txt"))),
        load_rules(str(base.joinpath("response_rules.txt"))),
    )


# ---------------------------------------------------------------------------
# Turn classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CodedTurn:
    turn_id: str
    prompt_codes: CategorySet
    response_codes: CategorySet
    classifier_source: str  # deterministic | lexicon | model | human-override
    rule_hits: tuple = ()


def _normalize(text: str) -> str:
    has_code = bool(codeparse.extract_code_blocks(text))
    prose = codeparse.strip_code_blocks(text)
    prose = re.sub(r"\s+", " ", prose).strip().lower()
    return prose + (" <codeblock>" if has_code else "")


def classify_prompt(turn, rules: RuleSet) -> tuple[CategorySet, str, tuple]:
    """Closed prompts map to their button; open text goes through the rules.
    Unclassifiable text falls back to IN (incomprehensible), never empty."""
    if turn.mode == "closed":
        return (
            CategorySet(frozenset({turn.closed_type}), "prompt"),
            "deterministic",
            (),
        )
    names, hits = rules.apply(_normalize(turn.prompt_text))
    if not names:
        names = [PromptAuxCategory.IN.value]
    return CategorySet.from_names(names, "prompt"), "lexicon", tuple(hits)


def classify_response(turn, rules: RuleSet) -> tuple[CategorySet, str, tuple]:
    """Rule-coded response categories; OFT is the fallback, never empty."""
    names, hits = rules.apply(_normalize(turn.response_text))
    if not names:
        names = [ResponseAuxCategory.OFT.value]
    return CategorySet.from_names(names, "response"), "lexicon", tuple(hits)


# ---------------------------------------------------------------------------
# Corpus coding
# ---------------------------------------------------------------------------

@dataclass
class CodedCorpus:
    turns: dict = field(default_factory=dict)  # turn_id -> CodedTurn
    rule_version: str = ""

    def ordered(self) -> list:
        return [self.turns[k] for k in sorted(self.turns)]

    def content_hash(self) -> str:
        payload = [
            (t.turn_id, t.prompt_codes.names(), t.response_codes.names(), t.classifier_source)
            for t in self.ordered()
        ]
        return hashlib.sha256(json.dumps(payload).encode("utf-8")).hexdigest()


def load_gold_codes(path) -> dict:
    """Gold annotations: JSONL of (turn_id, prompt_codes, response_codes)."""
    gold: dict[str, tuple[list, list]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            gold[row["turn_id"]] = (row["prompt_codes"], row["response_codes"])
    return gold


def code_corpus(
    sessions: dict,
    prompt_rules: Optional[RuleSet] = None,
    response_rules: Optional[RuleSet] = None,
    gold: Optional[dict] = None,
    model_classifier=None,
    reproducible: bool = True,
) -> CodedCorpus:
    """Code every prompt-bearing turn. Gold overrides win over rules and are
    provenance-tagged; greeting turns (index 0) carry no prompt and stay out.

    ``model_classifier(turn) -> (prompt_names, response_names)`` may replace
    the lexicon for open prompts, but only outside reproducibility mode:
    analysis reruns must be bit-stable.
    """
    if model_classifier is not None and reproducible:
        raise ValueError("model-based classifier is disabled in reproducibility mode")
    if prompt_rules is None or response_rules is None:
        default_prompt, default_response = default_rules()
        prompt_rules = prompt_rules or default_prompt
        response_rules = response_rules or default_response
    gold = gold or {}

    corpus = CodedCorpus(rule_version=f"p:{prompt_rules.version}/r:{response_rules.version}")
    for session in sessions.values():
        for turn in session.turns:
            if turn.is_greeting:
                continue
            if turn.turn_id in gold:
                prompt_names, response_names = gold[turn.turn_id]
                prompt_set = CategorySet.from_names(prompt_names, "prompt")
                response_set = CategorySet.from_names(response_names, "response")
                source = "human-override"
                hits: tuple = ()
                if turn.mode == "closed" and turn.closed_type not in prompt_set.codes:
                    raise ValueError(
                        f"gold codes for closed turn {turn.turn_id} omit {turn.closed_type.value}"
                    )
            elif model_classifier is not None and turn.mode == "open":
                prompt_names, response_names = model_classifier(turn)
                prompt_set = CategorySet.from_names(prompt_names, "prompt")
                response_set = CategorySet.from_names(response_names, "response")
                source = "model"
                hits = ()
            else:
                prompt_set, prompt_source, prompt_hits = classify_prompt(turn, prompt_rules)
                response_set, _, response_hits = classify_response(turn, response_rules)
                source = prompt_source
                hits = prompt_hits + response_hits
            corpus.turns[turn.turn_id] = CodedTurn(
                turn_id=turn.turn_id,
                prompt_codes=prompt_set,
                response_codes=response_set,
                classifier_source=source,
                rule_hits=hits,
            )
    return corpus


def aggregate_counts(coded: CodedCorpus) -> dict:
    """Occurrences of every code across prompts and responses (a unit with
    several codes counts once per code, matching per-category totals)."""
    counts = {"prompts": {}, "responses": {}}
    for coded_turn in coded.turns.values():
        for code in coded_turn.prompt_codes.codes:
            counts["prompts"][code.value] = counts["prompts"].get(code.value, 0) + 1
        for code in coded_turn.response_codes.codes:
            counts["responses"][code.value] = counts["responses"].get(code.value, 0) + 1
    return counts
