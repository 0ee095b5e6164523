"""Batch analytics over coded corpora: request/response match report,
interaction flowgraph, adherence report, and descriptive statistics.

All computations are pure and deterministic; every report carries raw
counts next to any rounded percentage.
"""

from __future__ import annotations

import json
import statistics
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .audit import (
    AdherenceRecord,
    Correctness,
    ExampleComplexity,
    SolutionDisclosure,
    StepProfile,
    TemplateStatus,
)
from .coding import CodedCorpus
from .model import FeedbackType

START_NODE = "START"
END_NODE = "END"


class MatchOutcome(str, Enum):
    MATCH = "Match"
    OVER_MATCH = "OverMatch"
    PARTIAL_MATCH = "PartialMatch"
    MISMATCH = "Mismatch"


def classify_pair(requested: frozenset, provided: frozenset) -> MatchOutcome:
    """Compare the feedback types of one request with those of its response.

    Exactly one outcome holds: equality is a match; a proper superset is an
    over-match; a non-empty overlap that misses part of the request is a
    partial match; an empty overlap is a mismatch.
    """
    if not requested:
        raise ValueError("requested feedback types must be non-empty")
    if provided == requested:
        return MatchOutcome.MATCH
    if requested < provided:
        return MatchOutcome.OVER_MATCH
    if requested & provided:
        return MatchOutcome.PARTIAL_MATCH
    return MatchOutcome.MISMATCH


@dataclass
class MatchReport:
    pair_count: int = 0
    counts: dict = field(default_factory=dict)  # outcome value -> count
    mismatch_by_requested_type: dict = field(default_factory=dict)

    @property
    def rate_direct(self) -> float:
        return self.counts.get("Match", 0) / self.pair_count if self.pair_count else 0.0

    @property
    def rate_aligned(self) -> float:
        if not self.pair_count:
            return 0.0
        aligned = self.counts.get("Match", 0) + self.counts.get("OverMatch", 0)
        return aligned / self.pair_count

    def to_dict(self) -> dict:
        return {
            "pair_count": self.pair_count,
            "counts": dict(self.counts),
            "rate_direct": self.rate_direct,
            "rate_aligned": self.rate_aligned,
            "rate_direct_pct": round(self.rate_direct * 100),
            "rate_aligned_pct": round(self.rate_aligned * 100),
            "mismatch_by_requested_type": dict(self.mismatch_by_requested_type),
        }

    def to_text(self) -> str:
        lines = [f"question-response pairs: {self.pair_count}"]
        for outcome in MatchOutcome:
            n = self.counts.get(outcome.value, 0)
            pct = round(100 * n / self.pair_count) if self.pair_count else 0
            lines.append(f"  {outcome.value:<13} {n:>5}  ({pct}%)")
        lines.append(f"  direct match rate : {round(self.rate_direct * 100)}%")
        lines.append(f"  aligned rate      : {round(self.rate_aligned * 100)}%")
        if self.mismatch_by_requested_type:
            lines.append("  mismatches by requested type:")
            for name, n in sorted(self.mismatch_by_requested_type.items(), key=lambda kv: -kv[1]):
                lines.append(f"    {name:<5} {n}")
        return "\n".join(lines)


def match_report(coded: CodedCorpus) -> MatchReport:
    """Pairs are turns whose prompt codes contain at least one feedback type;
    each pair contributes one outcome (multi-type requests are not split)."""
    report = MatchReport(counts={o.value: 0 for o in MatchOutcome})
    for coded_turn in coded.ordered():
        requested = coded_turn.prompt_codes.feedback_types
        if not requested:
            continue
        provided = coded_turn.response_codes.feedback_types
        outcome = classify_pair(requested, provided)
        report.pair_count += 1
        report.counts[outcome.value] += 1
        if outcome is MatchOutcome.MISMATCH:
            for ft in requested:
                report.mismatch_by_requested_type[ft.value] = (
                    report.mismatch_by_requested_type.get(ft.value, 0) + 1
                )
    return report


# ---------------------------------------------------------------------------
# Interaction flowgraph
# ---------------------------------------------------------------------------

@dataclass
class FlowGraph:
    """Aggregated transition graph: nodes are prompt code sets, edges are
    (from, response code set, to) triples. Pruning only affects the rendered
    view; raw counts stay available."""

    node_counts: Counter = field(default_factory=Counter)
    edge_counts: Counter = field(default_factory=Counter)  # (from, label, to) -> count
    threshold: int = 10

    def rendered_nodes(self) -> dict:
        keep = {n: c for n, c in self.node_counts.items() if c >= self.threshold}
        keep.setdefault(START_NODE, self.node_counts.get(START_NODE, 0))
        keep.setdefault(END_NODE, self.node_counts.get(END_NODE, 0))
        return keep

    def rendered_edges(self) -> dict:
        nodes = self.rendered_nodes()
        return {
            e: c
            for e, c in self.edge_counts.items()
            if c >= self.threshold and e[0] in nodes and e[2] in nodes
        }

    def outgoing(self, node: str, rendered: bool = True) -> dict:
        edges = self.rendered_edges() if rendered else self.edge_counts
        return {e: c for e, c in edges.items() if e[0] == node}

    def to_json(self) -> str:
        payload = {
            "threshold": self.threshold,
            "nodes": [
                {"node": n, "count": c} for n, c in sorted(self.node_counts.items())
            ],
            "edges": [
                {"from": f, "label": l, "to": t, "count": c}
                for (f, l, t), c in sorted(self.edge_counts.items())
            ],
            "rendered": {
                "nodes": [
                    {"node": n, "count": c} for n, c in sorted(self.rendered_nodes().items())
                ],
                "edges": [
                    {"from": f, "label": l, "to": t, "count": c}
                    for (f, l, t), c in sorted(self.rendered_edges().items())
                ],
            },
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def to_dot(self, rendered: bool = True) -> str:
        nodes = self.rendered_nodes() if rendered else dict(self.node_counts)
        edges = self.rendered_edges() if rendered else dict(self.edge_counts)
        lines = ["digraph interactions {", "  rankdir=LR;"]
        for node, count in sorted(nodes.items()):
            shape = "circle" if node in (START_NODE, END_NODE) else "box"
            lines.append(f'  "{node}" [label="{node}\\n{count}" shape={shape}];')
        for (src, label, dst), count in sorted(edges.items()):
            text = f"{label} ({count})" if label else f"({count})"
            lines.append(f'  "{src}" -> "{dst}" [label="{text}"];')
        lines.append("}")
        return "\n".join(lines)


def build_interaction_graph(sessions: dict, coded: CodedCorpus, threshold: int = 10) -> FlowGraph:
    """Per session, consecutive prompts form node transitions labeled by the
    response between them; counts aggregate across sessions. Self-loops are
    legitimate (repeated requests for the same feedback type)."""
    graph = FlowGraph(threshold=threshold)
    for session_id in sorted(sessions):
        session = sessions[session_id]
        turns = [t for t in session.turns if not t.is_greeting and t.turn_id in coded.turns]
        if not turns:
            continue
        nodes = [str(coded.turns[t.turn_id].prompt_codes) for t in turns]
        labels = [str(coded.turns[t.turn_id].response_codes) for t in turns]
        graph.node_counts[START_NODE] += 1
        graph.node_counts[END_NODE] += 1
        for node in nodes:
            graph.node_counts[node] += 1
        graph.edge_counts[(START_NODE, "", nodes[0])] += 1
        for i in range(len(nodes) - 1):
            graph.edge_counts[(nodes[i], labels[i], nodes[i + 1])] += 1
        graph.edge_counts[(nodes[-1], labels[-1], END_NODE)] += 1
    return graph


# ---------------------------------------------------------------------------
# Adherence report
# ---------------------------------------------------------------------------

@dataclass
class AdherenceReport:
    population: int = 0
    filtered_out: int = 0
    steps: dict = field(default_factory=dict)
    solutions: dict = field(default_factory=dict)
    examples: dict = field(default_factory=dict)
    templates: dict = field(default_factory=dict)
    corrections: int = 0
    correctness: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def with_pct(counts: dict) -> dict:
            return {
                k: {"count": v, "pct": round(100 * v / self.population) if self.population else 0}
                for k, v in counts.items()
            }

        return {
            "population": self.population,
            "filtered_out": self.filtered_out,
            "steps": with_pct(self.steps),
            "solutions": self.solutions,
            "examples": self.examples,
            "templates": self.templates,
            "corrections": self.corrections,
            "correctness": with_pct(self.correctness),
        }

    def to_text(self) -> str:
        lines = [
            f"responses analyzed: {self.population} "
            f"({self.filtered_out} filtered out as non-problem-related)",
            "steps per response:",
        ]
        for key, n in self.steps.items():
            pct = round(100 * n / self.population) if self.population else 0
            lines.append(f"  {key:<26} {n:>5}  ({pct}%)")
        lines.append("correctness (human-annotated):")
        for key, n in self.correctness.items():
            pct = round(100 * n / self.population) if self.population else 0
            lines.append(f"  {key:<26} {n:>5}  ({pct}%)")
        lines.append(f"solutions given: partial {self.solutions.get('Partial', 0)}, "
                     f"complete {self.solutions.get('Complete', 0)}")
        lines.append(f"examples: simple {self.examples.get('Simple', 0)}, "
                     f"complex {self.examples.get('Complex', 0)}")
        lines.append(f"templates: provided {self.templates.get('Provided', 0)}, "
                     f"completed {self.templates.get('Completed', 0)}")
        lines.append(f"code corrections: {self.corrections}")
        return "\n".join(lines)


def adherence_report(
    records: dict,
    coded: CodedCorpus,
    annotations: Optional[dict] = None,
) -> AdherenceReport:
    """Tally the six indicators over problem-related responses.

    Responses coded with aux categories only (TEC, SoI, DENY, OFF, OFT, TE,
    TR) are filtered out first. Correctness comes from the annotation map;
    unannotated responses land in their own bucket, never guessed.
    """
    annotations = annotations or {}
    report = AdherenceReport(
        steps={p.value: 0 for p in StepProfile},
        solutions={d.value: 0 for d in SolutionDisclosure},
        examples={e.value: 0 for e in ExampleComplexity},
        templates={t.value: 0 for t in TemplateStatus},
        correctness={c.value: 0 for c in Correctness} | {"Unannotated": 0},
    )
    for coded_turn in coded.ordered():
        if coded_turn.response_codes.is_aux_only:
            report.filtered_out += 1
            continue
        record: Optional[AdherenceRecord] = records.get(coded_turn.turn_id)
        if record is None:
            continue
        report.population += 1
        report.steps[record.step_profile.value] += 1
        report.solutions[record.solution_disclosure.value] += 1
        report.examples[record.example_complexity.value] += 1
        report.templates[record.template_status.value] += 1
        if record.code_correction:
            report.corrections += 1
        correctness = annotations.get(coded_turn.turn_id)
        if correctness is None:
            report.correctness["Unannotated"] += 1
        else:
            report.correctness[correctness.value] += 1
    return report


# ---------------------------------------------------------------------------
# Descriptive statistics
# ---------------------------------------------------------------------------

def descriptive_stats(sessions: dict, sd_mode: str = "sample") -> dict:
    """Students, sessions, prompts, prompts-per-student spread, and closed
    prompt counts by feedback type. ``sd_mode`` picks sample vs population
    standard deviation and is echoed in the output."""
    if sd_mode not in ("sample", "population"):
        raise ValueError("sd_mode must be sample|population")
    per_student: Counter = Counter()
    closed_counts: Counter = Counter()
    prompt_total = 0
    for session in sessions.values():
        per_student.setdefault(session.anonymous_student_id, 0)
        for turn in session.turns:
            if turn.is_greeting:
                continue
            prompt_total += 1
            per_student[session.anonymous_student_id] += 1
            if turn.mode == "closed" and turn.closed_type is not None:
                closed_counts[turn.closed_type.value] += 1

    counts = sorted(per_student.values())
    if counts:
        mean = statistics.fmean(counts)
        median = statistics.median(counts)
        if len(counts) > 1:
            sd = statistics.stdev(counts) if sd_mode == "sample" else statistics.pstdev(counts)
        else:
            sd = 0.0
    else:
        mean = median = sd = 0.0

    return {
        "students": len(per_student),
        "sessions": len(sessions),
        "prompts": prompt_total,
        "prompts_per_student": {
            "mean": mean,
            "sd": sd,
            "sd_mode": sd_mode,
            "median": median,
        },
        "closed_prompts": {
            "total": sum(closed_counts.values()),
            "by_type": {ft.value: closed_counts.get(ft.value, 0) for ft in FeedbackType
                        if ft.value in closed_counts},
        },
    }
