#!/usr/bin/env python3
"""Independently recount the gold fixture corpus.

Standalone verifier: reads fixtures/gold/*.jsonl with nothing but the
standard library and naive, brute-force counting (memoized-recursion LCS,
line-by-line structure checks) and asserts every published aggregate the
fixture is supposed to reproduce. Deliberately shares no code with the
package so the two sides can cross-check each other.

Run:  python scripts/recount_gold_corpus.py
"""

from __future__ import annotations

import json
import re
import statistics
import sys
from collections import Counter, defaultdict
from functools import lru_cache
from pathlib import Path

GOLD = Path(__file__).resolve().parents[1] / "fixtures" / "gold"

FEEDBACK = {"KR", "KCR", "KP", "KTC", "KC", "KM", "KH", "KMC"}
AUX_RESPONSE = {"OFF", "DENY", "SoI", "TEC", "OFT", "TE", "TR"}

CHECKS = []


def check(name, actual, expected):
    ok = actual == expected
    CHECKS.append((name, ok))
    status = "ok " if ok else "FAIL"
    print(f"[{status}] {name}: {actual!r}" + ("" if ok else f" (expected {expected!r})"))
    return ok


def read_jsonl(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


# --- naive code analysis -----------------------------------------------------

FENCE = re.compile(r"```[a-zA-Z0-9_+-]*\n(.*?)```", re.DOTALL)


def blocks_of(text):
    return FENCE.findall(text)


def prose_of(text):
    return FENCE.sub(" ", text)


def naive_tokens(code):
    out = []
    for line in code.splitlines():
        # strip comments outside quotes, character by character
        quote = None
        kept = []
        for ch in line:
            if quote:
                kept.append(ch)
                if ch == quote:
                    quote = None
            elif ch in "'\"":
                quote = ch
                kept.append(ch)
            elif ch == "#":
                break
            else:
                kept.append(ch)
        out.append("".join(kept))
    text = "\n".join(out)
    return re.findall(
        r"[A-Za-z_]\w*|\d+\.\d+|\d+|\"[^\"\n]*\"|'[^'\n]*'"
        r"|==|!=|<=|>=|//|\*\*|->|\+=|-=|\*=|/=|%=|[^\s\w]",
        text,
    )


def naive_lcs(a, b):
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def rec(i, j):
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + rec(i + 1, j + 1)
        return max(rec(i + 1, j), rec(i, j + 1))

    result = rec(0, 0)
    rec.cache_clear()
    return result


HEADER = re.compile(r"^\s*(def|class|if|elif|else|for|while|try|except|finally|with)\b.*:\s*(#.*)?$")
CONTROL = re.compile(r"^\s*(if|elif|for|while|try|with)\b")
PLACEHOLDER = re.compile(r"^\s*(pass|\.\.\.)\s*(#.*)?$")
DEF = re.compile(r"^\s*def\s+([A-Za-z_]\w*)\s*\(")


def clean_lines(code):
    lines = []
    for raw in code.splitlines():
        quote = None
        kept = []
        for ch in raw:
            if quote:
                kept.append(ch)
                if ch == quote:
                    quote = None
            elif ch in "'\"":
                quote = ch
                kept.append(ch)
            elif ch == "#":
                break
            else:
                kept.append(ch)
        line = "".join(kept).rstrip()
        if line.strip():
            lines.append(line)
    return lines


def block_shape(code):
    lines = clean_lines(code)
    names, headers, control, executable = [], 0, 0, False
    for line in lines:
        if HEADER.match(line):
            headers += 1
            if CONTROL.match(line):
                control += 1
            m = DEF.match(line)
            if m:
                names.append(m.group(1))
        elif not PLACEHOLDER.match(line):
            executable = True
    return {
        "lines": len(lines),
        "names": frozenset(names),
        "headers": headers,
        "control": control,
        "executable": executable,
        "skeleton": headers > 0 and not executable,
    }


MARKER_ITEM = re.compile(r"^\s*\d+[.)]\s+", re.MULTILINE)
MARKER_STEP = re.compile(r"^\s*(?:#{1,6}\s*|\*\*\s*)?step\s+\d+\b", re.IGNORECASE | re.MULTILINE)
CUES = ("start with", "start by", "begin with", "begin by",
        "first step", "next step", "as a first step", "as your next step")


def step_profile(text):
    prose = prose_of(text)
    markers = len(MARKER_ITEM.findall(prose)) + len(MARKER_STEP.findall(prose))
    if markers <= 1:
        return "SingleStep"
    low = prose.lower()
    if any(c in low for c in CUES):
        return "MultipleWithExplicitNext"
    return "MultipleSteps"


def load_references():
    refs = {}
    task_dir = Path(__file__).resolve().parents[1] / "tasks"
    for path in task_dir.glob("*.md"):
        text = path.read_text(encoding="utf-8")
        task_id = re.search(r"task_id:\s*(\S+)", text).group(1)
        solution_section = text.split("## Reference Solution", 1)[1]
        refs[task_id] = blocks_of(solution_section)[0]
    return refs


def main():
    events = read_jsonl(GOLD / "gold.jsonl")
    codes = {r["turn_id"]: r for r in read_jsonl(GOLD / "gold.codes.jsonl")}
    correctness = read_jsonl(GOLD / "gold.correctness.jsonl")
    references = load_references()

    sessions = {e["session_id"]: e for e in events if e["kind"] == "session_started"}
    turns = [e for e in events if e["kind"] == "turn_recorded" and e["index"] > 0]
    greetings = [e for e in events if e["kind"] == "turn_recorded" and e["index"] == 0]
    ratings = [e for e in events if e["kind"] == "response_rated"]

    # --- descriptive statistics
    per_student = Counter()
    for t in turns:
        per_student[sessions[t["session_id"]]["anonymous_student_id"]] += 1
    counts = sorted(per_student.values())
    check("students", len(per_student), 136)
    check("sessions", len(sessions), 241)
    check("prompts", len(turns), 1409)
    check("greetings (one per session)", len(greetings), 241)
    check("mean prompts/student", round(sum(counts) / len(counts), 2), 10.36)
    check("median prompts/student", statistics.median(counts), 7)
    check("sd prompts/student", round(statistics.stdev(counts), 2), 10.86)

    closed = Counter(t["closed_type"] for t in turns if t["mode"] == "closed")
    check("closed prompt total", sum(closed.values()), 207)
    check("closed prompt counts", dict(closed),
          {"KC": 54, "KTC": 48, "KR": 49, "KM": 26, "KP": 17, "KH": 13})

    # --- category totals (Table 2a / 2b)
    req = Counter()
    res = Counter()
    for t in turns:
        row = codes[t["turn_id"]]
        for c in row["prompt_codes"]:
            req[c] += 1
        for c in row["response_codes"]:
            res[c] += 1
    check("feedback requests", {k: req[k] for k in FEEDBACK if req[k]},
          {"KTC": 158, "KC": 295, "KH": 159, "KM": 84, "KP": 36, "KR": 209,
           "KCR": 100, "KMC": 6})
    check("feedback responses", {k: res[k] for k in FEEDBACK if res[k]},
          {"KTC": 147, "KC": 424, "KH": 352, "KM": 81, "KP": 71, "KR": 149,
           "KCR": 120, "KMC": 6})
    check("aux prompt categories", {k: req[k] for k in req if k not in FEEDBACK},
          {"TEC": 165, "SoI": 101, "ANS": 141, "WHAT": 71, "OFT": 48,
           "TR": 15, "IN": 14, "HACK": 26})
    check("aux response categories", {k: res[k] for k in res if k not in FEEDBACK},
          {"TEC": 152, "SoI": 106, "OFT": 45, "TR": 15, "DENY": 42,
           "OFF": 9, "TE": 58})

    # --- match outcomes
    outcomes = Counter()
    kcr_mismatch = 0
    for t in turns:
        row = codes[t["turn_id"]]
        requested = set(row["prompt_codes"]) & FEEDBACK
        if not requested:
            continue
        provided = set(row["response_codes"]) & FEEDBACK
        if provided == requested:
            outcome = "Match"
        elif requested < provided:
            outcome = "OverMatch"
        elif requested & provided:
            outcome = "PartialMatch"
        else:
            outcome = "Mismatch"
            if "KCR" in requested:
                kcr_mismatch += 1
        outcomes[outcome] += 1
    pairs = sum(outcomes.values())
    check("question-response pairs", pairs, 891)
    check("match outcomes", dict(outcomes),
          {"Match": 417, "OverMatch": 255, "PartialMatch": 24, "Mismatch": 195})
    check("KCR mismatches", kcr_mismatch, 49)
    check("direct rate %", round(100 * outcomes["Match"] / pairs), 47)
    check("aligned rate %", round(100 * (outcomes["Match"] + outcomes["OverMatch"]) / pairs), 75)

    # --- flowgraph landmarks
    per_session_turns = defaultdict(list)
    for t in turns:
        per_session_turns[t["session_id"]].append(t)
    edge = Counter()
    node_pair = Counter()
    for sid, ts in per_session_turns.items():
        ts.sort(key=lambda t: t["index"])
        nodes = [",".join(codes[t["turn_id"]]["prompt_codes"]) for t in ts]
        labels = [",".join(codes[t["turn_id"]]["response_codes"]) for t in ts]
        # canonical order of code names inside a node label
        order = ["KR", "KCR", "KP", "KTC", "KC", "KM", "KH", "KMC", "TEC", "SoI",
                 "ANS", "WHAT", "OFT", "TR", "IN", "HACK", "OFF", "DENY", "TE"]

        def canon(label):
            return ",".join(sorted(label.split(","), key=order.index))

        nodes = [canon(n) for n in nodes]
        labels = [canon(l) for l in labels]
        edge[("START", "", nodes[0])] += 1
        node_pair[("START", nodes[0])] += 1
        for i in range(len(nodes) - 1):
            edge[(nodes[i], labels[i], nodes[i + 1])] += 1
            node_pair[(nodes[i], nodes[i + 1])] += 1
        edge[(nodes[-1], labels[-1], "END")] += 1
        node_pair[(nodes[-1], "END")] += 1

    check("edge START->KTC", edge[("START", "", "KTC")], 71)
    check("edge START->KCR", edge[("START", "", "KCR")], 23)
    check("edge START->SoI", edge[("START", "", "SoI")], 24)
    check("KH loop (KH)", edge[("KH", "KH", "KH")], 11)
    check("KH loop (KC,KH)", edge[("KH", "KC,KH", "KH")], 18)
    kh_other = {e: c for e, c in edge.items() if e[0] == "KH" and e[2] != "KH" and c >= 10}
    check("KH outgoing >= 10 besides loops", kh_other, {})
    check("SoI->SoI", node_pair[("SoI", "SoI")], 10)
    check("SoI->TEC", node_pair[("SoI", "TEC")], 14)
    check("TEC->END", node_pair[("TEC", "END")], 19)
    check("KTC->KC", node_pair[("KTC", "KC")], 19)
    check("KC->KC", node_pair[("KC", "KC")], 46)
    check("KC->KR", node_pair[("KC", "KR")], 14)
    check("KR->KR", node_pair[("KR", "KR")], 28)

    # --- adherence indicators, recomputed from raw text
    aux_only = [t for t in turns if not set(codes[t["turn_id"]]["response_codes"]) & FEEDBACK]
    check("aux-only responses filtered", len(aux_only), 393)
    population = [t for t in turns if set(codes[t["turn_id"]]["response_codes"]) & FEEDBACK]
    check("adherence population", len(population), 1016)

    steps = Counter()
    solutions = Counter()
    examples = Counter()
    templates = Counter()
    corrections = 0
    issued_templates = defaultdict(list)  # session -> [frozenset names]

    for sid in sorted(per_session_turns):
        for t in per_session_turns[sid]:
            text = t["response_text"]
            in_population = bool(set(codes[t["turn_id"]]["response_codes"]) & FEEDBACK)
            bl = blocks_of(text)
            shapes = [block_shape(b) for b in bl]
            if in_population:
                steps[step_profile(text)] += 1

                ref = references[sessions[sid]["task_id"]]
                ref_tokens = naive_tokens(ref)
                disclosure = "None"
                for b, shape in zip(bl, shapes):
                    sim = naive_lcs(naive_tokens(b), ref_tokens) / len(ref_tokens)
                    if sim >= 0.8 and shape["executable"]:
                        disclosure = "Complete"
                    elif sim >= 0.4 and shape["executable"] and disclosure != "Complete":
                        disclosure = "Partial"
                solutions[disclosure] += 1

                template_status = "NoTemplate"
                for shape in shapes:
                    if shape["skeleton"]:
                        template_status = "Provided"
                for shape in shapes:
                    if (shape["executable"] and shape["names"]
                            and shape["names"] in issued_templates[sid]):
                        template_status = "Completed"
                templates[template_status] += 1

                student_blocks = blocks_of(t["prompt_text"])
                corrected = False
                if student_blocks:
                    student_tokens = naive_tokens(student_blocks[-1])
                    for b in bl:
                        rtokens = naive_tokens(b)
                        if not student_tokens or rtokens == student_tokens:
                            continue
                        if naive_lcs(rtokens, student_tokens) / len(student_tokens) >= 0.6:
                            corrected = True
                if corrected:
                    corrections += 1

                if (bl and disclosure == "None" and template_status == "NoTemplate"
                        and not corrected):
                    grade = "Simple"
                    for shape in shapes:
                        if shape["lines"] > 10 or shape["control"] > 1:
                            grade = "Complex"
                    examples[grade] += 1

            for shape in shapes:
                if shape["skeleton"] and shape["names"]:
                    issued_templates[sid].append(shape["names"])

    check("steps single", steps["SingleStep"], 514)
    check("steps multiple", steps["MultipleSteps"], 289)
    check("steps multiple w/ next", steps["MultipleWithExplicitNext"], 213)
    check("solutions partial", solutions["Partial"], 102)
    check("solutions complete", solutions["Complete"], 129)
    check("examples simple", examples["Simple"], 104)
    check("examples complex", examples["Complex"], 3)
    check("templates provided", templates["Provided"], 167)
    check("templates completed", templates["Completed"], 95)
    check("code corrections", corrections, 34)

    verdicts = Counter(r["correctness"] for r in correctness)
    check("correctness annotated turns", len(correctness), 1016)
    check("correctness verdicts", dict(verdicts),
          {"Correct": 822, "PartiallyCorrect": 141, "Incorrect": 53})
    in_population_ids = {t["turn_id"] for t in population}
    check("annotations cover population",
          {r["turn_id"] for r in correctness} == in_population_ids, True)

    # --- ratings
    rating_counts = Counter(r["rating"] for r in ratings)
    check("ratings", dict(rating_counts), {"up": 130, "down": 21})
    check("comments", sum(1 for r in ratings if r.get("comment")), 29)

    failed = [name for name, ok in CHECKS if not ok]
    print(f"\n{len(CHECKS) - len(failed)}/{len(CHECKS)} checks passed")
    if failed:
        print("FAILED:", ", ".join(failed))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
