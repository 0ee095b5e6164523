"""Lightweight code analysis: fenced blocks, token streams, LCS, structure.

Works line-by-line on purpose: audited blocks are often skeletons
("def f(): # your code here") that no real parser accepts, so everything
here must stay total over arbitrary text.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_+-]*\n(.*?)```", re.DOTALL)

_TOKEN_RE = re.compile(
    r"[A-Za-z_]\w*"              # identifiers / keywords
    r"|\d+\.\d+|\d+"             # numbers
    r"|\"[^\"\n]*\"|'[^'\n]*'"   # single-line string literals
    r"|==|!=|<=|>=|//|\*\*|->|\+=|-=|\*=|/=|%="
    r"|[^\s\w]"                  # any other single punctuation char
)

_HEADER_RE = re.compile(
    r"^\s*(def|class|if|elif|else|for|while|try|except|finally|with)\b.*:\s*(#.*)?$"
)
_DEF_RE = re.compile(r"^\s*def\s+([A-Za-z_]\w*)\s*\(")
_CONTROL_RE = re.compile(r"^\s*(if|elif|for|while|try|with)\b")
_PLACEHOLDER_RE = re.compile(r"^\s*(pass|\.\.\.)\s*(#.*)?$")


def extract_code_blocks(text: str) -> list[str]:
    """Return the contents of all fenced code blocks, in order."""
    return [m.group(1) for m in _FENCE_RE.finditer(text)]


def strip_code_blocks(text: str) -> str:
    """Remove fenced code blocks (used before counting prose features)."""
    return _FENCE_RE.sub(" ", text)


def strip_comment(line: str) -> str:
    """Drop a trailing # comment, respecting single/double quotes."""
    quote = None
    for i, ch in enumerate(line):
        if quote:
            if ch == quote:
                quote = None
        elif ch in ("'", '"'):
            quote = ch
        elif ch == "#":
            return line[:i]
    return line


def normalized_lines(code: str) -> list[str]:
    """Non-blank lines with comments stripped; identifiers and layout kept."""
    out = []
    for raw in code.splitlines():
        line = strip_comment(raw).rstrip()
        if line.strip():
            out.append(line)
    return out


def tokenize(code: str) -> list[str]:
    """Normalized token stream: comments and whitespace gone, identifiers kept."""
    return _TOKEN_RE.findall("\n".join(normalized_lines(code)))


def parses_cleanly(code: str) -> bool:
    try:
        ast.parse(code)
        return True
    except SyntaxError:
        return False


# ---------------------------------------------------------------------------
# Longest common subsequence
# ---------------------------------------------------------------------------

def lcs_length(a: list, b: list) -> int:
    """Iterative DP with a rolling row; O(len(a) * len(b))."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                curr.append(prev[j - 1] + 1)
            else:
                curr.append(max(prev[j], curr[j - 1]))
        prev = curr
    return prev[-1]


def token_similarity(candidate: str, reference: str) -> float:
    """LCS ratio of normalized tokens, measured against the reference length."""
    ref_tokens = tokenize(reference)
    if not ref_tokens:
        return 0.0
    return lcs_length(tokenize(candidate), ref_tokens) / len(ref_tokens)


# ---------------------------------------------------------------------------
# Structure
# ---------------------------------------------------------------------------

@dataclass
class CodeStructure:
    lines: list = field(default_factory=list)        # normalized lines
    def_names: tuple = ()                            # function names, in order
    header_count: int = 0                            # def/class/branch headers
    control_flow_count: int = 0                      # if/elif/for/while/try/with
    executable_shaped: bool = False                  # any real statement beyond headers
    low_confidence: bool = False                     # block did not parse as Python

    @property
    def line_count(self) -> int:
        return len(self.lines)


def analyze_structure(code: str) -> CodeStructure:
    """Classify every normalized line as header, placeholder, or statement."""
    lines = normalized_lines(code)
    def_names = []
    header_count = 0
    control_count = 0
    executable = False
    for line in lines:
        if _HEADER_RE.match(line):
            header_count += 1
            if _CONTROL_RE.match(line):
                control_count += 1
            m = _DEF_RE.match(line)
            if m:
                def_names.append(m.group(1))
            continue
        if _PLACEHOLDER_RE.match(line):
            continue
        executable = True
    return CodeStructure(
        lines=lines,
        def_names=tuple(def_names),
        header_count=header_count,
        control_flow_count=control_count,
        executable_shaped=executable,
        low_confidence=not parses_cleanly(code),
    )


def is_skeleton(structure: CodeStructure) -> bool:
    """True when the block is headers whose bodies are only comments/placeholders."""
    return structure.header_count > 0 and not structure.executable_shaped
