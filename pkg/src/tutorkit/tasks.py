"""Task catalog: load task definition files from a directory.

A task file is Markdown with a YAML front-matter header:

    ---
    task_id: happy_strings
    title: Happy Strings
    concept_tags: [functions, lists]
    ---

    ## Description
    ...problem statement...

    ## Reference Solution
    ```python
    ...
    ```
"""

from __future__ import annotations

import re
from pathlib import Path

import yaml

from .model import Task
from . import codeparse


class TaskFileError(ValueError):
    pass


_FRONT_MATTER_RE = re.compile(r"\A---\s*\n(.*?)\n---\s*\n", re.DOTALL)
_SECTION_RE = re.compile(r"^##\s+(.+?)\s*$", re.MULTILINE)


def parse_task_file(path) -> Task:
    text = Path(path).read_text(encoding="utf-8")
    m = _FRONT_MATTER_RE.match(text)
    if not m:
        raise TaskFileError(f"{path}: missing YAML front matter")
    try:
        meta = yaml.safe_load(m.group(1)) or {}
    except yaml.YAMLError as exc:
        raise TaskFileError(f"{path}: bad front matter: {exc}") from None

    body = text[m.end():]
    sections: dict[str, str] = {}
    matches = list(_SECTION_RE.finditer(body))
    for i, sec in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(body)
        sections[sec.group(1).lower()] = body[sec.end():end].strip()

    if "description" not in sections:
        raise TaskFileError(f"{path}: missing '## Description' section")
    if "reference solution" not in sections:
        raise TaskFileError(f"{path}: missing '## Reference Solution' section")

    solution_section = sections["reference solution"]
    blocks = codeparse.extract_code_blocks(solution_section)
    reference_solution = blocks[0] if blocks else solution_section

    try:
        return Task(
            task_id=str(meta.get("task_id", "")),
            title=str(meta.get("title", "")),
            description=sections["description"],
            reference_solution=reference_solution,
            concept_tags=tuple(meta.get("concept_tags", ()) or ()),
        )
    except ValueError as exc:
        raise TaskFileError(f"{path}: {exc}") from None


def load_task_catalog(directory) -> dict:
    """Load every *.md task file in a directory; task_ids must be unique."""
    catalog: dict[str, Task] = {}
    paths = sorted(Path(directory).glob("*.md"))
    if not paths:
        raise TaskFileError(f"no task files (*.md) found in {directory}")
    for path in paths:
        task = parse_task_file(path)
        if task.task_id in catalog:
            raise TaskFileError(f"{path}: duplicate task_id {task.task_id!r}")
        catalog[task.task_id] = task
    return catalog
