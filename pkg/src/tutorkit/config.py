"""Application configuration: one YAML file plus env overrides for secrets."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml

from .audit import AuditConfig
from .gateway import GenerationConfig


@dataclass
class AppConfig:
    tasks_dir: str = "tasks"
    corpus_path: Optional[str] = None  # None keeps the event log in memory
    template_dir: Optional[str] = None  # None uses the bundled templates
    locale: str = "en"
    backend_url: Optional[str] = None  # None selects the deterministic mock
    enforce_guardrails: bool = False
    rate_limit_per_minute: int = 30
    max_context_tokens: int = 8000
    keep_recent_turns: int = 4
    sd_mode: str = "sample"  # sample|population standard deviation in stats
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    audit: AuditConfig = field(default_factory=AuditConfig)


def load_config(path=None, overrides: Optional[dict] = None) -> AppConfig:
    """Build an AppConfig from an optional YAML file and explicit overrides.

    Secrets never live in the file: the API key is read from the environment
    by the gateway. TUTORKIT_BACKEND_URL overrides the configured base URL.
    """
    raw: dict = {}
    if path:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}

    gen_raw = raw.pop("generation", {}) or {}
    audit_raw = raw.pop("audit", {}) or {}
    cfg = AppConfig(
        generation=GenerationConfig(**gen_raw),
        audit=AuditConfig(
            **{**audit_raw, **({"next_step_cues": tuple(audit_raw["next_step_cues"])}
                               if "next_step_cues" in audit_raw else {})}
        ),
    )
    known = {f.name for f in fields(AppConfig)}
    for key, value in raw.items():
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        setattr(cfg, key, value)

    if os.environ.get("TUTORKIT_BACKEND_URL"):
        cfg.backend_url = os.environ["TUTORKIT_BACKEND_URL"]
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg
