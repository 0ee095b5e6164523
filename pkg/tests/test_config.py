import pytest

from tutorkit.audit import (
    AuditConfig,
    Correctness,
    DEFAULT_NEXT_STEP_CUES,
    load_correctness_annotations,
    load_cue_lexicon,
)
from tutorkit.coding import code_corpus
from tutorkit.config import load_config
from tutorkit.model import ChatSession, ChatTurn


def test_defaults_without_file():
    cfg = load_config(None)
    assert cfg.tasks_dir == "tasks"
    assert cfg.enforce_guardrails is False
    assert cfg.generation.temperature == 1.0
    assert cfg.audit.complete_threshold == 0.8
    assert cfg.audit.partial_threshold == 0.4
    assert cfg.audit.correction_threshold == 0.6


def test_yaml_file_and_overrides(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(
        "tasks_dir: my_tasks\n"
        "enforce_guardrails: true\n"
        "rate_limit_per_minute: 5\n"
        "generation:\n  temperature: 0.2\n  retry_limit: 4\n"
        "audit:\n  complete_threshold: 0.9\n  next_step_cues: ['go on with']\n"
    )
    cfg = load_config(path, {"backend_url": "http://localhost:9"})
    assert cfg.tasks_dir == "my_tasks"
    assert cfg.enforce_guardrails is True
    assert cfg.rate_limit_per_minute == 5
    assert cfg.generation.temperature == 0.2
    assert cfg.generation.retry_limit == 4
    assert cfg.audit.complete_threshold == 0.9
    assert cfg.audit.next_step_cues == ("go on with",)
    assert cfg.backend_url == "http://localhost:9"


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("no_such_option: 1\n")
    with pytest.raises(ValueError, match="no_such_option"):
        load_config(path)


def test_env_var_overrides_backend_url(tmp_path, monkeypatch):
    monkeypatch.setenv("TUTORKIT_BACKEND_URL", "http://env-backend")
    cfg = load_config(None)
    assert cfg.backend_url == "http://env-backend"


def test_cue_lexicon_file_backs_defaults():
    assert "start with" in DEFAULT_NEXT_STEP_CUES
    assert DEFAULT_NEXT_STEP_CUES == load_cue_lexicon()
    assert AuditConfig().next_step_cues == DEFAULT_NEXT_STEP_CUES


def test_correctness_annotations_csv(tmp_path):
    path = tmp_path / "annotations.csv"
    path.write_text(
        "turn_id,correctness,annotator,note\n"
        "t1,Correct,coder-1,\n"
        "t2,Incorrect,coder-1,wrong verdict\n"
    )
    annotations = load_correctness_annotations(path)
    assert annotations == {"t1": Correctness.CORRECT, "t2": Correctness.INCORRECT}


def _one_turn_sessions():
    session = ChatSession("s1", "stu", "happy_strings")
    session.turns.append(ChatTurn("s1-t0001", "s1", 1, "open",
                                  prompt_text="what now?", response_text="Read the task."))
    return {"s1": session}


def test_model_classifier_requires_non_reproducible_mode():
    with pytest.raises(ValueError, match="reproducibility"):
        code_corpus(_one_turn_sessions(), model_classifier=lambda t: (["KH"], ["KH"]))


def test_model_classifier_plugs_in_outside_reproducible_mode():
    coded = code_corpus(
        _one_turn_sessions(),
        model_classifier=lambda t: (["KH"], ["KH", "KC"]),
        reproducible=False,
    )
    turn = coded.turns["s1-t0001"]
    assert turn.classifier_source == "model"
    assert set(turn.prompt_codes.names()) == {"KH"}
    assert set(turn.response_codes.names()) == {"KH", "KC"}
