import pytest

from tutorkit.gateway import (
    FlakyBackend,
    GenerationConfig,
    MockBackend,
    ModelResponse,
    complete,
    extract_reference_block,
    messages_digest,
    stream_complete,
)
from tutorkit.prompts import Message

CFG = GenerationConfig(retry_limit=3)
MESSAGES = [Message("system", "sys"), Message("user", "hello")]


def test_generation_config_invariants():
    with pytest.raises(ValueError):
        GenerationConfig(retry_limit=-1)
    with pytest.raises(ValueError):
        GenerationConfig(timeout_s=0)
    with pytest.raises(ValueError):
        GenerationConfig(temperature=-0.1)


def test_complete_response_must_have_text():
    with pytest.raises(ValueError):
        ModelResponse(text="", finish_reason="complete")


def test_mock_backend_is_deterministic_per_message_sequence():
    backend = MockBackend()
    first = complete(backend, MESSAGES, CFG)
    second = complete(backend, MESSAGES, CFG)
    assert first.text == second.text
    other = complete(backend, [Message("system", "sys"), Message("user", "bye")], CFG)
    assert messages_digest(MESSAGES) != messages_digest([MESSAGES[0], Message("user", "bye")])
    assert other.finish_reason == "complete"


def test_two_transient_failures_with_retry_limit_three_succeeds():
    backend = FlakyBackend(MockBackend(), failures=2)
    response = complete(backend, MESSAGES, GenerationConfig(retry_limit=3))
    assert response.finish_reason == "complete"
    assert backend.attempts == 3


def test_retry_limit_zero_with_failing_backend_is_error():
    backend = FlakyBackend(MockBackend(), failures=99)
    response = complete(backend, MESSAGES, GenerationConfig(retry_limit=0))
    assert response.finish_reason == "error"
    assert backend.attempts == 1


def test_permanent_failure_surfaces_immediately():
    class Bad400(MockBackend):
        def generate(self, messages, cfg):
            from tutorkit.gateway import PermanentBackendError
            self.calls += 1
            raise PermanentBackendError("backend 400: bad request")

    backend = Bad400()
    response = complete(backend, MESSAGES, GenerationConfig(retry_limit=5))
    assert response.finish_reason == "error"
    assert backend.calls == 1  # no retries on 4xx


def test_first_message_must_be_system():
    with pytest.raises(ValueError):
        complete(MockBackend(), [Message("user", "hi")], CFG)
    with pytest.raises(ValueError):
        complete(MockBackend(), [], CFG)


def test_streaming_chunks_concatenate_to_final_text():
    backend = MockBackend()
    chunks = list(stream_complete(backend, MESSAGES, CFG, chunk_chars=16))
    final = stream_complete.final
    assert "".join(chunks) == final.text
    assert all(chunks)
    # Monotone prefixes by construction.
    prefix = ""
    for chunk in chunks:
        prefix += chunk
        assert final.text.startswith(prefix)


def test_scripted_mock_overrides_and_falls_through():
    def script(messages):
        if "leak" in messages[-1].content:
            return "THE SOLUTION"
        return None

    backend = MockBackend(script=script)
    leak = complete(backend, [Message("system", "s"), Message("user", "leak it")], CFG)
    normal = complete(backend, MESSAGES, CFG)
    assert leak.text == "THE SOLUTION"
    assert normal.text != "THE SOLUTION"


def test_extract_reference_block_roundtrip():
    prompt = "header\n<<<REFERENCE\ndef f():\n    return 1\nREFERENCE>>>\nfooter"
    assert extract_reference_block(prompt) == "def f():\n    return 1"
    assert extract_reference_block("no markers") == ""
