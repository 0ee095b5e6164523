import io
import json

from hypothesis import given, settings
from hypothesis import strategies as st

from tutorkit import corpus
from tutorkit.model import ChatSession, ChatTurn, FeedbackType


def make_turn(session_id, index, mode="open", closed_type=None, rating=None, comment=None):
    return ChatTurn(
        turn_id=f"{session_id}-t{index:04d}",
        session_id=session_id,
        index=index,
        mode=mode,
        closed_type=closed_type,
        prompt_text="" if index == 0 else f"prompt {index}",
        response_text=f"response {index}",
        rating=rating,
        comment=comment,
        prompt_at=f"2025-01-13T10:{index:02d}:00Z",
        response_at=f"2025-01-13T10:{index:02d}:05Z",
    )


def make_session(session_id="s1", student="stu1", task="happy_strings", n_turns=2):
    session = ChatSession(session_id, student, task, started_at="2025-01-13T10:00:00Z")
    session.turns.append(make_turn(session_id, 0))
    for i in range(1, n_turns + 1):
        session.turns.append(make_turn(session_id, i))
    return session


def corpus_lines(sessions):
    return [json.dumps(e) for s in sessions for e in corpus.session_to_events(s)]


def test_wellformed_corpus_validates_clean():
    lines = corpus_lines([make_session("s1"), make_session("s2", student="stu2")])
    report = corpus.validate_corpus(lines)
    assert report.ok, report.violations


def test_closed_type_must_be_offerable():
    session = make_session("s1", n_turns=0)
    bad = make_turn("s1", 1, mode="closed", closed_type=FeedbackType.KCR)
    session.turns.append(bad)
    report = corpus.validate_corpus(corpus_lines([session]))
    assert any("not offerable" in v.message for v in report.violations)


def test_index_gap_detected():
    session = make_session("s1", n_turns=0)
    session.turns.append(make_turn("s1", 1))
    session.turns.append(make_turn("s1", 3))
    report = corpus.validate_corpus(corpus_lines([session]))
    assert any("index gap" in v.message for v in report.violations)


def test_malformed_line_is_violation_not_crash():
    lines = ["{not json", '"just a string"']
    report = corpus.validate_corpus(lines)
    assert len(report.violations) == 2
    assert report.violations[0].locator == "line 1"


def test_unknown_references_flagged():
    turn_line = json.dumps(corpus.turn_to_event(make_turn("ghost", 1)))
    rating_line = json.dumps(
        {"kind": "response_rated", "turn_id": "nope", "rating": "up"}
    )
    report = corpus.validate_corpus([turn_line, rating_line])
    messages = " | ".join(v.message for v in report.violations)
    assert "unknown session" in messages
    assert "unknown turn" in messages


def test_rating_last_write_wins():
    session = make_session("s1", n_turns=1)
    lines = corpus_lines([session])
    turn_id = session.turns[1].turn_id
    lines.append(json.dumps({"kind": "response_rated", "turn_id": turn_id, "rating": "up"}))
    lines.append(json.dumps({"kind": "response_rated", "turn_id": turn_id,
                             "rating": "down", "comment": "confidently wrong"}))
    events = [e for _, e, _ in corpus.iter_events(lines) if e]
    sessions = corpus.build_sessions(events)
    merged = sessions["s1"].turns[1]
    assert merged.rating == "down"
    assert merged.comment == "confidently wrong"


def test_serialize_parse_roundtrip_structurally_equal():
    original = [make_session("s1", n_turns=3), make_session("s2", student="stu2", n_turns=1)]
    original[0].turns[2] = original[0].turns[2].with_rating("up", None)
    lines = corpus_lines(original)
    assert corpus.validate_corpus(lines).ok

    events = [e for _, e, _ in corpus.iter_events(lines) if e]
    rebuilt = corpus.build_sessions(events)

    # Serialize the rebuilt corpus again: byte-identical event streams.
    relines = corpus_lines([rebuilt[s.session_id] for s in original])
    buf_a, buf_b = io.StringIO(), io.StringIO()
    corpus.write_events((json.loads(l) for l in lines), buf_a)
    corpus.write_events((json.loads(l) for l in relines), buf_b)
    assert buf_a.getvalue() == buf_b.getvalue()

    for session in original:
        assert rebuilt[session.session_id].turns == session.turns


# Valid turn texts are non-blank; blank ones are a validation violation.
_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=40
).filter(lambda s: s.strip())


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(_text, _text), min_size=0, max_size=5), st.booleans())
def test_roundtrip_property_random_texts(turn_texts, with_greeting):
    session = ChatSession("s1", "stu", "happy_strings", started_at="2025-01-13T00:00:00Z")
    if with_greeting:
        session.turns.append(make_turn("s1", 0))
    for i, (prompt, response) in enumerate(turn_texts, start=1):
        session.turns.append(ChatTurn(
            turn_id=f"s1-t{i:04d}", session_id="s1", index=i, mode="open",
            prompt_text=prompt, response_text=response,
        ))
    lines = corpus_lines([session])
    assert corpus.validate_corpus(lines).ok
    events = [e for _, e, _ in corpus.iter_events(lines) if e]
    rebuilt = corpus.build_sessions(events)
    assert rebuilt["s1"].turns == session.turns


def test_prompt_response_pairing_always_one_to_one():
    sessions = [make_session("s1", n_turns=4), make_session("s2", n_turns=2)]
    prompt_count = response_count = 0
    for session in sessions:
        for turn in session.prompt_turns:
            assert turn.prompt_text and turn.response_text
            prompt_count += 1
            response_count += 1
    assert prompt_count == response_count == 6
