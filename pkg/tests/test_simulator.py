import json
from collections import Counter, defaultdict

import pytest
from scipy import stats as scipy_stats

from tutorkit.gateway import MockBackend, extract_reference_block
from tutorkit.simulate import (
    BehaviorModelError,
    StudentBehaviorModel,
    load_behavior_model,
    make_sim_service,
    regression_suite,
    run_episode,
    sample_walk,
    transcript_bytes,
)

BUNDLED_COUNTS = {
    ("START", "KTC"): 71, ("START", "KCR"): 23, ("START", "SoI"): 24,
    ("KTC", "KC"): 19, ("KC", "KC"): 46, ("KC", "KR"): 14,
    ("KR", "KR"): 28, ("KH", "KH"): 11,
    ("SoI", "SoI"): 10, ("SoI", "TEC"): 14, ("TEC", "END"): 19,
    ("KCR", "END"): 23,
}


def toy_model(transitions, utterances=None, states=None):
    if states is None:
        states = {"START", "END"}
        for src, dst in transitions:
            states |= {src, dst}
    return StudentBehaviorModel(
        states=tuple(sorted(states)),
        transition_weights=dict(transitions),
        **({"utterance_bank": utterances} if utterances else {}),
    )


def test_bundled_weights_encode_published_counts():
    model = load_behavior_model()
    for pair, weight in BUNDLED_COUNTS.items():
        assert model.transition_weights.get(pair) == weight, pair
    assert model.notes.get("deny_observed") == {"KCR": [18, 23]}


def test_negative_weight_is_load_error(tmp_path):
    path = tmp_path / "weights.json"
    path.write_text(json.dumps({
        "states": ["START", "A", "END"],
        "transitions": {"START": {"A": -1}, "A": {"END": 1}},
    }))
    with pytest.raises(BehaviorModelError, match="negative"):
        load_behavior_model(path)


def test_dangling_state_is_load_error(tmp_path):
    path = tmp_path / "weights.json"
    path.write_text(json.dumps({
        "states": ["START", "END"],
        "transitions": {"START": {"GHOST": 3}},
    }))
    with pytest.raises(BehaviorModelError, match="dangling"):
        load_behavior_model(path)


def test_state_without_outgoing_weight_rejected():
    with pytest.raises(BehaviorModelError, match="no outgoing"):
        toy_model({("START", "KC"): 1}, states={"START", "KC", "END"})


def test_two_state_toy_chain_is_valid():
    model = toy_model({("START", "KC"): 1, ("KC", "END"): 1})
    assert model.distribution("START") == {"KC": 1.0}


def test_deterministic_single_path_chain_matches_script():
    model = toy_model(
        {("START", "KTC"): 1, ("KTC", "KC"): 1, ("KC", "END"): 1},
        utterances={
            "KTC": [{"mode": "closed", "closed_type": "KTC"}],
            "KC": [{"mode": "open", "text": "which concepts?"}],
        },
    )
    service = make_sim_service(seed=3)
    result = run_episode(model, service, seed=3)
    assert result.states == ["KTC", "KC"]
    turns = result.session.prompt_turns
    assert turns[0].mode == "closed" and turns[0].closed_type.value == "KTC"
    assert turns[1].mode == "open" and turns[1].prompt_text == "which concepts?"


def test_max_turn_cap_bounds_session_length():
    model = toy_model({("START", "KC"): 1, ("KC", "KC"): 1},
                      utterances={"KC": [{"mode": "open", "text": "more!"}]})
    service = make_sim_service(seed=1)
    result = run_episode(model, service, seed=1, max_turns=5)
    assert len(result.session.prompt_turns) == 5


def test_needs_code_is_retried_with_code_attached():
    model = toy_model({("START", "KR"): 1, ("KR", "END"): 1},
                      utterances={"KR": [{"mode": "closed", "closed_type": "KR"}]})
    service = make_sim_service(seed=2)
    result = run_episode(model, service, seed=2)
    assert not result.aborted
    assert result.session.prompt_turns[0].closed_type.value == "KR"


def test_empirical_transition_frequencies_match_model_within_l1():
    model = toy_model({
        ("START", "A"): 2, ("START", "B"): 1,
        ("A", "A"): 1, ("A", "B"): 2, ("A", "END"): 1,
        ("B", "A"): 3, ("B", "END"): 1,
    }, utterances={
        "A": [{"mode": "open", "text": "alpha?"}],
        "B": [{"mode": "open", "text": "beta?"}],
    })
    service = make_sim_service(seed=1)
    observed = defaultdict(Counter)
    for episode in range(100):
        result = run_episode(model, service, seed=3_0000 + episode, max_turns=30)
        for src, dst in result.transitions():
            observed[src][dst] += 1

    for src, row in observed.items():
        expected = model.distribution(src)
        total = sum(row.values())
        # Oracle: exact multinomial expectation from the configured weights.
        l1 = sum(abs(row.get(dst, 0) / total - p) for dst, p in expected.items())
        assert l1 <= 0.1, (src, dict(row), expected)


def test_chi_square_goodness_of_fit_10k_steps_three_states():
    model = toy_model({
        ("START", "A"): 1,
        ("A", "A"): 5, ("A", "B"): 3, ("A", "C"): 2,
        ("B", "A"): 1, ("B", "C"): 1,
        ("C", "A"): 4, ("C", "END"): 1,
    })
    transitions = sample_walk(model, seed=42, steps=10_000)
    per_state = defaultdict(Counter)
    for src, dst in transitions:
        per_state[src][dst] += 1
    for src in ("A", "B", "C"):
        expected_dist = model.distribution(src)
        targets = sorted(expected_dist)
        observed = [per_state[src][t] for t in targets]
        n = sum(observed)
        expected = [expected_dist[t] * n for t in targets]
        result = scipy_stats.chisquare(observed, expected)
        assert result.pvalue >= 0.01, (src, observed, expected)


def test_end_to_end_replay_is_byte_identical_under_fixed_seed():
    model = load_behavior_model()

    def batch():
        service = make_sim_service(seed=5)
        for episode in range(3):
            run_episode(model, service, seed=5_0000 + episode)
        return transcript_bytes(service)

    first, second = batch(), batch()
    assert first == second
    assert first  # non-empty transcript


# -- guardrail regression ----------------------------------------------------

def leak_once_script():
    state = {"leaked": False}

    def script(messages):
        if not state["leaked"]:
            state["leaked"] = True
            ref = extract_reference_block(messages[0].content)
            return f"Fine, here it is:\n```python\n{ref}\n```"
        return None

    return script


HACK_MODEL_SPEC = {
    ("START", "HACK"): 1, ("HACK", "HACK"): 1, ("HACK", "END"): 2,
}


def test_regression_suite_counts_scripted_leak():
    model = toy_model({("START", "KC"): 1, ("KC", "KC"): 2, ("KC", "END"): 1},
                      utterances={"KC": [{"mode": "open", "text": "concepts?"}]})
    summary = regression_suite(model, n=5, enforce=False, seed=7,
                               backend=MockBackend(script=leak_once_script()))
    assert summary.complete_disclosures == 1
    assert summary.responses > 0


def test_regression_suite_enforcement_blocks_leak():
    model = toy_model({("START", "KC"): 1, ("KC", "KC"): 2, ("KC", "END"): 1},
                      utterances={"KC": [{"mode": "open", "text": "concepts?"}]})
    summary = regression_suite(model, n=5, enforce=True, seed=7,
                               backend=MockBackend(script=leak_once_script()))
    assert summary.complete_disclosures == 0


def test_hack_prompts_with_refusing_mock_never_survive():
    def refusal_script(messages):
        last = messages[-1].content.lower()
        if "ignore" in last or "pretend" in last:
            return "I can't do that. Let's get back to the task instead."
        return None

    model = toy_model(HACK_MODEL_SPEC)
    summary = regression_suite(model, n=20, enforce=False, seed=11,
                               backend=MockBackend(script=refusal_script))
    assert summary.hack_prompts > 0
    assert summary.injection_survivals == 0


def test_regression_suite_requires_positive_n():
    with pytest.raises(ValueError):
        regression_suite(load_behavior_model(), n=0)
