import pytest

from tutorkit.model import ChatSession, ChatTurn, FeedbackType, OFFERABLE_CLOSED_TYPES
from tutorkit.prompts import (
    CONSTRAINT_CLAUSES,
    ContextBudget,
    Message,
    NeedsCode,
    PromptTemplates,
    SystemPromptSpec,
    UnsupportedClosedPrompt,
    build_system_prompt,
    compose_context,
    contains_clause,
    render_closed_prompt,
    whitespace_tokens,
)
from tutorkit.tasks import load_task_catalog

CATALOG = load_task_catalog("tasks")
HAPPY = CATALOG["happy_strings"]
TEMPLATES = PromptTemplates()


def test_system_prompt_embeds_task_and_solution_verbatim():
    prompt = build_system_prompt(HAPPY, "open", TEMPLATES)
    assert HAPPY.description in prompt
    assert HAPPY.reference_solution in prompt
    assert 'Compute the number of "happy" strings' in HAPPY.description


def test_system_prompt_contains_all_five_constraints():
    prompt = build_system_prompt(HAPPY, "open", TEMPLATES)
    for key in CONSTRAINT_CLAUSES:
        assert contains_clause(prompt, key), key


def test_system_prompt_spec_keeps_core_constraints():
    spec = SystemPromptSpec(task=HAPPY, mode="open")
    assert set(CONSTRAINT_CLAUSES) <= set(spec.constraints)
    with pytest.raises(ValueError, match="core constraints"):
        SystemPromptSpec(task=HAPPY, mode="open", constraints=("one_step_per_response",))
    with pytest.raises(ValueError, match="mode"):
        SystemPromptSpec(task=HAPPY, mode="sideways")


def test_reference_solution_marked_never_reveal():
    prompt = build_system_prompt(HAPPY, "closed", TEMPLATES)
    assert "never reveal" in prompt.lower()


def test_modes_share_context_block_differ_in_instructions():
    open_prompt = build_system_prompt(HAPPY, "open", TEMPLATES)
    closed_prompt = build_system_prompt(HAPPY, "closed", TEMPLATES)
    assert open_prompt != closed_prompt
    marker = "Rules you must always follow"
    assert open_prompt.split(marker)[0] == closed_prompt.split(marker)[0]
    # Determinism: same inputs, same output.
    assert build_system_prompt(HAPPY, "open", TEMPLATES) == open_prompt


def test_exactly_one_template_per_offerable_type_and_injective():
    assert set(TEMPLATES.closed) == set(OFFERABLE_CLOSED_TYPES)
    rendered = {
        ft: render_closed_prompt(ft, "x = 1", HAPPY, TEMPLATES).content
        for ft in OFFERABLE_CLOSED_TYPES
    }
    assert len(set(rendered.values())) == len(rendered)


def test_reference_solution_never_in_any_rendered_template():
    for ft in OFFERABLE_CLOSED_TYPES:
        result = render_closed_prompt(ft, "x = 1", HAPPY, TEMPLATES)
        assert HAPPY.reference_solution not in result.content
    assert HAPPY.reference_solution not in TEMPLATES.greeting


def test_kc_without_code_renders_template():
    result = render_closed_prompt(FeedbackType.KC, None, HAPPY, TEMPLATES)
    assert isinstance(result, Message)
    assert "concept" in result.content.lower()


@pytest.mark.parametrize("ft", [FeedbackType.KM, FeedbackType.KP, FeedbackType.KR])
def test_code_requiring_prompts_return_needs_code(ft):
    assert isinstance(render_closed_prompt(ft, None, HAPPY, TEMPLATES), NeedsCode)
    assert isinstance(render_closed_prompt(ft, "   ", HAPPY, TEMPLATES), NeedsCode)
    assert isinstance(render_closed_prompt(ft, "x = 1", HAPPY, TEMPLATES), Message)


@pytest.mark.parametrize("ft", [FeedbackType.KTC, FeedbackType.KC, FeedbackType.KH])
def test_no_code_needed_prompts_succeed_without_code(ft):
    assert isinstance(render_closed_prompt(ft, None, HAPPY, TEMPLATES), Message)


@pytest.mark.parametrize("ft", [FeedbackType.KCR, FeedbackType.KMC])
def test_never_offered_types_raise(ft):
    with pytest.raises(UnsupportedClosedPrompt):
        render_closed_prompt(ft, "code", HAPPY, TEMPLATES)


def _session(n_turns, words_per_turn=5):
    session = ChatSession("s1", "stu", "happy_strings")
    for i in range(1, n_turns + 1):
        session.turns.append(ChatTurn(
            f"s1-t{i:04d}", "s1", i, "open",
            prompt_text=" ".join([f"p{i}w{j}" for j in range(words_per_turn)]),
            response_text=" ".join([f"r{i}w{j}" for j in range(words_per_turn)]),
        ))
    return session


def test_compose_context_empty_session():
    session = ChatSession("s1", "stu", "happy_strings")
    messages = compose_context(session, "hi", "SYSTEM")
    assert [(m.role, m.content) for m in messages] == [("system", "SYSTEM"), ("user", "hi")]


def test_compose_context_two_turn_arithmetic():
    messages = compose_context(_session(2), "next", "SYSTEM")
    assert len(messages) == 6  # 1 system + 5 conversation messages
    assert [m.role for m in messages] == ["system", "user", "assistant",
                                          "user", "assistant", "user"]


def test_compose_context_budget_summarizes_oldest():
    session = _session(12, words_per_turn=30)
    budget = ContextBudget(max_tokens=300, keep_recent_turns=3)
    messages = compose_context(session, "latest question", "SYS", budget)

    # Oracle: the configured tokenizer decides what fits.
    full = compose_context(session, "latest question", "SYS",
                           ContextBudget(max_tokens=10**9, keep_recent_turns=3))
    assert sum(whitespace_tokens(m.content) for m in full) > 300

    assert messages[0].content == "SYS"
    assert messages[1].role == "system" and "Summary of 9 earlier exchanges" in messages[1].content
    # Newest 3 turns stay verbatim, then the new prompt.
    assert messages[2].content == session.turns[-3].prompt_text
    assert messages[-1].content == "latest question"
    assert sum(whitespace_tokens(m.content) for m in messages) < \
        sum(whitespace_tokens(m.content) for m in full)
    # Determinism under repetition.
    again = compose_context(session, "latest question", "SYS", budget)
    assert messages == again
