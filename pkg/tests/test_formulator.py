from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from rulebook.formulator import (MISC, Category, FormulationError, Manual, extract_markdown_block, formulate,
                                 formulator_system_prompt, parse_manual_markdown, parse_rendered_manual,
                                 partition_violations, render_markdown, repair_partition)
from rulebook.llm import RuleOp, ScriptedBackend, create_session
from rulebook.rulestore import Rule, RuleStore, RuleType, load_initial_rules
from rulebook.scripted import household_backend


def twelve_rules() -> RuleStore:
    store = load_initial_rules()
    extra = [("Success Process", "heat then put", "# [Step 1] find\n# [Step 2] heat"),
             ("Success Process", "cool then put", ""),
             ("Corrected Error", "go to the appliance first", "observation = agent.go_to('microwave_1')"),
             ("Corrected Error", "open closed receptacles", "```python\nagent.open('fridge_1')\n```"),
             ("Unsolved Error", "the lamp was never found", ""),
             ("Special Phenomenon", "sinks hold many items", ""),
             ("Special Mechanism", "holding one object at a time", ""),
             ("Success Process", "clean then put", "# clean at the sink\n\n# then put"),
             ("Useful Helper Method", "take an object wherever it is", "def take(agent, o, r):\n    return agent.take_from(o, r)")]
    for rtype, text, example in extra:
        store.apply(RuleOp("write_rule", {"rule": text, "type": rtype, "example": example,
                                          "validation_record": "seen in epoch_4"}), episode_id="epoch_4")
    assert len(store) == 12
    return store


GOOD = """Understanding: the rules cover searching, appliances and placement.

```markdown
# Household Robot Manual

Start with searching, then appliances.

## Finding things

Searching comes first.

- **rule_1**: find_object
- **rule_11**: taking

## Appliances

- **rule_0**
- **rule_3**
- **rule_4**
- **rule_5**
- **rule_10**

## Placing and pitfalls

- **rule_2**
- **rule_6**
- **rule_7**
- **rule_8**
- **rule_9**
```
"""


def session(*responses):
    return create_session(formulator_system_prompt(), ScriptedBackend(list(responses)), session_id="f",
                          agent="formulator")


def assert_manual_faithful(manual: Manual, store: RuleStore):
    text = manual.rendered
    ids = manual.rule_ids()
    assert sorted(ids) == sorted(store.ids) and len(ids) == len(set(ids))
    assert "validation_record" not in text and "epoch_4" not in text
    for rid in store.ids:
        assert text.count(f"### **{rid}**") == 1
        rule = store.get(rid)
        assert rule.content.strip() in text
        if rule.example.strip():
            assert rule.example.strip("\n") in text


def test_formulate_partitions_and_splices_bodies_verbatim():
    store = twelve_rules()
    manual = formulate(store, session(GOOD))
    assert manual.repairs == []
    assert [c.name for c in manual.categories] == ["Finding things", "Appliances", "Placing and pitfalls"]
    assert manual.categories[0].introduction == "Searching comes first."
    assert manual.overview == "Start with searching, then appliances."
    assert_manual_faithful(manual, store)


def test_bad_partition_is_reprompted_then_repaired():
    store = twelve_rules()
    corrupted = GOOD.replace("- **rule_9**\n", "").replace("- **rule_0**\n", "- **rule_0**\n- **rule_1**\n- **rule_77**\n")
    sent = []
    backend = ScriptedBackend(responder=lambda m, s: sent.append(m[-1]["content"]) or corrupted)
    manual = formulate(store, create_session(formulator_system_prompt(), backend, session_id="f"))
    assert len(sent) == 2
    assert "rule_9 is missing" in sent[1] and "rule_77 is not a current rule" in sent[1]
    assert manual.categories[-1].name == MISC and manual.categories[-1].rule_ids == ["rule_9"]
    assert any("duplicate rule_1" in r for r in manual.repairs)
    assert_manual_faithful(manual, store)


def test_repair_on_second_attempt_is_not_needed_when_fixed():
    store = twelve_rules()
    broken = GOOD.replace("- **rule_9**\n", "")
    manual = formulate(store, session(broken, GOOD))
    assert manual.repairs == []


def test_missing_markdown_block_is_asked_for_once():
    store = twelve_rules()
    assert formulate(store, session("no block here", GOOD)).repairs == []
    with pytest.raises(FormulationError):
        formulate(store, session("no block", "still none"))


def test_empty_store_is_refused():
    with pytest.raises(ValueError):
        formulate(RuleStore(), session())


def test_partition_helpers():
    cats = [Category("A", rule_ids=["rule_0", "rule_0"]), Category("B")]
    assert partition_violations(cats, ["rule_0", "rule_1"]) == [
        "rule_0 appears more than once ('A' and 'A')", "category 'B' has no rules", "rule_1 is missing"]
    fixed, repairs = repair_partition(cats, ["rule_0", "rule_1"])
    assert [(c.name, c.rule_ids) for c in fixed] == [("A", ["rule_0"]), (MISC, ["rule_1"])]
    assert len(repairs) == 3


def test_markdown_block_keeps_nested_fences():
    text = "x\n```markdown\n# T\n\n```python\ncode\n```\n\n## C\n- **rule_0**\n```\ntrailing"
    block = extract_markdown_block(text)
    assert "```python\ncode\n```" in block
    outline = parse_manual_markdown(block)
    assert outline.title == "T" and outline.categories[0].rule_ids == ["rule_0"]


def test_scripted_formulator_covers_every_rule():
    store = twelve_rules()
    manual = formulate(store, create_session(formulator_system_prompt(), household_backend(), session_id="f"))
    assert_manual_faithful(manual, store)


# -- rendering round trip -----------------------------------------------------------

body = st.text(st.characters(blacklist_categories=("Cs", "Cc"), blacklist_characters="#"), min_size=1,
               max_size=30).map(str.strip).filter(bool)
example = st.lists(st.sampled_from(["x = 1", "", "    y = 2", "```", "# note", "````py"]), max_size=5).map("\n".join)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(list(RuleType)), body, example), min_size=1, max_size=6),
       st.integers(1, 3))
def test_render_parse_is_idempotent(rules, n_cats):
    rule_map = {f"rule_{i}": Rule(f"rule_{i}", t, c, e) for i, (t, c, e) in enumerate(rules)}
    ids = list(rule_map)
    cats = [Category(f"Cat {k}", f"intro {k}", ids[k::n_cats]) for k in range(n_cats) if ids[k::n_cats]]
    manual = Manual("Title", "Overview.", cats, rule_map)
    text = render_markdown(manual)
    parsed = parse_rendered_manual(text)
    assert render_markdown(parsed) == text
    assert [c.rule_ids for c in parsed.categories] == [c.rule_ids for c in cats]
    for rid, rule in rule_map.items():
        got = parsed.rules[rid]
        assert (got.rule_type, got.content) == (rule.rule_type, rule.content)
        assert got.example.strip("\n") == rule.example.strip("\n") or not rule.example.strip()
