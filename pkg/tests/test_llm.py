from __future__ import annotations

import json

import httpx
import pytest
from hypothesis import given, settings, strategies as st

from rulebook.llm import (BackendError, ContextOverflowError, ExchangeRecord, HTTPBackend, RecordingBackend,
                          ReplayBackend, ReplayIntegrityError, ReplayMissError, ResponseFormatError, RuleOp, ScriptedBackend,
                          ScriptExhaustedError, ScriptGuardError, SessionStateError, create_session,
                          normalize_epoch_ids, parse_planner_response, parse_rule_ops, render_rule_ops)

PLANNER_REPLY = """### Understanding of the observations:
The mug must be heated.

### Related Rules:
- **rule_2**: heat then put
- **rule_1**

### Overall Plan:
1. find the mug

### Code:
```python
observation = agent.go_to('microwave_1')
```
"""


def test_planner_response_sections():
    turn = parse_planner_response(PLANNER_REPLY)
    assert turn.analysis == "The mug must be heated."
    assert turn.related_rules == ["rule_2", "rule_1"]
    assert turn.overall_plan == "1. find the mug"
    assert turn.code == "observation = agent.go_to('microwave_1')"


def test_planner_response_without_code_is_a_format_error():
    with pytest.raises(ResponseFormatError):
        parse_planner_response("### Plan:\nthink harder")


BUILDER_REPLY = '''Codes:
```python
# a comment mentioning rule_system.delete_rule('rule_0') is ignored
rule_system.update_rule(
    rule_id='rule_2',
    rule="Go to the appliance first (it matters).",
    example="""# step
observation = agent.go_to('microwave_1')""",
    validation_record="epoch_1")
rule_system.write_rule(rule="Before using an appliance, go to it.", type="Corrected Error")
rule_system.get_interactions(epoch_ids="epoch1, 3")
rule_system.explode()
rule_system.stop_generating()
```'''


def test_rule_ops_parse_keywords_aliases_and_unknowns():
    ops = parse_rule_ops(BUILDER_REPLY)
    assert [o.op for o in ops] == ["update_rule", "write_rule", "get_trajectory", "explode", "stop_generating"]
    assert ops[0].args["rule"] == "Go to the appliance first (it matters)."
    assert ops[0].args["example"].endswith("agent.go_to('microwave_1')")
    assert ops[2].args["epoch_ids"] == ["epoch_1", "epoch_3"]
    assert ops[3].error and not ops[3].ok
    assert all(o.ok for o in ops[:3])


def test_rule_ops_reject_non_literal_arguments():
    [op] = parse_rule_ops("```python\nrule_system.write_rule(rule=make(), type='Corrected Error')\n```")
    assert not op.ok and "literal" in op.error


text = st.text(st.characters(blacklist_categories=("Cs",)), max_size=40)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.one_of(
    st.builds(lambda r, t: RuleOp("write_rule", {"rule": r, "type": t}), text, st.sampled_from(
        ["Corrected Error", "Success Process"])),
    st.builds(lambda i, r: RuleOp("update_rule", {"rule_id": f"rule_{i}", "rule": r}), st.integers(0, 30), text),
    st.builds(lambda i: RuleOp("delete_rule", {"rule_id": f"rule_{i}"}), st.integers(0, 30)),
    st.just(RuleOp("stop_generating", {})),
), max_size=6))
def test_rendered_rule_ops_parse_back(ops):
    parsed = parse_rule_ops(render_rule_ops(ops))
    assert [(o.op, o.args) for o in parsed] == [(o.op, o.args) for o in ops]


def test_normalize_epoch_ids():
    assert normalize_epoch_ids("epoch_0,epoch2, 5") == ["epoch_0", "epoch_2", "epoch_5"]
    assert normalize_epoch_ids(["Epoch_7"]) == ["epoch_7"]


# -- sessions and backends ----------------------------------------------------

def test_session_alternation_and_history():
    backend = ScriptedBackend(["one", "two"])
    session = create_session("sys", backend, session_id="s")
    assert session.send("a") == "one"
    assert session.send("b") == "two"
    assert [t.role for t in session.turns] == ["user", "assistant", "user", "assistant"]
    session.add_user("dangling")
    with pytest.raises(SessionStateError):
        session.send("c")


def test_context_window_drops_oldest_pairs():
    seen = []
    backend = ScriptedBackend(responder=lambda messages, s: seen.append(messages) or "ok")
    session = create_session("sys", backend, session_id="s", max_context_tokens=60)
    for i in range(6):
        session.send(f"message {i} " + "x" * 40)
    last = seen[-1]
    assert last[0]["role"] == "system" and last[-1]["content"].startswith("message 5")
    assert len(last) < 12
    assert [m["role"] for m in last[1:]] == ["user", "assistant"] * ((len(last) - 2) // 2) + ["user"]
    with pytest.raises(ContextOverflowError):
        session.send("y" * 1000)


def test_scripted_backend_guards_and_exhaustion():
    backend = ScriptedBackend()
    backend.push("fine", guard="heat")
    session = create_session("sys", backend, session_id="s")
    assert session.send("heat the mug") == "fine"
    backend.push("never", guard="cool")
    with pytest.raises(ScriptGuardError):
        session.send("heat again")
    with pytest.raises(ScriptExhaustedError):
        create_session("sys", ScriptedBackend(), session_id="t").send("hi")


def test_record_and_strict_replay():
    sink = []
    recorder = RecordingBackend(ScriptedBackend(["r1", "r2"]), sink=sink.append)
    s = create_session("sys", recorder, session_id="a", agent="planner")
    s.send("m1")
    s.send("m2")
    assert [r.index for r in sink] == [0, 1]
    replayed = create_session("sys", ReplayBackend(sink), session_id="a", agent="planner")
    assert replayed.send("m1") == "r1"
    with pytest.raises(ReplayMissError) as err:
        replayed.send("different")
    assert err.value.index == 1


def test_replay_detects_edited_response():
    sink = []
    s = create_session("sys", RecordingBackend(ScriptedBackend(["good"]), sink=sink.append), session_id="a")
    s.send("m")
    data = sink[0].to_dict()
    data["response_text"] = "gooD"
    tampered = ExchangeRecord.from_dict(data)
    with pytest.raises(ReplayIntegrityError) as err:
        create_session("sys", ReplayBackend([tampered]), session_id="a").send("m")
    assert err.value.index == 0


def _http(handler, **kw) -> HTTPBackend:
    return HTTPBackend("http://llm.test/v1", "m", "key", transport=httpx.MockTransport(handler),
                       sleep=lambda _: None, **kw)


def test_http_backend_request_shape_and_retry():
    calls = []

    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(request)
        if len(calls) == 1:
            return httpx.Response(503, text="busy")
        return httpx.Response(200, json={"choices": [{"message": {"content": "hello"}}]})

    backend = _http(handler)
    assert create_session("sys", backend, session_id="s").send("hi") == "hello"
    body = json.loads(calls[-1].content)
    assert calls[-1].url == "http://llm.test/v1/chat/completions"
    assert calls[-1].headers["Authorization"] == "Bearer key"
    assert body["model"] == "m" and body["temperature"] == 0
    assert body["messages"] == [{"role": "system", "content": "sys"}, {"role": "user", "content": "hi"}]


def test_http_backend_gives_up_and_reports_errors():
    backend = _http(lambda r: httpx.Response(500, text="down"), max_retries=2)
    with pytest.raises(BackendError, match="3 attempts"):
        create_session("sys", backend, session_id="s").send("hi")
    with pytest.raises(ContextOverflowError):
        create_session("sys", _http(lambda r: httpx.Response(400, text="maximum context length")),
                       session_id="s").send("hi")
    with pytest.raises(BackendError, match="HTTP 401"):
        create_session("sys", _http(lambda r: httpx.Response(401, text="no")), session_id="s").send("hi")
    with pytest.raises(BackendError, match="malformed"):
        create_session("sys", _http(lambda r: httpx.Response(200, json={"x": 1})), session_id="s").send("hi")
