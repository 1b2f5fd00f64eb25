"""Parsers for structured agent responses."""
from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field

from .errors import ResponseFormatError

_FENCE = re.compile(r"```[ \t]*([A-Za-z0-9_+-]*)[ \t]*\n(.*?)```", re.S)
_RULE_TOKEN = re.compile(r"\brule_\d+\b")
_HEADING = re.compile(
    r"^[ \t]*(?:#{1,6}[ \t]*(?P<h>[^\n]+?)|\*\*(?P<b>[^*\n]+?)\*\*[ \t]*:?|"
    r"(?P<p>(?:understanding|analysis|mistakes|related rules|rules to consider|plan)[^\n:]{0,60}):)[ \t]*$",
    re.I | re.M,
)


def extract_code_blocks(text: str, lang: str | None = None) -> list[str]:
    """Bodies of fenced code blocks, optionally only those tagged ``lang``."""
    out = []
    for m in _FENCE.finditer(text):
        if lang is None or m.group(1).lower() == lang.lower():
            out.append(m.group(2).rstrip("\n"))
    return out


def first_code_block(text: str, prefer: str = "python") -> str | None:
    blocks = extract_code_blocks(text, prefer) or extract_code_blocks(text)
    return blocks[0] if blocks else None


def rule_ids_in(text: str) -> list[str]:
    seen: list[str] = []
    for tok in _RULE_TOKEN.findall(text):
        if tok not in seen:
            seen.append(tok)
    return seen


@dataclass
class PlannerTurn:
    analysis: str
    related_rules: list[str]
    overall_plan: str
    code: str
    raw: str = ""

    def to_dict(self) -> dict:
        return {
            "analysis": self.analysis, "related_rules": list(self.related_rules),
            "overall_plan": self.overall_plan, "code": self.code, "raw": self.raw,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlannerTurn":
        return cls(d["analysis"], list(d["related_rules"]), d["overall_plan"], d["code"], d.get("raw", ""))


def _section_kind(heading: str) -> str:
    h = heading.lower()
    if "rule" in h:
        return "rules"
    if "plan" in h or "code" in h:
        return "plan"
    return "analysis"


def parse_planner_response(raw: str) -> PlannerTurn:
    """Split a Planner response into analysis, related rules, plan and code."""
    if not raw or not raw.strip():
        raise ResponseFormatError("empty planner response")
    fence = None
    for m in _FENCE.finditer(raw):
        if m.group(1).lower() in ("python", "py", ""):
            fence = m
            break
    if fence is None:
        raise ResponseFormatError("planner response has no fenced code block")
    code = fence.group(2).rstrip("\n")
    prose = raw[:fence.start()]

    sections: dict[str, list[str]] = {"analysis": [], "rules": [], "plan": []}
    current = "analysis"
    saw_rules_heading = False
    pos = 0
    for m in _HEADING.finditer(prose):
        sections[current].append(prose[pos:m.start()])
        heading = m.group("h") or m.group("b") or m.group("p") or ""
        current = _section_kind(heading)
        saw_rules_heading = saw_rules_heading or current == "rules"
        pos = m.end()
    sections[current].append(prose[pos:])
    text = {k: "".join(v).strip() for k, v in sections.items()}
    rules_source = text["rules"] if saw_rules_heading and rule_ids_in(text["rules"]) else prose
    return PlannerTurn(
        analysis=text["analysis"],
        related_rules=rule_ids_in(rules_source),
        overall_plan=text["plan"],
        code=code,
        raw=raw,
    )


# -- rule operations --------------------------------------------------------

RULE_OP_NAMES = ("write_rule", "update_rule", "delete_rule", "get_trajectory", "stop_generating")
_ALIASES = {"get_interactions": "get_trajectory"}
_POSITIONAL = {
    "write_rule": ("rule", "type", "example", "validation_record"),
    "update_rule": ("rule_id", "rule", "type", "example", "validation_record"),
    "delete_rule": ("rule_id",),
    "get_trajectory": ("epoch_ids",),
    "stop_generating": (),
}
_EPOCH = re.compile(r"epoch_?(\d+)", re.I)


@dataclass
class RuleOp:
    op: str
    args: dict = field(default_factory=dict)
    error: str | None = None
    raw: str = ""

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        return {"op": self.op, "args": dict(self.args), "error": self.error}

    @classmethod
    def from_dict(cls, d: dict) -> "RuleOp":
        return cls(d["op"], dict(d.get("args", {})), d.get("error"))


def normalize_epoch_ids(value) -> list[str]:
    """Accept "epoch_0,epoch2", ["epoch_0"], 3 ... and return ["epoch_0", "epoch_2"]."""
    if isinstance(value, (list, tuple)):
        items = [str(v) for v in value]
    else:
        items = str(value).split(",")
    out = []
    for item in items:
        item = item.strip()
        if not item:
            continue
        m = _EPOCH.fullmatch(item)
        if m:
            out.append(f"epoch_{int(m.group(1))}")
        elif item.isdigit():
            out.append(f"epoch_{int(item)}")
        else:
            out.append(item)
    return out


def _scan_calls(code: str) -> list[tuple[str, str]]:
    """Find ``rule_system.<name>(...)`` spans, skipping comments and strings."""
    calls: list[tuple[str, str]] = []
    i, n = 0, len(code)
    marker = "rule_system."
    while i < n:
        ch = code[i]
        if ch == "#":
            while i < n and code[i] != "\n":
                i += 1
            continue
        if ch in "'\"":
            i = _skip_string(code, i)
            continue
        if code.startswith(marker, i) and (i == 0 or not (code[i - 1].isalnum() or code[i - 1] == "_")):
            j = i + len(marker)
            k = j
            while k < n and (code[k].isalnum() or code[k] == "_"):
                k += 1
            name = code[j:k]
            m = k
            while m < n and code[m] in " \t":
                m += 1
            if m < n and code[m] == "(":
                end = _match_paren(code, m)
                calls.append((name, code[i:end]))
                i = end
                continue
            calls.append((name, code[i:k]))
            i = k
            continue
        i += 1
    return calls


def _skip_string(code: str, i: int) -> int:
    quote = code[i]
    triple = code.startswith(quote * 3, i)
    delim = quote * 3 if triple else quote
    j = i + len(delim)
    while j < len(code):
        if code[j] == "\\":
            j += 2
            continue
        if code.startswith(delim, j):
            return j + len(delim)
        if not triple and code[j] == "\n":
            return j
        j += 1
    return len(code)


def _match_paren(code: str, start: int) -> int:
    depth = 0
    i = start
    while i < len(code):
        ch = code[i]
        if ch in "'\"":
            i = _skip_string(code, i)
            continue
        if ch == "#":
            while i < len(code) and code[i] != "\n":
                i += 1
            continue
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
            if depth == 0:
                return i + 1
        i += 1
    return len(code)


def _parse_call(name: str, text: str) -> RuleOp:
    op = _ALIASES.get(name, name)
    if op not in RULE_OP_NAMES:
        return RuleOp(op, {}, f"unknown rule_system function {name!r}", text)
    call_src = text[len("rule_system."):]
    try:
        tree = ast.parse(call_src.strip(), mode="eval")
    except SyntaxError as exc:
        return RuleOp(op, {}, f"malformed call: {exc.msg}", text)
    call = tree.body
    if not isinstance(call, ast.Call):
        return RuleOp(op, {}, "malformed call: expected a function call", text)
    names = _POSITIONAL[op]
    args: dict = {}
    try:
        if len(call.args) > len(names):
            return RuleOp(op, {}, f"{op}() takes at most {len(names)} positional arguments", text)
        for pname, node in zip(names, call.args):
            args[pname] = ast.literal_eval(node)
        for kw in call.keywords:
            if kw.arg is None:
                return RuleOp(op, {}, "malformed call: ** arguments are not supported", text)
            key = kw.arg
            if op == "get_trajectory" and key in ("epoch_id", "episode_ids", "episode_id", "epochs"):
                key = "epoch_ids"
            if key not in names:
                return RuleOp(op, {}, f"{op}() got an unexpected keyword argument {kw.arg!r}", text)
            args[key] = ast.literal_eval(kw.value)
    except (ValueError, SyntaxError) as exc:
        return RuleOp(op, {}, f"malformed call: arguments must be literals ({exc})", text)
    if op == "get_trajectory":
        args["epoch_ids"] = normalize_epoch_ids(args.get("epoch_ids", ""))
    for k, v in list(args.items()):
        if k != "epoch_ids" and not isinstance(v, str):
            args[k] = str(v)
    return RuleOp(op, args, None, text)


def parse_rule_ops(raw: str) -> list[RuleOp]:
    """Parse ``rule_system.<fn>(...)`` calls from the response's fenced code block(s)."""
    blocks = extract_code_blocks(raw, "python") or extract_code_blocks(raw)
    code = "\n".join(blocks) if blocks else raw
    return [_parse_call(name, text) for name, text in _scan_calls(code)]


def render_rule_ops(ops: list[RuleOp]) -> str:
    """Render ops as a fenced block that :func:`parse_rule_ops` reads back unchanged."""
    lines = ["```python"]
    for op in ops:
        if op.op == "get_trajectory":
            inner = repr(",".join(op.args.get("epoch_ids", [])))
        else:
            inner = ", ".join(f"{k}={op.args[k]!r}" for k in _POSITIONAL[op.op] if k in op.args)
        lines.append(f"rule_system.{op.op}({inner})")
    lines.append("```")
    return "\n".join(lines)
