"""The Formulator: categorise the final rules and render them as a Markdown manual."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from . import prompts
from .llm import ChatSession, LLMError
from .rulestore import Rule, RuleStore, RuleType

log = logging.getLogger(__name__)

MISC = "Misc"
DEFAULT_TITLE = "Household Robot Manual"
_RULE_ID = re.compile(r"\*\*(rule_\d+)\*\*")
_RULE_HEADING = re.compile(r"^### \*\*(rule_\d+)\*\* \((.+)\)\s*$")
_BULLET = re.compile(r"^\s*(?:[-*+]|\d+[.)])\s+")
_FENCE_LINE = re.compile(r"^\s*(`{3,})")


class FormulationError(LLMError):
    pass


@dataclass
class Category:
    name: str
    introduction: str = ""
    rule_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"name": self.name, "introduction": self.introduction, "rule_ids": list(self.rule_ids)}


@dataclass
class Manual:
    title: str
    overview: str
    categories: list[Category]
    rules: dict[str, Rule] = field(default_factory=dict)
    repairs: list[str] = field(default_factory=list)

    def rule_ids(self) -> list[str]:
        return [rid for c in self.categories for rid in c.rule_ids]

    @property
    def rendered(self) -> str:
        return render_markdown(self)

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "overview": self.overview,
            "categories": [c.to_dict() for c in self.categories],
            "repairs": list(self.repairs),
        }


# -- structure parsing ------------------------------------------------------

def _clean_prose(text: str) -> str:
    """Strip heading markers so generated prose cannot alter the manual's outline."""
    lines = [re.sub(r"^\s*#+\s*", "", ln) for ln in text.strip().splitlines()]
    return "\n".join(lines).strip()


def extract_markdown_block(text: str) -> str | None:
    """Body of the ```markdown block; runs to the last fence so nested code fences survive."""
    m = re.search(r"^[ \t]*```+[ \t]*(?:markdown|md)[ \t]*$", text, re.MULTILINE | re.IGNORECASE)
    if m is None:
        return None
    body = text[m.end():]
    closers = list(re.finditer(r"^[ \t]*```+[ \t]*$", body, re.MULTILINE))
    if closers:
        body = body[:closers[-1].start()]
    return body.strip("\n")


@dataclass
class ParsedOutline:
    title: str
    overview: str
    categories: list[Category]


def parse_manual_markdown(markdown: str) -> ParsedOutline:
    """Read the title, overview and categories (with their rule ids) from Formulator output."""
    title, overview_lines = "", []
    sections: list[tuple[str, list[str]]] = []
    in_fence = False
    for line in markdown.splitlines():
        if _FENCE_LINE.match(line):
            in_fence = not in_fence
        if not in_fence and line.startswith("## "):
            sections.append((line[3:].strip(), []))
        elif not in_fence and line.startswith("# ") and not title and not sections:
            title = line[2:].strip()
        elif sections:
            sections[-1][1].append(line)
        else:
            overview_lines.append(line)
    categories = []
    for name, lines in sections:
        ids: list[str] = []
        intro: list[str] = []
        seen_rule = False
        for line in lines:
            found = _RULE_ID.findall(line)
            if found and (_BULLET.match(line) or line.startswith("#")):
                ids.append(found[0])
                seen_rule = True
            elif not seen_rule:
                intro.append(line)
        if not ids:
            ids = _RULE_ID.findall("\n".join(lines))
            intro = [ln for ln in lines if not _RULE_ID.search(ln)]
        categories.append(Category(_clean_prose(name) or "Untitled", _clean_prose("\n".join(intro)), ids))
    return ParsedOutline(_clean_prose(title) or DEFAULT_TITLE, _clean_prose("\n".join(overview_lines)), categories)


def partition_violations(categories: list[Category], store_ids: list[str]) -> list[str]:
    """Every live rule id in exactly one category, and no empty categories."""
    problems = []
    seen: dict[str, str] = {}
    known = set(store_ids)
    for cat in categories:
        if not cat.rule_ids:
            problems.append(f"category '{cat.name}' has no rules")
        for rid in cat.rule_ids:
            if rid not in known:
                problems.append(f"{rid} is not a current rule")
            elif rid in seen:
                problems.append(f"{rid} appears more than once ('{seen[rid]}' and '{cat.name}')")
            else:
                seen[rid] = cat.name
    for rid in store_ids:
        if rid not in seen:
            problems.append(f"{rid} is missing")
    return problems


def repair_partition(categories: list[Category], store_ids: list[str]) -> tuple[list[Category], list[str]]:
    """Keep first occurrences, drop unknown ids and empty categories, file the rest under Misc."""
    known = set(store_ids)
    seen: set[str] = set()
    repairs = []
    out = []
    for cat in categories:
        kept = []
        for rid in cat.rule_ids:
            if rid not in known:
                repairs.append(f"dropped unknown {rid} from '{cat.name}'")
            elif rid in seen:
                repairs.append(f"dropped duplicate {rid} from '{cat.name}'")
            else:
                seen.add(rid)
                kept.append(rid)
        if kept:
            out.append(Category(cat.name, cat.introduction, kept))
        else:
            repairs.append(f"dropped empty category '{cat.name}'")
    missing = [rid for rid in store_ids if rid not in seen]
    if missing:
        misc = next((c for c in out if c.name == MISC), None)
        if misc is None:
            misc = Category(MISC, "Rules that were not assigned to any other category.")
            out.append(misc)
        misc.rule_ids.extend(missing)
        repairs.extend(f"placed missing {rid} under {MISC}" for rid in missing)
    return out, repairs


# -- rendering --------------------------------------------------------------

def _fence_for(text: str) -> str:
    longest = max((len(m) for m in re.findall(r"`+", text)), default=0)
    return "`" * max(3, longest + 1)


def render_rule(rule: Rule) -> str:
    parts = [f"### **{rule.rule_id}** ({rule.rule_type.value})", "", rule.content.strip()]
    example = rule.example.strip("\n")
    if example.strip():
        fence = _fence_for(example)
        parts += ["", "Example:", "", fence, example, fence]
    return "\n".join(parts)


def render_markdown(manual: Manual) -> str:
    """Deterministic layout: title, overview, then each category with its intro and rule blocks."""
    out = [f"# {manual.title}", ""]
    if manual.overview:
        out += [manual.overview, ""]
    for cat in manual.categories:
        out += [f"## {cat.name}", ""]
        if cat.introduction:
            out += [cat.introduction, ""]
        for rid in cat.rule_ids:
            out += [render_rule(manual.rules[rid]), ""]
    return "\n".join(out).rstrip("\n") + "\n"


def _split_rule_block(rid: str, rtype: str, lines: list[str]) -> Rule:
    while lines and not lines[-1].strip():
        lines.pop()
    example = ""
    if lines and re.fullmatch(r"`{3,}", lines[-1].strip()):
        fence = lines[-1].strip()
        opener = max(i for i, ln in enumerate(lines[:-1]) if ln.strip() == fence)
        example = "\n".join(lines[opener + 1:-1])
        lines = lines[:opener]
        while lines and not lines[-1].strip():
            lines.pop()
        if lines and lines[-1].strip() == "Example:":
            lines.pop()
    return Rule(rid, RuleType.parse(rtype), "\n".join(lines).strip(), example)


def parse_rendered_manual(markdown: str) -> Manual:
    """Inverse of render_markdown (validation logs are never part of a manual)."""
    lines = markdown.splitlines()
    title = lines[0][2:].strip() if lines and lines[0].startswith("# ") else DEFAULT_TITLE
    overview: list[str] = []
    categories: list[Category] = []
    rules: dict[str, Rule] = {}
    current_rule: tuple[str, str, list[str]] | None = None
    intro: list[str] = []
    in_fence: str | None = None

    def close_rule() -> None:
        nonlocal current_rule
        if current_rule is not None:
            rid, rtype, body = current_rule
            rules[rid] = _split_rule_block(rid, rtype, body)
            current_rule = None

    for line in lines[1:]:
        fence = re.fullmatch(r"(`{3,})\S*", line.strip())
        if fence and current_rule is not None:
            if in_fence is None:
                in_fence = fence.group(1)
            elif line.strip() == in_fence:
                in_fence = None
        heading = None if in_fence else _RULE_HEADING.match(line)
        if in_fence is None and line.startswith("## "):
            close_rule()
            if categories:
                categories[-1].introduction = "\n".join(intro).strip()
            categories.append(Category(line[3:].strip()))
            intro = []
        elif heading and categories:
            close_rule()
            if not categories[-1].rule_ids:
                categories[-1].introduction = "\n".join(intro).strip()
            current_rule = (heading.group(1), heading.group(2), [])
            categories[-1].rule_ids.append(heading.group(1))
        elif current_rule is not None:
            current_rule[2].append(line)
        elif categories:
            intro.append(line)
        else:
            overview.append(line)
    close_rule()
    if categories and not categories[-1].rule_ids:
        categories[-1].introduction = "\n".join(intro).strip()
    return Manual(title, "\n".join(overview).strip(), categories, rules)


# -- the LLM step -----------------------------------------------------------

def formulator_system_prompt() -> str:
    return prompts.render("formulator_system")


def _outline_from(session: ChatSession, message: str) -> ParsedOutline:
    reply = session.send(message)
    block = extract_markdown_block(reply)
    if block is None:
        log.warning("Formulator reply has no markdown block; asking again")
        reply = session.send("Your reply has no ```markdown block. Send the whole manual inside one ```markdown block.")
        block = extract_markdown_block(reply)
        if block is None:
            raise FormulationError("Formulator returned no markdown block twice")
    return parse_manual_markdown(block)


def formulate(store: RuleStore, session: ChatSession) -> Manual:
    """Ask for categories and intros, check the partition, splice in rule bodies verbatim."""
    if len(store) == 0:
        raise ValueError("cannot formulate a manual from an empty rule store")
    ids = store.ids
    outline = _outline_from(session, prompts.render("formulator_rules", rules=store.render_for_prompt(True)))
    problems = partition_violations(outline.categories, ids)
    if problems:
        log.warning("manual partition violations: %s", "; ".join(problems))
        violations = "\n".join(f"- {p}" for p in problems)
        outline = _outline_from(session, prompts.render("formulator_repair", violations=violations))
    categories, repairs = repair_partition(outline.categories, ids)
    for r in repairs:
        log.warning("manual repair: %s", r)
    rules = {rid: store.get(rid) for rid in ids}
    rules = {rid: Rule(r.rule_id, r.rule_type, r.content.strip(), r.example) for rid, r in rules.items()}
    return Manual(outline.title, outline.overview, categories, rules, repairs)
