"""Skill and reflection libraries, one entry per task type."""
from __future__ import annotations

import logging
import re
from dataclasses import asdict, dataclass, field
from typing import Callable

from .llm.parsing import extract_code_blocks
from .rulestore import Outcome, TrajectoryRecord
from .textworld import TaskType

log = logging.getLogger(__name__)

ORGANIZED_MARKER = "Organized code block"


@dataclass
class SkillEntry:
    task_type: TaskType
    code_block: str
    source_episode: str
    task_text: str = ""
    initial_observation: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["task_type"] = self.task_type.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SkillEntry":
        return cls(**{**d, "task_type": TaskType.parse(d["task_type"])})


@dataclass
class ReflectionEntry:
    task_type: TaskType
    reflection: str
    source_episode: str

    def to_dict(self) -> dict:
        d = asdict(self)
        d["task_type"] = self.task_type.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ReflectionEntry":
        return cls(**{**d, "task_type": TaskType.parse(d["task_type"])})


@dataclass(frozen=True)
class Retrieved:
    kind: str  # "skill" | "reflection" | "nothing"
    task_type: TaskType | None = None
    text: str = ""
    source_episode: str = ""
    entry: SkillEntry | ReflectionEntry | None = None

    @property
    def is_nothing(self) -> bool:
        return self.kind == "nothing"


NOTHING = Retrieved("nothing")


def type_tokens(task_type: TaskType) -> set[str]:
    return {t.lower() for t in re.findall(r"[A-Z][a-z]*", task_type.value)}


def token_overlap(a: TaskType, b: TaskType) -> float:
    """Jaccard overlap of the camel-case tokens of two task-type names."""
    ta, tb = type_tokens(a), type_tokens(b)
    return len(ta & tb) / len(ta | tb)


Similarity = Callable[[TaskType, TaskType], float]


def extract_skill_code(conclusion: str) -> str | None:
    """The organized code block of a success conclusion, if any."""
    idx = conclusion.find(ORGANIZED_MARKER)
    tail = conclusion[idx:] if idx >= 0 else conclusion
    blocks = extract_code_blocks(tail, "python") or extract_code_blocks(tail)
    if not blocks and idx >= 0:
        blocks = extract_code_blocks(conclusion, "python")
    return blocks[0] if blocks else None


@dataclass
class Libraries:
    skills: dict[TaskType, SkillEntry] = field(default_factory=dict)
    reflections: dict[TaskType, ReflectionEntry] = field(default_factory=dict)
    similarity: Similarity = token_overlap
    anomalies: list[str] = field(default_factory=list)

    def save_from_conclusion(self, record: TrajectoryRecord) -> str | None:
        """Store the record's skill or reflection. Returns what was stored, or None."""
        ttype = record.task.task_type
        if record.outcome is None:
            raise ValueError("trajectory has no outcome")
        if record.outcome.succeeded:
            code = extract_skill_code(record.conclusion)
            if code is None:
                msg = f"{record.episode_id}: success conclusion without a code block; no skill stored"
                log.warning(msg)
                self.anomalies.append(msg)
                return None
            self.skills[ttype] = SkillEntry(ttype, code, record.episode_id, record.task.text,
                                            record.initial_observation)
            return "skill"
        self.reflections[ttype] = ReflectionEntry(ttype, record.conclusion, record.episode_id)
        return "reflection"

    def retrieve(self, task_type: TaskType | str) -> Retrieved:
        ttype = TaskType.parse(task_type)
        if ttype in self.skills:
            return self._skill(self.skills[ttype])
        scored = [(self.similarity(ttype, other), other.value) for other in self.skills]
        scored = [s for s in scored if s[0] > 0]
        if scored:
            best = max(s[0] for s in scored)
            name = min(n for score, n in scored if score == best)
            return self._skill(self.skills[TaskType(name)])
        if ttype in self.reflections:
            ref = self.reflections[ttype]
            return Retrieved("reflection", ttype, ref.reflection, ref.source_episode, ref)
        return NOTHING

    @staticmethod
    def _skill(entry: SkillEntry) -> Retrieved:
        return Retrieved("skill", entry.task_type, entry.code_block, entry.source_episode, entry)

    def snapshot(self) -> dict:
        return {
            "skills": [self.skills[t].to_dict() for t in sorted(self.skills, key=lambda t: t.value)],
            "reflections": [self.reflections[t].to_dict() for t in sorted(self.reflections, key=lambda t: t.value)],
        }

    @classmethod
    def load(cls, snap: dict) -> "Libraries":
        lib = cls()
        for d in snap.get("skills", []):
            e = SkillEntry.from_dict(d)
            lib.skills[e.task_type] = e
        for d in snap.get("reflections", []):
            e = ReflectionEntry.from_dict(d)
            lib.reflections[e.task_type] = e
        return lib
