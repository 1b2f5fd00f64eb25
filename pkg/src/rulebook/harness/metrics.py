"""Test-stage metrics: per-type success, overall success rate and average error steps."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

from ..rulestore import TrajectoryRecord
from ..textworld import TaskType

COLUMNS = (
    (TaskType.PUT, "Put"), (TaskType.CLEAN, "Clean"), (TaskType.HEAT, "Heat"),
    (TaskType.COOL, "Cool"), (TaskType.EXAMINE, "Examine"), (TaskType.PUT_TWO, "Put two"),
)


@dataclass(frozen=True)
class EpisodeResult:
    episode_id: str
    task_type: TaskType
    seed: int
    reward: int
    error_steps: int
    actions: int

    @property
    def success(self) -> bool:
        return self.reward == 1

    @classmethod
    def of(cls, record: TrajectoryRecord) -> "EpisodeResult":
        return cls(record.episode_id, record.task.task_type, record.task.seed, record.reward,
                   record.error_steps, record.actions)

    def to_dict(self) -> dict:
        return {"episode_id": self.episode_id, "task_type": self.task_type.value, "seed": self.seed,
                "reward": self.reward, "error_steps": self.error_steps, "actions": self.actions}


@dataclass
class Metrics:
    episodes: list[EpisodeResult] = field(default_factory=list)

    def add(self, result: EpisodeResult) -> None:
        self.episodes.append(result)

    @property
    def total(self) -> int:
        return len(self.episodes)

    @property
    def successes(self) -> int:
        return sum(e.success for e in self.episodes)

    @property
    def success_rate(self) -> Fraction:
        return Fraction(self.successes, self.total) if self.total else Fraction(0)

    @property
    def avg_error_steps(self) -> Fraction:
        return Fraction(sum(e.error_steps for e in self.episodes), self.total) if self.total else Fraction(0)

    def per_type(self) -> dict[TaskType, tuple[int, int]]:
        out = {t: (0, 0) for t, _ in COLUMNS}
        for e in self.episodes:
            s, n = out[e.task_type]
            out[e.task_type] = (s + e.success, n + 1)
        return out

    def to_dict(self) -> dict:
        episodes = sorted(self.episodes, key=lambda e: e.episode_id)
        return {
            "per_type": {t.value: {"successes": s, "total": n} for t, (s, n) in self.per_type().items()},
            "successes": self.successes,
            "total": self.total,
            "success_rate": str(self.success_rate),
            "avg_error_steps": str(self.avg_error_steps),
            "episodes": [e.to_dict() for e in episodes],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def table(self) -> str:
        """Success rates (%) laid out as Put / Clean / Heat / Cool / Examine / Put two / ALL."""
        def pct(s: int, n: int) -> str:
            return f"{100 * s / n:.1f}" if n else "-"

        per = self.per_type()
        header = [label for _, label in COLUMNS] + ["ALL"]
        row = [pct(*per[t]) for t, _ in COLUMNS] + [pct(self.successes, self.total)]
        widths = [max(len(h), len(v)) for h, v in zip(header, row)]
        line1 = " | ".join(h.rjust(w) for h, w in zip(header, widths))
        line2 = " | ".join(v.rjust(w) for v, w in zip(row, widths))
        return (f"{line1}\n{line2}\n"
                f"avg error steps: {float(self.avg_error_steps):.2f} over {self.total} episodes\n")
