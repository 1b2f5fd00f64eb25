"""A small ALFWorld-style household environment.

The world is a set of receptacles holding objects. The agent walks between
receptacles, opens and closes them, carries one object at a time and can
clean, heat, cool or examine what it carries. Observations use the
``object_id`` naming (``mug_1``) with articles dropped.

Usage::

    task = sample_tasks(TaskType.HEAT, 1, seed=3)[0]
    episode = Episode(task)
    obs, text = episode.reset()
    result = episode.step(EnvAction("go_to", ("microwave_1",)))
"""
from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

MIDDLE_OF_ROOM = "middle of room"
NOTHING_HAPPENS = "Nothing happens."
MAX_ACTIONS = 50


class ConfigurationError(ValueError):
    """Raised for invalid task or environment configuration."""


class TaskType(str, Enum):
    PUT = "Put"
    CLEAN = "Clean"
    HEAT = "Heat"
    COOL = "Cool"
    EXAMINE = "Examine"
    PUT_TWO = "PutTwo"

    @classmethod
    def parse(cls, value: "str | TaskType") -> "TaskType":
        if isinstance(value, TaskType):
            return value
        key = str(value).replace("_", "").replace(" ", "").lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ConfigurationError(f"unknown task type: {value!r}")

    @property
    def label(self) -> str:
        """Column label used in metric tables."""
        return "Put two" if self is TaskType.PUT_TWO else self.value


TASK_TYPES: tuple[TaskType, ...] = tuple(TaskType)


# receptacle kind -> (openable, preposition used when describing contents)
RECEPTACLE_KINDS: dict[str, tuple[bool, str]] = {
    "armchair": (False, "On"),
    "bed": (False, "On"),
    "cabinet": (True, "In"),
    "coffeemachine": (False, "On"),
    "countertop": (False, "On"),
    "desk": (False, "On"),
    "diningtable": (False, "On"),
    "drawer": (True, "In"),
    "dresser": (False, "On"),
    "fridge": (True, "In"),
    "garbagecan": (False, "In"),
    "microwave": (True, "In"),
    "safe": (True, "In"),
    "shelf": (False, "On"),
    "sidetable": (False, "On"),
    "sinkbasin": (False, "On"),
    "sofa": (False, "On"),
    "stoveburner": (False, "On"),
    "toaster": (False, "On"),
    "toilet": (False, "On"),
}

LAMPS = ("desklamp",)

# room -> receptacle kind -> (min count, max count)
ROOMS: dict[str, dict[str, tuple[int, int]]] = {
    "kitchen": {
        "cabinet": (3, 8), "coffeemachine": (1, 1), "countertop": (1, 2),
        "diningtable": (1, 1), "drawer": (1, 3), "fridge": (1, 1),
        "garbagecan": (1, 1), "microwave": (1, 1), "shelf": (1, 3),
        "sinkbasin": (1, 1), "stoveburner": (2, 4), "toaster": (1, 1),
    },
    "bathroom": {
        "cabinet": (2, 4), "countertop": (1, 1), "drawer": (1, 2),
        "garbagecan": (1, 1), "shelf": (1, 2), "sinkbasin": (1, 2), "toilet": (1, 1),
    },
    "bedroom": {
        "bed": (1, 1), "desk": (1, 1), "drawer": (2, 5), "dresser": (1, 1),
        "garbagecan": (1, 1), "safe": (0, 1), "shelf": (1, 4), "sidetable": (1, 1),
    },
    "livingroom": {
        "armchair": (1, 1), "cabinet": (1, 4), "drawer": (1, 3), "dresser": (0, 1),
        "garbagecan": (1, 1), "shelf": (1, 4), "sidetable": (1, 2), "sofa": (1, 1),
    },
}

ROOM_OBJECTS: dict[str, tuple[str, ...]] = {
    "kitchen": ("apple", "bowl", "bread", "cup", "egg", "fork", "kettle", "knife",
                "ladle", "lettuce", "mug", "pan", "plate", "potato", "spatula",
                "spoon", "tomato"),
    "bathroom": ("candle", "cloth", "soapbar", "soapbottle", "spraybottle",
                 "tissuebox", "toiletpaper"),
    "bedroom": ("alarmclock", "book", "cd", "cellphone", "creditcard", "keychain",
                "laptop", "pillow", "pencil", "statue", "vase", "watch"),
    "livingroom": ("book", "cellphone", "creditcard", "keychain", "laptop",
                   "newspaper", "pillow", "remotecontrol", "statue", "vase", "watch"),
}

APPLIANCE_FOR = {"Clean": "sinkbasin", "Heat": "microwave", "Cool": "fridge"}

# task type -> rooms, goal object names, target receptacle kinds
_TASK_TABLE: dict[TaskType, tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]] = {
    TaskType.PUT: (
        ("kitchen", "bathroom", "bedroom", "livingroom"), (),
        ("cabinet", "countertop", "diningtable", "drawer", "dresser", "garbagecan",
         "shelf", "sidetable", "sofa", "toilet", "bed", "desk", "armchair"),
    ),
    TaskType.CLEAN: (
        ("kitchen", "bathroom"),
        ("apple", "bowl", "cloth", "fork", "knife", "ladle", "lettuce", "mug", "pan",
         "plate", "soapbar", "spatula", "spoon", "tomato"),
        ("cabinet", "countertop", "diningtable", "drawer", "shelf", "toilet"),
    ),
    TaskType.HEAT: (
        ("kitchen",),
        ("apple", "bread", "cup", "egg", "mug", "plate", "potato", "tomato"),
        ("cabinet", "countertop", "diningtable", "shelf", "garbagecan"),
    ),
    TaskType.COOL: (
        ("kitchen",),
        ("apple", "bowl", "bread", "cup", "egg", "lettuce", "mug", "pan", "plate",
         "potato", "tomato"),
        ("cabinet", "countertop", "diningtable", "shelf", "garbagecan"),
    ),
    TaskType.EXAMINE: (
        ("bedroom", "livingroom"),
        ("alarmclock", "book", "cd", "cellphone", "creditcard", "keychain", "pencil",
         "statue", "vase", "watch"),
        (),
    ),
    TaskType.PUT_TWO: (
        ("bedroom", "livingroom", "kitchen", "bathroom"), (),
        ("armchair", "bed", "cabinet", "countertop", "diningtable", "drawer",
         "dresser", "shelf", "sidetable", "sofa"),
    ),
}

_LAMP_HOSTS = ("desk", "dresser", "shelf", "sidetable")


@dataclass
class Receptacle:
    openable: bool
    open: bool = False
    contents: list[str] = field(default_factory=list)


@dataclass
class ObjectState:
    clean: bool = False
    hot: bool = False
    cold: bool = False
    lit: bool = False


@dataclass
class WorldState:
    receptacles: dict[str, Receptacle]
    object_states: dict[str, ObjectState]
    agent_location: str = MIDDLE_OF_ROOM
    holding: str | None = None

    def copy(self) -> "WorldState":
        return WorldState(
            receptacles={
                rid: Receptacle(r.openable, r.open, list(r.contents))
                for rid, r in self.receptacles.items()
            },
            object_states={oid: ObjectState(**asdict(s)) for oid, s in self.object_states.items()},
            agent_location=self.agent_location,
            holding=self.holding,
        )

    def to_dict(self) -> dict:
        return {
            "receptacles": {rid: asdict(r) for rid, r in self.receptacles.items()},
            "object_states": {oid: asdict(s) for oid, s in self.object_states.items()},
            "agent_location": self.agent_location,
            "holding": self.holding,
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def location_of(self, object_id: str) -> str | None:
        for rid, recep in self.receptacles.items():
            if object_id in recep.contents:
                return rid
        return None

    def all_objects(self) -> list[str]:
        """Every object id placed in a receptacle or held, sorted."""
        found = [oid for r in self.receptacles.values() for oid in r.contents]
        if self.holding is not None:
            found.append(self.holding)
        return sorted(found)

    def summary(self) -> str:
        held = self.holding or "nothing"
        if self.agent_location == MIDDLE_OF_ROOM:
            return f"You are in the middle of a room and holding {held}."
        return f"You are at {self.agent_location} and holding {held}."

    def check_invariants(self) -> None:
        seen: set[str] = set()
        for rid, recep in self.receptacles.items():
            if recep.open and not recep.openable:
                raise AssertionError(f"{rid} is open but not openable")
            for oid in recep.contents:
                if oid in seen:
                    raise AssertionError(f"{oid} appears in two receptacles")
                seen.add(oid)
        if self.holding is not None and self.holding in seen:
            raise AssertionError(f"held object {self.holding} is also in a receptacle")


@dataclass(frozen=True)
class TaskSpec:
    task_type: TaskType
    goal_params: dict
    seed: int
    text: str

    def to_record(self) -> dict:
        return {
            "task_type": self.task_type.value,
            "goal_params": dict(self.goal_params),
            "seed": self.seed,
            "text": self.text,
        }

    @classmethod
    def from_record(cls, record: dict) -> "TaskSpec":
        return cls(
            task_type=TaskType.parse(record["task_type"]),
            goal_params=dict(record["goal_params"]),
            seed=int(record["seed"]),
            text=record["text"],
        )


@dataclass(frozen=True)
class EnvAction:
    name: str
    args: tuple[str, ...]

    def render(self) -> str:
        """Call text as it appears in execution feedback."""
        rendered = ", ".join(repr(str(a)) if isinstance(a, str) else repr(a) for a in self.args)
        return f"agent.{self.name}({rendered})"


@dataclass(frozen=True)
class ActionResult:
    observation: str
    done: bool
    reward: int
    state_summary: str


ACTION_ARITY = {
    "go_to": 1, "open": 1, "close": 1, "take_from": 2, "put_in_or_on": 2,
    "use": 1, "clean_with": 2, "heat_with": 2, "cool_with": 2,
}


def kind_of(identifier: str) -> str:
    return identifier.rsplit("_", 1)[0]


def _join_items(items: Iterable[str]) -> str:
    items = list(items)
    if not items:
        return "nothing"
    if len(items) == 1:
        return items[0]
    return ", ".join(items[:-1]) + ", and " + items[-1]


def _describe(rid: str, recep: Receptacle) -> str:
    prep = RECEPTACLE_KINDS[kind_of(rid)][1]
    return f"{prep} {rid}, you see {_join_items(recep.contents)}."


def _receptacle_sort_key(rid: str) -> tuple[str, int]:
    kind, _, idx = rid.rpartition("_")
    return (kind, -int(idx))


def sorted_receptacles(state: WorldState) -> list[str]:
    return sorted(state.receptacles, key=_receptacle_sort_key)


def initial_observation(state: WorldState) -> str:
    return (
        "You are in the middle of a room. Looking quickly around you, you see "
        f"{_join_items(sorted_receptacles(state))}."
    )


# -- dynamics ---------------------------------------------------------------

def _accessible(recep: Receptacle) -> bool:
    return recep.open or not recep.openable


def _apply(state: WorldState, action: EnvAction) -> str | None:
    """Mutate ``state`` for a legal action and return its observation, else None."""
    if ACTION_ARITY.get(action.name) != len(action.args):
        return None
    if not all(isinstance(a, str) for a in action.args):
        return None
    here = state.receptacles.get(state.agent_location)
    name, args = action.name, action.args

    if name == "go_to":
        (rid,) = args
        recep = state.receptacles.get(rid)
        if recep is None or rid == state.agent_location:
            return None
        state.agent_location = rid
        if recep.openable and not recep.open:
            return f"{rid} is closed."
        return _describe(rid, recep)

    if name in ("open", "close"):
        (rid,) = args
        recep = state.receptacles.get(rid)
        if recep is None or rid != state.agent_location or not recep.openable:
            return None
        if name == "open":
            if recep.open:
                return None
            recep.open = True
            return f"You open {rid}. " + _describe(rid, recep)
        if not recep.open:
            return None
        recep.open = False
        return f"You close {rid}."

    if name == "take_from":
        oid, rid = args
        recep = state.receptacles.get(rid)
        if (recep is None or rid != state.agent_location or not _accessible(recep)
                or oid not in recep.contents or state.holding is not None
                or kind_of(oid) in LAMPS):
            return None
        recep.contents.remove(oid)
        state.holding = oid
        return f"You take {oid} from {rid}."

    if name == "put_in_or_on":
        oid, rid = args
        recep = state.receptacles.get(rid)
        if (recep is None or rid != state.agent_location or not _accessible(recep)
                or state.holding != oid):
            return None
        recep.contents.append(oid)
        state.holding = None
        return f"You put {oid} in/on {rid}."

    if name == "use":
        (oid,) = args
        if kind_of(oid) not in LAMPS or here is None or oid not in here.contents:
            return None
        if state.object_states[oid].lit:
            return None
        state.object_states[oid].lit = True
        return f"You turn on {oid}."

    if name in ("clean_with", "heat_with", "cool_with"):
        oid, rid = args
        verb = name.split("_")[0]
        appliance = {"clean": "sinkbasin", "heat": "microwave", "cool": "fridge"}[verb]
        if (rid not in state.receptacles or rid != state.agent_location
                or kind_of(rid) != appliance or state.holding != oid):
            return None
        flags = state.object_states[oid]
        if verb == "clean":
            if flags.clean:
                return None
            flags.clean = True
        elif verb == "heat":
            if flags.hot:
                return None
            flags.hot, flags.cold = True, False
        else:
            if flags.cold:
                return None
            flags.cold, flags.hot = True, False
        return f"You {verb} {oid} using {rid}."

    return None


def check_goal(state: WorldState, task: TaskSpec) -> bool:
    params = task.goal_params
    obj = params["object"]
    ttype = task.task_type

    if ttype is TaskType.EXAMINE:
        held = state.holding
        here = state.receptacles.get(state.agent_location)
        if held is None or kind_of(held) != obj or here is None:
            return False
        return any(
            kind_of(oid) == params["lamp"] and state.object_states[oid].lit
            for oid in here.contents
        )

    placed = [
        oid
        for rid, recep in state.receptacles.items()
        if kind_of(rid) == params["target"]
        for oid in recep.contents
        if kind_of(oid) == obj
    ]
    if ttype is TaskType.PUT:
        return bool(placed)
    if ttype is TaskType.PUT_TWO:
        return len(set(placed)) >= 2
    flag = {TaskType.CLEAN: "clean", TaskType.HEAT: "hot", TaskType.COOL: "cold"}[ttype]
    return any(getattr(state.object_states[oid], flag) for oid in placed)


def execute_action(state: WorldState, action: EnvAction, task: TaskSpec | None = None) -> ActionResult:
    """Apply one action. Failed preconditions leave ``state`` untouched."""
    observation = _apply(state, action)
    if observation is None:
        return ActionResult(NOTHING_HAPPENS, False, 0, state.summary())
    done = False
    if task is not None and action.name in ("put_in_or_on", "use"):
        done = check_goal(state, task)
    return ActionResult(observation, done, 1 if done else 0, state.summary())


# -- task sampling ----------------------------------------------------------

@dataclass
class Scenario:
    task: TaskSpec
    state: WorldState
    placements: dict[str, str]  # goal object id -> receptacle id


def _make_rng(*parts: object) -> random.Random:
    return random.Random(":".join(str(p) for p in parts))


def task_text(task_type: TaskType, params: dict) -> str:
    obj = params.get("object")
    target = params.get("target")
    prep = "in" if target and RECEPTACLE_KINDS[target][1] == "In" else "on"
    if task_type is TaskType.PUT:
        return f"put some {obj} {prep} {target}."
    if task_type is TaskType.PUT_TWO:
        return f"put two {obj} {prep} {target}."
    if task_type is TaskType.EXAMINE:
        return f"look at {obj} under the {params['lamp']}."
    verb = task_type.value.lower()
    return f"{verb} some {obj} and put it {prep} {target}."


_TASK_PATTERNS = [
    (TaskType.PUT_TWO, re.compile(r"^put two (\w+) (?:in|on) (\w+)\.?$")),
    (TaskType.EXAMINE, re.compile(r"^look at (\w+) under the (\w+)\.?$")),
    (TaskType.CLEAN, re.compile(r"^clean some (\w+) and put it (?:in|on) (\w+)\.?$")),
    (TaskType.HEAT, re.compile(r"^heat some (\w+) and put it (?:in|on) (\w+)\.?$")),
    (TaskType.COOL, re.compile(r"^cool some (\w+) and put it (?:in|on) (\w+)\.?$")),
    (TaskType.PUT, re.compile(r"^put some (\w+) (?:in|on) (\w+)\.?$")),
]


def parse_task_text(text: str) -> tuple[TaskType, dict]:
    """Inverse of :func:`task_text`."""
    text = text.strip()
    for ttype, pattern in _TASK_PATTERNS:
        m = pattern.match(text)
        if m:
            if ttype is TaskType.EXAMINE:
                return ttype, {"object": m.group(1), "lamp": m.group(2)}
            return ttype, {"object": m.group(1), "target": m.group(2)}
    raise ConfigurationError(f"unrecognised task text: {text!r}")


def generate_scenario(task_type: "TaskType | str", seed: int) -> Scenario:
    """Deterministically build the world and goal for one task."""
    ttype = TaskType.parse(task_type)
    rng = _make_rng("scenario", ttype.value, seed)
    rooms, goal_objects, targets = _TASK_TABLE[ttype]
    room = rng.choice(rooms)
    layout = ROOMS[room]

    receptacles: dict[str, Receptacle] = {}
    for kind in sorted(layout):
        lo, hi = layout[kind]
        for idx in range(1, rng.randint(lo, hi) + 1):
            receptacles[f"{kind}_{idx}"] = Receptacle(openable=RECEPTACLE_KINDS[kind][0])
    kinds = {kind_of(rid) for rid in receptacles}

    candidates = goal_objects or ROOM_OBJECTS[room]
    obj = rng.choice([o for o in candidates if o in ROOM_OBJECTS[room]] or list(candidates))
    params: dict = {"object": obj}
    if ttype is TaskType.EXAMINE:
        params["lamp"] = "desklamp"
    else:
        params["target"] = rng.choice(sorted(k for k in targets if k in kinds))

    appliance = APPLIANCE_FOR.get(ttype.value)
    hosts = sorted(
        rid for rid in receptacles
        if kind_of(rid) != params.get("target") and kind_of(rid) != appliance
    )
    counts: dict[str, int] = {}

    def new_id(name: str) -> str:
        counts[name] = counts.get(name, 0) + 1
        return f"{name}_{counts[name]}"

    object_states: dict[str, ObjectState] = {}
    placements: dict[str, str] = {}
    n_goal = 2 if ttype is TaskType.PUT_TWO else 1
    first_host = rng.choice(hosts)
    for i in range(n_goal):
        oid = new_id(obj)
        host = first_host if i == 0 or rng.random() < 0.5 else rng.choice(hosts)
        receptacles[host].contents.append(oid)
        object_states[oid] = ObjectState()
        placements[oid] = host

    if ttype is TaskType.EXAMINE:
        lamp_hosts = sorted(rid for rid in receptacles if kind_of(rid) in _LAMP_HOSTS)
        lamp = new_id("desklamp")
        receptacles[rng.choice(lamp_hosts)].contents.append(lamp)
        object_states[lamp] = ObjectState()

    distractor_names = [o for o in ROOM_OBJECTS[room] if o != obj]
    for _ in range(rng.randint(3, 8)):
        oid = new_id(rng.choice(distractor_names))
        receptacles[rng.choice(sorted(receptacles))].contents.append(oid)
        object_states[oid] = ObjectState()

    task = TaskSpec(ttype, params, seed, task_text(ttype, params))
    state = WorldState(receptacles=receptacles, object_states=object_states)
    return Scenario(task=task, state=state, placements=placements)


def build_world(task: TaskSpec) -> WorldState:
    return generate_scenario(task.task_type, task.seed).state


def sample_tasks(task_type: "TaskType | str", count: int, seed: int, *, split: str = "build") -> list[TaskSpec]:
    """Sample ``count`` tasks of one type.

    ``split`` selects a disjoint seed range: build tasks draw world seeds from
    ``[0, 2**31)`` and test tasks from ``[2**31, 2**32)``.
    """
    ttype = TaskType.parse(task_type)
    if count < 1:
        raise ConfigurationError("count must be >= 1")
    if split not in ("build", "test"):
        raise ConfigurationError(f"unknown split: {split!r}")
    rng = _make_rng("sample", ttype.value, seed, split)
    offset = 0 if split == "build" else 2**31
    seeds: list[int] = []
    while len(seeds) < count:
        s = offset + rng.randrange(2**31)
        if s not in seeds:
            seeds.append(s)
    return [generate_scenario(ttype, s).task for s in seeds]


def init_episode(task: TaskSpec) -> tuple[str, str]:
    return initial_observation(build_world(task)), task.text


class BudgetExhausted(RuntimeError):
    pass


class Episode:
    """One task instance: world state, action counter and the episode reward."""

    def __init__(self, task: TaskSpec, max_actions: int = MAX_ACTIONS):
        self.task = task
        self.max_actions = max_actions
        self.state = build_world(task)
        self.steps = 0
        self.done = False
        self.reward = 0

    def reset(self) -> tuple[str, str]:
        self.state = build_world(self.task)
        self.steps = 0
        self.done = False
        self.reward = 0
        return initial_observation(self.state), self.task.text

    @property
    def remaining(self) -> int:
        return self.max_actions - self.steps

    def step(self, action: EnvAction) -> ActionResult:
        if self.done:
            raise RuntimeError("episode already finished")
        if self.remaining <= 0:
            raise BudgetExhausted(f"action budget of {self.max_actions} exhausted")
        self.steps += 1
        result = execute_action(self.state, action, self.task)
        if result.done:
            self.done = True
            self.reward = 1
        return result

    def fail(self) -> None:
        """Close the episode without success (reward -1), at most once."""
        if not self.done:
            self.done = True
            self.reward = -1


def write_task_fixtures(tasks: Iterable[TaskSpec], path: str | Path) -> None:
    lines = [json.dumps(t.to_record(), sort_keys=True) for t in tasks]
    Path(path).write_text("\n".join(lines) + "\n")


def read_task_fixtures(path: str | Path) -> list[TaskSpec]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            out.append(TaskSpec.from_record(json.loads(line)))
    return out
