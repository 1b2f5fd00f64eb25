"""Random env-free plan scripts, and CPython's own exec as the reference evaluator."""
from __future__ import annotations

import random

from rulebook.planlang import PlanSession, TerminalKind
from rulebook.textworld import Episode, TaskType, sample_tasks

INT_VARS = ("a", "b", "c", "d")
LIST_VARS = ("xs", "ys")
STR_VARS = ("s", "t")


class ScriptGenerator:
    """Builds small programs over ints, lists and strings with loops, branches and functions."""

    def __init__(self, seed: int):
        self.rng = random.Random(seed)

    def int_expr(self, depth: int = 0) -> str:
        r = self.rng.random()
        if depth > 2 or r < 0.3:
            return self.rng.choice([str(self.rng.randint(-9, 9)), *INT_VARS])
        if r < 0.45:
            return f"len({self.rng.choice(LIST_VARS + STR_VARS)})"
        if r < 0.55:
            lst = self.rng.choice(LIST_VARS)
            return f"{lst}[{self.int_expr(depth + 1)} % max(1, len({lst}))] if {lst} else 0"
        if r < 0.62:
            return f"sum({self.rng.choice(LIST_VARS)})"
        if r < 0.68:
            return f"({self.int_expr(depth + 1)} if {self.cond(depth + 1)} else {self.int_expr(depth + 1)})"
        if r < 0.72:
            return f"f({self.int_expr(depth + 1)})"
        op = self.rng.choice(["+", "-", "*", "//", "%"])
        if op == "*":  # a literal factor keeps numbers from squaring themselves inside loops
            return f"({self.int_expr(depth + 1)} * {self.rng.randint(-3, 3)})"
        return f"({self.int_expr(depth + 1)} {op} {self.int_expr(depth + 1)})"

    def cond(self, depth: int = 0) -> str:
        r = self.rng.random()
        if r < 0.6:
            op = self.rng.choice(["<", ">", "==", "!=", "<=", ">="])
            return f"{self.int_expr(depth + 1)} {op} {self.int_expr(depth + 1)}"
        if r < 0.75:
            return f"{self.int_expr(depth + 1)} in {self.rng.choice(LIST_VARS)}"
        if r < 0.85:
            return f"'{self.rng.choice('xyz')}' in {self.rng.choice(STR_VARS)}"
        if r < 0.93:
            return f"not {self.cond(depth + 1)}"
        return f"({self.cond(depth + 1)} {self.rng.choice(['and', 'or'])} {self.cond(depth + 1)})"

    def statement(self, indent: int, depth: int) -> list[str]:
        pad = "    " * indent
        r = self.rng.random()
        if depth < 2 and r < 0.12:
            body = self.block(indent + 1, depth + 1)
            lines = [f"{pad}if {self.cond()}:"] + body
            if self.rng.random() < 0.5:
                lines += [f"{pad}else:"] + self.block(indent + 1, depth + 1)
            return lines
        if depth < 2 and r < 0.2:
            var = self.rng.choice(["i", "j"])
            seq = self.rng.choice([f"range({self.rng.randint(0, 6)})", *(f"{v}[:]" for v in LIST_VARS)])
            return [f"{pad}for {var} in {seq}:"] + self.block(indent + 1, depth + 1, loop_var=var)
        if depth < 2 and r < 0.25:
            k = f"k{depth}"  # one counter per nesting level so inner loops cannot reset outer ones
            return [f"{pad}{k} = 0", f"{pad}while {k} < {self.rng.randint(0, 5)}:", f"{pad}    {k} += 1"] + \
                self.block(indent + 1, depth + 1)
        if r < 0.45:
            return [f"{pad}{self.rng.choice(INT_VARS)} = {self.int_expr()}"]
        if r < 0.55:
            op = self.rng.choice(["+=", "-=", "*="])
            rhs = str(self.rng.randint(-3, 3)) if op == "*=" else self.int_expr()
            return [f"{pad}{self.rng.choice(INT_VARS)} {op} {rhs}"]
        if r < 0.65:
            lst = self.rng.choice(LIST_VARS)
            if len(self.lines_so_far) > 40:
                return [f"{pad}{lst} = {lst}[-3:]"]
            return [f"{pad}{lst}.append({self.int_expr()})"]
        if r < 0.7:
            lst = self.rng.choice(LIST_VARS)
            return [f"{pad}{lst} = [v * 2 for v in {lst} if v % 2 == 0]"]
        if r < 0.77:
            s = self.rng.choice(STR_VARS)
            return [f"{pad}{s} = ({s} + '{self.rng.choice('xyz')}')[-6:]"]
        if r < 0.82:
            s = self.rng.choice(STR_VARS)
            return [f"{pad}{s} = f'{{{self.rng.choice(INT_VARS)}}}-{{{s}[-3:]}}'"]
        if r < 0.87:
            return [f"{pad}assert {self.cond()}, f'check failed with a={{a}}'"]
        if r < 0.9 and depth > 0:
            return [f"{pad}{self.rng.choice(['break', 'continue'])}"] if self.in_loop else [f"{pad}pass"]
        if r < 0.94:
            lst = self.rng.choice(LIST_VARS)
            return [f"{pad}{self.rng.choice(INT_VARS)} = {lst}[{self.int_expr()}]"]
        return [f"{pad}{self.rng.choice(INT_VARS)} = g({self.rng.choice(LIST_VARS)})"]

    def block(self, indent: int, depth: int, loop_var: str | None = None) -> list[str]:
        outer = self.in_loop
        self.in_loop = self.in_loop or loop_var is not None
        out = []
        if loop_var:
            out.append("    " * indent + f"a = a + {loop_var}")
        for _ in range(self.rng.randint(1, 3)):
            out += self.statement(indent, depth)
        self.in_loop = outer
        return out

    def script(self) -> str:
        self.in_loop = False
        self.lines_so_far: list[str] = []
        lines = [
            "def f(n):",
            "    return n * 2 - 1 if n > 0 else -n",
            "def g(items):",
            "    total = 0",
            "    for v in items:",
            "        if v < 0:",
            "            continue",
            "        total += v",
            "    return total",
        ]
        for v in INT_VARS:
            lines.append(f"{v} = {self.rng.randint(-5, 5)}")
        for v in LIST_VARS:
            lines.append(f"{v} = {[self.rng.randint(-3, 6) for _ in range(self.rng.randint(0, 4))]}")
        for v in STR_VARS:
            lines.append(f"{v} = '{''.join(self.rng.choice('xyzw') for _ in range(self.rng.randint(0, 4)))}'")
        for _ in range(self.rng.randint(4, 12)):
            new = self.statement(0, 0)
            lines += new
            self.lines_so_far += new
        return "\n".join(lines) + "\n"


def _plain(values: dict) -> dict:
    return {k: v for k, v in values.items() if isinstance(v, (int, str, list, tuple, bool, type(None)))
            and not k.startswith("__")}


def reference_run(source: str) -> tuple[str, dict]:
    """Outcome class and final globals under CPython."""
    scope: dict = {}
    try:
        exec(compile(source, "<plan>", "exec"), scope)
        kind = "ok"
    except AssertionError:
        kind = "assert"
    except Exception as exc:  # noqa: BLE001 - any runtime error is an outcome
        kind = "error:" + type(exc).__name__
    return kind, _plain(scope)


def interpreter_run(source: str) -> tuple[str, dict]:
    episode = Episode(sample_tasks(TaskType.PUT, 1, 0)[0])
    episode.reset()
    session = PlanSession(episode)
    trace = session.run_source(source)
    kind = trace.terminal.kind
    if kind is TerminalKind.COMPLETED:
        label = "ok"
    elif kind is TerminalKind.ASSERTION_FAILED:
        label = "assert"
    else:
        label = "error:" + trace.terminal.message.split(":", 1)[0]
    return label, _plain(session.globals)
