"""AST node types for plan scripts. Every node carries its source position."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional


@dataclass
class Node:
    line: int = field(default=0, kw_only=True)
    col: int = field(default=0, kw_only=True)


# -- expressions ------------------------------------------------------------

@dataclass
class Name(Node):
    id: str


@dataclass
class Const(Node):
    value: Any


@dataclass
class FString(Node):
    # str pieces and (expr, conversion, format_spec) triples
    parts: list


@dataclass
class ListExpr(Node):
    elts: list


@dataclass
class TupleExpr(Node):
    elts: list


@dataclass
class ListComp(Node):
    elt: Node
    target: Node
    iter: Node
    conds: list


@dataclass
class BinOp(Node):
    op: str
    left: Node
    right: Node


@dataclass
class UnaryOp(Node):
    op: str
    operand: Node


@dataclass
class BoolOp(Node):
    op: str  # "and" | "or"
    values: list


@dataclass
class Compare(Node):
    left: Node
    ops: list
    comparators: list


@dataclass
class IfExp(Node):
    test: Node
    body: Node
    orelse: Node


@dataclass
class Call(Node):
    func: Node
    args: list
    kwargs: list  # (name, expr) pairs


@dataclass
class Attribute(Node):
    value: Node
    attr: str


@dataclass
class Subscript(Node):
    value: Node
    index: Node


@dataclass
class Slice(Node):
    lower: Optional[Node]
    upper: Optional[Node]
    step: Optional[Node]


# -- statements -------------------------------------------------------------

@dataclass
class Assign(Node):
    target: Node  # Name, Subscript or TupleExpr of those
    value: Node


@dataclass
class AugAssign(Node):
    target: Node
    op: str
    value: Node


@dataclass
class ExprStmt(Node):
    expr: Node


@dataclass
class Assert(Node):
    test: Node
    msg: Optional[Node]


@dataclass
class If(Node):
    test: Node
    body: list
    orelse: list


@dataclass
class For(Node):
    target: Node
    iter: Node
    body: list


@dataclass
class While(Node):
    test: Node
    body: list


@dataclass
class Return(Node):
    value: Optional[Node]


@dataclass
class Break(Node):
    pass


@dataclass
class Continue(Node):
    pass


@dataclass
class Pass(Node):
    pass


@dataclass
class FunctionDef(Node):
    name: str
    params: list  # (name, default expr or None)
    body: list


@dataclass
class PlanAst:
    items: list
    source: str = ""

    @property
    def functions(self) -> list[FunctionDef]:
        return [i for i in self.items if isinstance(i, FunctionDef)]

    @property
    def statements(self) -> list[Node]:
        return [i for i in self.items if not isinstance(i, FunctionDef)]

    def item_source(self, index: int) -> str:
        """Source text of top-level item ``index`` (trailing blank and comment lines dropped)."""
        lines = self.source.splitlines()
        start = self.items[index].line - 1
        end = self.items[index + 1].line - 1 if index + 1 < len(self.items) else len(lines)
        chunk = lines[start:end]
        while chunk and (not chunk[-1].strip() or chunk[-1].lstrip().startswith("#")):
            chunk.pop()
        return "\n".join(chunk)


def count_statements(body: list) -> int:
    total = 0
    for stmt in body:
        total += 1
        if isinstance(stmt, (FunctionDef, For, While)):
            total += count_statements(stmt.body)
        elif isinstance(stmt, If):
            total += count_statements(stmt.body) + count_statements(stmt.orelse)
    return total
