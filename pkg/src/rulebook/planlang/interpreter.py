"""Tree-walking interpreter for plan scripts.

Values are plain Python ``int``/``bool``/``str``/``None``/``list``/``tuple``;
anything else (floats, dicts, objects) is unreachable from the grammar.
Environment actions go through an :class:`~rulebook.textworld.Episode`.
"""
from __future__ import annotations

import re
import textwrap
from dataclasses import dataclass, field
from typing import Any, Callable

from ..textworld import ACTION_ARITY, EnvAction, Episode, MIDDLE_OF_ROOM
from . import nodes as n
from .lexer import ParseError
from .parser import parse
from .trace import ExecutionTrace, Terminal, TerminalKind, TraceEvent

LOOP_CAP = 1000
STEP_CAP = 100_000
MAX_SEQUENCE = 100_000
INT_LIMIT = 2**63


def get_object_with_id(observation: str, object_name: str) -> list[str]:
    """Object ids named ``object_name`` in ``observation``, in order of appearance."""
    if not isinstance(observation, str) or not isinstance(object_name, str):
        raise TypeError("get_object_with_id() expects two strings")
    pattern = r"\b" + re.escape(object_name) + r"_\d+\b"
    return re.findall(pattern, observation)


# -- control flow signals ---------------------------------------------------

class _Break(Exception):
    pass


class _Continue(Exception):
    pass


class _Return(Exception):
    def __init__(self, value: Any):
        self.value = value


class _Halt(Exception):
    """Stops the whole cycle with a terminal."""

    def __init__(self, terminal: Terminal):
        self.terminal = terminal


class PlanRuntimeError(Exception):
    def __init__(self, message: str, line: int = 0):
        super().__init__(message)
        self.message = message
        self.line = line


@dataclass
class UserFunction:
    node: n.FunctionDef
    defaults: dict[str, Any]
    local_names: frozenset

    @property
    def name(self) -> str:
        return self.node.name

    def __repr__(self) -> str:
        return f"<function {self.name}>"


class AgentProxy:
    """The ``agent`` object visible to plan scripts."""

    def __init__(self, session: "PlanSession"):
        self._session = session

    def __repr__(self) -> str:
        return "<Agent>"


@dataclass
class _BoundAction:
    name: str

    def __repr__(self) -> str:
        return f"<bound method Agent.{self.name}>"


# -- static helpers ---------------------------------------------------------

def _assigned_names(body: list, out: set) -> set:
    def targets(t: n.Node) -> None:
        if isinstance(t, n.Name):
            out.add(t.id)
        elif isinstance(t, (n.TupleExpr, n.ListExpr)):
            for e in t.elts:
                targets(e)

    for stmt in body:
        if isinstance(stmt, (n.Assign, n.AugAssign)):
            targets(stmt.target)
        elif isinstance(stmt, n.For):
            targets(stmt.target)
            _assigned_names(stmt.body, out)
        elif isinstance(stmt, n.While):
            _assigned_names(stmt.body, out)
        elif isinstance(stmt, n.If):
            _assigned_names(stmt.body, out)
            _assigned_names(stmt.orelse, out)
    return out


def _type_name(v: Any) -> str:
    if v is None:
        return "NoneType"
    if isinstance(v, UserFunction):
        return "function"
    if isinstance(v, AgentProxy):
        return "Agent"
    return type(v).__name__


_STR_METHODS = {
    "split", "strip", "lstrip", "rstrip", "lower", "upper", "startswith", "endswith",
    "replace", "find", "index", "join", "count", "isdigit", "isalpha", "title",
    "capitalize", "rsplit", "splitlines",
}
_LIST_METHODS = {"append", "extend", "pop", "index", "count", "insert", "remove", "reverse", "sort", "copy", "clear"}
_TUPLE_METHODS = {"index", "count"}
_ALLOWED_VALUE_TYPES = (int, str, list, tuple, type(None), range)


@dataclass
class PlanSession:
    """Execution context for one episode.

    Globals (functions and variables) persist across cycles of the episode;
    a new episode needs a new session.
    """

    episode: Episode
    loop_cap: int = LOOP_CAP
    step_cap: int = STEP_CAP
    globals: dict[str, Any] = field(default_factory=dict)
    obs_counter: int = 0
    helper_errors: list[str] = field(default_factory=list)
    printed: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.agent = AgentProxy(self)
        self._builtins = self._make_builtins()
        self._trace: ExecutionTrace | None = None
        self._call_stack: list[str] = []
        self._steps = 0

    # -- public API ---------------------------------------------------------

    def define_helpers(self, source: str) -> list[str]:
        """Pre-define every function found in ``source``; other statements are ignored."""
        try:
            ast = parse(textwrap.dedent(source))
        except ParseError as exc:
            self.helper_errors.append(str(exc))
            return []
        except RecursionError:
            self.helper_errors.append("helper source too deeply nested")
            return []
        names = []
        for fn in ast.functions:
            try:
                self.globals[fn.name] = self._make_function(fn, self._global_scope())
                names.append(fn.name)
            except PlanRuntimeError as exc:
                self.helper_errors.append(exc.message)
        return names

    def run_source(self, source: str) -> ExecutionTrace:
        try:
            ast = parse(source)
        except ParseError as exc:
            trace = ExecutionTrace()
            trace.finish(Terminal(TerminalKind.RUNTIME_ERROR, str(exc)), self.episode.state.summary())
            return trace
        except RecursionError:
            trace = ExecutionTrace()
            trace.finish(Terminal(TerminalKind.RUNTIME_ERROR, "SyntaxError: expression too deeply nested"),
                         self.episode.state.summary())
            return trace
        return self.execute(ast)

    def execute(self, ast: n.PlanAst) -> ExecutionTrace:
        trace = ExecutionTrace()
        self._trace = trace
        self._steps = 0
        self._call_stack = []
        terminal = self._precheck()
        if terminal is None:
            scope = self._global_scope()
            try:
                for idx, item in enumerate(ast.items):
                    trace.executed_items.append(idx)
                    self._exec_stmt(item, scope)
                terminal = Terminal(TerminalKind.COMPLETED)
            except _Halt as halt:
                terminal = halt.terminal
            except PlanRuntimeError as exc:
                terminal = Terminal(TerminalKind.RUNTIME_ERROR, exc.message, line=exc.line)
            except (_Break, _Continue):
                terminal = Terminal(TerminalKind.RUNTIME_ERROR, "SyntaxError: 'break' outside loop")
            except RecursionError:
                terminal = Terminal(TerminalKind.RUNTIME_ERROR, "RecursionError: nesting too deep")
        trace.finish(terminal, self.episode.state.summary())
        if ast.source:
            trace.executed_source = "\n".join(ast.item_source(i) for i in trace.executed_items)
        self._trace = None
        return trace

    # -- internals ----------------------------------------------------------

    def _precheck(self) -> Terminal | None:
        if self.episode.done:
            return Terminal(TerminalKind.EPISODE_DONE, reward=self.episode.reward)
        if self.episode.remaining <= 0:
            return Terminal(TerminalKind.BUDGET_EXHAUSTED, self._budget_message())
        return None

    def _budget_message(self) -> str:
        return f"The action budget of {self.episode.max_actions} steps is exhausted."

    def _global_scope(self) -> "_Scope":
        return _Scope(self.globals, None, frozenset())

    def _tick(self, node: n.Node) -> None:
        self._steps += 1
        if self._steps > self.step_cap:
            raise PlanRuntimeError(f"RuntimeError: execution step limit of {self.step_cap} exceeded", node.line)

    def _make_function(self, fn: n.FunctionDef, scope: "_Scope") -> UserFunction:
        defaults = {}
        for pname, default in fn.params:
            if default is not None:
                defaults[pname] = self._eval(default, scope)
        local = _assigned_names(fn.body, {p for p, _ in fn.params})
        return UserFunction(fn, defaults, frozenset(local))

    # statements

    def _exec_block(self, body: list, scope: "_Scope") -> None:
        for stmt in body:
            self._exec_stmt(stmt, scope)

    def _exec_stmt(self, stmt: n.Node, scope: "_Scope") -> None:
        self._tick(stmt)
        if isinstance(stmt, n.ExprStmt):
            self._eval(stmt.expr, scope)
        elif isinstance(stmt, n.Assign):
            value = self._eval(stmt.value, scope)
            self._assign(stmt.target, value, scope)
        elif isinstance(stmt, n.AugAssign):
            current = self._eval(stmt.target, scope)
            value = self._binop(stmt.op, current, self._eval(stmt.value, scope), stmt, inplace=True)
            self._assign(stmt.target, value, scope)
        elif isinstance(stmt, n.If):
            if self._truth(self._eval(stmt.test, scope)):
                self._exec_block(stmt.body, scope)
            else:
                self._exec_block(stmt.orelse, scope)
        elif isinstance(stmt, n.For):
            iterable = self._eval(stmt.iter, scope)
            items = self._iter_values(iterable, stmt)
            for count, item in enumerate(items):
                if count >= self.loop_cap:
                    raise PlanRuntimeError(f"RuntimeError: loop exceeded {self.loop_cap} iterations", stmt.line)
                self._assign(stmt.target, item, scope)
                try:
                    self._exec_block(stmt.body, scope)
                except _Break:
                    break
                except _Continue:
                    continue
        elif isinstance(stmt, n.While):
            count = 0
            while self._truth(self._eval(stmt.test, scope)):
                if count >= self.loop_cap:
                    raise PlanRuntimeError(f"RuntimeError: loop exceeded {self.loop_cap} iterations", stmt.line)
                count += 1
                try:
                    self._exec_block(stmt.body, scope)
                except _Break:
                    break
                except _Continue:
                    continue
        elif isinstance(stmt, n.Assert):
            if not self._truth(self._eval(stmt.test, scope)):
                msg = "AssertionError" if stmt.msg is None else self._to_str(self._eval(stmt.msg, scope))
                raise _Halt(Terminal(TerminalKind.ASSERTION_FAILED, msg, line=stmt.line))
        elif isinstance(stmt, n.Return):
            raise _Return(None if stmt.value is None else self._eval(stmt.value, scope))
        elif isinstance(stmt, n.Break):
            raise _Break()
        elif isinstance(stmt, n.Continue):
            raise _Continue()
        elif isinstance(stmt, n.Pass):
            pass
        elif isinstance(stmt, n.FunctionDef):
            scope.set(stmt.name, self._make_function(stmt, scope))
        else:  # pragma: no cover - parser never produces other nodes
            raise PlanRuntimeError(f"unsupported statement {type(stmt).__name__}", stmt.line)

    def _assign(self, target: n.Node, value: Any, scope: "_Scope") -> None:
        if isinstance(target, n.Name):
            scope.set(target.id, value)
        elif isinstance(target, (n.TupleExpr, n.ListExpr)):
            values = self._iter_values(value, target)
            if len(values) != len(target.elts):
                if len(values) > len(target.elts):
                    msg = f"ValueError: too many values to unpack (expected {len(target.elts)})"
                else:
                    msg = f"ValueError: not enough values to unpack (expected {len(target.elts)}, got {len(values)})"
                raise PlanRuntimeError(msg, target.line)
            for t, v in zip(target.elts, values):
                self._assign(t, v, scope)
        elif isinstance(target, n.Subscript):
            container = self._eval(target.value, scope)
            index = self._eval(target.index, scope)
            if not isinstance(container, list):
                raise PlanRuntimeError(
                    f"TypeError: '{_type_name(container)}' object does not support item assignment", target.line)
            self._guard(lambda: container.__setitem__(index, value), target)
        else:
            raise PlanRuntimeError("SyntaxError: cannot assign to expression", target.line)

    # expressions

    def _eval(self, node: n.Node, scope: "_Scope") -> Any:
        if isinstance(node, n.Const):
            return node.value
        if isinstance(node, n.Name):
            return self._lookup(node, scope)
        if isinstance(node, n.FString):
            out = []
            for part in node.parts:
                if isinstance(part, str):
                    out.append(part)
                    continue
                expr, conversion, spec = part
                value = self._eval(expr, scope)
                text = self._repr(value) if conversion == "r" else self._to_str(value)
                if spec:
                    source = text if conversion else value
                    text = self._guard(lambda: format(source, spec), node)
                out.append(text)
            return self._check_size("".join(out), node)
        if isinstance(node, n.ListExpr):
            return [self._eval(e, scope) for e in node.elts]
        if isinstance(node, n.TupleExpr):
            return tuple(self._eval(e, scope) for e in node.elts)
        if isinstance(node, n.ListComp):
            return self._listcomp(node, scope)
        if isinstance(node, n.BinOp):
            left = self._eval(node.left, scope)
            right = self._eval(node.right, scope)
            return self._binop(node.op, left, right, node)
        if isinstance(node, n.UnaryOp):
            v = self._eval(node.operand, scope)
            if node.op == "not":
                return not self._truth(v)
            if not isinstance(v, int):
                raise PlanRuntimeError(f"TypeError: bad operand type for unary {node.op}: '{_type_name(v)}'", node.line)
            return -v if node.op == "-" else +v
        if isinstance(node, n.BoolOp):
            result = None
            for value_node in node.values:
                result = self._eval(value_node, scope)
                truth = self._truth(result)
                if node.op == "and" and not truth:
                    return result
                if node.op == "or" and truth:
                    return result
            return result
        if isinstance(node, n.Compare):
            left = self._eval(node.left, scope)
            for op, comp in zip(node.ops, node.comparators):
                right = self._eval(comp, scope)
                if not self._compare(op, left, right, node):
                    return False
                left = right
            return True
        if isinstance(node, n.IfExp):
            if self._truth(self._eval(node.test, scope)):
                return self._eval(node.body, scope)
            return self._eval(node.orelse, scope)
        if isinstance(node, n.Call):
            return self._call(node, scope)
        if isinstance(node, n.Attribute):
            return self._attribute(self._eval(node.value, scope), node)
        if isinstance(node, n.Subscript):
            container = self._eval(node.value, scope)
            if isinstance(node.index, n.Slice):
                parts = [None if p is None else self._eval(p, scope)
                         for p in (node.index.lower, node.index.upper, node.index.step)]
                for p in parts:
                    if p is not None and not isinstance(p, int):
                        raise PlanRuntimeError(
                            "TypeError: slice indices must be integers or None or have an __index__ method", node.line)
                if not isinstance(container, (list, tuple, str)):
                    raise PlanRuntimeError(f"TypeError: '{_type_name(container)}' object is not subscriptable",
                                           node.line)
                return self._guard(lambda: container[slice(*parts)], node)
            index = self._eval(node.index, scope)
            if not isinstance(container, (list, tuple, str, range)):
                raise PlanRuntimeError(f"TypeError: '{_type_name(container)}' object is not subscriptable", node.line)
            return self._guard(lambda: container[index], node)
        raise PlanRuntimeError(f"unsupported expression {type(node).__name__}", node.line)  # pragma: no cover

    def _lookup(self, node: n.Name, scope: "_Scope") -> Any:
        s = scope
        while s is not None:
            if node.id in s.vars:
                return s.vars[node.id]
            if node.id in s.declared_locals:
                raise PlanRuntimeError(
                    f"UnboundLocalError: local variable '{node.id}' referenced before assignment", node.line)
            s = s.parent
        if node.id in self.globals:
            return self.globals[node.id]
        if node.id == "agent":
            return self.agent
        if node.id in self._builtins:
            return self._builtins[node.id]
        raise PlanRuntimeError(f"NameError: name '{node.id}' is not defined", node.line)

    def _listcomp(self, node: n.ListComp, scope: "_Scope") -> list:
        iterable = self._iter_values(self._eval(node.iter, scope), node)
        inner = _Scope({}, scope, frozenset(), comprehension=True)
        out = []
        for count, item in enumerate(iterable):
            if count >= self.loop_cap:
                raise PlanRuntimeError(f"RuntimeError: loop exceeded {self.loop_cap} iterations", node.line)
            self._tick(node)
            self._assign(node.target, item, inner)
            if all(self._truth(self._eval(c, inner)) for c in node.conds):
                out.append(self._eval(node.elt, inner))
        return out

    def _truth(self, v: Any) -> bool:
        return bool(v)

    def _to_str(self, v: Any) -> str:
        if isinstance(v, (UserFunction, AgentProxy, _BoundAction)):
            return repr(v)
        if isinstance(v, (list, tuple)):
            return self._repr(v)
        return str(v)

    def _repr(self, v: Any) -> str:
        if isinstance(v, list):
            return "[" + ", ".join(self._repr(x) for x in v) + "]"
        if isinstance(v, tuple):
            inner = ", ".join(self._repr(x) for x in v)
            return f"({inner},)" if len(v) == 1 else f"({inner})"
        return repr(v)

    def _check_size(self, v: Any, node: n.Node) -> Any:
        if isinstance(v, bool):
            return v
        if isinstance(v, int) and abs(v) >= INT_LIMIT:
            raise PlanRuntimeError("OverflowError: integer result too large", node.line)
        if isinstance(v, (str, list, tuple)) and len(v) > MAX_SEQUENCE:
            raise PlanRuntimeError("MemoryError: sequence too large", node.line)
        return v

    def _guard(self, fn: Callable[[], Any], node: n.Node) -> Any:
        try:
            return fn()
        except (TypeError, ValueError, IndexError, KeyError, ZeroDivisionError, AttributeError) as exc:
            raise PlanRuntimeError(f"{type(exc).__name__}: {exc}", node.line) from None

    def _binop(self, op: str, a: Any, b: Any, node: n.Node, inplace: bool = False) -> Any:
        if op == "/":
            raise PlanRuntimeError("TypeError: '/' is not supported for integers; use '//'", node.line)
        for v in (a, b):
            if not isinstance(v, _ALLOWED_VALUE_TYPES) or isinstance(v, range):
                raise PlanRuntimeError(
                    f"TypeError: unsupported operand type(s) for {op}: '{_type_name(a)}' and '{_type_name(b)}'",
                    node.line)
        # pre-check sizes so 'x' * 10**9 never allocates
        if op == "*":
            seq, k = (a, b) if isinstance(a, (str, list, tuple)) else (b, a)
            if isinstance(seq, (str, list, tuple)) and isinstance(k, int) and len(seq) * max(k, 0) > MAX_SEQUENCE:
                raise PlanRuntimeError("MemoryError: sequence too large", node.line)
            if isinstance(a, int) and isinstance(b, int) and abs(a).bit_length() + abs(b).bit_length() > 130:
                raise PlanRuntimeError("OverflowError: integer result too large", node.line)
        if op == "%" and isinstance(a, str):
            raise PlanRuntimeError("TypeError: '%' string formatting is not supported; use f-strings", node.line)
        if inplace and op == "+" and isinstance(a, list):
            if not isinstance(b, (list, tuple, str)):
                raise PlanRuntimeError(f"TypeError: '{_type_name(b)}' object is not iterable", node.line)
            a.extend(b)
            return self._check_size(a, node)
        funcs = {
            "+": lambda: a + b, "-": lambda: a - b, "*": lambda: a * b,
            "//": lambda: a // b, "%": lambda: a % b,
        }
        return self._check_size(self._guard(funcs[op], node), node)

    def _compare(self, op: str, a: Any, b: Any, node: n.Node) -> bool:
        if op == "==":
            return a == b
        if op == "!=":
            return a != b
        if op == "is":
            return a is b
        if op == "is not":
            return a is not b
        if op in ("in", "not in"):
            if not isinstance(b, (list, tuple, str, range)):
                raise PlanRuntimeError(f"TypeError: argument of type '{_type_name(b)}' is not iterable", node.line)
            result = self._guard(lambda: a in b, node)
            return result if op == "in" else not result
        funcs = {"<": lambda: a < b, ">": lambda: a > b, "<=": lambda: a <= b, ">=": lambda: a >= b}
        return self._guard(funcs[op], node)

    def _iter_values(self, v: Any, node: n.Node) -> list:
        if isinstance(v, (list, tuple, str)):
            return list(v)
        if isinstance(v, range):
            if len(v) > self.loop_cap:
                raise PlanRuntimeError(f"RuntimeError: loop exceeded {self.loop_cap} iterations", node.line)
            return list(v)
        raise PlanRuntimeError(f"TypeError: '{_type_name(v)}' object is not iterable", node.line)

    def _attribute(self, obj: Any, node: n.Attribute) -> Any:
        attr = node.attr
        if isinstance(obj, AgentProxy):
            if attr == "holding":
                return self.episode.state.holding or "nothing"
            if attr == "location":
                loc = self.episode.state.agent_location
                return loc if loc != MIDDLE_OF_ROOM else "middle of room"
            if attr in ACTION_ARITY:
                return _BoundAction(attr)
            raise PlanRuntimeError(f"AttributeError: 'Agent' object has no attribute '{attr}'", node.line)
        allowed = ()
        if isinstance(obj, str):
            allowed = _STR_METHODS
        elif isinstance(obj, list):
            allowed = _LIST_METHODS
        elif isinstance(obj, tuple):
            allowed = _TUPLE_METHODS
        if attr in allowed:
            return getattr(obj, attr)
        raise PlanRuntimeError(f"AttributeError: '{_type_name(obj)}' object has no attribute '{attr}'", node.line)

    def _call(self, node: n.Call, scope: "_Scope") -> Any:
        func = self._eval(node.func, scope)
        args = [self._eval(a, scope) for a in node.args]
        kwargs = {}
        for name, expr in node.kwargs:
            if name in kwargs:
                raise PlanRuntimeError(f"SyntaxError: keyword argument repeated: {name}", node.line)
            kwargs[name] = self._eval(expr, scope)
        if isinstance(func, _BoundAction):
            return self._action(func.name, args, kwargs, node)
        if isinstance(func, UserFunction):
            return self._call_user(func, args, kwargs, node)
        if callable(func):
            kwargs = {k: self._pyfunc(v) for k, v in kwargs.items()}
            result = self._guard(lambda: func(*args, **kwargs), node)
            return self._check_size(result, node)
        raise PlanRuntimeError(f"TypeError: '{_type_name(func)}' object is not callable", node.line)

    def _pyfunc(self, v: Any) -> Any:
        if isinstance(v, UserFunction):
            return lambda *a: self._call_user(v, list(a), {}, v.node)
        return v

    def _call_user(self, func: UserFunction, args: list, kwargs: dict, node: n.Node) -> Any:
        fn = func.node
        names = [p for p, _ in fn.params]
        if len(args) > len(names):
            raise PlanRuntimeError(
                f"TypeError: {fn.name}() takes {len(names)} positional argument{'s' if len(names) != 1 else ''}"
                f" but {len(args)} {'were' if len(args) != 1 else 'was'} given", node.line)
        bound = dict(zip(names, args))
        for k, v in kwargs.items():
            if k not in names:
                raise PlanRuntimeError(f"TypeError: {fn.name}() got an unexpected keyword argument '{k}'", node.line)
            if k in bound:
                raise PlanRuntimeError(f"TypeError: {fn.name}() got multiple values for argument '{k}'", node.line)
            bound[k] = v
        missing = [p for p in names if p not in bound and p not in func.defaults]
        if missing:
            listed = " and ".join(f"'{m}'" for m in missing) if len(missing) <= 2 else \
                ", ".join(f"'{m}'" for m in missing[:-1]) + f", and '{missing[-1]}'"
            raise PlanRuntimeError(
                f"TypeError: {fn.name}() missing {len(missing)} required positional argument"
                f"{'s' if len(missing) != 1 else ''}: {listed}", node.line)
        for p in names:
            if p not in bound:
                bound[p] = func.defaults[p]
        if fn.name in self._call_stack:
            raise PlanRuntimeError(f"RecursionError: recursive call to {fn.name}() is not allowed", node.line)
        self._call_stack.append(fn.name)
        try:
            self._exec_block(fn.body, _Scope(bound, None, func.local_names))
        except _Return as ret:
            return ret.value
        except (_Break, _Continue):
            raise PlanRuntimeError("SyntaxError: 'break' outside loop", fn.line)
        finally:
            self._call_stack.pop()
        return None

    def _action(self, name: str, args: list, kwargs: dict, node: n.Node) -> str:
        arity = ACTION_ARITY[name]
        if kwargs:
            params = {"go_to": ["receptacle"], "open": ["receptacle"], "close": ["receptacle"],
                      "use": ["object"]}.get(name, ["object", "receptacle"])
            for k in params[len(args):]:
                if k in kwargs:
                    args.append(kwargs.pop(k))
            if kwargs:
                raise PlanRuntimeError(
                    f"TypeError: {name}() got an unexpected keyword argument '{next(iter(kwargs))}'", node.line)
        if len(args) != arity:
            raise PlanRuntimeError(
                f"TypeError: {name}() takes {arity} argument{'s' if arity != 1 else ''} ({len(args)} given)",
                node.line)
        for a in args:
            if not isinstance(a, str):
                raise PlanRuntimeError(
                    f"TypeError: {name}() arguments must be str, not {_type_name(a)}", node.line)
        if self.episode.done:
            raise _Halt(Terminal(TerminalKind.EPISODE_DONE, reward=self.episode.reward))
        if self.episode.remaining <= 0:
            raise _Halt(Terminal(TerminalKind.BUDGET_EXHAUSTED, self._budget_message()))
        action = EnvAction(name, tuple(args))
        result = self.episode.step(action)
        self.obs_counter += 1
        assert self._trace is not None
        self._trace.add_event(TraceEvent(
            self.obs_counter, action.render(), result.observation, result.state_summary, result.done))
        if result.done:
            raise _Halt(Terminal(TerminalKind.EPISODE_DONE, reward=self.episode.reward))
        return result.observation

    def _make_builtins(self) -> dict[str, Any]:
        def _len(x):
            if not isinstance(x, (list, tuple, str, range)):
                raise TypeError(f"object of type '{_type_name(x)}' has no len()")
            return len(x)

        def _range(*a):
            if not all(isinstance(v, int) for v in a):
                raise TypeError("range() arguments must be integers")
            r = range(*a)
            if len(r) > MAX_SEQUENCE:
                raise ValueError("range too large")
            return r

        def _str(x=""):
            return self._to_str(x)

        def _int(x=0):
            if isinstance(x, (int, str)):
                return int(x)
            raise TypeError(f"int() argument must be a string or a number, not '{_type_name(x)}'")

        def _seq(x):
            if not isinstance(x, (list, tuple, str, range)):
                raise TypeError(f"'{_type_name(x)}' object is not iterable")
            return list(x)

        def _list(x=()):
            return _seq(x)

        def _tuple(x=()):
            return tuple(_seq(x))

        def _bool(x=False):
            return bool(x)

        def _print(*a, **k):
            self.printed.append(" ".join(self._to_str(v) for v in a))

        def _enumerate(x, start=0):
            return list(enumerate(_seq(x), start))

        def _zip(*xs):
            return list(zip(*[_seq(x) for x in xs]))

        def _reversed(x):
            return list(reversed(_seq(x)))

        return {
            "len": _len, "range": _range, "str": _str, "int": _int, "bool": _bool,
            "list": _list, "tuple": _tuple, "sorted": sorted, "min": min, "max": max,
            "sum": sum, "abs": abs, "enumerate": _enumerate, "zip": _zip, "any": any,
            "all": all, "print": _print, "reversed": _reversed,
            "get_object_with_id": get_object_with_id,
        }


@dataclass
class _Scope:
    vars: dict
    parent: "_Scope | None"
    declared_locals: frozenset
    comprehension: bool = False

    def set(self, name: str, value: Any) -> None:
        self.vars[name] = value


def execute(ast: n.PlanAst, session: PlanSession) -> ExecutionTrace:
    return session.execute(ast)


def run_source(source: str, session: PlanSession) -> ExecutionTrace:
    return session.run_source(source)
