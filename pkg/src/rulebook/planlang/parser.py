"""Recursive-descent parser for plan scripts.

Grammar (EBNF, indentation handled by the lexer as INDENT/DEDENT)::

    program     = { funcdef | statement } EOF
    funcdef     = "def" NAME "(" [ param { "," param } ] ")" ":" block
    param       = NAME [ "=" test ]
    block       = simple_stmt | NEWLINE INDENT statement { statement } DEDENT
    statement   = if_stmt | for_stmt | while_stmt | simple_stmt
    if_stmt     = "if" test ":" block { "elif" test ":" block } [ "else" ":" block ]
    for_stmt    = "for" targets "in" testlist ":" block
    while_stmt  = "while" test ":" block
    simple_stmt = small_stmt NEWLINE
    small_stmt  = "pass" | "break" | "continue" | "return" [ testlist ]
                | "assert" test [ "," test ]
                | testlist [ ( "=" | augop ) testlist ]
    testlist    = test { "," test } [ "," ]
    test        = or_test [ "if" or_test "else" test ]
    or_test     = and_test { "or" and_test }
    and_test    = not_test { "and" not_test }
    not_test    = "not" not_test | comparison
    comparison  = arith { compop arith }
    compop      = "<" | ">" | "==" | ">=" | "<=" | "!=" | "in" | "not" "in" | "is" [ "not" ]
    arith       = term { ( "+" | "-" ) term }
    term        = factor { ( "*" | "//" | "%" | "/" ) factor }
    factor      = ( "+" | "-" ) factor | atom { trailer }
    trailer     = "(" [ arguments ] ")" | "[" subscript "]" | "." NAME
    atom        = NAME | INT | STRING { STRING } | FSTRING | "None" | "True" | "False"
                | "(" [ testlist ] ")" | "[" [ test ( comp_for | { "," test } [ "," ] ) ] "]"
    comp_for    = "for" targets "in" or_test { "if" or_test }
"""
from __future__ import annotations

from . import nodes as n
from .lexer import ParseError, Token, tokenize, unescape

MAX_STATEMENTS = 200

AUG_OPS = {"+=": "+", "-=": "-", "*=": "*", "//=": "//", "%=": "%"}
COMPARE_OPS = {"<", ">", "==", ">=", "<=", "!="}


class Parser:
    def __init__(self, tokens: list[Token], source: str = ""):
        self.tokens = tokens
        self.i = 0
        self.source = source
        self.func_depth = 0

    # -- token helpers ------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(message, tok.line, tok.col)

    def at(self, kind: str, value: object = None) -> bool:
        t = self.tok
        return t.kind == kind and (value is None or t.value == value)

    def at_op(self, value: str) -> bool:
        return self.at("OP", value)

    def at_kw(self, value: str) -> bool:
        return self.at("KEYWORD", value)

    def take(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def expect_op(self, value: str) -> Token:
        if not self.at_op(value):
            raise self.error(f"expected '{value}'")
        return self.take()

    def expect_kw(self, value: str) -> Token:
        if not self.at_kw(value):
            raise self.error(f"expected '{value}'")
        return self.take()

    def expect_name(self) -> Token:
        if not self.at("NAME"):
            raise self.error("expected a name")
        return self.take()

    def expect_newline(self) -> None:
        if self.at("NEWLINE"):
            self.take()
        elif not self.at("EOF"):
            raise self.error("expected end of line")

    # -- statements ---------------------------------------------------------

    def parse_program(self) -> n.PlanAst:
        items = []
        while not self.at("EOF"):
            if self.at("INDENT"):
                raise self.error("unexpected indent")
            items.append(self.statement())
        if n.count_statements(items) > MAX_STATEMENTS:
            raise ParseError(f"plan exceeds {MAX_STATEMENTS} statements", 1, 1)
        return n.PlanAst(items=items, source=self.source)

    def statement(self) -> n.Node:
        if self.at_kw("def"):
            return self.funcdef()
        if self.at_kw("if"):
            return self.if_stmt()
        if self.at_kw("for"):
            return self.for_stmt()
        if self.at_kw("while"):
            return self.while_stmt()
        stmt = self.small_stmt()
        self.expect_newline()
        return stmt

    def block(self) -> list:
        self.expect_op(":")
        if not self.at("NEWLINE"):
            stmt = self.small_stmt()
            self.expect_newline()
            return [stmt]
        self.take()
        if not self.at("INDENT"):
            raise self.error("expected an indented block")
        self.take()
        body = []
        while not self.at("DEDENT") and not self.at("EOF"):
            body.append(self.statement())
        if self.at("DEDENT"):
            self.take()
        return body

    def funcdef(self) -> n.FunctionDef:
        start = self.take()
        if self.func_depth:
            raise self.error("nested function definitions are not allowed", start)
        name = self.expect_name().value
        self.expect_op("(")
        params = []
        while not self.at_op(")"):
            pname = self.expect_name().value
            default = None
            if self.at_op(":"):
                # ignore simple annotations
                self.take()
                self.test()
            if self.at_op("="):
                self.take()
                default = self.test()
            params.append((pname, default))
            if not self.at_op(")"):
                self.expect_op(",")
        self.take()
        if self.at_op("->"):
            self.take()
            self.test()
        self.func_depth += 1
        try:
            body = self.block()
        finally:
            self.func_depth -= 1
        return n.FunctionDef(name, params, body, line=start.line, col=start.col)

    def if_stmt(self) -> n.If:
        start = self.take()
        test = self.test()
        body = self.block()
        orelse: list = []
        if self.at_kw("elif"):
            orelse = [self.if_stmt()]
        elif self.at_kw("else"):
            self.take()
            orelse = self.block()
        return n.If(test, body, orelse, line=start.line, col=start.col)

    def for_stmt(self) -> n.For:
        start = self.take()
        target = self.targets()
        self.expect_kw("in")
        it = self.testlist()
        body = self.block()
        return n.For(target, it, body, line=start.line, col=start.col)

    def while_stmt(self) -> n.While:
        start = self.take()
        test = self.test()
        body = self.block()
        return n.While(test, body, line=start.line, col=start.col)

    def targets(self) -> n.Node:
        start = self.tok
        elts = [self.target_atom()]
        while self.at_op(","):
            self.take()
            if self.at_kw("in") or self.at_op("="):
                break
            elts.append(self.target_atom())
        if len(elts) == 1:
            return elts[0]
        return n.TupleExpr(elts, line=start.line, col=start.col)

    def target_atom(self) -> n.Node:
        if self.at_op("("):
            self.take()
            t = self.targets()
            self.expect_op(")")
            return t
        tok = self.expect_name()
        return n.Name(tok.value, line=tok.line, col=tok.col)

    def small_stmt(self) -> n.Node:
        t = self.tok
        if self.at_kw("pass"):
            self.take()
            return n.Pass(line=t.line, col=t.col)
        if self.at_kw("break"):
            self.take()
            return n.Break(line=t.line, col=t.col)
        if self.at_kw("continue"):
            self.take()
            return n.Continue(line=t.line, col=t.col)
        if self.at_kw("return"):
            self.take()
            if not self.func_depth:
                raise self.error("'return' outside function", t)
            value = None if self.at("NEWLINE") or self.at("EOF") else self.testlist()
            return n.Return(value, line=t.line, col=t.col)
        if self.at_kw("assert"):
            self.take()
            test = self.test()
            msg = None
            if self.at_op(","):
                self.take()
                msg = self.test()
            return n.Assert(test, msg, line=t.line, col=t.col)
        if self.at_kw("def"):
            raise self.error("function definitions must start on their own line")
        expr = self.testlist()
        if self.at_op("="):
            self.take()
            self._check_target(expr)
            value = self.testlist()
            if self.at_op("="):
                raise self.error("chained assignment is not supported")
            return n.Assign(expr, value, line=t.line, col=t.col)
        if self.at("OP") and self.tok.value in AUG_OPS:
            op = AUG_OPS[self.take().value]
            if not isinstance(expr, (n.Name, n.Subscript)):
                raise self.error("illegal target for augmented assignment", t)
            value = self.testlist()
            return n.AugAssign(expr, op, value, line=t.line, col=t.col)
        return n.ExprStmt(expr, line=t.line, col=t.col)

    def _check_target(self, expr: n.Node) -> None:
        if isinstance(expr, (n.Name, n.Subscript)):
            if isinstance(expr, n.Subscript) and isinstance(expr.index, n.Slice):
                raise ParseError("cannot assign to a slice", expr.line, expr.col)
            return
        if isinstance(expr, (n.TupleExpr, n.ListExpr)):
            for e in expr.elts:
                self._check_target(e)
            return
        raise ParseError("cannot assign to expression", expr.line, expr.col)

    # -- expressions --------------------------------------------------------

    def testlist(self) -> n.Node:
        start = self.tok
        first = self.test()
        if not self.at_op(","):
            return first
        elts = [first]
        while self.at_op(","):
            self.take()
            if self._at_testlist_end():
                break
            elts.append(self.test())
        return n.TupleExpr(elts, line=start.line, col=start.col)

    def _at_testlist_end(self) -> bool:
        return (self.at("NEWLINE") or self.at("EOF") or self.at_op("=") or self.at_op(")")
                or self.at_op(":") or (self.at("OP") and self.tok.value in AUG_OPS))

    def test(self) -> n.Node:
        start = self.tok
        body = self.or_test()
        if self.at_kw("if"):
            self.take()
            cond = self.or_test()
            self.expect_kw("else")
            orelse = self.test()
            return n.IfExp(cond, body, orelse, line=start.line, col=start.col)
        return body

    def or_test(self) -> n.Node:
        start = self.tok
        values = [self.and_test()]
        while self.at_kw("or"):
            self.take()
            values.append(self.and_test())
        return values[0] if len(values) == 1 else n.BoolOp("or", values, line=start.line, col=start.col)

    def and_test(self) -> n.Node:
        start = self.tok
        values = [self.not_test()]
        while self.at_kw("and"):
            self.take()
            values.append(self.not_test())
        return values[0] if len(values) == 1 else n.BoolOp("and", values, line=start.line, col=start.col)

    def not_test(self) -> n.Node:
        if self.at_kw("not"):
            t = self.take()
            return n.UnaryOp("not", self.not_test(), line=t.line, col=t.col)
        return self.comparison()

    def comparison(self) -> n.Node:
        start = self.tok
        left = self.arith()
        ops, comps = [], []
        while True:
            if self.at("OP") and self.tok.value in COMPARE_OPS:
                ops.append(self.take().value)
            elif self.at_kw("in"):
                self.take()
                ops.append("in")
            elif self.at_kw("not") and self.tokens[self.i + 1].kind == "KEYWORD" and self.tokens[self.i + 1].value == "in":
                self.i += 2
                ops.append("not in")
            elif self.at_kw("is"):
                self.take()
                if self.at_kw("not"):
                    self.take()
                    ops.append("is not")
                else:
                    ops.append("is")
            else:
                break
            comps.append(self.arith())
        if not ops:
            return left
        return n.Compare(left, ops, comps, line=start.line, col=start.col)

    def arith(self) -> n.Node:
        left = self.term()
        while self.at_op("+") or self.at_op("-"):
            t = self.take()
            left = n.BinOp(t.value, left, self.term(), line=t.line, col=t.col)
        return left

    def term(self) -> n.Node:
        left = self.factor()
        while self.at_op("*") or self.at_op("//") or self.at_op("%") or self.at_op("/"):
            t = self.take()
            left = n.BinOp(t.value, left, self.factor(), line=t.line, col=t.col)
        return left

    def factor(self) -> n.Node:
        if self.at_op("-") or self.at_op("+"):
            t = self.take()
            return n.UnaryOp(t.value, self.factor(), line=t.line, col=t.col)
        if self.at_op("**"):
            raise self.error("'**' is not supported")
        node = self.atom()
        while True:
            if self.at_op("("):
                node = self.call(node)
            elif self.at_op("["):
                t = self.take()
                index = self.subscript()
                self.expect_op("]")
                node = n.Subscript(node, index, line=t.line, col=t.col)
            elif self.at_op("."):
                t = self.take()
                attr = self.expect_name().value
                node = n.Attribute(node, attr, line=t.line, col=t.col)
            else:
                break
        if self.at_op("**"):
            raise self.error("'**' is not supported")
        return node

    def call(self, func: n.Node) -> n.Call:
        t = self.take()
        args, kwargs = [], []
        while not self.at_op(")"):
            if self.at("NAME") and self.tokens[self.i + 1].kind == "OP" and self.tokens[self.i + 1].value == "=":
                name = self.take().value
                self.take()
                kwargs.append((name, self.test()))
            else:
                if kwargs:
                    raise self.error("positional argument follows keyword argument")
                if self.at_op("*"):
                    raise self.error("star arguments are not supported")
                args.append(self.test())
            if not self.at_op(")"):
                self.expect_op(",")
        self.take()
        return n.Call(func, args, kwargs, line=func.line, col=func.col)

    def subscript(self) -> n.Node:
        t = self.tok
        lower = upper = step = None
        if not self.at_op(":"):
            lower = self.test()
            if not self.at_op(":"):
                return lower
        self.take()
        if not (self.at_op("]") or self.at_op(":")):
            upper = self.test()
        if self.at_op(":"):
            self.take()
            if not self.at_op("]"):
                step = self.test()
        return n.Slice(lower, upper, step, line=t.line, col=t.col)

    def atom(self) -> n.Node:
        t = self.tok
        if t.kind == "NAME":
            self.take()
            return n.Name(t.value, line=t.line, col=t.col)
        if t.kind == "INT":
            self.take()
            return n.Const(t.value, line=t.line, col=t.col)
        if t.kind == "KEYWORD" and t.value in ("None", "True", "False"):
            self.take()
            return n.Const({"None": None, "True": True, "False": False}[t.value], line=t.line, col=t.col)
        if t.kind in ("STRING", "FSTRING"):
            return self.strings()
        if self.at_op("("):
            self.take()
            if self.at_op(")"):
                self.take()
                return n.TupleExpr([], line=t.line, col=t.col)
            inner = self.testlist()
            self.expect_op(")")
            return inner
        if self.at_op("["):
            return self.list_display()
        if self.at_op("{"):
            raise self.error("dict and set literals are not supported")
        if t.kind in ("NEWLINE", "EOF"):
            raise self.error("unexpected end of line")
        if t.kind == "DEDENT" or t.kind == "INDENT":
            raise self.error("unexpected indentation")
        raise self.error(f"unexpected token {t.value!r}")

    def strings(self) -> n.Node:
        start = self.tok
        parts: list = []
        any_f = False
        while self.at("STRING") or self.at("FSTRING"):
            t = self.take()
            if t.kind == "STRING":
                parts.append(t.value)
            else:
                any_f = True
                parts.extend(parse_fstring_body(*t.value))
        if not any_f:
            return n.Const("".join(parts), line=start.line, col=start.col)
        merged: list = []
        for p in parts:
            if isinstance(p, str) and merged and isinstance(merged[-1], str):
                merged[-1] += p
            else:
                merged.append(p)
        return n.FString(merged, line=start.line, col=start.col)

    def list_display(self) -> n.Node:
        t = self.take()
        if self.at_op("]"):
            self.take()
            return n.ListExpr([], line=t.line, col=t.col)
        first = self.test()
        if self.at_kw("for"):
            self.take()
            target = self.targets()
            self.expect_kw("in")
            it = self.or_test()
            conds = []
            while self.at_kw("if"):
                self.take()
                conds.append(self.or_test())
            if self.at_kw("for"):
                raise self.error("nested comprehensions are not supported")
            self.expect_op("]")
            return n.ListComp(first, target, it, conds, line=t.line, col=t.col)
        elts = [first]
        while self.at_op(","):
            self.take()
            if self.at_op("]"):
                break
            elts.append(self.test())
        self.expect_op("]")
        return n.ListExpr(elts, line=t.line, col=t.col)


def parse_fstring_body(body: str, raw: bool, line: int, col: int) -> list:
    """Split an f-string body into literal text and (expr, conversion, spec) parts."""
    parts: list = []
    buf: list[str] = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "{":
            if body.startswith("{{", i):
                buf.append("{")
                i += 2
                continue
            if buf:
                text = "".join(buf)
                parts.append(text if raw else unescape(text))
                buf = []
            depth = 1
            j = i + 1
            quote = None
            while j < len(body):
                c = body[j]
                if quote:
                    if c == quote:
                        quote = None
                elif c in "'\"":
                    quote = c
                elif c in "([{":
                    depth += 1
                elif c in ")]}":
                    depth -= 1
                    if depth == 0:
                        break
                j += 1
            if j >= len(body):
                raise ParseError("f-string: expecting '}'", line, col)
            inner = body[i + 1:j]
            conversion = None
            spec = None
            # split off !r / :spec at the top nesting level
            k, d, q = 0, 0, None
            cut = None
            while k < len(inner):
                c = inner[k]
                if q:
                    if c == q:
                        q = None
                elif c in "'\"":
                    q = c
                elif c in "([{":
                    d += 1
                elif c in ")]}":
                    d -= 1
                elif d == 0 and c == "!" and k + 1 < len(inner) and inner[k + 1] != "=":
                    cut = k
                    break
                elif d == 0 and c == ":":
                    cut = k
                    break
                k += 1
            expr_src = inner if cut is None else inner[:cut]
            if cut is not None:
                rest = inner[cut:]
                if rest.startswith("!"):
                    conversion = rest[1:2]
                    rest = rest[2:]
                    if conversion not in ("r", "s"):
                        raise ParseError(f"f-string: invalid conversion {conversion!r}", line, col)
                if rest.startswith(":"):
                    spec = rest[1:]
            if not expr_src.strip():
                raise ParseError("f-string: empty expression not allowed", line, col)
            sub_tokens = tokenize("(" + expr_src.strip() + ")")
            sub_tokens = [
                type(tk)(tk.kind, tk.value, line, col) for tk in sub_tokens
                if tk.kind not in ("NEWLINE", "INDENT", "DEDENT")
            ]
            sub = Parser(sub_tokens)
            expr = sub.test()
            if not sub.at("EOF"):
                raise ParseError("f-string: invalid expression", line, col)
            parts.append((expr, conversion, spec))
            i = j + 1
            continue
        if ch == "}":
            if body.startswith("}}", i):
                buf.append("}")
                i += 2
                continue
            raise ParseError("f-string: single '}' is not allowed", line, col)
        if ch == "\\" and i + 1 < len(body):
            buf.append(body[i:i + 2])
            i += 2
            continue
        buf.append(ch)
        i += 1
    if buf:
        text = "".join(buf)
        parts.append(text if raw else unescape(text))
    return parts


def parse(source: str) -> n.PlanAst:
    """Parse a plan script. Raises :class:`ParseError` with line/column."""
    tokens = tokenize(source)
    return Parser(tokens, source).parse_program()
