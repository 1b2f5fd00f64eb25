"""Tokenizer for plan scripts (indentation-sensitive, Python-like)."""
from __future__ import annotations

from dataclasses import dataclass

KEYWORDS = {
    "def", "return", "if", "elif", "else", "for", "in", "while", "break",
    "continue", "pass", "assert", "and", "or", "not", "is", "None", "True", "False",
}
UNSUPPORTED_KEYWORDS = {
    "import", "from", "class", "lambda", "try", "except", "finally", "with",
    "yield", "global", "nonlocal", "del", "raise", "async", "await",
}

# longest first
OPERATORS = [
    "//=", "**", "//", "==", "!=", "<=", ">=", "+=", "-=", "*=", "%=", "->",
    "+", "-", "*", "/", "%", "<", ">", "=", "(", ")", "[", "]", "{", "}",
    ",", ":", ".",
]


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(message)
        self.message = message
        self.line = line
        self.col = col

    def __str__(self) -> str:
        return f"SyntaxError: {self.message} (line {self.line}, column {self.col})"


@dataclass(frozen=True)
class Token:
    kind: str  # NAME KEYWORD INT STRING FSTRING OP NEWLINE INDENT DEDENT EOF
    value: object
    line: int
    col: int


_ESCAPES = {"n": "\n", "t": "\t", "\\": "\\", "'": "'", '"': '"', "r": "\r", "0": "\0"}


def _unescape(raw: str) -> str:
    out = []
    i = 0
    while i < len(raw):
        ch = raw[i]
        if ch == "\\" and i + 1 < len(raw):
            nxt = raw[i + 1]
            if nxt == "\n":
                i += 2
                continue
            out.append(_ESCAPES.get(nxt, "\\" + nxt))
            i += 2
            continue
        out.append(ch)
        i += 1
    return "".join(out)


class Lexer:
    def __init__(self, source: str):
        self.src = source.replace("\r\n", "\n").replace("\t", "    ")
        self.pos = 0
        self.line = 1
        self.col = 1
        self.tokens: list[Token] = []
        self.indents = [0]
        self.depth = 0  # bracket nesting; newlines inside brackets are ignored

    def error(self, message: str) -> ParseError:
        return ParseError(message, self.line, self.col)

    def peek(self, offset: int = 0) -> str:
        i = self.pos + offset
        return self.src[i] if i < len(self.src) else ""

    def advance(self, n: int = 1) -> str:
        text = self.src[self.pos:self.pos + n]
        for ch in text:
            if ch == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
        self.pos += n
        return text

    def emit(self, kind: str, value: object, line: int, col: int) -> None:
        self.tokens.append(Token(kind, value, line, col))

    def tokenize(self) -> list[Token]:
        at_line_start = True
        while self.pos < len(self.src):
            if at_line_start and self.depth == 0:
                if self._handle_indent():
                    continue
                at_line_start = False
            ch = self.peek()
            if ch == "\n":
                if self.depth == 0 and self.tokens and self.tokens[-1].kind not in ("NEWLINE", "INDENT", "DEDENT"):
                    self.emit("NEWLINE", None, self.line, self.col)
                self.advance()
                at_line_start = self.depth == 0
                continue
            if ch in " ":
                self.advance()
                continue
            if ch == "#":
                while self.peek() and self.peek() != "\n":
                    self.advance()
                continue
            if ch == "\\" and self.peek(1) == "\n":
                self.advance(2)
                continue
            if ch.isdigit():
                self._number()
                continue
            if ch.isalpha() or ch == "_":
                if self._string_prefix():
                    continue
                self._name()
                continue
            if ch in "'\"":
                self._string(fstring=False)
                continue
            self._operator()
        line, col = self.line, self.col
        if self.tokens and self.tokens[-1].kind not in ("NEWLINE", "INDENT", "DEDENT"):
            self.emit("NEWLINE", None, line, col)
        while len(self.indents) > 1:
            self.indents.pop()
            self.emit("DEDENT", None, line, col)
        self.emit("EOF", None, line, col)
        return self.tokens

    def _handle_indent(self) -> bool:
        """Measure indentation at the start of a logical line.

        Returns True when the line is blank or a comment and was consumed.
        """
        width = 0
        while self.peek(width) == " ":
            width += 1
        nxt = self.peek(width)
        if nxt in ("\n", "#", ""):
            # blank / comment-only line: skip to the newline
            while self.peek() and self.peek() != "\n":
                self.advance()
            if self.peek() == "\n":
                self.advance()
            return True
        line = self.line
        self.advance(width)
        if width > self.indents[-1]:
            self.indents.append(width)
            self.emit("INDENT", None, line, 1)
        else:
            while width < self.indents[-1]:
                self.indents.pop()
                self.emit("DEDENT", None, line, 1)
            if width != self.indents[-1]:
                raise ParseError("unindent does not match any outer indentation level", line, width + 1)
        return False

    def _number(self) -> None:
        line, col = self.line, self.col
        start = self.pos
        while self.peek().isdigit() or self.peek() == "_":
            self.advance()
        if self.peek() == "." or self.peek().isalpha():
            raise ParseError("only integer literals are supported", line, col)
        self.emit("INT", int(self.src[start:self.pos].replace("_", "")), line, col)

    def _name(self) -> None:
        line, col = self.line, self.col
        start = self.pos
        while self.peek().isalnum() or self.peek() == "_":
            self.advance()
        word = self.src[start:self.pos]
        if word in UNSUPPORTED_KEYWORDS:
            raise ParseError(f"'{word}' is not supported in plan scripts", line, col)
        self.emit("KEYWORD" if word in KEYWORDS else "NAME", word, line, col)

    def _string_prefix(self) -> bool:
        prefix = ""
        i = 0
        while self.peek(i).isalpha() and i < 2:
            prefix += self.peek(i)
            i += 1
        if self.peek(i) not in ("'", '"'):
            return False
        p = prefix.lower()
        if p not in ("f", "r", "fr", "rf"):
            return False
        self.advance(i)
        self._string(fstring="f" in p, raw="r" in p)
        return True

    def _string(self, fstring: bool, raw: bool = False) -> None:
        line, col = self.line, self.col
        quote = self.peek()
        triple = self.peek(1) == quote and self.peek(2) == quote
        delim = quote * 3 if triple else quote
        self.advance(len(delim))
        start = self.pos
        while True:
            if self.pos >= len(self.src):
                raise ParseError("unterminated string literal", line, col)
            ch = self.peek()
            if ch == "\\":
                self.advance(2)
                continue
            if not triple and ch == "\n":
                raise ParseError("unterminated string literal", line, col)
            if self.src.startswith(delim, self.pos):
                body = self.src[start:self.pos]
                self.advance(len(delim))
                break
            self.advance()
        if fstring:
            self.emit("FSTRING", (body, raw, line, col), line, col)
        else:
            self.emit("STRING", body if raw else _unescape(body), line, col)

    def _operator(self) -> None:
        line, col = self.line, self.col
        for op in OPERATORS:
            if self.src.startswith(op, self.pos):
                if op in ("(", "[", "{"):
                    self.depth += 1
                elif op in (")", "]", "}"):
                    self.depth = max(0, self.depth - 1)
                self.advance(len(op))
                self.emit("OP", op, line, col)
                return
        raise ParseError(f"unexpected character {self.peek()!r}", line, col)


def tokenize(source: str) -> list[Token]:
    return Lexer(source).tokenize()


def unescape(raw: str) -> str:
    return _unescape(raw)
