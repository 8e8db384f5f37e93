"""First-order terms and their concrete syntax.

Terms are the universal value representation of the engine: taint labels,
service properties, route expressions, and clause heads/bodies are all terms.
The syntax mirrors conventional Prolog notation: lowercase atoms, uppercase
(or underscore) variables, integers, double-quoted strings, and compound
terms like ``merge(10)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union


class TermSyntaxError(Exception):
    """Malformed concrete syntax; carries the 1-based source position."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.message = message
        self.line = line
        self.column = column


def _check_name(name: str, what: str) -> None:
    if not name or any(c.isspace() for c in name):
        raise ValueError(f"{what} must be non-empty and contain no whitespace: {name!r}")


@dataclass(frozen=True, slots=True)
class Atom:
    name: str

    def __post_init__(self):
        _check_name(self.name, "atom name")

    def __repr__(self):
        return self.name


@dataclass(frozen=True, slots=True)
class Var:
    name: str

    def __repr__(self):
        return self.name


@dataclass(frozen=True, slots=True)
class Int:
    value: int

    def __repr__(self):
        return str(self.value)


@dataclass(frozen=True, slots=True)
class Str:
    value: str

    def __repr__(self):
        return format_term(self)


@dataclass(frozen=True, slots=True)
class Compound:
    functor: str
    args: tuple

    def __post_init__(self):
        _check_name(self.functor, "functor")
        if not self.args:
            raise ValueError("0-ary predicates are atoms, not compounds")
        object.__setattr__(self, "args", tuple(self.args))

    def __repr__(self):
        return format_term(self)


Term = Union[Atom, Var, Int, Str, Compound]


def functor_arity(t: Term) -> tuple[str, int]:
    """Predicate indicator of a callable term (atom or compound)."""
    if isinstance(t, Atom):
        return (t.name, 0)
    if isinstance(t, Compound):
        return (t.functor, len(t.args))
    raise TypeError(f"not a callable term: {t!r}")


# ---------------------------------------------------------------------------
# Tokenizer, shared by the term/clause/policy/route parsers.
# ---------------------------------------------------------------------------

_PUNCT = (":-", ":=", "->", "\\+", "(", ")", "{", "}", ",", ".", ":", "=")

_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\", "r": "\r"}
_UNESCAPES = {"\n": "\\n", "\t": "\\t", '"': '\\"', "\\": "\\\\", "\r": "\\r"}


@dataclass(frozen=True, slots=True)
class Token:
    kind: str  # ATOM | VAR | INT | STR | PUNCT | EOF
    text: str
    line: int
    column: int
    value: object = None  # decoded payload for INT / STR


class Tokenizer:
    """Hand-rolled scanner with 1-based line/column tracking.

    ``comment`` selects the line-comment introducer: ``%`` for clause files,
    ``//`` for policy and route files.
    """

    def __init__(self, text: str, comment: str = "%"):
        self.text = text
        self.comment = comment
        self.pos = 0
        self.line = 1
        self.column = 1
        self.tokens = list(self._scan())
        self.index = 0

    def _error(self, msg: str) -> TermSyntaxError:
        return TermSyntaxError(msg, self.line, self.column)

    def _advance(self, n: int = 1) -> None:
        for _ in range(n):
            if self.text[self.pos] == "\n":
                self.line += 1
                self.column = 1
            else:
                self.column += 1
            self.pos += 1

    def _scan(self) -> Iterator[Token]:
        text = self.text
        while self.pos < len(text):
            c = text[self.pos]
            if c.isspace():
                self._advance()
                continue
            if text.startswith(self.comment, self.pos):
                while self.pos < len(text) and text[self.pos] != "\n":
                    self._advance()
                continue
            line, col = self.line, self.column
            if c == '"':
                yield self._scan_string(line, col)
                continue
            if c.isdigit() or (
                c == "-" and self.pos + 1 < len(text) and text[self.pos + 1].isdigit()
            ):
                start = self.pos
                self._advance()
                while self.pos < len(text) and text[self.pos].isdigit():
                    self._advance()
                raw = text[start : self.pos]
                yield Token("INT", raw, line, col, int(raw))
                continue
            if c.isalpha() or c == "_":
                start = self.pos
                while self.pos < len(text) and (text[self.pos].isalnum() or text[self.pos] == "_"):
                    self._advance()
                raw = text[start : self.pos]
                kind = "VAR" if raw[0] == "_" or raw[0].isupper() else "ATOM"
                yield Token(kind, raw, line, col)
                continue
            for p in _PUNCT:
                if text.startswith(p, self.pos):
                    self._advance(len(p))
                    yield Token("PUNCT", p, line, col)
                    break
            else:
                raise self._error(f"unexpected character {c!r}")
        yield Token("EOF", "", self.line, self.column)

    def _scan_string(self, line: int, col: int) -> Token:
        self._advance()  # opening quote
        out = []
        text = self.text
        while True:
            if self.pos >= len(text):
                raise TermSyntaxError("unterminated string", line, col)
            c = text[self.pos]
            if c == '"':
                self._advance()
                return Token("STR", "".join(out), line, col, "".join(out))
            if c == "\\":
                self._advance()
                if self.pos >= len(text) or text[self.pos] not in _ESCAPES:
                    raise self._error("bad escape sequence")
                out.append(_ESCAPES[text[self.pos]])
                self._advance()
            else:
                out.append(c)
                self._advance()

    # -- token-stream interface -------------------------------------------

    def peek(self) -> Token:
        return self.tokens[self.index]

    def next(self) -> Token:
        tok = self.tokens[self.index]
        if tok.kind != "EOF":
            self.index += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text if text is not None else kind.lower()
            raise TermSyntaxError(
                f"expected {want!r}, found {tok.text or tok.kind!r}", tok.line, tok.column
            )
        return self.next()

    def accept(self, kind: str, text: str | None = None) -> Token | None:
        tok = self.peek()
        if tok.kind == kind and (text is None or tok.text == text):
            return self.next()
        return None

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "ATOM" and tok.text == word


# ---------------------------------------------------------------------------
# Term parsing and printing.
# ---------------------------------------------------------------------------


def parse_term_from(tok: Tokenizer) -> Term:
    """Parse one term starting at the tokenizer's current position."""
    t = tok.next()
    if t.kind == "INT":
        return Int(t.value)
    if t.kind == "STR":
        return Str(t.value)
    if t.kind == "VAR":
        return Var(t.text)
    if t.kind == "ATOM":
        if tok.peek().kind == "PUNCT" and tok.peek().text == "(":
            tok.next()
            args = [parse_term_from(tok)]
            while tok.accept("PUNCT", ","):
                args.append(parse_term_from(tok))
            tok.expect("PUNCT", ")")
            return Compound(t.text, tuple(args))
        return Atom(t.text)
    raise TermSyntaxError(f"expected a term, found {t.text or t.kind!r}", t.line, t.column)


def parse_term(text: str, comment: str = "%") -> Term:
    """Parse a complete term from ``text``; trailing input is an error."""
    tok = Tokenizer(text, comment=comment)
    term = parse_term_from(tok)
    end = tok.peek()
    if end.kind != "EOF":
        raise TermSyntaxError(
            f"trailing input after term: {end.text!r}", end.line, end.column
        )
    return term


def format_term(t: Term) -> str:
    if isinstance(t, Atom):
        return t.name
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Int):
        return str(t.value)
    if isinstance(t, Str):
        return '"' + "".join(_UNESCAPES.get(c, c) for c in t.value) + '"'
    if isinstance(t, Compound):
        return f"{t.functor}({', '.join(format_term(a) for a in t.args)})"
    raise TypeError(f"not a term: {t!r}")


def format_labels(labels) -> str:
    """Render a label set as ``[a, b(1)]`` with a stable (sorted) order."""
    return "[" + ", ".join(sorted(format_term(l) for l in labels)) + "]"
