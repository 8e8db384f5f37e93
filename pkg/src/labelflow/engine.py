"""Horn-clause store with SLD resolution and negation-as-failure.

This is the single semantic substrate of the package: compiled policies,
compiled routes, and choice conditions are all evaluated here. Resolution is
top-down with leftmost literal selection and source-order clause selection,
so solution order is deterministic across runs. Negation-as-failure is
restricted to ground goals (non-ground negated goals raise Floundered rather
than silently guessing). There is no cut and no assert/retract.

Textual clause format: ``head.`` for facts, ``head :- b1, b2.`` for rules,
``\\+ goal`` for negated body literals, ``%`` line comments.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence

from . import kernel
from .terms import (
    Atom,
    Compound,
    Int,
    Str,
    Term,
    Tokenizer,
    Var,
    format_term,
    functor_arity,
    parse_term_from,
)


class EngineError(Exception):
    pass


class DepthExceeded(EngineError):
    """Resolution depth passed the configured limit."""


class Floundered(EngineError):
    """A negated literal was selected while still containing variables."""


class NameCollision(EngineError):
    """A builtin and a user clause share the same functor/arity."""


class BuiltinError(EngineError):
    """A builtin was called with arguments it cannot handle."""


@dataclass(frozen=True, slots=True)
class Literal:
    term: Term
    negated: bool = False

    def __post_init__(self):
        if not isinstance(self.term, (Atom, Compound)):
            raise ValueError(f"literal must be an atom or compound: {self.term!r}")

    def __repr__(self):
        return ("\\+ " if self.negated else "") + format_term(self.term)


@dataclass(frozen=True, slots=True)
class Clause:
    head: Term
    body: tuple = ()

    def __post_init__(self):
        if not isinstance(self.head, (Atom, Compound)):
            raise ValueError(f"clause head must be an atom or compound: {self.head!r}")
        object.__setattr__(self, "body", tuple(self.body))

    @property
    def is_fact(self) -> bool:
        return not self.body

    def __repr__(self):
        return format_clause(self)


@dataclass(frozen=True, slots=True)
class SolveLimits:
    depth: int = 10000

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth limit must be >= 1")


DEFAULT_LIMITS = SolveLimits()

# A builtin receives the (walked) argument terms of its call and yields
# argument tuples of the same arity; each yielded tuple is unified against
# the call to produce one answer.
Builtin = Callable[[tuple], Iterable[tuple]]


def _first_arg_key(t: Term):
    """Hashable index key for a ground-ish first argument, else None."""
    if isinstance(t, Atom):
        return ("a", t.name)
    if isinstance(t, Int):
        return ("i", t.value)
    if isinstance(t, Str):
        return ("s", t.value)
    if isinstance(t, Compound):
        return ("c", t.functor, len(t.args))
    return None


class KnowledgeBase:
    """Immutable clause store with first-argument indexing.

    Build one with ``from_clauses`` (or ``extend`` an existing base); the
    clause set never changes afterwards, so a loaded base is safely shared
    across concurrent queries.
    """

    def __init__(self, clauses: Sequence[Clause], builtins: dict | None = None):
        self.clauses: tuple = tuple(clauses)
        self.builtins: dict[tuple[str, int], Builtin] = dict(builtins or {})
        self._by_pred: dict[tuple[str, int], list] = {}
        self._index: dict = {}
        self._unindexed: dict = {}
        for pos, clause in enumerate(self.clauses):
            pred = functor_arity(clause.head)
            if pred in self.builtins:
                raise NameCollision(f"clause {pred[0]}/{pred[1]} collides with a builtin")
            self._by_pred.setdefault(pred, []).append((pos, clause))
            if isinstance(clause.head, Compound):
                key = _first_arg_key(clause.head.args[0])
                if key is None:
                    self._unindexed.setdefault(pred, []).append((pos, clause))
                else:
                    self._index.setdefault((pred, key), []).append((pos, clause))

    @classmethod
    def from_clauses(
        cls, clauses: Iterable[Clause], builtins: dict | None = None
    ) -> "KnowledgeBase":
        return cls(list(clauses), builtins)

    def extend(self, extra: Iterable[Clause]) -> "KnowledgeBase":
        """New base containing this base's clauses plus ``extra``."""
        return KnowledgeBase(list(self.clauses) + list(extra), self.builtins)

    def register_builtin(self, name: str, arity: int, fn: Builtin) -> None:
        key = (name, arity)
        if key in self.builtins:
            raise NameCollision(f"builtin {name}/{arity} already registered")
        if key in self._by_pred:
            raise NameCollision(f"user clauses already define {name}/{arity}")
        self.builtins[key] = fn

    def candidates(self, goal: Term, bindings: dict) -> list:
        """Clauses that may match ``goal``, in source order."""
        pred = functor_arity(goal)
        if not isinstance(goal, Compound):
            return [c for _, c in self._by_pred.get(pred, [])]
        key = _first_arg_key(kernel.walk(goal.args[0], bindings))
        if key is None:
            return [c for _, c in self._by_pred.get(pred, [])]
        merged = self._index.get((pred, key), []) + self._unindexed.get(pred, [])
        merged.sort(key=lambda pc: pc[0])
        return [c for _, c in merged]

    def __len__(self):
        return len(self.clauses)


# ---------------------------------------------------------------------------
# Resolution.
# ---------------------------------------------------------------------------


class _Solver:
    def __init__(self, kb: KnowledgeBase, limits: SolveLimits):
        self.kb = kb
        self.limits = limits
        self.fresh = 0

    def _rename_clause(self, clause: Clause) -> Clause:
        self.fresh += 1
        suffix = f"#{self.fresh}"
        head = kernel.rename(clause.head, suffix)
        body = tuple(
            Literal(kernel.rename(l.term, suffix), l.negated) for l in clause.body
        )
        return Clause(head, body)

    def solve(self, goals, bindings: dict, trail: list, depth: int) -> Iterator[dict]:
        if not goals:
            yield bindings
            return
        if depth > self.limits.depth:
            raise DepthExceeded(f"resolution depth exceeded {self.limits.depth}")
        lit = goals[0]
        rest = goals[1:]
        goal = kernel.resolve(lit.term, bindings)
        if lit.negated:
            if not kernel.is_ground(goal):
                raise Floundered(f"negated goal is not ground: {format_term(goal)}")
            provable = False
            for _ in self.solve((Literal(goal),), {}, [], depth + 1):
                provable = True
                break
            if not provable:
                yield from self.solve(rest, bindings, trail, depth)
            return
        pred = functor_arity(goal)
        builtin = self.kb.builtins.get(pred)
        if builtin is not None:
            args = goal.args if isinstance(goal, Compound) else ()
            for out in builtin(args):
                mark = len(trail)
                ok = True
                for a, b in zip(args, out):
                    if not kernel.unify_inplace(a, b, bindings, trail):
                        ok = False
                        break
                if ok:
                    yield from self.solve(rest, bindings, trail, depth)
                kernel.undo_to(bindings, trail, mark)
            return
        for clause in self.kb.candidates(goal, bindings):
            renamed = self._rename_clause(clause)
            mark = len(trail)
            if kernel.unify_inplace(goal, renamed.head, bindings, trail):
                yield from self.solve(
                    renamed.body + tuple(rest), bindings, trail, depth + 1
                )
            kernel.undo_to(bindings, trail, mark)


def _query_vars(t: Term, out: list) -> None:
    if isinstance(t, Var):
        if t.name not in out:
            out.append(t.name)
    elif isinstance(t, Compound):
        for a in t.args:
            _query_vars(a, out)


def _as_literals(query) -> tuple:
    if isinstance(query, (Atom, Compound)):
        return (Literal(query),)
    if isinstance(query, Literal):
        return (query,)
    return tuple(q if isinstance(q, Literal) else Literal(q) for q in query)


def solve(kb: KnowledgeBase, query, limits: SolveLimits | None = None) -> Iterator[dict]:
    """Enumerate substitutions (query-variable name -> ground-ish term).

    ``query`` may be a term, a Literal, or a sequence of either. The stream
    is lazy; consuming it fully enumerates every SLD derivation in clause
    source order.
    """
    goals = _as_literals(query)
    limits = limits or DEFAULT_LIMITS
    names: list[str] = []
    for lit in goals:
        _query_vars(lit.term, names)
    solver = _Solver(kb, limits)
    bindings: dict = {}
    trail: list = []
    for _ in solver.solve(goals, bindings, trail, 1):
        yield {n: kernel.resolve(Var(n), bindings) for n in names}


def provable(kb: KnowledgeBase, query, limits: SolveLimits | None = None) -> bool:
    for _ in solve(kb, query, limits):
        return True
    return False


# ---------------------------------------------------------------------------
# Default builtins: regex matching plus numeric comparisons.
# ---------------------------------------------------------------------------


def _regex(args: tuple) -> Iterator[tuple]:
    pat, subject, _res = args
    if not isinstance(pat, Str) or not isinstance(subject, Str):
        raise BuiltinError("regex/3 needs ground string pattern and subject")
    try:
        matched = re.fullmatch(pat.value, subject.value) is not None
    except re.error as exc:
        raise BuiltinError(f"bad regular expression {pat.value!r}: {exc}") from exc
    yield (pat, subject, Atom("true" if matched else "false"))


def _int_pair(name: str, args: tuple) -> tuple[int, int]:
    a, b = args
    if not isinstance(a, Int) or not isinstance(b, Int):
        raise BuiltinError(f"{name} needs ground integer arguments")
    return a.value, b.value


def _lt(args):
    a, b = _int_pair("lt/2", args)
    if a < b:
        yield args


def _lte(args):
    a, b = _int_pair("lte/2", args)
    if a <= b:
        yield args


def _eq(args):
    a, b = _int_pair("eq/2", args)
    if a == b:
        yield args


def default_builtins() -> dict[tuple[str, int], Builtin]:
    return {
        ("regex", 3): _regex,
        ("lt", 2): _lt,
        ("lte", 2): _lte,
        ("eq", 2): _eq,
    }


# ---------------------------------------------------------------------------
# Clause text format.
# ---------------------------------------------------------------------------


def parse_program(text: str) -> list[Clause]:
    """Parse ``head.`` facts and ``head :- b1, \\+ b2.`` rules."""
    tok = Tokenizer(text, comment="%")
    clauses = []
    while tok.peek().kind != "EOF":
        head = parse_term_from(tok)
        body: list[Literal] = []
        if tok.accept("PUNCT", ":-"):
            body.append(_parse_body_literal(tok))
            while tok.accept("PUNCT", ","):
                body.append(_parse_body_literal(tok))
        tok.expect("PUNCT", ".")
        clauses.append(Clause(head, tuple(body)))
    return clauses


def _parse_body_literal(tok: Tokenizer) -> Literal:
    negated = tok.accept("PUNCT", "\\+") is not None
    return Literal(parse_term_from(tok), negated)


def parse_query(text: str) -> tuple:
    """Parse a comma-separated goal conjunction (no trailing period needed)."""
    tok = Tokenizer(text.rstrip().rstrip("."), comment="%")
    goals = [_parse_body_literal(tok)]
    while tok.accept("PUNCT", ","):
        goals.append(_parse_body_literal(tok))
    end = tok.peek()
    if end.kind != "EOF":
        raise EngineError(f"trailing input in query: {end.text!r}")
    return tuple(goals)


def format_clause(clause: Clause) -> str:
    head = format_term(clause.head)
    if clause.is_fact:
        return f"{head}."
    body = ", ".join(repr(l) for l in clause.body)
    return f"{head} :- {body}."


def format_program(clauses: Iterable[Clause]) -> str:
    return "\n".join(format_clause(c) for c in clauses) + "\n"
