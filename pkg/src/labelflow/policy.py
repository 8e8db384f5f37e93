"""Policy DSL: lexer, parser, validator, and canonical printer.

A policy document declares services (their endpoint pattern, properties,
capabilities, and taint propagation as ``creates_label`` / ``removes_label``
lists) and flow rules (``when <service> receives <labels> decide <effect>``
with optional obligations). Files use the ``.lucon`` extension, UTF-8, and
``//`` line comments.

Example::

    service {
      id sensor
      endpoint "sensor://.+"
      creates_label raw
    }

    flow_rule {
      id dontPublishRaw
      when service { endpoint "http[s]?://.+" } receives raw
      decide drop
        require log("Preventing data leak. ", message) otherwise error
    }

Inline service declarations are hoisted to top-level services with a
deterministic generated id, so parse(format(ast)) is the identity on valid
ASTs.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

from .terms import (
    Str,
    Term,
    TermSyntaxError,
    Tokenizer,
    format_term,
    parse_term_from,
)

EFFECTS = ("allow", "drop", "error")

_SECTION_KEYWORDS = frozenset(
    [
        "id",
        "endpoint",
        "properties",
        "capabilities",
        "creates_label",
        "removes_label",
        "when",
        "receives",
        "decide",
        "require",
        "otherwise",
        "service",
        "flow_rule",
    ]
)


class ValidationError(Exception):
    """Structurally well-formed policy text violating a document invariant."""


@dataclass(frozen=True, slots=True)
class ServiceDecl:
    id: str
    endpoint: str
    properties: tuple = ()
    capabilities: tuple = ()
    creates_labels: tuple = ()
    removes_labels: tuple = ()


@dataclass(frozen=True, slots=True)
class Obligation:
    action: Term
    otherwise: str = "error"  # fail-safe default


@dataclass(frozen=True, slots=True)
class Decision:
    effect: str
    obligations: tuple = ()


@dataclass(frozen=True, slots=True)
class FlowRule:
    name: str
    target: str  # id of a declared service
    trigger_labels: tuple = ()
    decision: Decision = Decision("allow")


@dataclass(frozen=True, slots=True)
class PolicyAst:
    services: tuple = ()
    rules: tuple = ()

    def service(self, service_id: str) -> ServiceDecl:
        for s in self.services:
            if s.id == service_id:
                return s
        raise KeyError(service_id)


def generated_service_id(decl: ServiceDecl) -> str:
    """Stable id for inline service declarations, derived from content."""
    basis = "|".join(
        [
            decl.endpoint,
            ",".join(format_term(t) for t in decl.properties),
            ",".join(format_term(t) for t in decl.capabilities),
            ",".join(format_term(t) for t in decl.creates_labels),
            ",".join(format_term(t) for t in decl.removes_labels),
        ]
    )
    digest = hashlib.sha1(basis.encode()).hexdigest()
    return f"service{int(digest[:10], 16) % 10**8:08d}"


# ---------------------------------------------------------------------------
# Parsing.
# ---------------------------------------------------------------------------


class _PolicyParser:
    def __init__(self, text: str):
        self.tok = Tokenizer(text, comment="//")
        self.services: list[ServiceDecl] = []
        self.rules: list[FlowRule] = []
        self._anon_rules = 0

    def parse(self) -> PolicyAst:
        tok = self.tok
        while tok.peek().kind != "EOF":
            if tok.at_keyword("service"):
                self._add_service(self._parse_service())
            elif tok.at_keyword("flow_rule"):
                self.rules.append(self._parse_rule())
            else:
                t = tok.peek()
                raise TermSyntaxError(
                    f"expected 'service' or 'flow_rule', found {t.text or t.kind!r}",
                    t.line,
                    t.column,
                )
        ast = PolicyAst(tuple(self.services), tuple(self.rules))
        validate_policy(ast)
        return ast

    def _add_service(self, decl: ServiceDecl) -> None:
        # Identical inline declarations collapse to one hoisted service.
        if not any(s == decl for s in self.services):
            self.services.append(decl)

    def _parse_service(self) -> ServiceDecl:
        tok = self.tok
        tok.expect("ATOM", "service")
        tok.expect("PUNCT", "{")
        sid = None
        endpoint = None
        sections: dict[str, tuple] = {}
        while not tok.accept("PUNCT", "}"):
            t = tok.peek()
            if tok.accept("ATOM", "id"):
                sid = tok.expect("ATOM").text
            elif tok.accept("ATOM", "endpoint"):
                endpoint = tok.expect("STR").value
            elif t.kind == "ATOM" and t.text in (
                "properties",
                "capabilities",
                "creates_label",
                "removes_label",
            ):
                tok.next()
                sections[t.text] = self._parse_term_list()
            else:
                raise TermSyntaxError(
                    f"unexpected token in service block: {t.text or t.kind!r}",
                    t.line,
                    t.column,
                )
        if endpoint is None:
            t = tok.peek()
            raise TermSyntaxError("service block missing endpoint", t.line, t.column)
        decl = ServiceDecl(
            id=sid or "",
            endpoint=endpoint,
            properties=sections.get("properties", ()),
            capabilities=sections.get("capabilities", ()),
            creates_labels=sections.get("creates_label", ()),
            removes_labels=sections.get("removes_label", ()),
        )
        if sid is None:
            decl = ServiceDecl(
                generated_service_id(decl),
                decl.endpoint,
                decl.properties,
                decl.capabilities,
                decl.creates_labels,
                decl.removes_labels,
            )
        return decl

    def _parse_term_list(self) -> tuple:
        terms = [self._parse_term()]
        while self.tok.accept("PUNCT", ","):
            terms.append(self._parse_term())
        return tuple(terms)

    def _parse_term(self) -> Term:
        # Bare section keywords terminate lists, so a list element may not
        # be a keyword atom unless it takes arguments.
        t = self.tok.peek()
        if t.kind == "ATOM" and t.text in _SECTION_KEYWORDS:
            raise TermSyntaxError(
                f"keyword {t.text!r} cannot start a term", t.line, t.column
            )
        return parse_term_from(self.tok)

    def _parse_rule(self) -> FlowRule:
        tok = self.tok
        tok.expect("ATOM", "flow_rule")
        tok.expect("PUNCT", "{")
        name = None
        if tok.accept("ATOM", "id"):
            name = tok.expect("ATOM").text
        tok.expect("ATOM", "when")
        if tok.at_keyword("service"):
            target_decl = self._parse_service()
            self._add_service(target_decl)
            target = target_decl.id
        else:
            target = tok.expect("ATOM").text
        tok.expect("ATOM", "receives")
        triggers = self._parse_term_list()
        tok.expect("ATOM", "decide")
        effect_tok = tok.expect("ATOM")
        if effect_tok.text not in EFFECTS:
            raise TermSyntaxError(
                f"unknown effect {effect_tok.text!r}", effect_tok.line, effect_tok.column
            )
        obligations = []
        while tok.accept("ATOM", "require"):
            action = self._parse_term()
            otherwise = "error"
            if tok.accept("ATOM", "otherwise"):
                ot = tok.expect("ATOM")
                if ot.text not in EFFECTS:
                    raise TermSyntaxError(
                        f"unknown effect {ot.text!r}", ot.line, ot.column
                    )
                otherwise = ot.text
            obligations.append(Obligation(action, otherwise))
        tok.expect("PUNCT", "}")
        if name is None:
            self._anon_rules += 1
            name = f"rule{self._anon_rules}"
        return FlowRule(
            name, target, triggers, Decision(effect_tok.text, tuple(obligations))
        )


def parse_policy(text: str) -> PolicyAst:
    """Parse and validate a policy document."""
    return _PolicyParser(text).parse()


def validate_policy(ast: PolicyAst) -> None:
    seen_services: set[str] = set()
    for s in ast.services:
        if not s.id:
            raise ValidationError("service declaration without id")
        if s.id in seen_services:
            raise ValidationError(f"duplicate service id {s.id!r}")
        seen_services.add(s.id)
        try:
            re.compile(s.endpoint)
        except re.error as exc:
            raise ValidationError(
                f"service {s.id!r} has an invalid endpoint regex: {exc}"
            ) from exc
        overlap = set(s.creates_labels) & set(s.removes_labels)
        if overlap:
            names = ", ".join(sorted(format_term(t) for t in overlap))
            raise ValidationError(
                f"service {s.id!r} both creates and removes label(s) {names}"
            )
    seen_rules: set[str] = set()
    for r in ast.rules:
        if r.name in seen_rules:
            raise ValidationError(f"duplicate rule name {r.name!r}")
        seen_rules.add(r.name)
        if r.target not in seen_services:
            raise ValidationError(
                f"rule {r.name!r} targets undeclared service {r.target!r}"
            )
        if not r.trigger_labels:
            raise ValidationError(f"rule {r.name!r} has no trigger labels")
        if r.decision.effect not in EFFECTS:
            raise ValidationError(
                f"rule {r.name!r} has unknown effect {r.decision.effect!r}"
            )
        for ob in r.decision.obligations:
            if ob.otherwise not in EFFECTS:
                raise ValidationError(
                    f"rule {r.name!r} obligation has unknown otherwise effect"
                )


# ---------------------------------------------------------------------------
# Canonical printing.
# ---------------------------------------------------------------------------


def _quote(s: str) -> str:
    return format_term(Str(s))


def format_policy(ast: PolicyAst) -> str:
    """Canonical text; parse_policy(format_policy(ast)) == ast."""
    lines = ["// labelflow policy"]
    for s in ast.services:
        lines.append("")
        lines.append("service {")
        lines.append(f"  id {s.id}")
        lines.append(f"  endpoint {_quote(s.endpoint)}")
        for kw, terms in (
            ("properties", s.properties),
            ("capabilities", s.capabilities),
            ("creates_label", s.creates_labels),
            ("removes_label", s.removes_labels),
        ):
            if terms:
                lines.append(f"  {kw} " + ", ".join(format_term(t) for t in terms))
        lines.append("}")
    for r in ast.rules:
        lines.append("")
        lines.append("flow_rule {")
        lines.append(f"  id {r.name}")
        lines.append(
            f"  when {r.target} receives "
            + ", ".join(format_term(t) for t in r.trigger_labels)
        )
        lines.append(f"  decide {r.decision.effect}")
        for ob in r.decision.obligations:
            lines.append(
                f"    require {format_term(ob.action)} otherwise {ob.otherwise}"
            )
        lines.append("}")
    return "\n".join(lines) + "\n"
