"""Independent oracles and random-instance generators for the test suite.

Everything here deliberately avoids the code paths it is used to check:
pattern matching is re-implemented from scratch, logical consequences are
computed bottom-up instead of by resolution, and dynamic violation is
decided by exhaustively forcing every choice valuation.
"""

from __future__ import annotations

from itertools import count, product

from labelflow.policy import (
    Decision,
    FlowRule,
    PolicyAst,
    ServiceDecl,
    validate_policy,
)
from labelflow.policy_compiler import CompiledPolicy, compile_policy
from labelflow.routes import (
    Aggregate,
    Bean,
    Choice,
    From,
    Route,
    Split,
    To,
    validate_route,
)
from labelflow.runtime import ServiceRegistry, echo_handler, execute
from labelflow.terms import Atom, Compound, Int, Term, Var

# ---------------------------------------------------------------------------
# A from-scratch matcher: pattern (may contain variables) against ground term.
# ---------------------------------------------------------------------------


def match_pattern(pattern: Term, ground: Term, subst: dict | None = None):
    """One-way matching; returns the substitution or None."""
    subst = dict(subst) if subst else {}
    stack = [(pattern, ground)]
    while stack:
        p, g = stack.pop()
        if isinstance(p, Var):
            if p.name in subst:
                if subst[p.name] != g:
                    return None
            else:
                subst[p.name] = g
        elif isinstance(p, Compound):
            if (
                not isinstance(g, Compound)
                or p.functor != g.functor
                or len(p.args) != len(g.args)
            ):
                return None
            stack.extend(zip(p.args, g.args))
        elif p != g:
            return None
    return subst


def substitute(t: Term, subst: dict) -> Term:
    if isinstance(t, Var):
        return subst.get(t.name, t)
    if isinstance(t, Compound):
        return Compound(t.functor, tuple(substitute(a, subst) for a in t.args))
    return t


def term_is_ground(t: Term) -> bool:
    if isinstance(t, Var):
        return False
    if isinstance(t, Compound):
        return all(term_is_ground(a) for a in t.args)
    return True


# ---------------------------------------------------------------------------
# Bottom-up fixpoint: the logical consequences of a definite-clause program.
# ---------------------------------------------------------------------------


def forward_chain(clauses, max_iterations: int = 10000) -> set:
    """All ground facts derivable by naive bottom-up iteration.

    Only definite clauses (no negation, no builtins); rules must be range
    restricted so every derived head is ground.
    """
    facts: set[Term] = {c.head for c in clauses if c.is_fact}
    rules = [c for c in clauses if not c.is_fact]
    for _ in range(max_iterations):
        added = False
        for rule in rules:
            for subst in _body_matches(rule.body, frozenset(facts)):
                head = substitute(rule.head, subst)
                if not term_is_ground(head):
                    raise ValueError(f"non-ground derived head: {head!r}")
                if head not in facts:
                    facts.add(head)
                    added = True
        if not added:
            return facts
    raise RuntimeError("fixpoint did not converge")


def _body_matches(body, facts):
    if not body:
        yield {}
        return
    lit, rest = body[0], body[1:]
    assert not lit.negated, "oracle handles definite clauses only"
    for fact in facts:
        subst = match_pattern(lit.term, fact)
        if subst is not None:
            for full in _body_matches(
                tuple(type(lit)(substitute(l.term, subst), l.negated) for l in rest),
                facts,
            ):
                yield {**subst, **full}


# ---------------------------------------------------------------------------
# Random policies.
# ---------------------------------------------------------------------------

SERVICE_POOL = ("s1", "s2", "s3", "s4")
LABEL_POOL = ("la", "lb", "lc", "ld", "le", "lf")


def random_policy(rng, max_rules: int = 10) -> CompiledPolicy:
    decls = []
    for name in SERVICE_POOL:
        if rng.random() < 0.25:
            continue  # leave some services undeclared
        endpoint = f"svc://{name}" if rng.random() < 0.7 else "svc://.+"
        creates = rng.sample(LABEL_POOL, rng.randint(0, 2))
        removes = rng.sample(
            [l for l in LABEL_POOL if l not in creates], rng.randint(0, 2)
        )
        decls.append(
            ServiceDecl(
                id=name,
                endpoint=endpoint,
                creates_labels=tuple(Atom(l) for l in creates),
                removes_labels=tuple(Atom(l) for l in removes),
            )
        )
    if not decls:
        decls.append(
            ServiceDecl(
                id=SERVICE_POOL[0],
                endpoint=f"svc://{SERVICE_POOL[0]}",
                creates_labels=(Atom(LABEL_POOL[0]),),
            )
        )
    rules = []
    for i in range(rng.randint(0, max_rules)):
        rules.append(
            FlowRule(
                name=f"r{i}",
                target=rng.choice(decls).id,
                trigger_labels=tuple(
                    Atom(l) for l in rng.sample(LABEL_POOL, rng.randint(1, 2))
                ),
                decision=Decision(rng.choice(("allow", "drop", "drop", "error"))),
            )
        )
    ast = PolicyAst(tuple(decls), tuple(rules))
    validate_policy(ast)
    return compile_policy(ast)


# ---------------------------------------------------------------------------
# Random acyclic routes (split branches are statement-disjoint).
# ---------------------------------------------------------------------------


def random_route(
    rng, name: str = "fuzz", max_statements: int = 10, max_choices: int = 3
) -> Route:
    endpoints = {s: f"svc://{s}" for s in SERVICE_POOL}
    numbers = count(1)
    stmts: dict = {}
    succ: dict = {}
    budget = {
        "stmts": rng.randint(2, max_statements),
        "choices": rng.randint(0, max_choices),
        "splits": rng.randint(0, 2),
    }

    def service_node():
        n = next(numbers)
        budget["stmts"] -= 1
        atom = rng.choice(SERVICE_POOL)
        stmts[n] = To(atom) if rng.random() < 0.7 else Bean(atom)
        return n, [n]

    def choice_block(depth):
        budget["choices"] -= 1
        budget["stmts"] -= 1  # the choice statement itself
        then_head, then_tails = sequence(depth + 1, limit=1)
        else_head, else_tails = sequence(depth + 1, limit=1)
        n = next(numbers)
        stmts[n] = Choice(Compound("eq", (Int(0), Int(0))), then_head, else_head)
        succ[n] = (then_head, else_head)
        return n, then_tails + else_tails

    def split_block(depth):
        budget["splits"] -= 1
        budget["stmts"] -= 2  # split + aggregate
        b1_head, b1_tails = sequence(depth + 1, limit=1)
        b2_head, b2_tails = sequence(depth + 1, limit=1)
        agg = next(numbers)
        stmts[agg] = Aggregate(Atom("concat"))
        for t in b1_tails + b2_tails:
            succ[t] = (agg,)
        n = next(numbers)
        stmts[n] = Split(Atom("parts"))
        succ[n] = (b1_head, b2_head)
        return n, [agg]

    def sequence(depth, limit=None):
        length = rng.randint(1, limit or 3)
        blocks = []
        for _ in range(length):
            r = rng.random()
            if (
                depth < 2
                and budget["choices"] > 0
                and budget["stmts"] >= 3
                and r < 0.35
            ):
                blocks.append(choice_block(depth))
            elif (
                depth < 2
                and budget["splits"] > 0
                and budget["stmts"] >= 4
                and r < 0.5
            ):
                blocks.append(split_block(depth))
            elif budget["stmts"] > 0:
                blocks.append(service_node())
            else:
                break
        if not blocks:
            blocks.append(service_node())
        for (_, tails), (head2, _) in zip(blocks, blocks[1:]):
            for t in tails:
                succ[t] = (head2,)
        return blocks[0][0], blocks[-1][1]

    entry = next(numbers)
    budget["stmts"] -= 1
    stmts[entry] = From(rng.choice(SERVICE_POOL))
    head, tails = sequence(0)
    succ[entry] = (head,)
    for t in tails:
        succ[t] = ()
    ordered = {n: stmts[n] for n in sorted(stmts)}
    route = Route(name, ordered, entry, succ, endpoints)
    validate_route(route)
    return route


def registry_for(route: Route) -> ServiceRegistry:
    services = ServiceRegistry()
    for atom in route.service_atoms():
        services.register(atom, echo_handler)
    return services


# ---------------------------------------------------------------------------
# Exhaustive dynamic oracle: run every choice valuation.
# ---------------------------------------------------------------------------


def exhaustive_outcomes(route: Route, policy, default_effect: str = "allow"):
    choice_nums = [
        n for n, s in route.statements.items() if isinstance(s, Choice)
    ]
    outcomes = []
    for bits in product((False, True), repeat=len(choice_nums)):
        outcomes.append(
            execute(
                route,
                policy,
                registry_for(route),
                choice_decisions=dict(zip(choice_nums, bits)),
                default_effect=default_effect,
            )
        )
    return outcomes


def dynamically_violates(route: Route, policy, default_effect: str = "allow") -> bool:
    return any(
        o.status != "completed"
        for o in exhaustive_outcomes(route, policy, default_effect)
    )
