"""Policy decision point: from (target service, label set) to a decision.

A rule matches when its target service covers the request's endpoint URL or
service id and every trigger label is a member of the request's labels,
membership up to unification (trigger ``merge(X)`` matches label
``merge(10)``). The effects of all matched rules fold under the
restrictiveness order error > drop > allow; obligations concatenate in rule
declaration order. With no match the default effect applies (allow, unless
a default-deny deployment flips it to drop).

Requests pre-index their labels by functor/arity so decision time depends
on the number of rules, not on the number of labels.
"""

from __future__ import annotations

import gc
import time
import tracemalloc
from dataclasses import dataclass, field
from statistics import mean

from . import kernel
from .policy import Decision, FlowRule, PolicyAst, ServiceDecl
from .policy_compiler import CompiledPolicy, compile_policy, service_matches
from .terms import Atom, Compound, Term, functor_arity

_SEVERITY = {"allow": 0, "drop": 1, "error": 2}


def most_restrictive(effects) -> str:
    """Fold effects under error > drop > allow; empty folds to allow."""
    best = "allow"
    for e in effects:
        if _SEVERITY[e] > _SEVERITY[best]:
            best = e
    return best


def apply_label_transform(labels: frozenset, removes, creates) -> frozenset:
    """The per-service taint step: remove matching labels, then add new ones.

    Removal is by unification so a pattern like ``classification(X)`` strips
    every classification label. Shared by the runtime and the verifier.
    """
    kept = [
        l
        for l in labels
        if not any(kernel.unify(l, r) is not None for r in removes)
    ]
    return frozenset(kept) | frozenset(creates)


class _LabelIndex:
    """Labels bucketed by functor/arity, with an exact set for ground probes."""

    def __init__(self, labels):
        self.exact = frozenset(labels)
        self.buckets: dict[tuple[str, int], list] = {}
        for l in labels:
            try:
                self.buckets.setdefault(functor_arity(l), []).append(l)
            except TypeError:
                self.buckets.setdefault(("", -1), []).append(l)

    def contains(self, trigger: Term) -> bool:
        if kernel.is_ground(trigger):
            if trigger in self.exact:
                return True
        try:
            bucket = self.buckets.get(functor_arity(trigger), ())
        except TypeError:
            bucket = ()
        return any(kernel.unify(trigger, l) is not None for l in bucket)


@dataclass(frozen=True)
class DecisionRequest:
    endpoint_url_or_service_id: str
    labels: frozenset
    message_ref: Term | None = None
    service_id: str | None = None  # set when both a URL and an id are known
    label_index: _LabelIndex = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.endpoint_url_or_service_id:
            raise ValueError("decision request needs a target")
        object.__setattr__(self, "labels", frozenset(self.labels))
        object.__setattr__(self, "label_index", _LabelIndex(self.labels))


@dataclass(frozen=True)
class BoundObligation:
    action: Term  # with the ``message`` variable bound, when a ref was given
    otherwise: str
    rule: str


@dataclass(frozen=True)
class DecisionResult:
    effect: str
    obligations: tuple = ()  # BoundObligation, rule declaration order
    matched_rules: tuple = ()
    effect_rule: str | None = None  # first matched rule with the folded effect


def rule_matches(policy: CompiledPolicy, rule: FlowRule, req: DecisionRequest) -> bool:
    if not service_matches(policy, rule.target, req.endpoint_url_or_service_id):
        if req.service_id is None or not service_matches(
            policy, rule.target, req.service_id
        ):
            return False
    return all(req.label_index.contains(t) for t in rule.trigger_labels)


def _bind_message(action: Term, ref: Term | None) -> Term:
    if ref is None:
        return action
    if isinstance(action, Atom):
        return ref if action.name == "message" else action
    if isinstance(action, Compound):
        return Compound(
            action.functor, tuple(_bind_message(a, ref) for a in action.args)
        )
    return action


def decide(
    policy: CompiledPolicy, req: DecisionRequest, default_effect: str = "allow"
) -> DecisionResult:
    """Total decision function; identical inputs give identical results."""
    matched: list[str] = []
    effects: list[str] = []
    obligations: list = []
    for name, rule in policy.rule_index.items():
        if rule_matches(policy, rule, req):
            matched.append(name)
            effects.append(rule.decision.effect)
            for ob in rule.decision.obligations:
                obligations.append(
                    BoundObligation(
                        _bind_message(ob.action, req.message_ref), ob.otherwise, name
                    )
                )
    if not matched:
        return DecisionResult(default_effect)
    effect = most_restrictive(effects)
    effect_rule = matched[effects.index(effect)]
    return DecisionResult(effect, tuple(obligations), tuple(matched), effect_rule)


# ---------------------------------------------------------------------------
# Benchmark harness.
# ---------------------------------------------------------------------------

BENCH_URL = "https://probe.example/ingest"
BENCH_CSV_HEADER = "n_rules,n_labels,mean_us,p95_us,mem_bytes"


@dataclass(frozen=True)
class BenchRow:
    n_rules: int
    n_labels: int
    mean_us: float
    p95_us: float
    mem_bytes: int

    def csv(self) -> str:
        return (
            f"{self.n_rules},{self.n_labels},"
            f"{self.mean_us:.3f},{self.p95_us:.3f},{self.mem_bytes}"
        )


def worst_case_policy(n_rules: int) -> CompiledPolicy:
    """Policy where every rule matches the probed service and its labels.

    Each rule targets the probe endpoint and triggers on a label the bench
    request always carries, so a decision must evaluate every single rule.
    """
    services = (ServiceDecl(id="probe", endpoint="http[s]?://probe\\.example/.+"),)
    rules = tuple(
        FlowRule(
            name=f"bench_rule_{i}",
            target="probe",
            trigger_labels=(Atom("bench_label"),),
            decision=Decision("drop"),
        )
        for i in range(n_rules)
    )
    return compile_policy(PolicyAst(services, rules))


def bench_request(n_labels: int) -> DecisionRequest:
    labels = [Atom("bench_label")]
    labels += [Compound("filler", (Atom(f"l{i}"),)) for i in range(n_labels - 1)]
    return DecisionRequest(BENCH_URL, frozenset(labels))


def bench_decide(
    policy_sizes, label_counts, trials: int = 20
) -> list[BenchRow]:
    """Worst-case decision timings and peak incremental memory.

    One row per (rules, labels) pair. Timing and memory are measured in
    separate passes since tracemalloc skews wall-clock numbers.
    """
    rows = []
    for n_rules in policy_sizes:
        policy = worst_case_policy(n_rules)
        for n_labels in label_counts:
            req = bench_request(n_labels)
            decide(policy, req)  # warm caches
            samples = []
            gc_was_enabled = gc.isenabled()
            gc.disable()  # collector pauses would swamp the short timings
            try:
                for _ in range(trials):
                    # Best of three shields the sample from scheduler spikes.
                    best = float("inf")
                    for _ in range(3):
                        t0 = time.perf_counter()
                        decide(policy, req)
                        best = min(best, time.perf_counter() - t0)
                    samples.append(best * 1e6)
            finally:
                if gc_was_enabled:
                    gc.enable()
            samples.sort()
            p95 = samples[min(len(samples) - 1, int(0.95 * len(samples)))]
            tracemalloc.start()
            tracemalloc.reset_peak()
            before = tracemalloc.get_traced_memory()[0]
            decide(policy, req)
            peak = tracemalloc.get_traced_memory()[1]
            tracemalloc.stop()
            rows.append(
                BenchRow(n_rules, n_labels, mean(samples), p95, max(0, peak - before))
            )
    return rows


def bench_csv(rows) -> str:
    return "\n".join([BENCH_CSV_HEADER] + [r.csv() for r in rows]) + "\n"


def linear_fit_r2(xs, ys) -> float:
    """Coefficient of determination of the least-squares line through points."""
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    if sxx == 0:
        return 1.0
    slope = sxy / sxx
    intercept = my - slope * mx
    ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    ss_tot = sum((y - my) ** 2 for y in ys)
    if ss_tot == 0:
        return 1.0
    return 1.0 - ss_res / ss_tot
