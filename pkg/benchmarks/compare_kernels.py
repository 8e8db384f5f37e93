#!/usr/bin/env python3
"""Compare the compiled unification kernel against the pure-Python fallback.

Runs the same workloads twice in subprocesses — once as installed (compiled
kernel if the extension built) and once with LABELFLOW_PURE=1 — and prints a
side-by-side timing table.

Usage: python3 benchmarks/compare_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def workloads():
    import random

    from labelflow import kernel
    from labelflow.engine import KnowledgeBase, parse_program, parse_query, solve
    from labelflow.pdp import bench_request, decide, worst_case_policy
    from labelflow.terms import Atom, Compound, Int, Var

    def unify_microbench():
        rng = random.Random(0)

        def deep(n, leaf):
            t = leaf
            for _ in range(n):
                t = Compound("f", (t, Int(rng.randint(0, 9))))
            return t

        pairs = [
            (deep(60, Var(f"X{i}")), deep(60, Atom("leaf"))) for i in range(200)
        ]
        for a, b in pairs:
            kernel.unify(a, b)

    def engine_closure():
        facts = "\n".join(f"edge(n{i}, n{i + 1})." for i in range(120))
        kb = KnowledgeBase(
            parse_program(
                facts
                + """
                path(X, Y) :- edge(X, Y).
                path(X, Z) :- edge(X, Y), path(Y, Z).
                """
            )
        )
        list(solve(kb, parse_query("path(n0, Y)")))

    def pdp_decisions():
        policy = worst_case_policy(500)
        req = bench_request(20)
        for _ in range(50):
            decide(policy, req)

    return [
        ("unify deep terms", unify_microbench),
        ("transitive closure", engine_closure),
        ("pdp decisions", pdp_decisions),
    ]


def run_workloads(repeat: int) -> dict:
    from labelflow import kernel

    results = {"kernel": kernel.IMPLEMENTATION, "timings": {}}
    for name, fn in workloads():
        fn()  # warm up
        best = min(_timed(fn) for _ in range(repeat))
        results["timings"][name] = best
    return results


def _timed(fn) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def spawn(pure: bool, repeat: int) -> dict:
    env = dict(os.environ)
    env.pop("LABELFLOW_PURE", None)
    if pure:
        env["LABELFLOW_PURE"] = "1"
    out = subprocess.run(
        [sys.executable, __file__, "--workload", "--repeat", str(repeat)],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    return json.loads(out.stdout)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--workload", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()
    if args.workload:
        print(json.dumps(run_workloads(args.repeat)))
        return 0
    default = spawn(pure=False, repeat=args.repeat)
    pure = spawn(pure=True, repeat=args.repeat)
    print(f"default kernel: {default['kernel']}   fallback: {pure['kernel']}")
    if default["kernel"] == pure["kernel"]:
        print("note: extension not built; both runs used the pure kernel")
    width = max(len(n) for n in default["timings"])
    print(f"{'workload'.ljust(width)}  {'default':>10}  {'pure':>10}  speedup")
    for name, t_default in default["timings"].items():
        t_pure = pure["timings"][name]
        print(
            f"{name.ljust(width)}  {t_default * 1e3:>8.2f}ms  "
            f"{t_pure * 1e3:>8.2f}ms  {t_pure / t_default:>6.2f}x"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
