"""Check the standard properties of every builtin model and print verdicts and traces.

    python3 scripts/reproduce_counterexamples.py [--calm] [--out DIR]
"""

import argparse
import time
from pathlib import Path

from stablecheck import checker, models


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--calm", action="store_true", help="disable market trades (trade_sizes=0)")
    ap.add_argument("--out", type=Path, help="directory for trace JSON files")
    args = ap.parse_args()
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)

    for kind, (build, cfg_cls) in models.BUILDERS.items():
        net = build(cfg_cls(trade_sizes=(0,)) if args.calm else cfg_cls())
        for prop in models.standard_properties(kind):
            t0 = time.perf_counter()
            r = checker.check(net, prop)
            secs = time.perf_counter() - t0
            print(f"{kind.value:5s} {prop.name:24s} {r.verdict:15s} states={r.states_explored:7d} {secs:6.2f}s")
            if r.trace is None:
                continue
            for i, step in enumerate(r.trace.steps):
                fired = "+".join(net.automata[a].name for a, _ in step.label.edges)
                print(f"      {i:2d} delay={step.delay!s:>6s} {fired:6s} {step.label.channel or '-':9s}"
                      f" {dict(step.label.deltas)}")
            print(f"      final: {net.describe_locs(r.trace.final[0])}")
            if args.out:
                (args.out / f"{kind.value}-{prop.name}.json").write_text(checker.trace_to_json(net, r))


if __name__ == "__main__":
    main()
