"""Simulate BAC with and without a buy-side shock and classify the supply episodes.

    python3 scripts/broken_expansion_demo.py [--seeds N]
"""

import argparse
from collections import Counter
from fractions import Fraction

from stablecheck import empirics, models, sim
from stablecheck.cli import sim_base_config

SCENARIOS = {
    "shock": dict(buy_bias=Fraction(2, 5), shocks=((24, 10, Fraction(9, 10)),)),
    "sell-drift": dict(buy_bias=Fraction(2, 5)),
    "neutral": dict(buy_bias=Fraction(1, 2)),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--horizon", type=int, default=72)
    args = ap.parse_args()

    kind = models.StablecoinKind.BacSeigniorage
    cfg = sim_base_config(kind, args.horizon)
    net = models.build_bac(models.BacConfig(**{**cfg.__dict__, "pool_quote": 1350}))
    for name, extra in SCENARIOS.items():
        counts = Counter()
        for seed in range(args.seeds):
            traj = sim.run(net, sim.SimConfig(seed=seed, horizon_hours=args.horizon, **extra))
            series = empirics.ingest_csv(sim.export_csv(traj))
            counts.update(e.kind for e in empirics.detect_episodes(series))
        print(f"{name:10s} " + " ".join(f"{k}={v}" for k, v in sorted(counts.items())))


if __name__ == "__main__":
    main()
