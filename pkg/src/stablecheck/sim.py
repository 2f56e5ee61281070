"""Seeded Monte-Carlo runs over the concrete network semantics.

Time advances in 1-hour ticks.  Within an hour the protocol settles first
(scheduled expansions, contractions, round boundaries), then the market
trades, then the protocol settles again and one sample is recorded.  Every
transition taken is one returned by ``automaton.concrete_actions``; the
policy only chooses among them.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Tuple

from .automaton import ModelError, Network, TransitionLabel, concrete_actions, concrete_delay, concrete_initial
from .models import supply_var

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

EXPANSION_FIRED = "ExpansionFired"
CONTRACTION_FIRED = "ContractionFired"
SWAP_DECLINED = "SwapDeclined"

MAX_SETTLE_STEPS = 200


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def bernoulli(self, p) -> bool:
        """Exact comparison of a 64-bit draw against a rational probability."""
        p = Fraction(p)
        if p <= 0:
            return False
        if p >= 1:
            return True
        return self.next() * p.denominator < p.numerator << 64


def tick_stream(seed: int, hour: int) -> SplitMix64:
    """Independent generator for one hour, derived from (seed, hour)."""
    mixer = SplitMix64(seed ^ ((hour * GOLDEN) & MASK64))
    return SplitMix64(mixer.next())


@dataclass(frozen=True)
class Shock:
    start_hour: int
    duration: int
    buy_bias: Fraction

    def covers(self, hour):
        return self.start_hour <= hour < self.start_hour + self.duration


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    horizon_hours: int = 72
    trade_rate: Fraction = Fraction(1, 2)
    buy_bias: Fraction = Fraction(1, 2)
    shocks: Tuple[Shock, ...] = ()
    swap_prob: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "trade_rate", Fraction(self.trade_rate))
        object.__setattr__(self, "buy_bias", Fraction(self.buy_bias))
        object.__setattr__(self, "swap_prob", Fraction(self.swap_prob))
        object.__setattr__(self, "shocks", tuple(
            s if isinstance(s, Shock) else Shock(int(s[0]), int(s[1]), Fraction(s[2])) for s in self.shocks
        ))
        if self.horizon_hours < 0:
            raise ValueError("horizon must be non-negative")
        if self.trade_rate < 0:
            raise ValueError("trade_rate must be non-negative")
        for b in [self.buy_bias, self.swap_prob] + [s.buy_bias for s in self.shocks]:
            if not 0 <= b <= 1:
                raise ValueError("biases and probabilities must lie in [0, 1]")

    def bias_at(self, hour):
        for s in self.shocks:
            if s.covers(hour):
                return s.buy_bias
        return self.buy_bias


@dataclass(frozen=True)
class Sample:
    hour: int
    price_micro: int
    supply: int
    side: str


@dataclass
class Trajectory:
    samples: List[Sample] = field(default_factory=list)
    events: List[Tuple[int, str]] = field(default_factory=list)
    # (hour, label) for every transition fired, in order; delays are implicit hour boundaries
    steps: List[Tuple[int, TransitionLabel]] = field(default_factory=list)


def _update_fn(net, label):
    return [net.edge(ai, ei).update.fn for ai, ei in label.edges]


def _priority(net, label):
    if label.channel in ("expand", "contract"):
        return 1
    if label.channel == "update":
        return 2
    if any(net.edge(ai, ei).resets for ai, ei in label.edges):
        return 3
    return 0


class _Runner:
    def __init__(self, net: Network, cfg: SimConfig):
        self.net = net
        self.cfg = cfg
        self.supply = net.var_index(supply_var(net))
        self.price = net.var_index("price")
        self.x = net.automaton_index("X")
        self.state = concrete_initial(net)
        self.traj = Trajectory()
        self.sizes = self._trade_sizes()

    def _trade_sizes(self):
        sizes = set()
        for name in ("S", "B"):
            for e in self.net.automata[self.net.automaton_index(name)].edges:
                sizes.add(abs(e.update.args[0]))
        return sorted(sizes)

    def fire(self, hour, nxt, label):
        before = self.state.vars[self.supply]
        after = nxt.vars[self.supply]
        self.state = nxt
        self.traj.steps.append((hour, label))
        if after > before:
            self._event(hour, EXPANSION_FIRED)
        elif after < before:
            self._event(hour, CONTRACTION_FIRED)
        if "bac_decline_swap" in _update_fn(self.net, label):
            self._event(hour, SWAP_DECLINED)

    def _event(self, hour, kind):
        if not self.traj.events or self.traj.events[-1] != (hour, kind):
            self.traj.events.append((hour, kind))

    def settle(self, hour, rng):
        for _ in range(MAX_SETTLE_STEPS):
            options = [(n, l) for n, l in concrete_actions(self.net, self.state) if l.channel != "trade"]
            if not options:
                return
            fns = [_update_fn(self.net, l) for _, l in options]
            declines = [i for i, f in enumerate(fns) if "bac_decline_swap" in f]
            swaps = [i for i, f in enumerate(fns) if "bac_swap_burn" in f]
            if declines and swaps:
                pick = swaps[0] if rng.bernoulli(self.cfg.swap_prob) else declines[0]
                self.fire(hour, *options[pick])
                continue
            nxt, label = min(options, key=lambda o: _priority(self.net, o[1]))
            self.fire(hour, nxt, label)
        raise ModelError(f"protocol did not settle within {MAX_SETTLE_STEPS} steps at hour {hour}")

    def trade(self, hour, rng):
        rate = min(self.cfg.trade_rate, Fraction(1))
        bias = self.cfg.bias_at(hour)
        for size in self.sizes:
            if not rng.bernoulli(rate):
                continue
            signed = size if rng.bernoulli(bias) else -size
            trader = "B" if signed > 0 else "S"
            ti = self.net.automaton_index(trader)
            for nxt, label in concrete_actions(self.net, self.state):
                if label.channel != "trade" or label.edges[0][0] != ti:
                    continue
                if self.net.edge(*label.edges[0]).update.args[0] == signed:
                    self.fire(hour, nxt, label)
                    break

    def sample(self, hour):
        s = self.state
        side = self.net.loc_name(self.x, s.locs[self.x])
        self.traj.samples.append(Sample(hour, s.vars[self.price], s.vars[self.supply], side))

    def run(self):
        for hour in range(self.cfg.horizon_hours):
            if hour > 0:
                waited = concrete_delay(self.net, self.state, 1)
                if waited is None:
                    raise ModelError(f"time cannot advance past hour {hour - 1}; raise the model's round bound")
                self.state = waited
            rng = tick_stream(self.cfg.seed, hour)
            self.settle(hour, rng)
            self.trade(hour, rng)
            self.settle(hour, rng)
            self.sample(hour)
        return self.traj


def run(net: Network, cfg: SimConfig) -> Trajectory:
    """Simulate ``net`` for ``cfg.horizon_hours`` hours; deterministic in (net, cfg)."""
    return _Runner(net, cfg).run()


# ---------------------------------------------------------------- output


def format_micro(n: int) -> str:
    sign = "-" if n < 0 else ""
    n = abs(n)
    return f"{sign}{n // 10**6}.{n % 10**6:06d}"


def export_csv(t: Trajectory) -> bytes:
    buf = io.StringIO(newline="")
    buf.write("hour,price,supply,side\n")
    for s in t.samples:
        buf.write(f"{s.hour},{format_micro(s.price_micro)},{s.supply},{s.side}\n")
    return buf.getvalue().encode("ascii")


def trajectory_to_dict(net: Network, t: Trajectory) -> dict:
    return {
        "samples": [
            {"hour": s.hour, "price": format_micro(s.price_micro), "supply": s.supply, "side": s.side}
            for s in t.samples
        ],
        "events": [{"hour": h, "kind": k} for h, k in t.events],
        "steps": [
            {
                "hour": h,
                "automata_fired": [
                    {"automaton": net.automata[ai].name, "edge": ei} for ai, ei in label.edges
                ],
                "channel": label.channel,
                "var_deltas": dict(label.deltas),
            }
            for h, label in t.steps
        ],
    }


def trajectory_to_json(net: Network, t: Trajectory) -> str:
    return json.dumps(trajectory_to_dict(net, t), indent=2, sort_keys=True) + "\n"
