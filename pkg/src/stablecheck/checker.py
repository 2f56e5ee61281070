"""Zone-graph reachability for AG safety properties, with replayable traces."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Tuple

from . import zone as zn
from .automaton import (
    ConcreteState,
    Network,
    TransitionLabel,
    concrete_actions,
    concrete_delay,
    concrete_initial,
    has_diagonal_constraints,
    initial_state,
    max_clock_constant,
    successors,
)
from .expr import And, Const, Implies, LocAtom, Not, Or, VarAtom, OPS, parse_formula


class StateSpaceBound(RuntimeError):
    pass


class IllegalStep(RuntimeError):
    def __init__(self, index, reason=""):
        super().__init__(f"trace step {index} is not a legal successor{': ' + reason if reason else ''}")
        self.index = index


@dataclass(frozen=True)
class Property:
    name: str
    body: object
    quantifier: str = "AG"

    def __post_init__(self):
        if self.quantifier != "AG":
            raise ValueError("only AG properties are supported")

    def __str__(self):
        return f"A[] {self.body}"

    @classmethod
    def parse(cls, name, text):
        return cls(name, parse_formula(text))


def evaluate(net: Network, formula, locs, vals) -> bool:
    """Evaluate a state formula on a (locations, variables) pair."""
    if isinstance(formula, Const):
        return formula.value
    if isinstance(formula, LocAtom):
        ai = net.automaton_index(formula.automaton)
        return net.loc_name(ai, locs[ai]) == formula.location
    if isinstance(formula, VarAtom):
        return OPS[formula.op](vals[net.var_index(formula.var)], formula.value)
    if isinstance(formula, Not):
        return not evaluate(net, formula.arg, locs, vals)
    if isinstance(formula, And):
        return all(evaluate(net, a, locs, vals) for a in formula.args)
    if isinstance(formula, Or):
        return any(evaluate(net, a, locs, vals) for a in formula.args)
    if isinstance(formula, Implies):
        return not evaluate(net, formula.lhs, locs, vals) or evaluate(net, formula.rhs, locs, vals)
    raise TypeError(f"not a state formula: {formula!r}")


def is_constant(formula) -> bool:
    """True when the formula mentions no location or variable atom."""
    if isinstance(formula, Const):
        return True
    if isinstance(formula, Not):
        return is_constant(formula.arg)
    if isinstance(formula, (And, Or)):
        return all(is_constant(a) for a in formula.args)
    if isinstance(formula, Implies):
        return is_constant(formula.lhs) and is_constant(formula.rhs)
    return False


def resolve(net: Network, formula) -> list:
    """Names in ``formula`` that do not exist in ``net``."""
    problems = []
    if isinstance(formula, LocAtom):
        try:
            ai = net.automaton_index(formula.automaton)
            net.automata[ai].location_index(formula.location)
        except KeyError as exc:
            problems.append(str(exc.args[0]))
    elif isinstance(formula, VarAtom):
        if formula.var not in net.var_names:
            problems.append(f"no variable named {formula.var!r}")
    elif isinstance(formula, Not):
        problems += resolve(net, formula.arg)
    elif isinstance(formula, (And, Or)):
        for a in formula.args:
            problems += resolve(net, a)
    elif isinstance(formula, Implies):
        problems += resolve(net, formula.lhs) + resolve(net, formula.rhs)
    return problems


# ---------------------------------------------------------------- traces


@dataclass(frozen=True)
class TraceStep:
    label: TransitionLabel
    delay: Fraction  # time spent in the previous state before this transition
    locs: Tuple[int, ...]
    vars: Tuple[int, ...]


@dataclass(frozen=True)
class Trace:
    steps: Tuple[TraceStep, ...]
    initial_locs: Tuple[int, ...]
    initial_vars: Tuple[int, ...]

    def __len__(self):
        return len(self.steps)

    @property
    def final(self):
        if self.steps:
            return self.steps[-1].locs, self.steps[-1].vars
        return self.initial_locs, self.initial_vars


@dataclass(frozen=True)
class CheckResult:
    verdict: str  # "verified" | "counterexample"
    states_explored: int
    trace: Optional[Trace] = None
    prop: Optional[Property] = None

    @property
    def verified(self):
        return self.verdict == "verified"


def _label_json(net, label):
    fired = []
    for ai, ei in label.edges:
        e = net.edge(ai, ei)
        fired.append({
            "automaton": net.automata[ai].name,
            "edge": ei,
            "from": e.source,
            "to": e.target,
        })
    return fired


def _fraction_text(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def trace_to_dict(net: Network, result: CheckResult) -> dict:
    out = {
        "property": result.prop.name if result.prop else None,
        "formula": str(result.prop) if result.prop else None,
        "verdict": result.verdict,
        "states_explored": result.states_explored,
    }
    t = result.trace
    if t is not None:
        out["initial"] = {
            "locations": net.describe_locs(t.initial_locs),
            "vars": net.describe_vars(t.initial_vars),
        }
        out["steps"] = [
            {
                "automata_fired": _label_json(net, s.label),
                "channel": s.label.channel,
                "var_deltas": dict(s.label.deltas),
                "delay": _fraction_text(s.delay),
                "locations": net.describe_locs(s.locs),
                "vars": net.describe_vars(s.vars),
            }
            for s in t.steps
        ]
    return out


def trace_to_json(net: Network, result: CheckResult) -> str:
    return json.dumps(trace_to_dict(net, result), indent=2, sort_keys=True) + "\n"


def trace_from_dict(net: Network, data: dict) -> Trace:
    """Rebuild a Trace from its JSON form (as written by ``trace_to_json``)."""

    def locs_of(d):
        return tuple(net.automata[i].location_index(d[a.name]) for i, a in enumerate(net.automata))

    def vars_of(d):
        return tuple(int(d[n]) for n in net.var_names)

    steps = []
    for s in data.get("steps", []):
        edges = tuple((net.automaton_index(f["automaton"]), int(f["edge"])) for f in s["automata_fired"])
        order = {n: i for i, n in enumerate(net.var_names)}
        deltas = tuple(sorted(((k, int(v)) for k, v in s["var_deltas"].items()), key=lambda kv: order[kv[0]]))
        label = TransitionLabel(edges, s.get("channel"), deltas)
        steps.append(TraceStep(label, Fraction(s.get("delay", "0")), locs_of(s["locations"]), vars_of(s["vars"])))
    init = data.get("initial")
    if init is not None:
        il, iv = locs_of(init["locations"]), vars_of(init["vars"])
    else:
        s0 = initial_state(net)
        il, iv = s0.locs, s0.vars
    return Trace(tuple(steps), il, iv)


# ---------------------------------------------------------------- search


def _bfs(net, prop, max_states, max_depth, subsumption=True):
    s0 = initial_state(net)
    violated = (lambda s: not evaluate(net, prop.body, s.locs, s.vars)) if prop else (lambda s: False)
    nodes = [(s0, -1, None)]  # state, parent index, label
    depth = [0]
    passed = {s0.key: [(s0.zone, 0)]}  # key -> [(zone, node index)]
    stale = set()
    if violated(s0):
        return "counterexample", 0, nodes, 0, passed
    queue = deque([0])
    explored = 0
    cut = False
    while queue:
        idx = queue.popleft()
        if idx in stale:
            continue
        explored += 1
        if explored > max_states:
            raise StateSpaceBound(f"explored more than {max_states} symbolic states")
        if depth[idx] >= max_depth:
            cut = True
            continue
        state = nodes[idx][0]
        d = depth[idx] + 1
        for nxt, label in successors(net, state):
            entries = passed.setdefault(nxt.key, [])
            if subsumption:
                if any(zn.includes(z, nxt.zone) for z, _ in entries):
                    continue
                keep = []
                for z, i in entries:
                    if zn.includes(nxt.zone, z):
                        # drop a queued node only if its replacement is no deeper,
                        # which keeps counter-examples shortest
                        if depth[i] >= d:
                            stale.add(i)
                    else:
                        keep.append((z, i))
                entries[:] = keep
            elif any(z == nxt.zone for z, _ in entries):
                continue
            nodes.append((nxt, idx, label))
            depth.append(d)
            entries.append((nxt.zone, len(nodes) - 1))
            if violated(nxt):
                return "counterexample", explored, nodes, len(nodes) - 1, passed
            queue.append(len(nodes) - 1)
    if cut:
        raise StateSpaceBound(f"depth bound {max_depth} reached without a verdict")
    return "verified", explored, nodes, None, passed


def _path(nodes, idx):
    path = []
    while idx > 0:
        state, parent, label = nodes[idx]
        path.append((label, state))
        idx = parent
    path.reverse()
    return path


def check(net: Network, prop: Property, max_states: int = 1_000_000, max_depth: int = 10_000,
          subsumption: bool = True) -> CheckResult:
    """Decide AG(prop.body) by breadth-first zone-graph search.

    Returns a counter-example with a minimum number of transitions when the
    body can be falsified.  Raises StateSpaceBound when a limit cuts the
    search short.
    """
    missing = resolve(net, prop.body)
    if missing:
        raise ValueError("property does not resolve: " + "; ".join(missing))
    if is_constant(prop.body) and evaluate(net, prop.body, (), ()):
        return CheckResult("verified", 0, None, prop)  # holds in every state, nothing to explore
    verdict, explored, nodes, bad, _ = _bfs(net, prop, max_states, max_depth, subsumption)
    if verdict == "verified":
        return CheckResult("verified", explored, None, prop)
    labels = [label for label, _ in _path(nodes, bad)]
    trace = build_trace(net, labels)
    final = replay(net, trace)
    if evaluate(net, prop.body, final.locs, final.vars):
        raise AssertionError("counter-example does not falsify the property")
    return CheckResult("counterexample", explored, trace, prop)


def reachable_keys(net: Network, max_states: int = 1_000_000) -> set:
    """All reachable (locations, variables) pairs under the zone semantics."""
    _, _, nodes, _, passed = _bfs(net, None, max_states, 10**9)
    return set(passed)


# ---------------------------------------------------------------- replay


def replay(net: Network, trace: Trace):
    """Re-execute a trace symbolically from the initial state and return the final SymState."""
    state = initial_state(net)
    if (state.locs, state.vars) != (trace.initial_locs, trace.initial_vars):
        raise IllegalStep(0, "initial state does not match the model")
    for i, step in enumerate(trace.steps):
        for nxt, label in successors(net, state):
            if label == step.label and nxt.locs == step.locs and nxt.vars == step.vars:
                state = nxt
                break
        else:
            raise IllegalStep(i)
    return state


def replay_concrete(net: Network, trace: Trace) -> ConcreteState:
    """Re-execute a trace with its delay witnesses on a concrete clock valuation."""
    s = concrete_initial(net)
    s = ConcreteState(s.locs, s.vars, tuple(Fraction(c) for c in s.clocks))
    for i, step in enumerate(trace.steps):
        delayed = concrete_delay(net, s, step.delay)
        if delayed is None:
            raise IllegalStep(i, f"delay {step.delay} violates an invariant")
        for nxt, label in concrete_actions(net, delayed):
            if label == step.label and nxt.locs == step.locs and nxt.vars == step.vars:
                s = nxt
                break
        else:
            raise IllegalStep(i, "transition not enabled at the witnessed clock values")
    return s


# ---------------------------------------------------------------- delay witnesses


def _history_zone(net: Network, labels):
    """Zone over the model clocks plus one history clock per transition.

    History clock ``h_0`` is never reset; ``h_k`` is reset by transition k, so
    ``h_{k-1} - h_k`` is the time spent between transitions k-1 and k.
    """
    comp = net.compiled
    n = len(net.clock_names)
    dim = n + 1 + len(labels) + 1
    invs = comp["invariants"]
    edges = comp["edges"]

    def inv_of(locs):
        return [c for ai, li in enumerate(locs) for c in invs[ai][li]]

    locs = tuple(a.location_index(a.initial) for a in net.automata)
    z = zn.point(tuple(comp["initial_clocks"]) + (0,) * (len(labels) + 1))
    z = zn.constrain_all(z, inv_of(locs))
    z = zn.constrain_all(zn.up(z), inv_of(locs))
    for k, label in enumerate(labels, start=1):
        combo = [edges[ai][ei] for ai, ei in label.edges]
        for ce in combo:
            z = zn.constrain_all(z, ce.clock_guard)
        resets = {n + 1 + k}
        for ce in combo:
            resets |= ce.resets
        if zn.is_empty(z):
            raise IllegalStep(k - 1, "clock guard unsatisfiable along the path")
        z = zn.reset(z, resets)
        new_locs = list(locs)
        for ce in combo:
            new_locs[ce.aut] = ce.target
        locs = tuple(new_locs)
        z = zn.constrain_all(z, inv_of(locs))
        if zn.is_empty(z):
            raise IllegalStep(k - 1, "target invariant unsatisfiable along the path")
        if k < len(labels):
            z = zn.constrain_all(zn.up(z), inv_of(locs))
    return z, n


def _rational_point(z: zn.Zone):
    """Pick one valuation from a canonical non-empty zone, preferring integers."""
    dim = z.dim
    m = [[None] * dim for _ in range(dim)]
    for i in range(dim):
        for j in range(dim):
            b = z[i, j]
            m[i][j] = None if b == zn.INF else (Fraction(b >> 1), not (b & 1))

    def add(a, b):
        if a is None or b is None:
            return None
        return (a[0] + b[0], a[1] or b[1])

    def tighter(a, b):  # is a strictly tighter than b
        if b is None:
            return a is not None
        if a is None:
            return False
        return a[0] < b[0] or (a[0] == b[0] and a[1] and not b[1])

    def tighten(i, j, b):
        if not tighter(b, m[i][j]):
            return
        m[i][j] = b
        for k in range(dim):
            for l in range(dim):
                cand = add(add(m[k][i], b), m[j][l])
                if tighter(cand, m[k][l]):
                    m[k][l] = cand

    values = [Fraction(0)] * dim
    for x in range(1, dim):
        lo_b = m[0][x]  # 0 - x <| c  ->  x >= -c
        hi_b = m[x][0]
        lo, lo_strict = -lo_b[0], lo_b[1]
        if hi_b is None:
            v = lo + 1 if lo_strict else lo
            v = Fraction(int(v)) if v.denominator == 1 else v
        else:
            hi, hi_strict = hi_b
            v = None
            c = lo.__ceil__()
            for cand in (c, c + 1):
                ok_lo = cand > lo if lo_strict else cand >= lo
                ok_hi = cand < hi if hi_strict else cand <= hi
                if ok_lo and ok_hi:
                    v = Fraction(cand)
                    break
            if v is None:
                v = (lo + hi) / 2 if (lo_strict or hi_strict) else lo
        values[x] = v
        tighten(x, 0, (v, False))
        tighten(0, x, (-v, False))
    return values


def build_trace(net: Network, labels) -> Trace:
    """Attach concrete delays and intermediate states to a list of transition labels."""
    s0 = initial_state(net)
    if not labels:
        return Trace((), s0.locs, s0.vars)
    z, n = _history_zone(net, labels)
    vals = _rational_point(z)
    hist = vals[n + 1:]
    delays = [hist[k - 1] - hist[k] for k in range(1, len(hist))]
    steps = []
    state = s0
    for label, delay in zip(labels, delays):
        for nxt, lab in successors(net, state):
            if lab == label:
                state = nxt
                break
        else:
            raise IllegalStep(len(steps))
        steps.append(TraceStep(label, delay, state.locs, state.vars))
    trace = Trace(tuple(steps), s0.locs, s0.vars)
    replay_concrete(net, trace)
    return trace


# ---------------------------------------------------------------- discrete oracle


def _discrete_bfs(net, prop, tick_bound, max_states):
    if has_diagonal_constraints(net):
        raise ValueError("the discrete oracle does not support diagonal clock constraints")
    if tick_bound is None:
        tick_bound = max_clock_constant(net) + 1
    if tick_bound <= max_clock_constant(net):
        raise ValueError("tick_bound must exceed every clock constant in the model")

    def cap(s):
        return ConcreteState(s.locs, s.vars, tuple(min(c, tick_bound) for c in s.clocks))

    s0 = cap(concrete_initial(net))
    violated = (lambda s: not evaluate(net, prop.body, s.locs, s.vars)) if prop else (lambda s: False)
    nodes = [(s0, -1, None)]
    seen = {s0}
    if violated(s0):
        return "counterexample", 0, nodes, 0, seen
    queue = deque([0])
    explored = 0
    while queue:
        idx = queue.popleft()
        explored += 1
        if explored > max_states:
            raise StateSpaceBound(f"discrete oracle explored more than {max_states} states")
        s = nodes[idx][0]
        moves = [(nxt, lab) for nxt, lab in concrete_actions(net, s)]
        waited = concrete_delay(net, s, 1)
        if waited is not None:
            moves.append((waited, "tick"))
        for nxt, lab in moves:
            nxt = cap(nxt)
            if nxt in seen:
                continue
            seen.add(nxt)
            nodes.append((nxt, idx, lab))
            if lab != "tick" and violated(nxt):
                return "counterexample", explored, nodes, len(nodes) - 1, seen
            queue.append(len(nodes) - 1)
    return "verified", explored, nodes, None, seen


def check_discrete_oracle(net: Network, prop: Property, tick_bound: int = None,
                          max_states: int = 5_000_000) -> CheckResult:
    """Brute-force check in discrete time: unit delays, clocks saturated at ``tick_bound``.

    Only meaningful as a cross-check for models whose clock guards are all
    closed, where integer-time and dense-time reachability of (locations,
    variables) coincide.
    """
    verdict, explored, nodes, bad, _ = _discrete_bfs(net, prop, tick_bound, max_states)
    if verdict == "verified":
        return CheckResult("verified", explored, None, prop)
    steps = []
    pending = Fraction(0)
    idx = bad
    chain = []
    while idx > 0:
        s, parent, lab = nodes[idx]
        chain.append((s, lab))
        idx = parent
    chain.reverse()
    for s, lab in chain:
        if lab == "tick":
            pending += 1
            continue
        steps.append(TraceStep(lab, pending, s.locs, s.vars))
        pending = Fraction(0)
    s0 = nodes[0][0]
    return CheckResult("counterexample", explored, Trace(tuple(steps), s0.locs, s0.vars), prop)


def reachable_keys_discrete(net: Network, tick_bound: int = None, max_states: int = 5_000_000) -> set:
    _, _, _, _, seen = _discrete_bfs(net, None, tick_bound, max_states)
    return {s.key for s in seen}
