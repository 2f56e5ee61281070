"""Networks of timed automata with handshake channels and bounded integer variables.

Two independent semantics live here:

* ``initial_state`` / ``successors`` work on symbolic states whose clock part
  is a zone (delay-closed, as stored by the checker);
* ``concrete_initial`` / ``concrete_actions`` / ``concrete_delay`` work on a
  single numeric clock valuation.  They never touch the zone code and back
  the discrete-time oracle, the simulator and timing validation of traces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

from . import zone as zn
from .expr import OPS, Atom, parse_atoms

CHANNEL_NAMES = ("expand", "contract", "trade", "update")
EMIT, RECEIVE = "!", "?"


class ModelError(ValueError):
    pass


class InvariantEmpty(ModelError):
    pass


class UpdateOutOfRange(ModelError):
    def __init__(self, var, value, lo, hi, edge=""):
        super().__init__(f"update {edge} sets {var}={value} outside [{lo}, {hi}]")
        self.var, self.value = var, value


# ------------------------------------------------------------ update registry

UPDATES: Dict[str, Callable] = {}


def update(name):
    """Register ``fn(vars: dict, *args)``; it mutates ``vars`` in place."""

    def deco(fn):
        if name in UPDATES and UPDATES[name] is not fn:
            raise ValueError(f"update {name!r} registered twice")
        UPDATES[name] = fn
        return fn

    return deco


@update("noop")
def _noop(v):
    pass


# ------------------------------------------------------------ model structure


@dataclass(frozen=True)
class VarDecl:
    name: str
    lo: int
    hi: int
    init: int


@dataclass(frozen=True)
class Location:
    name: str
    invariant: Tuple[str, ...] = ()
    accepting: bool = False


@dataclass(frozen=True)
class Update:
    fn: str = "noop"
    args: Tuple[int, ...] = ()

    def __str__(self):
        return f"{self.fn}({', '.join(map(str, self.args))})"


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    guards: Tuple[str, ...] = ()
    sync: Optional[Tuple[str, str]] = None  # (channel, '!' | '?')
    resets: Tuple[str, ...] = ()
    update: Update = Update()

    def describe(self):
        parts = [f"{self.source} -> {self.target}"]
        if self.guards:
            parts.append("[" + " && ".join(self.guards) + "]")
        if self.sync:
            parts.append(self.sync[0] + self.sync[1])
        if self.resets:
            parts.append("reset " + ",".join(self.resets))
        if self.update.fn != "noop":
            parts.append(str(self.update))
        return " ".join(parts)


@dataclass(frozen=True)
class Automaton:
    name: str
    locations: Tuple[Location, ...]
    initial: str
    edges: Tuple[Edge, ...]
    clocks: Tuple[str, ...] = ()
    clock_init: Tuple[Tuple[str, int], ...] = ()

    def location_index(self, name):
        for i, loc in enumerate(self.locations):
            if loc.name == name:
                return i
        raise KeyError(f"{self.name} has no location {name!r}")


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    message: str

    def __str__(self):
        return f"{self.kind}: {self.message}"


@dataclass(frozen=True)
class TransitionLabel:
    """Which edges fired (automaton index, edge index), on which channel, and the variable deltas."""

    edges: Tuple[Tuple[int, int], ...]
    channel: Optional[str] = None
    deltas: Tuple[Tuple[str, int], ...] = ()


@dataclass(frozen=True)
class SymState:
    locs: Tuple[int, ...]
    vars: Tuple[int, ...]
    zone: zn.Zone

    @property
    def key(self):
        return (self.locs, self.vars)


@dataclass(frozen=True)
class ConcreteState:
    locs: Tuple[int, ...]
    vars: Tuple[int, ...]
    clocks: tuple  # numbers for clocks 1..n

    @property
    def key(self):
        return (self.locs, self.vars)


# compiled forms, internal
@dataclass(frozen=True)
class _VarPred:
    left: int
    minus: Optional[int]
    op: Callable
    right: int
    right_is_var: bool

    def holds(self, vals):
        lhs = vals[self.left]
        if self.minus is not None:
            lhs -= vals[self.minus]
        rhs = vals[self.right] if self.right_is_var else self.right
        return self.op(lhs, rhs)


@dataclass(frozen=True)
class _CEdge:
    aut: int
    index: int
    source: int
    target: int
    clock_guard: tuple
    var_guard: tuple
    channel: Optional[str]
    direction: Optional[str]
    resets: frozenset
    update: Callable
    args: tuple
    edge: Edge


@dataclass
class Network:
    automata: Tuple[Automaton, ...]
    vars: Tuple[VarDecl, ...] = ()
    channels: Tuple[str, ...] = CHANNEL_NAMES
    name: str = "network"
    _compiled: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.automata = tuple(self.automata)
        self.vars = tuple(self.vars)
        self.channels = tuple(self.channels)

    # -- names ------------------------------------------------------------
    @property
    def clock_names(self):
        return [c for a in self.automata for c in a.clocks]

    @property
    def dim(self):
        return len(self.clock_names) + 1

    @property
    def var_names(self):
        return [v.name for v in self.vars]

    def automaton_index(self, name):
        for i, a in enumerate(self.automata):
            if a.name == name:
                return i
        raise KeyError(f"no automaton named {name!r}")

    def var_index(self, name):
        return self.var_names.index(name)

    def loc_name(self, aut, loc):
        return self.automata[aut].locations[loc].name

    def describe_locs(self, locs):
        return {a.name: a.locations[l].name for a, l in zip(self.automata, locs)}

    def describe_vars(self, vals):
        return dict(zip(self.var_names, vals))

    def edge(self, aut, idx):
        return self.automata[aut].edges[idx]

    # -- compilation ----------------------------------------------------------
    @property
    def compiled(self):
        if self._compiled is None:
            problems = [d for d in validate(self) if d.kind != "UnreachableLocation"]
            if problems:
                raise ModelError("; ".join(map(str, problems)))
            self._compiled = _compile(self)
        return self._compiled


def _clock_constraints(atom: Atom, clocks: dict):
    """Translate a clock atom into DBM constraints."""
    if atom.op == "!=":
        raise ModelError(f"'!=' on clocks is not convex: {atom}")
    if not isinstance(atom.right, int):
        raise ModelError(f"clock atoms compare against integers: {atom}")
    i = clocks[atom.left]
    j = clocks[atom.minus] if atom.minus is not None else 0
    c = atom.right
    out = []
    if atom.op in ("<", "<=", "=="):
        out.append(zn.ClockConstraint(i, j, zn.bound(c, atom.op == "<")))
    if atom.op in (">", ">=", "=="):
        out.append(zn.ClockConstraint(j, i, zn.bound(-c, atom.op == ">")))
    return tuple(out)


def _split(atoms, clocks):
    clock_part, var_part = [], []
    for a in atoms:
        (clock_part if a.left in clocks else var_part).append(a)
    return clock_part, var_part


def _compile(net: Network):
    clocks = {name: i + 1 for i, name in enumerate(net.clock_names)}
    varix = {name: i for i, name in enumerate(net.var_names)}

    def var_pred(a):
        right_is_var = isinstance(a.right, str)
        return _VarPred(
            varix[a.left],
            varix[a.minus] if a.minus is not None else None,
            OPS[a.op],
            varix[a.right] if right_is_var else a.right,
            right_is_var,
        )

    invariants = []
    edges = []
    for ai, aut in enumerate(net.automata):
        locix = {loc.name: li for li, loc in enumerate(aut.locations)}
        invs = []
        for loc in aut.locations:
            cs = []
            for text in loc.invariant:
                for a in parse_atoms(text):
                    cs.extend(_clock_constraints(a, clocks))
            invs.append(tuple(cs))
        invariants.append(tuple(invs))
        ces = []
        for ei, e in enumerate(aut.edges):
            atoms = [a for g in e.guards for a in parse_atoms(g)]
            cpart, vpart = _split(atoms, clocks)
            cg = tuple(c for a in cpart for c in _clock_constraints(a, clocks))
            vg = tuple(var_pred(a) for a in vpart)
            ces.append(
                _CEdge(
                    ai, ei, locix[e.source], locix[e.target], cg, vg,
                    e.sync[0] if e.sync else None,
                    e.sync[1] if e.sync else None,
                    frozenset(clocks[c] for c in e.resets),
                    UPDATES[e.update.fn], tuple(e.update.args), e,
                )
            )
        edges.append(tuple(ces))

    receivers = {}
    for ces in edges:
        for ce in ces:
            if ce.direction == RECEIVE:
                receivers.setdefault(ce.channel, []).append(ce)

    by_source = []
    for ai, ces in enumerate(edges):
        nloc = len(net.automata[ai].locations)
        table = [[] for _ in range(nloc)]
        for ce in ces:
            table[ce.source].append(ce)
        by_source.append(tuple(tuple(t) for t in table))

    initial_clocks = [0] * len(clocks)
    for aut in net.automata:
        for name, value in aut.clock_init:
            initial_clocks[clocks[name] - 1] = value

    return {
        "clocks": clocks,
        "vars": varix,
        "invariants": tuple(invariants),
        "edges": tuple(edges),
        "by_source": tuple(by_source),
        "receivers": {k: tuple(v) for k, v in receivers.items()},
        "ranges": tuple((v.lo, v.hi) for v in net.vars),
        "initial_clocks": tuple(initial_clocks),
    }


# ------------------------------------------------------------ validation


def validate(net: Network) -> list:
    """Structural checks; an empty list means the model is well formed."""
    diags = []

    def add(kind, msg):
        diags.append(Diagnostic(kind, msg))

    names = [a.name for a in net.automata]
    for n in set(names):
        if names.count(n) > 1:
            add("DuplicateName", f"automaton {n!r} declared twice")
    clock_names = net.clock_names
    for c in set(clock_names):
        if clock_names.count(c) > 1:
            add("DuplicateName", f"clock {c!r} declared twice")
    var_names = net.var_names
    for v in set(var_names):
        if var_names.count(v) > 1:
            add("DuplicateName", f"variable {v!r} declared twice")
    overlap = set(clock_names) & set(var_names)
    for n in sorted(overlap):
        add("DuplicateName", f"{n!r} is both a clock and a variable")
    for v in net.vars:
        if v.lo > v.hi:
            add("BadRange", f"variable {v.name} has empty range [{v.lo}, {v.hi}]")
        elif not v.lo <= v.init <= v.hi:
            add("BadRange", f"variable {v.name} initial {v.init} outside [{v.lo}, {v.hi}]")
    for ch in net.channels:
        if ch not in CHANNEL_NAMES:
            add("UnknownChannel", f"channel {ch!r} not one of {CHANNEL_NAMES}")

    clocks = set(clock_names)
    varset = set(var_names)

    def check_atoms(texts, where, clock_only=False):
        for text in texts:
            try:
                atoms = parse_atoms(text)
            except ValueError as exc:
                add("BadGuard", f"{where}: {exc}")
                continue
            for a in atoms:
                if a.left in clocks:
                    others = [a.minus] if a.minus else []
                    for o in others:
                        if o not in clocks:
                            kind = "UndeclaredClock" if o not in varset else "MixedGuard"
                            add(kind, f"{where}: {o!r} in {text!r}")
                    if not isinstance(a.right, int):
                        add("MixedGuard", f"{where}: clock compared to {a.right!r} in {text!r}")
                    if a.op == "!=":
                        add("BadGuard", f"{where}: '!=' on clock in {text!r}")
                elif a.left in varset:
                    if clock_only:
                        add("UndeclaredClock", f"{where}: invariant uses variable {a.left!r}")
                    for o in a.names()[1:]:
                        if o not in varset:
                            kind = "MixedGuard" if o in clocks else "UndeclaredVariable"
                            add(kind, f"{where}: {o!r} in {text!r}")
                else:
                    add("UndeclaredClock", f"{where}: {a.left!r} is neither a declared clock nor a variable ({text!r})")

    emits, receives = {}, {}
    for aut in net.automata:
        locnames = [l.name for l in aut.locations]
        for n in set(locnames):
            if locnames.count(n) > 1:
                add("DuplicateName", f"{aut.name}: location {n!r} declared twice")
        if aut.initial not in locnames:
            add("NoInitial", f"{aut.name}: initial location {aut.initial!r} missing")
        for name, value in aut.clock_init:
            if name not in aut.clocks:
                add("UndeclaredClock", f"{aut.name}: initial value for unknown clock {name!r}")
            elif value < 0:
                add("BadRange", f"{aut.name}: negative initial clock value {value}")
        for loc in aut.locations:
            check_atoms(loc.invariant, f"{aut.name}.{loc.name} invariant", clock_only=True)
            for text in loc.invariant:
                try:
                    for a in parse_atoms(text):
                        if a.left in clocks and a.op not in ("<", "<=") and a.minus is None:
                            add("BadInvariant", f"{aut.name}.{loc.name}: invariant {text!r} is not an upper bound")
                except ValueError:
                    pass
        for ei, e in enumerate(aut.edges):
            where = f"{aut.name} edge {ei} ({e.source} -> {e.target})"
            for end in (e.source, e.target):
                if end not in locnames:
                    add("UnknownLocation", f"{where}: no location {end!r}")
            check_atoms(e.guards, where)
            for c in e.resets:
                if c not in clocks:
                    add("UndeclaredClock", f"{where}: reset of {c!r}")
            if e.update.fn not in UPDATES:
                add("UnknownUpdate", f"{where}: update {e.update.fn!r} not registered")
            if e.sync is not None:
                ch, direction = e.sync
                if ch not in net.channels:
                    add("UnknownChannel", f"{where}: channel {ch!r} not declared")
                if direction == EMIT:
                    emits.setdefault(ch, set()).add(aut.name)
                elif direction == RECEIVE:
                    receives.setdefault(ch, set()).add(aut.name)
                else:
                    add("BadSync", f"{where}: direction {direction!r}")
    for ch, senders in sorted(emits.items()):
        partners = receives.get(ch, set())
        if not partners or partners <= senders and len(senders) == 1:
            add("UnpairedChannel", f"channel {ch!r} is emitted but never received by another automaton")
    return diags


# ------------------------------------------------------------ symbolic semantics


def _apply_update(net, comp, ce, vals: list, strict=True):
    env = dict(zip(net.var_names, vals))
    ce.update(env, *ce.args)
    out = []
    for (lo, hi), decl in zip(comp["ranges"], net.vars):
        value = env[decl.name]
        if not isinstance(value, int):
            raise ModelError(f"update {ce.edge.update} produced non-integer {decl.name}={value!r}")
        if not lo <= value <= hi:
            raise UpdateOutOfRange(decl.name, value, lo, hi, str(ce.edge.update))
        out.append(value)
    return out


def _invariant_constraints(comp, locs):
    invs = comp["invariants"]
    return [c for ai, li in enumerate(locs) for c in invs[ai][li]]


def _deltas(net, before, after):
    return tuple((n, a - b) for n, b, a in zip(net.var_names, before, after) if a != b)


def initial_state(net: Network) -> SymState:
    comp = net.compiled
    locs = tuple(a.location_index(a.initial) for a in net.automata)
    vals = tuple(v.init for v in net.vars)
    z = zn.point(comp["initial_clocks"])
    inv = _invariant_constraints(comp, locs)
    z = zn.constrain_all(z, inv)
    if zn.is_empty(z):
        raise InvariantEmpty("initial clock valuation violates the initial invariants")
    z = zn.constrain_all(zn.up(z), inv)
    return SymState(locs, vals, z)


def enabled_combinations(net: Network, locs):
    """Edge tuples that may fire from ``locs`` in exploration order, ignoring guards."""
    comp = net.compiled
    by_source = comp["by_source"]
    receivers = comp["receivers"]
    for ai, li in enumerate(locs):
        for ce in by_source[ai][li]:
            if ce.direction is None:
                yield (ce,)
            elif ce.direction == EMIT:
                for re_ in receivers.get(ce.channel, ()):
                    if re_.aut != ai and re_.source == locs[re_.aut]:
                        yield (ce, re_)


def _fire_discrete(net, comp, locs, vals, combo, strict):
    for ce in combo:
        if not all(p.holds(vals) for p in ce.var_guard):
            return None
    new_vals = list(vals)
    try:
        for ce in combo:
            new_vals = _apply_update(net, comp, ce, new_vals)
    except UpdateOutOfRange:
        if strict:
            raise
        return None
    new_locs = list(locs)
    for ce in combo:
        new_locs[ce.aut] = ce.target
    return tuple(new_locs), tuple(new_vals)


def successors(net: Network, s: SymState, strict: bool = True) -> list:
    """All action successors of a (delay-closed) symbolic state."""
    comp = net.compiled
    out = []
    for combo in enabled_combinations(net, s.locs):
        # clock guards first: zones stay canonical, so emptiness is m[0] < LE_ZERO
        z = s.zone
        for ce in combo:
            z = zn.constrain_all(z, ce.clock_guard)
        if z.m[0] < zn.LE_ZERO:
            continue
        fired = _fire_discrete(net, comp, s.locs, s.vars, combo, strict)
        if fired is None:
            continue
        new_locs, new_vals = fired
        resets = set()
        for ce in combo:
            resets |= ce.resets
        if resets:
            z = zn.reset(z, resets)
        inv = _invariant_constraints(comp, new_locs)
        z = zn.constrain_all(z, inv)
        if z.m[0] < zn.LE_ZERO:
            continue
        z = zn.constrain_all(zn.up(z), inv)
        label = TransitionLabel(
            tuple((ce.aut, ce.index) for ce in combo),
            combo[0].channel,
            _deltas(net, s.vars, new_vals),
        )
        out.append((SymState(new_locs, new_vals, z), label))
    return out


def check_state(net: Network, s: SymState):
    """Assert the SymState type invariants."""
    assert zn.is_canonical(s.zone), "zone not canonical"
    assert not zn.is_empty(s.zone), "zone empty"
    comp = net.compiled
    for c in _invariant_constraints(comp, s.locs):
        assert zn.constrain(s.zone, c) == s.zone, f"zone violates invariant {c}"
    for (lo, hi), v in zip(comp["ranges"], s.vars):
        assert lo <= v <= hi


# ------------------------------------------------------------ concrete semantics


def _clock_ok(constraints, clocks) -> bool:
    vals = (0,) + tuple(clocks)
    return all(zn.satisfies(c.bound, vals[c.left] - vals[c.right]) for c in constraints)


def concrete_initial(net: Network) -> ConcreteState:
    comp = net.compiled
    locs = tuple(a.location_index(a.initial) for a in net.automata)
    state = ConcreteState(locs, tuple(v.init for v in net.vars), comp["initial_clocks"])
    if not _clock_ok(_invariant_constraints(comp, locs), state.clocks):
        raise InvariantEmpty("initial clock valuation violates the initial invariants")
    return state


def concrete_delay(net: Network, s: ConcreteState, d) -> Optional[ConcreteState]:
    """Let ``d`` time units pass; None if a location invariant forbids it."""
    if d < 0:
        raise ValueError("negative delay")
    clocks = tuple(c + d for c in s.clocks)
    if not _clock_ok(_invariant_constraints(net.compiled, s.locs), clocks):
        return None
    return ConcreteState(s.locs, s.vars, clocks)


def concrete_actions(net: Network, s: ConcreteState, strict: bool = True) -> list:
    """Action successors of one concrete state, in exploration order."""
    comp = net.compiled
    out = []
    for combo in enabled_combinations(net, s.locs):
        if not all(_clock_ok(ce.clock_guard, s.clocks) for ce in combo):
            continue
        fired = _fire_discrete(net, comp, s.locs, s.vars, combo, strict)
        if fired is None:
            continue
        new_locs, new_vals = fired
        clocks = list(s.clocks)
        for ce in combo:
            for x in ce.resets:
                clocks[x - 1] = 0
        clocks = tuple(clocks)
        if not _clock_ok(_invariant_constraints(comp, new_locs), clocks):
            continue
        label = TransitionLabel(
            tuple((ce.aut, ce.index) for ce in combo),
            combo[0].channel,
            _deltas(net, s.vars, new_vals),
        )
        out.append((ConcreteState(new_locs, new_vals, clocks), label))
    return out


def fire_label(net: Network, s: ConcreteState, label: TransitionLabel) -> Optional[ConcreteState]:
    """Fire the transition named by ``label`` from a concrete state, if legal."""
    for nxt, lab in concrete_actions(net, s):
        if lab == label:
            return nxt
    return None


def has_diagonal_constraints(net: Network) -> bool:
    for aut in net.automata:
        texts = [t for loc in aut.locations for t in loc.invariant]
        texts += [g for e in aut.edges for g in e.guards]
        for t in texts:
            for a in parse_atoms(t):
                if a.minus is not None and a.left in net.clock_names:
                    return True
    return False


def max_clock_constant(net: Network) -> int:
    clocks = set(net.clock_names)
    best = 0
    for aut in net.automata:
        texts = [t for loc in aut.locations for t in loc.invariant]
        texts += [g for e in aut.edges for g in e.guards]
        for t in texts:
            for a in parse_atoms(t):
                if a.left in clocks and isinstance(a.right, int):
                    best = max(best, abs(a.right))
        for _, v in aut.clock_init:
            best = max(best, v)
    return best


def has_strict_clock_guards(net: Network) -> bool:
    clocks = set(net.clock_names)
    for aut in net.automata:
        texts = [t for loc in aut.locations for t in loc.invariant]
        texts += [g for e in aut.edges for g in e.guards]
        for t in texts:
            for a in parse_atoms(t):
                if a.left in clocks and a.op in ("<", ">"):
                    return True
    return False
