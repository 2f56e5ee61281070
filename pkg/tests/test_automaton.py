from collections import Counter, deque

import pytest

import oracles
from stablecheck import models
from stablecheck import zone as zn
from stablecheck.automaton import (
    Automaton, Edge, InvariantEmpty, Location, ModelError, Network, SymState, Update, UpdateOutOfRange, VarDecl,
    check_state, concrete_actions, concrete_delay, concrete_initial, fire_label, initial_state, successors, update,
    validate,
)


@update("test_set")
def _test_set(v, value):
    v["a"] = value


@update("test_double")
def _test_double(v):
    v["a"] = v["a"] * 2


def single(locations, edges, clocks=("x",), vars=(), channels=()):
    return Network((Automaton("A", locations, locations[0].name, edges, clocks),), vars, channels)


def kinds(net):
    return {d.kind for d in validate(net)}


def reachable(net, limit=5000):
    """Plain BFS over symbolic states, no subsumption."""
    s0 = initial_state(net)
    seen = {(s0.key, s0.zone)}
    queue, out = deque([s0]), [s0]
    while queue and len(out) < limit:
        s = queue.popleft()
        for nxt, _ in successors(net, s):
            if (nxt.key, nxt.zone) not in seen:
                seen.add((nxt.key, nxt.zone))
                queue.append(nxt)
                out.append(nxt)
    return out


# ---------------------------------------------------------------- validate


def test_bac_builder_is_valid():
    assert validate(models.build_bac()) == []


def test_undeclared_clock():
    net = single((Location("L"),), (Edge("L", "L", ("y <= 3",)),))
    assert "UndeclaredClock" in kinds(net)
    net = single((Location("L"),), (Edge("L", "L", (), None, ("y",)),))
    assert "UndeclaredClock" in kinds(net)


def test_unpaired_channel():
    net = single((Location("L"),), (Edge("L", "L", (), ("trade", "!")),), channels=("trade",))
    assert "UnpairedChannel" in kinds(net)


@pytest.mark.parametrize(
    "net, kind",
    [
        (single((Location("L"),), (Edge("L", "M"),)), "UnknownLocation"),
        (single((Location("L"),), (Edge("L", "L", (), None, (), Update("nope")),)), "UnknownUpdate"),
        (single((Location("L"), Location("L")), ()), "DuplicateName"),
        (single((Location("L"),), (), vars=(VarDecl("v", 3, 1, 2),)), "BadRange"),
        (single((Location("L"),), (), vars=(VarDecl("v", 0, 1, 2),)), "BadRange"),
        (single((Location("L"),), (Edge("L", "L", ("x <= ",)),)), "BadGuard"),
        (single((Location("L"),), (Edge("L", "L", ("n < 2",)),)), "UndeclaredClock"),
        (single((Location("L"),), (), channels=("gossip",)), "UnknownChannel"),
        (single((Location("L", ("x >= 2 && x - y < 1",)),), ()), "UndeclaredClock"),
    ],
)
def test_structural_diagnostics(net, kind):
    assert kind in kinds(net)


def test_compiling_invalid_network_raises():
    with pytest.raises(ModelError):
        initial_state(single((Location("L"),), (Edge("L", "M"),)))


# ---------------------------------------------------------------- initial state


def test_bac_initial_state():
    cfg = models.BacConfig()
    net = models.build_bac(cfg)
    s = initial_state(net)
    assert net.describe_locs(s.locs) == {
        "P": "Initial", "E": "Idle", "C": "Idle", "S": "Idle", "B": "Idle", "X": "Idle",
    }
    assert s.vars[net.var_index("N_bac")] == cfg.initial_supply
    expected = zn.constrain_all(
        zn.up(zn.zero(3)), [zn.ClockConstraint(1, 0, zn.le(24)), zn.ClockConstraint(2, 0, zn.le(24))]
    )
    assert s.zone == expected
    check_state(net, s)


def test_initial_without_invariant_is_full_cone():
    s = initial_state(single((Location("L"),), ()))
    assert s.zone == zn.up(zn.zero(2))


def test_initial_invariant_zero_is_point():
    s = initial_state(single((Location("L", ("x <= 0",)),), ()))
    assert s.zone == zn.zero(2)


def test_initial_invariant_contradiction():
    net = Network((Automaton("A", (Location("L", ("x <= 1",)),), "L", (), ("x",), (("x", 3),)),))
    with pytest.raises(InvariantEmpty):
        initial_state(net)


# ---------------------------------------------------------------- successors


def test_bac_initial_successors_are_ticks_and_trades():
    net = models.build_bac()
    labels = [lab for _, lab in successors(net, initial_state(net))]
    names = [tuple(net.automata[a].name for a, _ in lab.edges) for lab in labels]
    # price == peg: neither P price edge is enabled, only round ticks and market trades
    assert ("P",) not in names
    assert Counter(lab.channel for lab in labels) == Counter({None: 2, "trade": 4})
    assert {n for n in names if len(n) == 2} == {("S", "X"), ("B", "X")}


def test_expand_handshake_at_24():
    net = models.build_bac()
    s0 = initial_state(net)
    p = net.automaton_index("P")
    locs = list(s0.locs)
    locs[p] = net.automata[p].location_index("Pre_Expansion")
    vals = list(s0.vars)
    vals[net.var_index("price")] = 1_100_000
    vals[net.var_index("pool_quote")] = 1100  # price 1.1 from the pool
    s = SymState(tuple(locs), tuple(vals), s0.zone)
    fired = [(n, lab) for n, lab in successors(net, s) if lab.channel == "expand"]
    assert len(fired) == 1
    nxt, lab = fired[0]
    assert net.describe_locs(nxt.locs)["P"] == "Expanded"
    assert net.describe_locs(nxt.locs)["E"] == "Expanding"
    assert dict(lab.deltas)["N_bac"] > 0
    # the handshake is only possible at te = 24, after which te is reset
    assert zn.contains(nxt.zone, (0, 24)) and not zn.contains(nxt.zone, (1, 24))


def test_no_enabled_edges():
    net = single((Location("L"), Location("M")), (Edge("M", "L"),))
    assert successors(net, initial_state(net)) == []


def test_update_order_emitter_first():
    emitter = Automaton("S", (Location("L"),), "L", (Edge("L", "L", (), ("trade", "!"), (), Update("test_set", (3,))),))
    receiver = Automaton("R", (Location("L"),), "L", (Edge("L", "L", (), ("trade", "?"), (), Update("test_double")),))
    net = Network((emitter, receiver), (VarDecl("a", 0, 100, 0),), ("trade",))
    (nxt, lab), = successors(net, initial_state(net))
    assert nxt.vars == (6,)  # set to 3, then doubled
    assert lab.deltas == (("a", 6),)


def test_guards_see_pre_state():
    emitter = Automaton("S", (Location("L"),), "L", (Edge("L", "L", (), ("trade", "!"), (), Update("test_set", (5,))),))
    receiver = Automaton("R", (Location("L"),), "L", (Edge("L", "L", ("a == 0",), ("trade", "?")),))
    net = Network((emitter, receiver), (VarDecl("a", 0, 10, 0),), ("trade",))
    assert len(successors(net, initial_state(net))) == 1


def test_update_out_of_range():
    net = single((Location("L"),), (Edge("L", "L", (), None, (), Update("test_set", (9,))),),
                 vars=(VarDecl("a", 0, 5, 0),))
    with pytest.raises(UpdateOutOfRange):
        successors(net, initial_state(net))
    assert successors(net, initial_state(net), strict=False) == []


@pytest.mark.parametrize("name", sorted(oracles.TOY_MODELS))
def test_handshake_symmetry_against_naive_pairing(name):
    net = oracles.TOY_MODELS[name]()
    comp = net.compiled
    for s in reachable(net):
        got = {lab.edges for _, lab in successors(net, s) if lab.channel is not None}
        expected = set()
        for pair in oracles.naive_pairs(net, s.locs):
            # each component guard must hold in the shared delayed zone, separately and jointly
            z = s.zone
            ok = True
            for ai, ei in pair:
                ce = comp["edges"][ai][ei]
                z = zn.constrain_all(z, ce.clock_guard)
                ok &= all(p.holds(s.vars) for p in ce.var_guard)
            if ok and not zn.is_empty(z):
                expected.add(pair)
        assert got == expected


def test_bac_handshakes_match_naive_pairs():
    net = models.build_bac(models.BacConfig(trade_sizes=(10,), max_rounds=2, trades_per_round=1))
    for s in reachable(net, limit=400):
        got = {lab.edges for _, lab in successors(net, s) if lab.channel is not None}
        assert got <= set(oracles.naive_pairs(net, s.locs))


def test_successors_deterministic():
    net = models.build_bac()
    for s in reachable(net, limit=200):
        a = successors(net, s)
        b = successors(net, SymState(s.locs, s.vars, zn.Zone(s.zone.dim, tuple(s.zone.m))))
        assert Counter(map(repr, a)) == Counter(map(repr, b))
        check_state(net, s)


def test_replaying_a_label_reproduces_successor():
    net = models.build_bac()
    for s in reachable(net, limit=200):
        for nxt, lab in successors(net, s):
            again = [n for n, l in successors(net, s) if l == lab]
            assert nxt in again


# ---------------------------------------------------------------- concrete semantics


def test_concrete_walk_stays_inside_zones():
    net = oracles.toy_handshake()
    s = concrete_initial(net)
    assert concrete_delay(net, s, 4) is None  # invariant t <= 3
    s = concrete_delay(net, s, 3)
    (nxt, lab), = [(n, l) for n, l in concrete_actions(net, s) if l.channel == "trade"]
    assert fire_label(net, s, lab) == nxt
    assert net.describe_locs(nxt.locs) == {"S": "Sent", "R": "On"}
    assert nxt.clocks == (0, 0)
