import dataclasses
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from stablecheck import checker, models
from stablecheck.automaton import TransitionLabel, initial_state
from stablecheck.checker import (
    IllegalStep, Property, StateSpaceBound, check, check_discrete_oracle, replay, replay_concrete,
)
from stablecheck.expr import And, LocAtom, Not, Or, VarAtom

BAC = models.StablecoinKind.BacSeigniorage


@pytest.fixture(scope="module")
def bac():
    return models.build_bac()


@pytest.fixture(scope="module")
def bac_results(bac):
    props = models.builtin_properties(BAC)
    return {name: check(bac, props[name]) for name in ("expansion-validity", "contraction-validity")}


def names_of(net, label):
    return [net.automata[a].name for a, _ in label.edges]


def fn_of(net, label, aut):
    for a, e in label.edges:
        if net.automata[a].name == aut:
            return net.edge(a, e).update.fn
    return None


# ---------------------------------------------------------------- BAC counter-examples


def test_trivial_true_verified(bac):
    r = check(bac, models.builtin_properties(BAC)["trivial-true"])
    assert r.verified and r.trace is None


def test_expansion_counterexample(bac, bac_results):
    r = bac_results["expansion-validity"]
    assert r.verdict == "counterexample"
    locs, _ = r.trace.final
    final = bac.describe_locs(locs)
    assert (final["P"], final["E"], final["X"]) == ("Expanded", "Validated", "Buy")
    steps = [s.label for s in r.trace.steps]
    start = next(i for i, lab in enumerate(steps) if lab.channel == "expand")
    buys = [lab for lab in steps[start:] if lab.channel == "trade" and "B" in names_of(bac, lab)]
    assert len(buys) >= 1


def test_contraction_counterexample(bac, bac_results):
    r = bac_results["contraction-validity"]
    assert r.verdict == "counterexample"
    final = bac.describe_locs(r.trace.final[0])
    assert (final["P"], final["C"], final["X"]) == ("Contracted", "Validated", "Sell")
    fns = [fn_of(bac, s.label, "C") for s in r.trace.steps]
    assert "bac_decline_swap" in fns and "bac_swap_burn" not in fns
    supply = bac.var_index("N_bac")
    assert r.trace.final[1][supply] == r.trace.initial_vars[supply]


@pytest.mark.parametrize("name", ["expansion-validity", "contraction-validity"])
def test_counterexamples_replay(bac, bac_results, name):
    r = bac_results[name]
    final = replay(bac, r.trace)
    assert (final.locs, final.vars) == r.trace.final
    assert not checker.evaluate(bac, r.prop.body, final.locs, final.vars)
    concrete = replay_concrete(bac, r.trace)
    assert (concrete.locs, concrete.vars) == r.trace.final


@pytest.mark.parametrize("name", ["expansion-validity", "contraction-validity"])
def test_counterexample_minimal(bac, bac_results, name):
    r = bac_results[name]
    try:
        shorter = check(bac, r.prop, max_depth=len(r.trace) - 1)
    except StateSpaceBound:
        return
    assert shorter.verified


def test_check_deterministic(bac, bac_results):
    prop = models.builtin_properties(BAC)["contraction-validity"]
    again = check(bac, prop)
    assert again == bac_results["contraction-validity"]


def test_no_trades_means_verified():
    net = models.build_bac(models.BacConfig(trade_sizes=(0,)))
    for prop in models.standard_properties(BAC):
        assert check(net, prop).verified


@pytest.mark.parametrize("name", ["expansion-validity", "contraction-validity"])
def test_bac_verdict_matches_discrete_oracle(bac, bac_results, name):
    r = check_discrete_oracle(bac, bac_results[name].prop)
    assert r.verdict == bac_results[name].verdict
    # the oracle's own trace is a legal dense-time run as well
    assert (replay(bac, r.trace).locs, replay(bac, r.trace).vars) == r.trace.final


# ---------------------------------------------------------------- replay validation


def test_empty_trace_replays_to_initial(bac):
    s0 = initial_state(bac)
    t = checker.Trace((), s0.locs, s0.vars)
    assert replay(bac, t) == s0


def test_mutated_delta_is_illegal(bac, bac_results):
    t = bac_results["expansion-validity"].trace
    step = t.steps[0]
    deltas = tuple((k, v + 1) for k, v in step.label.deltas)
    bad = dataclasses.replace(step, label=TransitionLabel(step.label.edges, step.label.channel, deltas))
    mutated = dataclasses.replace(t, steps=(bad,) + t.steps[1:])
    with pytest.raises(IllegalStep) as exc:
        replay(bac, mutated)
    assert exc.value.index == 0


def test_bad_delay_is_illegal(bac, bac_results):
    t = bac_results["expansion-validity"].trace
    step = dataclasses.replace(t.steps[0], delay=t.steps[0].delay + 100)
    with pytest.raises(IllegalStep):
        replay_concrete(bac, dataclasses.replace(t, steps=(step,) + t.steps[1:]))


def test_trace_json_round_trip(bac, bac_results):
    r = bac_results["expansion-validity"]
    text = checker.trace_to_json(bac, r)
    data = json.loads(text)
    assert data["verdict"] == "counterexample" and data["property"] == "expansion-validity"
    assert set(data["steps"][0]) >= {"automata_fired", "channel", "var_deltas", "delay"}
    assert checker.trace_from_dict(bac, data) == r.trace


# ---------------------------------------------------------------- limits and errors


def test_state_bound(bac):
    with pytest.raises(StateSpaceBound):
        check(bac, models.builtin_properties(BAC)["expansion-validity"], max_states=10)


def test_unresolved_property(bac):
    with pytest.raises(ValueError):
        check(bac, Property.parse("p", "P.Nowhere"))
    with pytest.raises(ValueError):
        check(bac, Property.parse("p", "ghost > 1"))


def test_only_ag():
    with pytest.raises(ValueError):
        Property("p", LocAtom("P", "Initial"), quantifier="EF")


def test_discrete_oracle_rejects_low_tick_bound():
    with pytest.raises(ValueError):
        check_discrete_oracle(oracles.toy_handshake(), Property.parse("t", "true"), tick_bound=3)


def test_discrete_oracle_trivial_true():
    for build in oracles.TOY_MODELS.values():
        assert check_discrete_oracle(build(), Property.parse("t", "true")).verified


# ---------------------------------------------------------------- toy models vs the discrete oracle


@pytest.mark.parametrize("name", sorted(oracles.TOY_MODELS))
def test_reachable_sets_match_oracle(name):
    net = oracles.TOY_MODELS[name]()
    assert checker.reachable_keys(net) == checker.reachable_keys_discrete(net)


def test_handshake_at_three_reachable_set():
    net = oracles.toy_handshake()
    keys = checker.reachable_keys(net)
    described = {(tuple(net.describe_locs(l).values()), v) for l, v in keys}
    assert (("Sent", "On"), (1,)) in described
    assert (("Wait", "On"), (0,)) not in described  # R only moves on the handshake
    assert len(keys) == 9


@st.composite
def toy_property(draw):
    name = draw(st.sampled_from(sorted(oracles.TOY_MODELS)))
    net = oracles.TOY_MODELS[name]()
    atoms = []
    for a in net.automata:
        atoms += [LocAtom(a.name, l.name) for l in a.locations]
    atoms += [VarAtom("n", op, k) for op in ("<", "<=", "==", "!=") for k in range(4)]
    leaf = st.sampled_from(atoms)
    body = draw(st.one_of(
        leaf,
        st.builds(Not, leaf),
        st.builds(lambda xs: Or(tuple(xs)), st.lists(leaf, min_size=2, max_size=3)),
        st.builds(lambda a, b: Not(And((a, b))), leaf, leaf),
    ))
    return net, Property("random", body)


@settings(max_examples=60, deadline=None)
@given(toy_property())
def test_zone_verdict_matches_oracle(case):
    net, prop = case
    zone = check(net, prop)
    assert zone.verdict == check_discrete_oracle(net, prop).verdict
    if zone.trace is not None:
        final = replay(net, zone.trace)
        assert not checker.evaluate(net, prop.body, final.locs, final.vars)


@settings(max_examples=60, deadline=None)
@given(toy_property())
def test_subsumption_never_changes_verdict(case):
    net, prop = case
    with_ = check(net, prop)
    without = check(net, prop, subsumption=False)
    assert with_.verdict == without.verdict
    assert with_.states_explored <= without.states_explored
    if with_.trace is not None:
        assert len(with_.trace) == len(without.trace)


def test_subsumption_agrees_on_small_bac():
    net = models.build_bac(models.BacConfig(trade_sizes=(0,), max_rounds=2))
    for prop in models.standard_properties(BAC):
        assert check(net, prop).verdict == check(net, prop, subsumption=False).verdict


def test_full_sweep_with_atomic_invariant():
    net = oracles.toy_two_clocks()
    r = check(net, Property.parse("bounded", "n >= 0 && n <= 2"))
    assert r.verified and r.states_explored > 0
