"""Acceptance suite: one PASS/FAIL line per criterion, each at its stated tolerance."""

import json
import time
from fractions import Fraction as F

import numpy as np
import pytest

import oracles
from stablecheck import amm, checker, empirics, modelio, models, sim
from stablecheck import zone as zn
from stablecheck.amm import BUY_COIN, SELL_COIN, Pool, Trade
from stablecheck.cli import main

BAC = models.StablecoinKind.BacSeigniorage


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail
    return emit


def fn_of(net, label, aut):
    for a, e in label.edges:
        if net.automata[a].name == aut:
            return net.edge(a, e).update.fn
    return None


@pytest.fixture(scope="module")
def bac_runs():
    net = models.build_bac()
    props = models.builtin_properties(BAC)
    out = {}
    for name in ("expansion-validity", "contraction-validity"):
        t0 = time.perf_counter()
        r = checker.check(net, props[name], max_states=200_000)
        out[name] = (r, time.perf_counter() - t0)
    return net, out


def test_criterion_1_counterexamples(bac_runs, report):
    net, runs = bac_runs
    expected = {
        "expansion-validity": {"P": "Expanded", "E": "Validated", "X": "Buy"},
        "contraction-validity": {"P": "Contracted", "C": "Validated", "X": "Sell"},
    }
    ok, parts = True, []
    for name, (r, secs) in runs.items():
        final = net.describe_locs(r.trace.final[0]) if r.trace else {}
        good = r.verdict == "counterexample" and all(final.get(k) == v for k, v in expected[name].items())
        sym = checker.replay(net, r.trace)
        conc = checker.replay_concrete(net, r.trace)
        good &= (sym.locs, sym.vars) == r.trace.final == (conc.locs, conc.vars)
        good &= secs < 10 and r.states_explored < 200_000
        ok &= good
        parts.append(f"{name} {r.states_explored} states {secs:.2f}s {len(r.trace)} steps")
    report(1, ok, "; ".join(parts))


def test_criterion_2_trace_structure(bac_runs, report):
    net, runs = bac_runs
    exp = [s.label for s in runs["expansion-validity"][0].trace.steps]
    start = next(i for i, lab in enumerate(exp) if lab.channel == "expand")
    buys = sum(1 for lab in exp[start:] if lab.channel == "trade" and fn_of(net, lab, "B") is not None)
    con = [s.label for s in runs["contraction-validity"][0].trace.steps]
    fns = [fn_of(net, lab, "C") for lab in con]
    declined = "bac_decline_swap" in fns
    swaps = fns.count("bac_swap_burn")
    ok = buys >= 1 and declined and swaps == 0
    report(2, ok, f"buys after expansion={buys}, decline edge={declined}, swaps={swaps}")


def test_criterion_3_absence_baseline(report):
    net = models.build_bac(models.BacConfig(trade_sizes=(0,)))
    verdicts = {p.name: checker.check(net, p).verdict for p in models.standard_properties(BAC)}
    report(3, all(v == "verified" for v in verdicts.values()), str(verdicts))


def test_criterion_4_oracle_equivalence(bac_runs, report):
    net, runs = bac_runs
    mismatches, total = [], 0
    for name, (r, _) in runs.items():
        total += 1
        if checker.check_discrete_oracle(net, r.prop).verdict != r.verdict:
            mismatches.append(("bac", name))
    for toy, build in oracles.TOY_MODELS.items():
        tnet = build()
        total += 1
        if checker.reachable_keys(tnet) != checker.reachable_keys_discrete(tnet):
            mismatches.append((toy, "reachable"))
        for a in tnet.automata:
            for loc in a.locations:
                prop = checker.Property.parse("avoid", f"!{a.name}.{loc.name}")
                total += 1
                if checker.check(tnet, prop).verdict != checker.check_discrete_oracle(tnet, prop).verdict:
                    mismatches.append((toy, str(prop)))
    report(4, not mismatches, f"{total} comparisons, mismatches={mismatches}")


def _some_zone(rng, dim):
    # few constraints keep most zones non-empty
    return oracles.random_zone(rng, dim, 4, int(rng.integers(1, dim + 1)))


def _zone_laws(rng, dim, raw, sample):
    z = zn.canonicalize(raw)
    expected = oracles.fw_close(oracles.rows_of(raw))
    if expected is None:
        return zn.is_empty(z)
    if zn.is_empty(z) or oracles.rows_of(z) != expected:
        return False
    if zn.canonicalize(z) != z:
        return False
    n = dim
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if z[i, j] > zn.add_bounds(z[i, k], z[k, j]):
                    return False
    u = zn.up(z)
    if zn.up(u) != u or not zn.includes(u, z):
        return False
    for i in range(1, n):
        if u[i, 0] != zn.INF or u[0, i] != z[0, i]:
            return False
        for j in range(1, n):
            if i != j and u[i, j] != z[i, j]:
                return False
    x = int(rng.integers(1, n))
    r = zn.reset(z, [x])
    if zn.reset(r, [x]) != r or r[x, 0] != zn.LE_ZERO or r[0, x] != zn.LE_ZERO:
        return False
    if sample:
        other = _some_zone(rng, dim)
        if zn.includes(z, other) != oracles.includes_by_sampling(z, other, 4):
            return False
        if zn.includes(other, z) != oracles.includes_by_sampling(other, z, 4):
            return False
    return True


def test_criterion_5_dbm_laws(report):
    rng = np.random.default_rng(20240601)
    failures = nonempty = 0
    for i in range(10_000):
        dim = 2 + i % 3
        raw = oracles.raw_matrix(rng, dim, 4, p_inf=0.7) if i % 2 else _some_zone(rng, dim)
        nonempty += not zn.is_empty(zn.canonicalize(raw))
        failures += not _zone_laws(rng, dim, raw, sample=dim <= 3)
    report(5, failures == 0, f"10000 zones ({nonempty} non-empty), failures={failures}")


def test_criterion_6_market_math(report):
    rng = np.random.default_rng(7)
    broken = 0
    for _ in range(1000):
        pool = Pool(int(rng.integers(100, 10**6)), int(rng.integers(100, 10**6)))
        k = pool.k
        for _ in range(int(rng.integers(1, 30))):
            side = BUY_COIN if rng.random() < 0.5 else SELL_COIN
            amount = F(int(rng.integers(1, 10**4)), int(rng.integers(1, 100)))
            if side == BUY_COIN and amount >= pool.reserve_coin:
                continue
            pool, price = amm.apply_trade(pool, Trade(side, amount))
            broken += pool.k != k or price != pool.reserve_quote / pool.reserve_coin
    shares_ok = True
    for _ in range(200):
        balances = [int(b) for b in rng.integers(0, 10**6, size=5)]
        total = sum(balances) + 1
        price = F(int(rng.integers(1, 400)), 100)
        for b in balances:
            nb, nt = amm.ampl_rebase(b, total, price, 1)
            shares_ok &= nb / nt == F(b, total)
    worked = (
        amm.ampl_rebase(100, 1000, F("1.2"), 1)[0] == 120
        and amm.frax_mint(1, F("0.5")) == {"collateral_value": F("0.5"), "fxs_value": F("0.5")}
        and amm.bab_price(F("1.1")) == F("1.21")
    )
    ok = broken == 0 and shares_ok and worked
    report(6, ok, f"invariant breaks={broken}, shares exact={shares_ok}, worked values={worked}")


SIM_ARGS = ["simulate", "--builtin", "bac", "--seed", "0", "--param", "pool_quote=1350", "--buy-bias", "2/5"]


def _kinds(tmp_path, name, extra, capsys):
    csv_path = tmp_path / f"{name}.csv"
    assert main(SIM_ARGS + extra + ["--out", str(csv_path)]) == 0
    capsys.readouterr()
    main(["detect", str(csv_path)])
    lines = capsys.readouterr().out.splitlines()
    return csv_path.read_bytes(), [json.loads(l)["kind"] for l in lines]


def test_criterion_7_end_to_end(tmp_path, capsys, report):
    shock = ["--shock", "24:10:9/10"]
    csv_a, shocked = _kinds(tmp_path, "shock", shock, capsys)
    csv_b, _ = _kinds(tmp_path, "shock2", shock, capsys)
    _, calm = _kinds(tmp_path, "calm", [], capsys)
    ok = "BrokenExpansion" in shocked and "EffectiveExpansion" in calm and csv_a == csv_b
    report(7, ok, f"shock={shocked}, sell drift={calm}, deterministic={csv_a == csv_b}")


def test_criterion_8_round_trips(report):
    models_ok = True
    for kind, (build, cfg) in models.BUILDERS.items():
        text = modelio.dumps(build(cfg()))
        models_ok &= modelio.dumps(modelio.loads(text)) == text
    net = models.build_bac(models.BacConfig(pool_quote=1350, trade_sizes=(5, 10), max_rounds=5,
                                            trades_per_round=1000))
    traj = sim.run(net, sim.SimConfig(seed=1, horizon_hours=72, buy_bias=F(2, 5)))
    series = empirics.ingest_csv(sim.export_csv(traj))
    csv_ok = len(series) == len(traj.samples) and all(
        r.timestamp == s.hour * 3600 and r.price * 10**6 == s.price_micro and r.supply == s.supply
        for r, s in zip(series.records, traj.samples)
    )
    report(8, models_ok and csv_ok, f"model JSON byte-identical={models_ok}, CSV lossless={csv_ok}")
