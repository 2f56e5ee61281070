"""Builders for stablecoin networks: BAC (seigniorage), AMPL (rebase), FRAX (fractional).

Variables are integers.  Pool reserves and supply are whole coin / quote
units; ``price`` mirrors the pool spot price in micro-quote, truncated.
Every market-side update goes through :mod:`stablecheck.amm` so the integer
state is always the truncation of an exact rational computation.

BAC automata (location names follow the protocol description; ``Idle``,
``Expanding`` and ``Contracting`` are ours):

P  Initial -> Pre_Expansion / Pre_Contraction on price vs peg, emits
   expand! / contract!, returns to Initial at the next round boundary.
E  clock te, invariant te <= period.  expand? at te == period mints the
   seigniorage tranche; update! with X mints the treasury/bond tranche.
C  clock tc.  contract? at tc == period, then either a swap (update! with X,
   supply burned for bonds) or a declined swap (supply unchanged).
S  sellers, B  buyers: trade! with a nondeterministic size.
X  the pool.  trade? applies the swap; internal edges move between Idle,
   Sell and Buy by the sign of this round's net order flow; update? absorbs
   the protocol's own market impact (minted coins sold, burned coins bought).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from math import isqrt
from typing import Tuple

from . import amm
from .automaton import Automaton, Edge, Location, Network, Update, VarDecl, update, validate
from .checker import Property
from .expr import And, Const, Implies, LocAtom, Not, VarAtom

VAR_MAX = 10**12


class ConfigUnencodable(ValueError):
    pass


class StablecoinKind(Enum):
    BacSeigniorage = "bac"
    AmplRebase = "ampl"
    FraxFractional = "frax"


P_LOCATIONS = ("Initial", "Pre_Expansion", "Expanded", "Pre_Contraction", "Contracted")
E_LOCATIONS = ("Idle", "Expanding", "Validated")
C_LOCATIONS = ("Idle", "Contracting", "Validated")
X_LOCATIONS = ("Idle", "Sell", "Buy")


# ---------------------------------------------------------------- configs


def _check_common(cfg):
    if cfg.peg_micro <= 0 or cfg.initial_supply <= 0:
        raise ValueError("peg and initial supply must be positive")
    if cfg.pool_coin <= 0 or cfg.pool_quote <= 0:
        raise ValueError("pool reserves must be positive")
    if not cfg.trade_sizes:
        raise ValueError("trade_sizes must not be empty")
    if any(s < 0 for s in cfg.trade_sizes):
        raise ValueError("trade sizes must be non-negative")
    if cfg.trades_per_round < 0:
        raise ValueError("trades_per_round must be non-negative")
    big = max(cfg.initial_supply, cfg.pool_coin, cfg.pool_quote, cfg.peg_micro)
    if big * 10 > VAR_MAX or cfg.pool_coin * cfg.pool_quote > VAR_MAX**2:
        raise ConfigUnencodable(f"values up to {big} do not fit variable range [0, {VAR_MAX}]")


@dataclass(frozen=True)
class BacConfig:
    peg_micro: int = 1_000_000
    initial_supply: int = 10_000
    pool_coin: int = 1_000
    pool_quote: int = 1_000
    expansion_period: int = 24
    trade_sizes: Tuple[int, ...] = (10, 25)
    max_rounds: int = 4
    trades_per_round: int = 2

    def __post_init__(self):
        object.__setattr__(self, "trade_sizes", tuple(sorted(set(self.trade_sizes))))
        _check_common(self)
        if self.expansion_period <= 0 or self.max_rounds <= 0:
            raise ValueError("expansion_period and max_rounds must be positive")


@dataclass(frozen=True)
class AmplConfig:
    peg_micro: int = 1_000_000
    initial_supply: int = 10_000
    pool_coin: int = 1_000
    pool_quote: int = 1_000
    rebase_period: int = 24
    rebase_offset: int = 2
    trade_sizes: Tuple[int, ...] = (10, 25)
    max_rounds: int = 4
    trades_per_round: int = 2

    def __post_init__(self):
        object.__setattr__(self, "trade_sizes", tuple(sorted(set(self.trade_sizes))))
        _check_common(self)
        if not 0 <= self.rebase_offset < self.rebase_period:
            raise ValueError("rebase offset must lie inside the period")


@dataclass(frozen=True)
class FraxConfig:
    peg_micro: int = 1_000_000
    initial_supply: int = 10_000
    pool_coin: int = 1_000
    pool_quote: int = 1_000
    ratio_period: int = 1
    mint_size: int = 10
    trade_sizes: Tuple[int, ...] = (10, 25)
    max_hours: int = 4
    trades_per_round: int = 2
    ops_per_hour: int = 1

    def __post_init__(self):
        object.__setattr__(self, "trade_sizes", tuple(sorted(set(self.trade_sizes))))
        _check_common(self)
        if self.mint_size <= 0 or self.max_hours <= 0 or self.ratio_period <= 0:
            raise ValueError("mint_size, max_hours and ratio_period must be positive")


# ---------------------------------------------------------------- updates
# Every function mutates the variable environment in place.


def _pool(v):
    return amm.Pool(v["pool_coin"], v["pool_quote"])


def _store_pool(v, pool):
    v["pool_coin"] = amm.truncate(pool.reserve_coin)
    v["pool_quote"] = amm.truncate(pool.reserve_quote)
    v["price"] = amm.to_micro(Fraction(v["pool_quote"], v["pool_coin"]))


def _swap(v, signed_amount):
    if signed_amount > 0:
        new, _ = amm.apply_trade(_pool(v), amm.Trade(amm.BUY_COIN, signed_amount))
        _store_pool(v, new)
    elif signed_amount < 0:
        new, _ = amm.apply_trade(_pool(v), amm.Trade(amm.SELL_COIN, -signed_amount))
        _store_pool(v, new)


def _coin_at_peg(v, peg_micro):
    k = v["pool_coin"] * v["pool_quote"]
    return isqrt(k * amm.MICRO // peg_micro)


@update("place_order")
def place_order(v, signed_size):
    v["order"] = signed_size


@update("amm_trade")
def amm_trade(v):
    o = v["order"]
    _swap(v, o)
    v["flow"] += o
    v["trades"] += 1
    v["order"] = 0


@update("new_round")
def new_round(v):
    v["round"] += 1
    v["trades"] = 0
    v["flow"] = 0


@update("absorb_mint")
def absorb_mint(v):
    """Newly minted coins are sold into the pool; they open the round's flow."""
    m = v["minted"]
    _swap(v, -m)
    v["flow"] = -m
    v["minted"] = 0


@update("absorb_burn")
def absorb_burn(v):
    """Coins burned by the protocol were bought out of the pool first."""
    b = v["burned"]
    _swap(v, b)
    v["flow"] = b
    v["burned"] = 0


@update("bac_expand_start")
def bac_expand_start(v, peg_micro):
    new_round(v)
    v["mark"] = v["round"]
    delta = max(2, _coin_at_peg(v, peg_micro) - v["pool_coin"])
    seigniorage = (delta + 1) // 2
    v["N_bac"] += seigniorage
    v["minted"] += seigniorage
    v["tranche"] = delta - seigniorage


@update("bac_expand_redeem")
def bac_expand_redeem(v):
    """Second expansion tranche; bonds outstanding are redeemed out of it first."""
    t = v["tranche"]
    v["N_bac"] += t
    v["minted"] += t
    v["bonds"] -= min(v["bonds"], t)
    v["tranche"] = 0


@update("bac_contract_start")
def bac_contract_start(v, peg_micro):
    v["mark"] = v["round"]
    delta = max(1, v["pool_coin"] - _coin_at_peg(v, peg_micro))
    v["burn_due"] = min(delta, v["pool_coin"] - 1, v["N_bac"] - 1)


@update("bac_swap_burn")
def bac_swap_burn(v):
    b = v["burn_due"]
    v["N_bac"] -= b
    v["bonds"] += amm.truncate(amm.bonds_for_burn(b, amm.from_micro(v["price"])))
    v["burned"] = b
    v["burn_due"] = 0


@update("bac_decline_swap")
def bac_decline_swap(v):
    v["burn_due"] = 0


@update("ampl_rebase")
def ampl_rebase_update(v, peg_micro):
    new_round(v)
    price, peg = amm.from_micro(v["price"]), amm.from_micro(peg_micro)
    coin, supply = amm.ampl_rebase(v["pool_coin"], v["N_ampl"], price, peg)
    v["N_ampl"] = amm.truncate(supply)
    v["pool_coin"] = max(1, amm.truncate(coin))
    v["price"] = amm.to_micro(Fraction(v["pool_quote"], v["pool_coin"]))


@update("frax_hour")
def frax_hour(v, peg_micro):
    r = amm.frax_step_ratio(Fraction(v["ratio"], amm.RATIO_STEPS), amm.from_micro(v["price"]), amm.from_micro(peg_micro))
    v["ratio"] = amm.truncate(r * amm.RATIO_STEPS)
    v["hour"] += 1
    v["trades"] = 0
    v["ops"] = 0
    v["flow"] = 0


@update("frax_mint")
def frax_mint_update(v, n):
    split = amm.frax_mint(n, Fraction(v["ratio"], amm.RATIO_STEPS))
    v["N_frax"] += n
    v["collateral"] += amm.truncate(split["collateral_value"])
    v["fxs_burned"] += amm.truncate(split["fxs_value"])
    v["minted"] += n
    v["ops"] += 1


@update("frax_request_redeem")
def frax_request_redeem(v, n):
    v["burn_due"] = min(n, v["N_frax"] - 1)
    v["ops"] += 1


@update("frax_redeem")
def frax_redeem(v):
    b = v["burn_due"]
    split = amm.frax_mint(b, Fraction(v["ratio"], amm.RATIO_STEPS))
    v["N_frax"] -= b
    v["collateral"] -= min(v["collateral"], amm.truncate(split["collateral_value"]))
    v["burned"] = b
    v["burn_due"] = 0


# ---------------------------------------------------------------- shared pieces


def _market_vars(cfg, counter_hi):
    biggest = max(cfg.trade_sizes)
    return [
        VarDecl("pool_coin", 1, VAR_MAX, cfg.pool_coin),
        VarDecl("pool_quote", 1, VAR_MAX, cfg.pool_quote),
        VarDecl("price", 0, VAR_MAX, amm.to_micro(Fraction(cfg.pool_quote, cfg.pool_coin))),
        VarDecl("order", -biggest, biggest, 0),
        VarDecl("flow", -VAR_MAX, VAR_MAX, 0),
        VarDecl("trades", 0, counter_hi, 0),
    ]


def _traders(cfg):
    cap = f"trades < {cfg.trades_per_round}"
    sells = tuple(
        Edge("Idle", "Idle", (cap,), ("trade", "!"), (), Update("place_order", (-s,)))
        for s in cfg.trade_sizes
    )
    buys = tuple(
        Edge("Idle", "Idle", (cap, f"pool_coin > {s}"), ("trade", "!"), (), Update("place_order", (s,)))
        for s in cfg.trade_sizes
    )
    idle = (Location("Idle"),)
    return Automaton("S", idle, "Idle", sells), Automaton("B", idle, "Idle", buys)


def _exchange(update_edges):
    """The pool automaton X; ``update_edges(loc)`` yields its update? edges from ``loc``."""
    edges = []
    for loc in X_LOCATIONS:
        edges.append(Edge(loc, loc, (), ("trade", "?"), (), Update("amm_trade")))
    for loc in X_LOCATIONS:
        if loc != "Buy":
            edges.append(Edge(loc, "Buy", ("flow > 0",)))
        if loc != "Sell":
            edges.append(Edge(loc, "Sell", ("flow < 0",)))
        if loc != "Idle":
            edges.append(Edge(loc, "Idle", ("flow == 0",)))
    for loc in X_LOCATIONS:
        edges.extend(update_edges(loc))
    return Automaton("X", tuple(Location(n) for n in X_LOCATIONS), "Idle", tuple(edges))


def _absorbing_edges(loc):
    return [
        Edge(loc, "Sell", ("minted > 0",), ("update", "?"), (), Update("absorb_mint")),
        Edge(loc, "Buy", ("burn_due > 0", "pool_coin - burn_due > 0"), ("update", "?"), (), Update("absorb_burn")),
    ]


def _finish(net):
    problems = validate(net)
    if problems:
        raise ValueError("builder produced an invalid model: " + "; ".join(map(str, problems)))
    return net


# ---------------------------------------------------------------- BAC


def build_bac(cfg: BacConfig = None) -> Network:
    cfg = cfg or BacConfig()
    peg = cfg.peg_micro
    period = cfg.expansion_period
    R = cfg.max_rounds

    protocol = Automaton(
        "P",
        tuple(Location(n) for n in P_LOCATIONS),
        "Initial",
        (
            Edge("Initial", "Pre_Expansion", (f"price > {peg}",)),
            Edge("Initial", "Pre_Contraction", (f"price < {peg}",)),
            Edge("Pre_Expansion", "Initial", (f"price <= {peg}",)),
            Edge("Pre_Expansion", "Expanded", (f"price > {peg}",), ("expand", "!")),
            Edge("Pre_Contraction", "Initial", (f"price >= {peg}",)),
            Edge("Pre_Contraction", "Contracted", (f"price < {peg}",), ("contract", "!")),
            Edge("Expanded", "Initial", ("round > mark",)),
            Edge("Contracted", "Initial", ("round > mark",)),
        ),
    )

    e_inv = (f"te <= {period}",)
    expansion = Automaton(
        "E",
        tuple(Location(n, e_inv) for n in E_LOCATIONS),
        "Idle",
        (
            Edge("Idle", "Idle", (f"te == {period}", f"round < {R}"), None, ("te",), Update("new_round")),
            Edge("Idle", "Expanding", (f"te == {period}", f"round < {R}"), ("expand", "?"), ("te",),
                 Update("bac_expand_start", (peg,))),
            Edge("Expanding", "Validated", (), ("update", "!"), (), Update("bac_expand_redeem")),
            Edge("Validated", "Idle"),
        ),
        clocks=("te",),
    )

    c_inv = (f"tc <= {period}",)
    contraction = Automaton(
        "C",
        tuple(Location(n, c_inv) for n in C_LOCATIONS),
        "Idle",
        (
            Edge("Idle", "Idle", (f"tc == {period}",), None, ("tc",)),
            Edge("Idle", "Contracting", (f"tc == {period}",), ("contract", "?"), ("tc",),
                 Update("bac_contract_start", (peg,))),
            Edge("Contracting", "Validated", (), ("update", "!"), (), Update("bac_swap_burn")),
            Edge("Contracting", "Validated", (), None, (), Update("bac_decline_swap")),
            Edge("Validated", "Idle"),
        ),
        clocks=("tc",),
    )

    sellers, buyers = _traders(cfg)
    exchange = _exchange(_absorbing_edges)

    variables = [
        VarDecl("N_bac", 1, VAR_MAX, cfg.initial_supply),
        *_market_vars(cfg, cfg.trades_per_round),
        VarDecl("round", 0, R, 0),
        VarDecl("mark", 0, R, 0),
        VarDecl("minted", 0, VAR_MAX, 0),
        VarDecl("tranche", 0, VAR_MAX, 0),
        VarDecl("burn_due", 0, VAR_MAX, 0),
        VarDecl("burned", 0, VAR_MAX, 0),
        VarDecl("bonds", 0, VAR_MAX, 0),
    ]
    return _finish(Network(
        (protocol, expansion, contraction, sellers, buyers, exchange),
        tuple(variables),
        name="bac",
    ))


# ---------------------------------------------------------------- AMPL


def build_ampl(cfg: AmplConfig = None) -> Network:
    cfg = cfg or AmplConfig()
    peg = cfg.peg_micro
    period, R = cfg.rebase_period, cfg.max_rounds
    at_point = (f"tr == {period}", f"round < {R}")
    inv = (f"tr <= {period}",)
    rebase = Automaton(
        "R",
        tuple(Location(n, inv) for n in ("Idle", "Expanded", "Contracted")),
        "Idle",
        (
            Edge("Idle", "Expanded", at_point + (f"price > {peg}",), ("update", "!"), ("tr",),
                 Update("ampl_rebase", (peg,))),
            Edge("Idle", "Contracted", at_point + (f"price < {peg}",), ("update", "!"), ("tr",),
                 Update("ampl_rebase", (peg,))),
            Edge("Idle", "Idle", at_point + (f"price == {peg}",), None, ("tr",), Update("new_round")),
            Edge("Expanded", "Idle"),
            Edge("Contracted", "Idle"),
        ),
        clocks=("tr",),
        # the daily rebase lands at 02:00 when the clock starts at 22
        clock_init=(("tr", period - cfg.rebase_offset),),
    )
    sellers, buyers = _traders(cfg)
    exchange = _exchange(lambda loc: [Edge(loc, "Idle", (), ("update", "?"))])
    variables = [
        VarDecl("N_ampl", 1, VAR_MAX, cfg.initial_supply),
        *_market_vars(cfg, cfg.trades_per_round),
        VarDecl("round", 0, R, 0),
    ]
    return _finish(Network((rebase, sellers, buyers, exchange), tuple(variables), name="ampl"))


# ---------------------------------------------------------------- FRAX


def build_frax(cfg: FraxConfig = None) -> Network:
    cfg = cfg or FraxConfig()
    peg = cfg.peg_micro
    H = cfg.max_hours
    period = cfg.ratio_period
    ratio = Automaton(
        "K",
        (Location("Idle", (f"h <= {period}",)),),
        "Idle",
        (Edge("Idle", "Idle", (f"h == {period}", f"hour < {H}"), None, ("h",), Update("frax_hour", (peg,))),),
        clocks=("h",),
    )
    op_cap = f"ops < {cfg.ops_per_hour}"
    mint = Automaton(
        "M",
        tuple(Location(n) for n in ("Idle", "Minting", "Minted")),
        "Idle",
        (
            Edge("Idle", "Minting", (f"price > {peg}", op_cap), None, (), Update("frax_mint", (cfg.mint_size,))),
            Edge("Minting", "Minted", (), ("update", "!")),
            Edge("Minted", "Idle"),
        ),
    )
    redeem = Automaton(
        "D",
        tuple(Location(n) for n in ("Idle", "Redeeming", "Redeemed")),
        "Idle",
        (
            Edge("Idle", "Redeeming", (f"price < {peg}", op_cap), None, (),
                 Update("frax_request_redeem", (cfg.mint_size,))),
            Edge("Redeeming", "Redeemed", (), ("update", "!"), (), Update("frax_redeem")),
            Edge("Redeemed", "Idle"),
        ),
    )
    sellers, buyers = _traders(cfg)
    exchange = _exchange(_absorbing_edges)
    variables = [
        VarDecl("N_frax", 1, VAR_MAX, cfg.initial_supply),
        *_market_vars(cfg, cfg.trades_per_round),
        VarDecl("hour", 0, H, 0),
        VarDecl("ops", 0, cfg.ops_per_hour, 0),
        VarDecl("ratio", 0, amm.RATIO_STEPS, amm.RATIO_STEPS),
        VarDecl("collateral", 0, VAR_MAX, 0),
        VarDecl("fxs_burned", 0, VAR_MAX, 0),
        VarDecl("minted", 0, VAR_MAX, 0),
        VarDecl("burn_due", 0, VAR_MAX, 0),
        VarDecl("burned", 0, VAR_MAX, 0),
    ]
    return _finish(Network((ratio, mint, redeem, sellers, buyers, exchange), tuple(variables), name="frax"))


BUILDERS = {
    StablecoinKind.BacSeigniorage: (build_bac, BacConfig),
    StablecoinKind.AmplRebase: (build_ampl, AmplConfig),
    StablecoinKind.FraxFractional: (build_frax, FraxConfig),
}


def kind_from_name(name: str) -> StablecoinKind:
    try:
        return StablecoinKind(name.lower())
    except ValueError:
        raise ValueError(f"unknown stablecoin kind {name!r}; expected one of bac, ampl, frax") from None


def supply_var(net: Network) -> str:
    for name in net.var_names:
        if name.startswith("N_"):
            return name
    raise KeyError("network has no supply variable")


# ---------------------------------------------------------------- properties


def _validity(name, protocol_atoms, forbidden):
    return Property(name, Implies(And(tuple(protocol_atoms)), Not(forbidden)))


def standard_properties(kind: StablecoinKind) -> list:
    if kind is StablecoinKind.BacSeigniorage:
        return [
            _validity("expansion-validity", [LocAtom("P", "Expanded"), LocAtom("E", "Validated")], LocAtom("X", "Buy")),
            _validity("contraction-validity", [LocAtom("P", "Contracted"), LocAtom("C", "Validated")], LocAtom("X", "Sell")),
        ]
    if kind is StablecoinKind.AmplRebase:
        return [
            Property("rebase-expansion-validity", Implies(LocAtom("R", "Expanded"), Not(LocAtom("X", "Buy")))),
            Property("rebase-contraction-validity", Implies(LocAtom("R", "Contracted"), Not(LocAtom("X", "Sell")))),
        ]
    return [
        Property("mint-validity", Implies(LocAtom("M", "Minted"), Not(LocAtom("X", "Buy")))),
        Property("redeem-validity", Implies(LocAtom("D", "Redeemed"), Not(LocAtom("X", "Sell")))),
    ]


def builtin_properties(kind: StablecoinKind) -> dict:
    props = {p.name: p for p in standard_properties(kind)}
    props["trivial-true"] = Property("trivial-true", Const(True))
    if kind is StablecoinKind.FraxFractional:
        props["ratio-at-genesis"] = Property("ratio-at-genesis", VarAtom("ratio", "==", amm.RATIO_STEPS))
    return props
