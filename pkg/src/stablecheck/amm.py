"""Exact market math: constant-product pool, bond price, rebase, fractional mint.

All values are ``fractions.Fraction``.  Integer conversion for automaton
variables happens only through ``to_micro`` / ``truncate`` (toward zero).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import isqrt

MICRO = 10**6
RATIO_STEPS = 400
RATIO_STEP = Fraction(1, RATIO_STEPS)  # 0.25%

BUY_COIN, SELL_COIN = "buy_coin", "sell_coin"


class PoolDrained(ValueError):
    pass


def q(x) -> Fraction:
    """Coerce ints, strings like '1.35' and Fractions; floats are rejected."""
    if isinstance(x, float):
        raise TypeError("floats are not exact; pass a str, int or Fraction")
    return Fraction(x)


@dataclass(frozen=True)
class Pool:
    reserve_coin: Fraction
    reserve_quote: Fraction
    fee: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "reserve_coin", q(self.reserve_coin))
        object.__setattr__(self, "reserve_quote", q(self.reserve_quote))
        object.__setattr__(self, "fee", q(self.fee))
        if self.reserve_coin <= 0 or self.reserve_quote <= 0:
            raise PoolDrained("pool reserves must be strictly positive")
        if not 0 <= self.fee < 1:
            raise ValueError("fee must be in [0, 1)")

    @property
    def k(self) -> Fraction:
        return self.reserve_coin * self.reserve_quote


@dataclass(frozen=True)
class Trade:
    side: str
    amount: Fraction

    def __post_init__(self):
        object.__setattr__(self, "amount", q(self.amount))
        if self.side not in (BUY_COIN, SELL_COIN):
            raise ValueError(f"unknown side {self.side!r}")
        if self.amount <= 0:
            raise ValueError("trade amount must be positive")


def spot_price(p: Pool) -> Fraction:
    return p.reserve_quote / p.reserve_coin


def apply_trade(p: Pool, t: Trade):
    """Swap against the pool, returning ``(new_pool, new_spot_price)``.

    Buying coin takes ``amount`` coin out and puts in whatever quote keeps the
    product constant; selling does the reverse.  A nonzero fee is charged on
    the input side and stays in the pool.
    """
    k = p.k
    if t.side == BUY_COIN:
        if t.amount >= p.reserve_coin:
            raise PoolDrained(f"cannot buy {t.amount} coin from a reserve of {p.reserve_coin}")
        coin = p.reserve_coin - t.amount
        quote_in = (k / coin - p.reserve_quote) / (1 - p.fee)
        quote = p.reserve_quote + quote_in
    else:
        coin_in = t.amount
        coin = p.reserve_coin + coin_in
        effective = p.reserve_coin + coin_in * (1 - p.fee)
        quote = k / effective
    new = Pool(coin, quote, p.fee)
    return new, spot_price(new)


def quote_paid(p: Pool, t: Trade) -> Fraction:
    new, _ = apply_trade(p, t)
    return new.reserve_quote - p.reserve_quote


def bab_price(p_bac) -> Fraction:
    """Bond price is the square of the coin price."""
    p_bac = q(p_bac)
    if p_bac < 0:
        raise ValueError("price must be non-negative")
    return p_bac * p_bac


def bonds_for_burn(burned, p_bac) -> Fraction:
    """Bonds received for burning ``burned`` coins at price ``p_bac`` (peg units)."""
    p_bac = q(p_bac)
    if p_bac <= 0:
        raise ValueError("price must be positive")
    return q(burned) * p_bac / bab_price(p_bac)


def ampl_rebase(balance, total_supply, price, peg):
    """Scale a balance and the total supply by ``price / peg``."""
    balance, total_supply, price, peg = map(q, (balance, total_supply, price, peg))
    if total_supply <= 0 or peg <= 0:
        raise ValueError("total supply and peg must be positive")
    multiplier = price / peg
    return balance * multiplier, total_supply * multiplier


def frax_mint(n, r):
    """Split the value of ``n`` newly minted coins into collateral and burned FXS."""
    n, r = q(n), q(r)
    if n <= 0:
        raise ValueError("mint amount must be positive")
    if not 0 <= r <= 1:
        raise ValueError("collateral ratio must be in [0, 1]")
    return {"collateral_value": n * r, "fxs_value": n * (1 - r)}


def frax_step_ratio(r, price, peg) -> Fraction:
    """One hourly collateral-ratio adjustment: above peg lowers r, below peg raises it."""
    r, price, peg = q(r), q(price), q(peg)
    if price > peg:
        r -= RATIO_STEP
    elif price < peg:
        r += RATIO_STEP
    return min(Fraction(1), max(Fraction(0), r))


# ---------------------------------------------------------------- TA boundary


def truncate(x) -> int:
    """Round toward zero."""
    return int(q(x))


def to_micro(x) -> int:
    return truncate(q(x) * MICRO)


def from_micro(n: int) -> Fraction:
    return Fraction(n, MICRO)


def reserve_for_price(k, target_price) -> int:
    """Largest integer coin reserve whose constant-product price is >= target."""
    # quote/coin >= target with coin*quote = k  <=>  coin^2 <= k / target
    k, target_price = q(k), q(target_price)
    ratio = k / target_price
    return isqrt(ratio.numerator // ratio.denominator)
