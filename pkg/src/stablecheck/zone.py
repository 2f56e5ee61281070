"""Difference-bound matrices over integer-constant clock constraints.

Entry ``m[i][j]`` of a zone bounds ``x_i - x_j``; index 0 is the constant
zero clock.  Bounds are packed into plain ints so that comparison of packed
values is comparison of bounds::

    (c, <)  -> 2c
    (c, <=) -> 2c + 1
    INF     -> a large sentinel

which gives the order (c, <) < (c, <=) < (c + 1, <) for free.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

INF = 1 << 62
BOUND_LIMIT = 1 << 40
LE_ZERO = 1
LT_ZERO = 0


class EmptyZone(ValueError):
    pass


def bound(value: int, strict: bool = False) -> int:
    if not -BOUND_LIMIT <= value <= BOUND_LIMIT:
        raise OverflowError(f"bound constant {value} out of range")
    return (value << 1) | (0 if strict else 1)


def le(value: int) -> int:
    return bound(value, False)


def lt(value: int) -> int:
    return bound(value, True)


def bound_value(b: int) -> int:
    if b == INF:
        raise ValueError("INF has no value")
    return b >> 1


def is_strict(b: int) -> bool:
    return b != INF and not (b & 1)


def add_bounds(a: int, b: int) -> int:
    if a == INF or b == INF:
        return INF
    value = (a >> 1) + (b >> 1)
    if not -BOUND_LIMIT <= value <= BOUND_LIMIT:
        raise OverflowError(f"bound addition overflow: {value}")
    return (value << 1) | (a & b & 1)


def negate_bound(b: int) -> int:
    """Complement of ``x - y <| c``, expressed as a bound on ``y - x``."""
    if b == INF:
        raise ValueError("cannot negate INF")
    value = b >> 1
    # not (d <= c) == (-d < -c); not (d < c) == (-d <= -c)
    return bound(-value, strict=bool(b & 1))


def format_bound(b: int) -> str:
    if b == INF:
        return "<inf"
    return f"{'<' if is_strict(b) else '<='}{bound_value(b)}"


@dataclass(frozen=True)
class ClockConstraint:
    """``x_left - x_right`` bounded by ``bound`` (packed)."""

    left: int
    right: int
    bound: int

    def __str__(self):
        lhs = f"x{self.left}" if self.right == 0 else f"x{self.left} - x{self.right}"
        if self.left == 0:
            lhs = f"-x{self.right}"
        return f"{lhs} {format_bound(self.bound)}"


@dataclass(frozen=True)
class Zone:
    dim: int
    m: tuple

    def __post_init__(self):
        if len(self.m) != self.dim * self.dim:
            raise ValueError("matrix size does not match dim")

    def __getitem__(self, ij):
        i, j = ij
        return self.m[i * self.dim + j]

    def rows(self):
        d = self.dim
        return [list(self.m[i * d:(i + 1) * d]) for i in range(d)]

    def __str__(self):
        if is_empty(self):
            return "Zone(empty)"
        parts = []
        for i in range(self.dim):
            for j in range(self.dim):
                b = self[i, j]
                if i == j or b == INF or (i == 0 and b == LE_ZERO):
                    continue
                parts.append(str(ClockConstraint(i, j, b)))
        return "Zone(" + ", ".join(parts) + ")"


def from_rows(rows: Sequence[Sequence[int]]) -> Zone:
    dim = len(rows)
    return Zone(dim, tuple(b for row in rows for b in row))


def zero(dim: int) -> Zone:
    """All clocks equal to zero."""
    return Zone(dim, (LE_ZERO,) * (dim * dim))


def universe(dim: int) -> Zone:
    """All non-negative valuations."""
    m = [INF] * (dim * dim)
    for i in range(dim):
        m[i * dim + i] = LE_ZERO
        m[i] = LE_ZERO  # row 0: 0 - x_i <= 0
    return Zone(dim, tuple(m))


def empty(dim: int) -> Zone:
    """Canonical representative of the empty zone."""
    return Zone(dim, (le(-1),) * (dim * dim))


def point(values: Sequence[int]) -> Zone:
    """Zone holding exactly one integer valuation (``values`` excludes the zero clock)."""
    vals = (0,) + tuple(values)
    dim = len(vals)
    return Zone(dim, tuple(le(vals[i] - vals[j]) for i in range(dim) for j in range(dim)))


def _close(m: list, dim: int) -> bool:
    """Floyd-Warshall in place; False if a negative cycle shows up."""
    for k in range(dim):
        rk = k * dim
        for i in range(dim):
            ri = i * dim
            mik = m[ri + k]
            if mik == INF:
                continue
            vik, sik = mik >> 1, mik & 1
            for j in range(dim):
                mkj = m[rk + j]
                if mkj == INF:
                    continue
                s = ((vik + (mkj >> 1)) << 1) | (sik & mkj)
                if s < m[ri + j]:
                    m[ri + j] = s
        for i in range(dim):
            if m[i * dim + i] < LE_ZERO:
                return False
    return True


def canonicalize(z: Zone) -> Zone:
    dim = z.dim
    if z.m[0] < LE_ZERO:
        return empty(dim)
    m = list(z.m)
    if not _close(m, dim):
        return empty(dim)
    return Zone(dim, tuple(m))


def is_empty(z: Zone) -> bool:
    if z.m[0] < LE_ZERO:
        return True
    return canonicalize(z).m[0] < LE_ZERO


def is_canonical(z: Zone) -> bool:
    if z.m[0] < LE_ZERO:
        return z == empty(z.dim)
    return canonicalize(z) == z


def up(z: Zone) -> Zone:
    """Delay closure of a canonical zone: drop the upper bound of every clock."""
    if z.m[0] < LE_ZERO:
        raise EmptyZone("up() of an empty zone")
    m = list(z.m)
    for i in range(1, z.dim):
        m[i * z.dim] = INF
    return Zone(z.dim, tuple(m))


def constrain(z: Zone, c: ClockConstraint) -> Zone:
    """Intersect a canonical zone with one constraint; stays canonical."""
    dim = z.dim
    if z.m[0] < LE_ZERO:
        return z
    i, j, b = c.left, c.right, c.bound
    if not (0 <= i < dim and 0 <= j < dim):
        raise IndexError(f"constraint {c} outside zone of dim {dim}")
    if b == INF:
        return z
    m = z.m
    if add_bounds(m[j * dim + i], b) < LE_ZERO:
        return empty(dim)
    if b >= m[i * dim + j]:
        return z
    out = list(m)
    out[i * dim + j] = b
    # only paths through the tightened edge can improve
    for k in range(dim):
        rk = k * dim
        mki = out[rk + i]
        if mki == INF:
            continue
        via_i = add_bounds(mki, b)
        vv, sv = via_i >> 1, via_i & 1
        rj = j * dim
        for l in range(dim):
            mjl = out[rj + l]
            if mjl == INF:
                continue
            s = ((vv + (mjl >> 1)) << 1) | (sv & mjl)
            if s < out[rk + l]:
                out[rk + l] = s
    return Zone(dim, tuple(out))


def constrain_all(z: Zone, constraints: Iterable[ClockConstraint]) -> Zone:
    for c in constraints:
        z = constrain(z, c)
        if z.m[0] < LE_ZERO:
            break
    return z


def reset(z: Zone, clocks: Iterable[int]) -> Zone:
    """Set every listed clock of a canonical zone to zero."""
    clocks = set(clocks)
    if 0 in clocks:
        raise ValueError("the zero clock cannot be reset")
    if z.m[0] < LE_ZERO:
        raise EmptyZone("reset() of an empty zone")
    dim = z.dim
    m = list(z.m)
    for x in sorted(clocks):
        rx = x * dim
        for j in range(dim):
            m[rx + j] = m[j]
            m[j * dim + x] = m[j * dim]
        m[rx + x] = LE_ZERO
    return Zone(dim, tuple(m))


def includes(z1: Zone, z2: Zone) -> bool:
    """True iff every valuation of z2 lies in z1 (both canonical)."""
    if z1.dim != z2.dim:
        raise ValueError("dimension mismatch")
    if z2.m[0] < LE_ZERO:
        return True
    if z1.m[0] < LE_ZERO:
        return False
    return all(b2 <= b1 for b1, b2 in zip(z1.m, z2.m))


def satisfies(b: int, diff) -> bool:
    """Does the numeric difference ``diff`` satisfy bound ``b``?"""
    if b == INF:
        return True
    c = b >> 1
    return diff <= c if b & 1 else diff < c


def contains(z: Zone, valuation: Sequence) -> bool:
    """Membership of a valuation (numbers for clocks 1..dim-1)."""
    if z.m[0] < LE_ZERO:
        return False
    vals = (0,) + tuple(valuation)
    if len(vals) != z.dim:
        raise ValueError("valuation length does not match zone")
    if any(v < 0 for v in vals):
        return False
    dim = z.dim
    for i in range(dim):
        for j in range(dim):
            if i != j and not satisfies(z.m[i * dim + j], vals[i] - vals[j]):
                return False
    return True


def max_constant(z: Zone) -> int:
    finite = [abs(b >> 1) for b in z.m if b != INF]
    return max(finite, default=0)
