"""Time-series ingestion and detection of effective / broken supply episodes.

An expansion event is a relative supply increase above ``supply_eps``
observed while the price is above peg (at the event record or the one before
it, since a mint usually reacts to the previous price).  The price is then
compared ``window_hours`` later: a rise of more than ``price_eps`` (relative)
means the expansion was broken.  Contractions mirror this with the sign
flipped; a full window spent below peg with no supply change at all is a
stalled contraction.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Tuple

EFFECTIVE_EXPANSION = "EffectiveExpansion"
BROKEN_EXPANSION = "BrokenExpansion"
EFFECTIVE_CONTRACTION = "EffectiveContraction"
BROKEN_CONTRACTION = "BrokenContraction"
STALLED_CONTRACTION = "StalledContraction"

EXPANSION_KINDS = (EFFECTIVE_EXPANSION, BROKEN_EXPANSION)
CONTRACTION_KINDS = (EFFECTIVE_CONTRACTION, BROKEN_CONTRACTION, STALLED_CONTRACTION)
ALARM_KINDS = (BROKEN_EXPANSION, BROKEN_CONTRACTION, STALLED_CONTRACTION)

HOUR = 3600


class ParseError(ValueError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NonMonotonicTimestamp(ParseError):
    pass


@dataclass(frozen=True)
class Record:
    timestamp: int
    price: Fraction
    supply: Fraction


@dataclass(frozen=True)
class TimeSeries:
    records: Tuple[Record, ...]
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        for i, r in enumerate(self.records):
            if r.price < 0 or r.supply < 0:
                raise ValueError(f"record {i}: negative price or supply")
            if i and r.timestamp <= self.records[i - 1].timestamp:
                raise ValueError(f"record {i}: timestamps must strictly increase")

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class Episode:
    kind: str
    start: int
    end: int
    price_change_pct: Fraction
    supply_change: Fraction

    def to_dict(self):
        return {
            "kind": self.kind,
            "start": self.start,
            "end": self.end,
            "price_change_pct": f"{float(self.price_change_pct):.4f}",
            "supply_change": _num_text(self.supply_change),
        }


def _num_text(x: Fraction) -> str:
    if x.denominator == 1:
        return str(x.numerator)
    return f"{float(x):.6f}"


def _decimal(text, line, what):
    try:
        value = Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise ParseError(line, f"bad {what} {text!r}") from None
    return value


def ingest_csv(data, source: str = "") -> TimeSeries:
    """Parse ``timestamp,price,supply`` (epoch seconds) or the simulator's ``hour,price,supply,side``."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(1, f"not UTF-8 text ({exc})") from None
    rows = list(csv.reader(io.StringIO(data)))
    if not rows:
        raise ParseError(1, "empty input")
    header = [h.strip().lower() for h in rows[0]]
    if header[:3] == ["timestamp", "price", "supply"]:
        scale = 1
    elif header[:3] == ["hour", "price", "supply"]:
        scale = HOUR
    else:
        raise ParseError(1, f"unexpected header {rows[0]!r}")
    records = []
    for line, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < 3:
            raise ParseError(line, f"expected at least 3 fields, got {len(row)}")
        try:
            ts = int(row[0].strip()) * scale
        except ValueError:
            raise ParseError(line, f"bad timestamp {row[0]!r}") from None
        price = _decimal(row[1], line, "price")
        supply = _decimal(row[2], line, "supply")
        if price < 0 or supply < 0:
            raise ParseError(line, "negative price or supply")
        if records and ts <= records[-1].timestamp:
            raise NonMonotonicTimestamp(line, f"timestamp {ts} does not increase")
        records.append(Record(ts, price, supply))
    return TimeSeries(tuple(records), source)


@dataclass(frozen=True)
class DetectParams:
    peg: Fraction = Fraction(1)
    window_hours: int = 7
    price_eps: Fraction = Fraction(5, 1000)
    supply_eps: Fraction = Fraction(1, 1000)

    def __post_init__(self):
        for name in ("peg", "price_eps", "supply_eps"):
            object.__setattr__(self, name, Fraction(getattr(self, name)))
        if self.window_hours <= 0:
            raise ValueError("window must be positive")


def _window_end(records, i, horizon):
    """Index of the first record at or after ``records[i].timestamp + horizon``."""
    target = records[i].timestamp + horizon
    for j in range(i + 1, len(records)):
        if records[j].timestamp >= target:
            return j
    return None


def _pct(before, after):
    if before == 0:
        return Fraction(0)
    return (after - before) / before * 100


def detect_episodes(ts: TimeSeries, params: DetectParams = None) -> List[Episode]:
    p = params or DetectParams()
    recs = ts.records
    horizon = p.window_hours * HOUR
    episodes = []
    exp_busy = con_busy = None  # timestamp until which a family is occupied
    stall_start = None

    for i in range(1, len(recs)):
        prev, cur = recs[i - 1], recs[i]
        change = cur.supply - prev.supply
        rel = change / prev.supply if prev.supply else Fraction(0)
        near_price = max(prev.price, cur.price)
        low_price = min(prev.price, cur.price)

        if rel > p.supply_eps and near_price > p.peg and (exp_busy is None or cur.timestamp >= exp_busy):
            j = _window_end(recs, i, horizon)
            if j is not None:
                end = recs[j]
                broken = end.price - cur.price > p.price_eps * cur.price
                episodes.append(Episode(
                    BROKEN_EXPANSION if broken else EFFECTIVE_EXPANSION,
                    cur.timestamp, end.timestamp, _pct(cur.price, end.price), end.supply - prev.supply,
                ))
                exp_busy = end.timestamp

        contraction = rel < -p.supply_eps and low_price < p.peg
        if contraction and (con_busy is None or cur.timestamp >= con_busy):
            j = _window_end(recs, i, horizon)
            if j is not None:
                end = recs[j]
                rose = end.price - cur.price > p.price_eps * cur.price
                episodes.append(Episode(
                    EFFECTIVE_CONTRACTION if rose else BROKEN_CONTRACTION,
                    cur.timestamp, end.timestamp, _pct(cur.price, end.price), end.supply - prev.supply,
                ))
                con_busy = end.timestamp
                stall_start = None
                continue

        # stalled: below peg for a whole window without any supply movement
        quiet = abs(rel) <= p.supply_eps and cur.price < p.peg and prev.price < p.peg
        if not quiet:
            stall_start = None
            continue
        if stall_start is None:
            stall_start = i - 1
        start = recs[stall_start]
        if cur.timestamp - start.timestamp >= horizon and (con_busy is None or start.timestamp >= con_busy):
            episodes.append(Episode(
                STALLED_CONTRACTION, start.timestamp, cur.timestamp,
                _pct(start.price, cur.price), cur.supply - start.supply,
            ))
            con_busy = cur.timestamp
            stall_start = i
    return episodes


def episodes_to_jsonl(episodes) -> str:
    return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in episodes)
