"""``stablecheck`` command line: export, check, simulate, detect.

Exit codes: 0 success / verified, 1 counter-example or alarm episodes,
2 usage or model error, 3 resource bound hit.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import tempfile
from fractions import Fraction
from pathlib import Path

from . import checker, empirics, modelio, models, sim
from .automaton import ModelError, validate
from .expr import ParseError as FormulaError

OK, FOUND, USAGE, BOUND = 0, 1, 2, 3
MAX_STATES_ENV = "STABLECHECK_MAX_STATES"
DEFAULT_MAX_STATES = 1_000_000


class UsageError(Exception):
    pass


def atomic_write(path, data) -> None:
    """Write ``data`` next to ``path`` and rename into place, so failures leave nothing behind."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _parse_value(text):
    if "," in text:
        return tuple(int(x) for x in text.split(",") if x.strip())
    return int(text)


def apply_params(cfg, params):
    """Override dataclass fields of ``cfg`` from ``k=v`` strings."""
    names = {f.name: f for f in dataclasses.fields(cfg)}
    changes = {}
    for item in params or ():
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or key not in names:
            raise UsageError(f"unknown parameter {item!r}; known: {', '.join(sorted(names))}")
        try:
            parsed = _parse_value(value.strip())
        except ValueError:
            raise UsageError(f"parameter {key} needs an integer or comma list, got {value!r}") from None
        if key == "trade_sizes" and isinstance(parsed, int):
            parsed = (parsed,)
        changes[key] = parsed
    try:
        return dataclasses.replace(cfg, **changes)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def builtin_network(kind_name, params=(), base=None):
    kind = models.kind_from_name(kind_name)
    build, cfg_cls = models.BUILDERS[kind]
    cfg = apply_params(base if base is not None else cfg_cls(), params)
    return kind, build(cfg)


def _load_model(args):
    if args.model:
        try:
            text = Path(args.model).read_text(encoding="utf-8")
            net = modelio.loads(text)
        except OSError as exc:
            raise UsageError(f"cannot read model: {exc}") from None
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"malformed model JSON: {exc}") from None
        return None, net
    return builtin_network(args.builtin, args.param)


def _select_property(kind, choice):
    known = models.builtin_properties(kind) if kind else {"trivial-true": checker.Property.parse("trivial-true", "true")}
    if choice in known:
        return known[choice]
    path = Path(choice)
    if path.is_file():
        text = path.read_text(encoding="utf-8").strip()
        try:
            return checker.Property.parse(path.stem, text)
        except (FormulaError, ValueError) as exc:
            raise UsageError(f"{choice}: {exc}") from None
    raise UsageError(f"unknown property {choice!r}; builtin names: {', '.join(sorted(known))}")


def _max_states_default():
    raw = os.environ.get(MAX_STATES_ENV)
    if not raw:
        return DEFAULT_MAX_STATES
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"{MAX_STATES_ENV} must be an integer, got {raw!r}") from None
    if value <= 0:
        raise UsageError(f"{MAX_STATES_ENV} must be positive")
    return value


# ---------------------------------------------------------------- commands


def cmd_export(args) -> int:
    _, net = builtin_network(args.builtin, args.param)
    atomic_write(args.out, modelio.dumps(net))
    print(f"wrote {args.out} ({len(net.automata)} automata)")
    return OK


def cmd_check(args) -> int:
    kind, net = _load_model(args)
    problems = validate(net)
    if problems:
        for d in problems:
            print(f"model error: {d}", file=sys.stderr)
        return USAGE
    prop = _select_property(kind, args.property)
    missing = checker.resolve(net, prop.body)
    if missing:
        raise UsageError("property does not resolve: " + "; ".join(missing))
    max_states = args.max_states if args.max_states is not None else _max_states_default()
    try:
        result = checker.check(net, prop, max_states=max_states, max_depth=args.max_depth)
    except checker.StateSpaceBound as exc:
        print(f"{prop.name}: bound hit ({exc})")
        return BOUND
    print(f"{prop.name}: {result.verdict} (states_explored={result.states_explored})")
    if result.verified:
        return OK
    out = args.trace_out or f"{prop.name}-trace.json"
    atomic_write(out, checker.trace_to_json(net, result))
    print(f"counter-example with {len(result.trace)} steps written to {out}")
    return FOUND


def _shock(text):
    try:
        start, duration, bias = text.split(":")
        return sim.Shock(int(start), int(duration), Fraction(bias))
    except ValueError:
        raise argparse.ArgumentTypeError(f"shock must be START:HOURS:BUY_BIAS, got {text!r}") from None


def _fraction(text):
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def sim_base_config(kind, horizon):
    """Builder config with round and trade caps wide enough for ``horizon`` hours."""
    if kind is models.StablecoinKind.BacSeigniorage:
        return models.BacConfig(trade_sizes=(5, 10), max_rounds=horizon // 24 + 2, trades_per_round=1000)
    if kind is models.StablecoinKind.AmplRebase:
        return models.AmplConfig(trade_sizes=(5, 10), max_rounds=horizon // 24 + 2, trades_per_round=1000)
    return models.FraxConfig(trade_sizes=(5, 10), max_hours=horizon + 2, trades_per_round=1000)


def cmd_simulate(args) -> int:
    kind = models.kind_from_name(args.builtin)
    _, net = builtin_network(args.builtin, args.param, base=sim_base_config(kind, args.horizon))
    try:
        cfg = sim.SimConfig(
            seed=args.seed,
            horizon_hours=args.horizon,
            trade_rate=args.trade_rate,
            buy_bias=args.buy_bias,
            shocks=tuple(args.shock or ()),
            swap_prob=args.swap_prob,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    traj = sim.run(net, cfg)
    atomic_write(args.out, sim.export_csv(traj))
    if args.events_out:
        atomic_write(args.events_out, sim.trajectory_to_json(net, traj))
    print(f"wrote {len(traj.samples)} samples to {args.out}")
    return OK


def cmd_detect(args) -> int:
    try:
        raw = Path(args.csv).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {args.csv}: {exc}") from None
    try:
        series = empirics.ingest_csv(raw, source=args.csv)
    except empirics.ParseError as exc:
        print(f"{args.csv}: {exc}", file=sys.stderr)
        return USAGE
    try:
        params = empirics.DetectParams(
            peg=args.peg, window_hours=args.window, price_eps=args.price_eps, supply_eps=args.supply_eps
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    episodes = empirics.detect_episodes(series, params)
    sys.stdout.write(empirics.episodes_to_jsonl(episodes))
    return FOUND if any(e.kind in empirics.ALARM_KINDS for e in episodes) else OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stablecheck", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    kinds = [k.value for k in models.StablecoinKind]

    def param_flag(p):
        p.add_argument("--param", action="append", metavar="KEY=VALUE",
                       help="override a builder config field (repeatable; lists as 5,10)")

    p = sub.add_parser("export", help="write a builtin model as JSON")
    p.add_argument("--builtin", required=True, choices=kinds)
    p.add_argument("--out", required=True)
    param_flag(p)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("check", help="check an AG property")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--builtin", choices=kinds)
    src.add_argument("--model", help="model JSON file")
    p.add_argument("--property", required=True, help="builtin property name or a file holding a formula")
    p.add_argument("--max-states", type=int, default=None,
                   help=f"state limit (default ${MAX_STATES_ENV} or {DEFAULT_MAX_STATES})")
    p.add_argument("--max-depth", type=int, default=10_000)
    p.add_argument("--trace-out", help="where to write a counter-example (default <property>-trace.json)")
    param_flag(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("simulate", help="seeded market simulation to CSV")
    p.add_argument("--builtin", required=True, choices=kinds)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int, default=72)
    p.add_argument("--trade-rate", type=_fraction, default=Fraction(1, 2))
    p.add_argument("--buy-bias", type=_fraction, default=Fraction(1, 2))
    p.add_argument("--swap-prob", type=_fraction, default=Fraction(1))
    p.add_argument("--shock", type=_shock, action="append", metavar="START:HOURS:BUY_BIAS")
    p.add_argument("--out", required=True)
    p.add_argument("--events-out", help="optional JSON with events and fired transitions")
    param_flag(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="find supply episodes in a price/supply CSV")
    p.add_argument("csv")
    p.add_argument("--peg", type=_fraction, default=Fraction(1))
    p.add_argument("--window", type=int, default=7, help="hours")
    p.add_argument("--price-eps", type=_fraction, default=Fraction(5, 1000))
    p.add_argument("--supply-eps", type=_fraction, default=Fraction(1, 1000))
    p.set_defaults(func=cmd_detect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code else OK
    try:
        return args.func(args)
    except (UsageError, ModelError, models.ConfigUnencodable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
