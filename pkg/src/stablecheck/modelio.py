"""Model JSON: load/store networks with canonical key ordering.

Schema::

    {"name": str,
     "vars": [{"name", "lo", "hi", "init"}],
     "channels": [str],
     "automata": [{"name", "clocks": [str], "clock_init": {clock: int},
                   "locations": [{"name", "invariant": [str], "accepting": bool}],
                   "initial": str,
                   "edges": [{"from", "to", "guards": [str],
                              "sync": {"chan", "dir"} | null,
                              "resets": [str],
                              "update": {"fn", "args": [int]}}]}]}
"""

from __future__ import annotations

import json

from .automaton import Automaton, Edge, Location, Network, Update, VarDecl
from .expr import parse_atoms


def _canonical_guard(text):
    return " && ".join(str(a) for a in parse_atoms(text))


def network_to_dict(net: Network) -> dict:
    return {
        "name": net.name,
        "vars": [{"name": v.name, "lo": v.lo, "hi": v.hi, "init": v.init} for v in net.vars],
        "channels": list(net.channels),
        "automata": [
            {
                "name": a.name,
                "clocks": list(a.clocks),
                "clock_init": dict(a.clock_init),
                "initial": a.initial,
                "locations": [
                    {"name": l.name, "invariant": list(l.invariant), "accepting": l.accepting}
                    for l in a.locations
                ],
                "edges": [
                    {
                        "from": e.source,
                        "to": e.target,
                        "guards": list(e.guards),
                        "sync": {"chan": e.sync[0], "dir": e.sync[1]} if e.sync else None,
                        "resets": list(e.resets),
                        "update": {"fn": e.update.fn, "args": list(e.update.args)},
                    }
                    for e in a.edges
                ],
            }
            for a in net.automata
        ],
    }


def network_from_dict(data: dict) -> Network:
    automata = []
    for a in data["automata"]:
        edges = []
        for e in a.get("edges", []):
            sync = e.get("sync")
            upd = e.get("update") or {}
            edges.append(
                Edge(
                    e["from"],
                    e["to"],
                    tuple(_canonical_guard(g) for g in e.get("guards", [])),
                    (sync["chan"], sync["dir"]) if sync else None,
                    tuple(e.get("resets", [])),
                    Update(upd.get("fn", "noop"), tuple(int(x) for x in upd.get("args", []))),
                )
            )
        locations = tuple(
            Location(
                l["name"],
                tuple(_canonical_guard(g) for g in l.get("invariant", [])),
                bool(l.get("accepting", False)),
            )
            for l in a["locations"]
        )
        automata.append(
            Automaton(
                a["name"],
                locations,
                a["initial"],
                tuple(edges),
                tuple(a.get("clocks", [])),
                tuple(sorted((k, int(v)) for k, v in a.get("clock_init", {}).items())),
            )
        )
    variables = tuple(VarDecl(v["name"], int(v["lo"]), int(v["hi"]), int(v["init"])) for v in data.get("vars", []))
    channels = tuple(data.get("channels", ()))
    return Network(tuple(automata), variables, channels, name=data.get("name", "network"))


def dumps(net: Network) -> str:
    return json.dumps(network_to_dict(net), indent=2, sort_keys=True) + "\n"


def loads(text: str) -> Network:
    return network_from_dict(json.loads(text))
