"""Tiny recursive-descent parser for guard atoms and state formulas.

Guard atoms (one per string, ``&&`` splits a conjunction)::

    atom   := term OP operand
    term   := IDENT | IDENT '-' IDENT
    operand:= INT | '-' INT | IDENT
    OP     := '<' | '<=' | '==' | '!=' | '>=' | '>'

State formulas (property bodies)::

    formula := implies
    implies := or ( ('imply' | '->') implies )?
    or      := and ( ('||' | 'or') and )*
    and     := unary ( ('&&' | 'and') unary )*
    unary   := ('!' | 'not') unary | '(' formula ')' | 'true' | 'false'
             | IDENT '.' IDENT | IDENT OP operand
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass
from typing import Optional, Union

OPS = {
    "<": operator.lt,
    "<=": operator.le,
    "==": operator.eq,
    "!=": operator.ne,
    ">=": operator.ge,
    ">": operator.gt,
}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<id>[A-Za-z_][A-Za-z0-9_]*)|(?P<op><=|>=|==|!=|&&|\|\||->|[<>!().\-\[\]]))"
)


class ParseError(ValueError):
    pass


def tokenize(text: str) -> list:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos:].strip()[:1]!r} in {text!r}")
        kind = m.lastgroup
        tokens.append((kind, m.group(kind)))
        pos = m.end()
    return tokens


@dataclass(frozen=True)
class Atom:
    """``left [- minus] op right`` where right is an int or an identifier."""

    left: str
    op: str
    right: Union[int, str]
    minus: Optional[str] = None

    def __str__(self):
        lhs = self.left if self.minus is None else f"{self.left} - {self.minus}"
        return f"{lhs} {self.op} {self.right}"

    def names(self):
        out = [self.left]
        if self.minus is not None:
            out.append(self.minus)
        if isinstance(self.right, str):
            out.append(self.right)
        return out


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0

    def peek(self, offset=0):
        i = self.pos + offset
        return self.tokens[i] if i < len(self.tokens) else (None, None)

    def take(self, kind=None, value=None):
        tok = self.peek()
        if tok[0] is None:
            raise ParseError(f"unexpected end of input in {self.text!r}")
        if (kind and tok[0] != kind) or (value and tok[1] != value):
            want = value or kind
            raise ParseError(f"expected {want!r}, got {tok[1]!r} in {self.text!r}")
        self.pos += 1
        return tok[1]

    def at(self, *values):
        return self.peek()[1] in values

    def done(self):
        if self.pos != len(self.tokens):
            raise ParseError(f"trailing input {self.peek()[1]!r} in {self.text!r}")

    def operand(self):
        if self.at("-"):
            self.take()
            return -int(self.take("num"))
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return int(val)
        return self.take("id")

    def atom(self):
        left = self.take("id")
        minus = None
        if self.at("-"):
            self.take()
            minus = self.take("id")
        op = self.take("op")
        if op not in OPS:
            raise ParseError(f"bad comparison {op!r} in {self.text!r}")
        return Atom(left, op, self.operand(), minus)


def parse_atoms(text: str) -> list:
    """Parse a guard string; ``a && b`` yields two atoms."""
    out = []
    for part in text.split("&&"):
        if not part.strip():
            continue
        p = _Parser(part)
        out.append(p.atom())
        p.done()
    return out


# ---------------------------------------------------------------- formulas


@dataclass(frozen=True)
class LocAtom:
    automaton: str
    location: str

    def __str__(self):
        return f"{self.automaton}.{self.location}"


@dataclass(frozen=True)
class VarAtom:
    var: str
    op: str
    value: int

    def __str__(self):
        return f"{self.var} {self.op} {self.value}"


@dataclass(frozen=True)
class Const:
    value: bool

    def __str__(self):
        return "true" if self.value else "false"


@dataclass(frozen=True)
class Not:
    arg: object

    def __str__(self):
        return f"!{_wrap(self.arg)}"


@dataclass(frozen=True)
class And:
    args: tuple

    def __str__(self):
        return " && ".join(_wrap(a) for a in self.args)


@dataclass(frozen=True)
class Or:
    args: tuple

    def __str__(self):
        return " || ".join(_wrap(a) for a in self.args)


@dataclass(frozen=True)
class Implies:
    lhs: object
    rhs: object

    def __str__(self):
        return f"{_wrap(self.lhs)} imply {_wrap(self.rhs)}"


def _wrap(f):
    if isinstance(f, (LocAtom, VarAtom, Const, Not)):
        return str(f)
    return f"({f})"


class _FormulaParser(_Parser):
    def formula(self):
        lhs = self.disj()
        if self.at("imply", "->"):
            self.take()
            return Implies(lhs, self.formula())
        return lhs

    def disj(self):
        args = [self.conj()]
        while self.at("||", "or"):
            self.take()
            args.append(self.conj())
        return args[0] if len(args) == 1 else Or(tuple(args))

    def conj(self):
        args = [self.unary()]
        while self.at("&&", "and"):
            self.take()
            args.append(self.unary())
        return args[0] if len(args) == 1 else And(tuple(args))

    def unary(self):
        if self.at("!", "not"):
            self.take()
            return Not(self.unary())
        if self.at("("):
            self.take()
            f = self.formula()
            self.take(value=")")
            return f
        if self.at("true", "false"):
            return Const(self.take() == "true")
        name = self.take("id")
        if self.at("."):
            self.take()
            return LocAtom(name, self.take("id"))
        op = self.take("op")
        if op not in OPS:
            raise ParseError(f"bad comparison {op!r} in {self.text!r}")
        value = self.operand()
        if not isinstance(value, int):
            raise ParseError(f"variable atoms compare against integers only: {self.text!r}")
        return VarAtom(name, op, value)


def parse_formula(text: str):
    """Parse a state formula; a leading ``A[]`` or ``AG`` is accepted and ignored."""
    text = text.strip()
    for prefix in ("A[]", "AG "):
        if text.startswith(prefix):
            text = text[len(prefix):]
            break
    p = _FormulaParser(text)
    f = p.formula()
    p.done()
    return f
