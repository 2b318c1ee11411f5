"""LTLf abstract syntax, parser and printer.

Surface syntax: atoms ``[a-zA-Z_][a-zA-Z0-9_]*``, constants ``true`` and
``false``, prefix ``!``, ``G``, ``F``; infix ``U`` (right-assoc), ``&``,
``|`` and ``=>`` (right-assoc), from tightest to loosest.  ``G``, ``F``,
``U``, ``true`` and ``false`` are reserved words.  An identifier made of
``G``/``F`` letters followed by a lowercase name is read as prefix operators
on that name, so ``Fa`` means ``F a``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass


class LtlSyntaxError(ValueError):
    def __init__(self, msg: str, pos: int):
        super().__init__(f"{msg} at position {pos}")
        self.pos = pos


class Formula:
    __slots__ = ()

    def atoms(self) -> frozenset:
        out = set()
        stack = [self]
        while stack:
            node = stack.pop()
            if isinstance(node, Atom):
                out.add(node.name)
            stack.extend(node.children())
        return frozenset(out)

    def children(self):
        return ()

    def depth(self) -> int:
        return 1 + max((c.depth() for c in self.children()), default=0)

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True)
class Const(Formula):
    value: bool


@dataclass(frozen=True)
class Atom(Formula):
    name: str


@dataclass(frozen=True)
class Not(Formula):
    child: Formula

    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class Globally(Formula):
    child: Formula

    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class Finally(Formula):
    child: Formula

    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)


RESERVED = {"G", "F", "U", "true", "false"}
_PREFIXED = re.compile(r"([GF]+)([a-z_][a-zA-Z0-9_]*)$")
_TOKEN = re.compile(r"\s*(?:(?P<ident>[a-zA-Z_][a-zA-Z0-9_]*)|(?P<op>=>|[!&|()]))")


def tokenize(src: str) -> list[tuple[str, str, int]]:
    toks = []
    pos = 0
    n = len(src)
    while pos < n:
        if src[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(src, pos)
        if not m or m.end() == pos:
            raise LtlSyntaxError(f"unexpected character {src[pos]!r}", pos)
        start = m.start("ident") if m.group("ident") else m.start("op")
        if m.group("ident"):
            word = m.group("ident")
            pre = _PREFIXED.match(word)
            if pre:
                # "Fa" and "GFa" read as prefix operators applied to an atom
                for k, ch in enumerate(pre.group(1)):
                    toks.append(("kw", ch, start + k))
                start += len(pre.group(1))
                word = pre.group(2)
            toks.append(("kw" if word in RESERVED else "atom", word, start))
        else:
            toks.append(("op", m.group("op"), start))
        pos = m.end()
    toks.append(("end", "", n))
    return toks


class _Parser:
    def __init__(self, src: str):
        self.toks = tokenize(src)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def accept(self, value) -> bool:
        if self.peek()[1] == value and self.peek()[0] in ("op", "kw"):
            self.i += 1
            return True
        return False

    def parse(self) -> Formula:
        node = self.implies()
        kind, val, pos = self.peek()
        if kind != "end":
            raise LtlSyntaxError(f"unexpected {val!r}", pos)
        return node

    def implies(self):
        left = self.disj()
        if self.accept("=>"):
            return Implies(left, self.implies())
        return left

    def disj(self):
        node = self.conj()
        while self.accept("|"):
            node = Or(node, self.conj())
        return node

    def conj(self):
        node = self.until()
        while self.accept("&"):
            node = And(node, self.until())
        return node

    def until(self):
        left = self.unary()
        if self.accept("U"):
            return Until(left, self.until())
        return left

    def unary(self):
        if self.accept("!"):
            return Not(self.unary())
        if self.accept("G"):
            return Globally(self.unary())
        if self.accept("F"):
            return Finally(self.unary())
        return self.primary()

    def primary(self):
        kind, val, pos = self.take()
        if kind == "atom":
            return Atom(val)
        if kind == "kw" and val in ("true", "false"):
            return Const(val == "true")
        if kind == "op" and val == "(":
            node = self.implies()
            kind2, val2, pos2 = self.take()
            if val2 != ")":
                raise LtlSyntaxError("expected ')'", pos2)
            return node
        if kind == "end":
            raise LtlSyntaxError("unexpected end of formula", pos)
        raise LtlSyntaxError(f"unexpected {val!r}", pos)


def parse(src: str) -> Formula:
    return _Parser(src).parse()


_BINARY = {And: "&", Or: "|", Implies: "=>", Until: "U"}
_UNARY = {Not: "!", Globally: "G ", Finally: "F "}


def to_string(node: Formula) -> str:
    """Fully parenthesized form; ``parse(to_string(f)) == f``."""
    if isinstance(node, Atom):
        return node.name
    if isinstance(node, Const):
        return "true" if node.value else "false"
    for cls, sym in _UNARY.items():
        if isinstance(node, cls):
            return f"{sym}{to_string(node.child)}"
    for cls, sym in _BINARY.items():
        if isinstance(node, cls):
            return f"({to_string(node.left)} {sym} {to_string(node.right)})"
    raise TypeError(f"not a formula: {node!r}")
