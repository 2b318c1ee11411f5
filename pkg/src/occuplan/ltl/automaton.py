"""Deterministic finite automata for LTLf formulas via formula progression."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .syntax import And, Atom, Const, Finally, Formula, Globally, Implies, Not, Or, Until, parse

STATE_CAP = 10**6

# Normalized formulas are hashable tuples:
#   ("T",) ("F",) ("lit", name, positive) ("and", frozenset) ("or", frozenset)
#   ("ev", f) ("al", f) ("until", f, g) ("release", f, g)
TRUE = ("T",)
FALSE = ("F",)


def _and(parts: Iterable) -> tuple:
    out = set()
    for p in parts:
        if p == FALSE:
            return FALSE
        if p == TRUE:
            continue
        if p[0] == "and":
            out |= p[1]
        else:
            out.add(p)
    for p in out:
        if p[0] == "lit" and ("lit", p[1], not p[2]) in out:
            return FALSE
    if not out:
        return TRUE
    if len(out) == 1:
        return next(iter(out))
    return ("and", frozenset(out))


def _or(parts: Iterable) -> tuple:
    out = set()
    for p in parts:
        if p == TRUE:
            return TRUE
        if p == FALSE:
            continue
        if p[0] == "or":
            out |= p[1]
        else:
            out.add(p)
    for p in out:
        if p[0] == "lit" and ("lit", p[1], not p[2]) in out:
            return TRUE
    if not out:
        return FALSE
    if len(out) == 1:
        return next(iter(out))
    return ("or", frozenset(out))


def nnf(node: Formula, negate: bool = False) -> tuple:
    """Negation normal form in the tuple representation."""
    if isinstance(node, Const):
        return TRUE if node.value != negate else FALSE
    if isinstance(node, Atom):
        return ("lit", node.name, not negate)
    if isinstance(node, Not):
        return nnf(node.child, not negate)
    if isinstance(node, And):
        parts = (nnf(node.left, negate), nnf(node.right, negate))
        return _or(parts) if negate else _and(parts)
    if isinstance(node, Or):
        parts = (nnf(node.left, negate), nnf(node.right, negate))
        return _and(parts) if negate else _or(parts)
    if isinstance(node, Implies):
        return nnf(Or(Not(node.left), node.right), negate)
    if isinstance(node, Globally):
        return ("ev", nnf(node.child, True)) if negate else ("al", nnf(node.child))
    if isinstance(node, Finally):
        return ("al", nnf(node.child, True)) if negate else ("ev", nnf(node.child))
    if isinstance(node, Until):
        if negate:
            return ("release", nnf(node.left, True), nnf(node.right, True))
        return ("until", nnf(node.left), nnf(node.right))
    raise TypeError(f"not a formula: {node!r}")


# Automaton states are obligations in disjunctive normal form: a frozenset of
# clauses, each a frozenset of closure elements (literals and temporal nodes
# of the input formula).  The closure is finite, so the state space is too.
DNF_TRUE = frozenset([frozenset()])
DNF_FALSE = frozenset()


def _simplify(clauses) -> frozenset:
    """Drop contradictory clauses and clauses absorbed by a smaller one."""
    keep = []
    for c in clauses:
        if any(e[0] == "lit" and ("lit", e[1], not e[2]) in c for e in c):
            continue
        keep.append(c)
    keep.sort(key=len)
    out = []
    for c in keep:
        if not any(o <= c for o in out):
            out.append(c)
    return frozenset(out)


def dnf_or(a: frozenset, b: frozenset) -> frozenset:
    return _simplify(a | b)


def dnf_and(a: frozenset, b: frozenset) -> frozenset:
    return _simplify(x | y for x in a for y in b)


def to_dnf(phi: tuple) -> frozenset:
    tag = phi[0]
    if tag == "T":
        return DNF_TRUE
    if tag == "F":
        return DNF_FALSE
    if tag == "and":
        out = DNF_TRUE
        for p in phi[1]:
            out = dnf_and(out, to_dnf(p))
        return out
    if tag == "or":
        out = DNF_FALSE
        for p in phi[1]:
            out = dnf_or(out, to_dnf(p))
        return out
    return frozenset([frozenset([phi])])


def _progress_element(e: tuple, letter: frozenset) -> frozenset:
    tag = e[0]
    if tag == "lit":
        return DNF_TRUE if (e[1] in letter) == e[2] else DNF_FALSE
    self_ = frozenset([frozenset([e])])
    if tag == "ev":
        return dnf_or(progress(to_dnf(e[1]), letter), self_)
    if tag == "al":
        return dnf_and(progress(to_dnf(e[1]), letter), self_)
    if tag == "until":
        return dnf_or(progress(to_dnf(e[2]), letter), dnf_and(progress(to_dnf(e[1]), letter), self_))
    if tag == "release":
        return dnf_and(progress(to_dnf(e[2]), letter), dnf_or(progress(to_dnf(e[1]), letter), self_))
    raise ValueError(f"unknown node {tag!r}")


def progress(state: frozenset, letter: frozenset) -> frozenset:
    """Obligation left for the rest of the trace after reading ``letter``."""
    out = DNF_FALSE
    for clause in state:
        acc = DNF_TRUE
        for e in clause:
            acc = dnf_and(acc, _progress_element(e, letter))
            if not acc:
                break
        out = dnf_or(out, acc)
        if frozenset() in out:
            return DNF_TRUE
    return out


def _element_accepts_empty(e: tuple) -> bool:
    if e[0] == "lit":
        # only reachable for the initial obligation of an empty trace
        return not e[2]
    return e[0] in ("al", "release")


def accepts_empty(state: frozenset) -> bool:
    """Truth value of an obligation on the empty remainder of a trace."""
    return any(all(_element_accepts_empty(e) for e in c) for c in state)


def alphabet(atoms: Sequence[str]) -> list[frozenset]:
    atoms = sorted(atoms)
    return [frozenset(a for a, bit in zip(atoms, bits) if bit) for bits in itertools.product((0, 1), repeat=len(atoms))]


@dataclass
class FiniteAutomaton:
    """Deterministic, total automaton over sets of true atoms."""

    atoms: tuple
    states: list
    transitions: dict  # (state, letter) -> state
    initial: int
    accepting: frozenset
    formulas: dict = field(default_factory=dict)  # state -> normalized obligation

    def step(self, q: int, letter) -> int:
        letter = frozenset(letter) & frozenset(self.atoms)
        return self.transitions[(q, letter)]

    def run(self, trace: Sequence) -> int:
        q = self.initial
        for letter in trace:
            q = self.step(q, letter)
        return q

    def accepts(self, trace: Sequence) -> bool:
        return self.run(trace) in self.accepting

    def live_states(self) -> set:
        """States from which some accepting state is reachable."""
        rev: dict = {}
        for (q, _), r in self.transitions.items():
            rev.setdefault(r, set()).add(q)
        live = set(self.accepting)
        todo = list(live)
        while todo:
            r = todo.pop()
            for q in rev.get(r, ()):
                if q not in live:
                    live.add(q)
                    todo.append(q)
        return live

    def to_dot(self) -> str:
        lines = ["digraph automaton {", "  rankdir=LR;", '  init [shape=point, label=""];']
        for q in self.states:
            shape = "doublecircle" if q in self.accepting else "circle"
            lines.append(f'  q{q} [shape={shape}, label="q{q}"];')
        lines.append(f"  init -> q{self.initial};")
        grouped: dict = {}
        for (q, letter), r in sorted(self.transitions.items(), key=lambda kv: (kv[0][0], sorted(kv[0][1]))):
            grouped.setdefault((q, r), []).append(letter)
        for (q, r), letters in sorted(grouped.items()):
            if len(letters) == 2 ** len(self.atoms):
                label = "true"
            else:
                label = " | ".join("{" + ",".join(sorted(l)) + "}" for l in letters)
            lines.append(f'  q{q} -> q{r} [label="{label}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def to_automaton(ast: Formula | str, atoms: Iterable[str] | None = None, minimize: bool = True) -> FiniteAutomaton:
    """Build the DFA by exploring progressed obligations to a fixpoint."""
    if isinstance(ast, str):
        ast = parse(ast)
    atoms = tuple(sorted(set(atoms) if atoms is not None else ast.atoms()))
    letters = alphabet(atoms)
    init = to_dnf(nnf(ast))
    index = {init: 0}
    order = [init]
    trans = {}
    k = 0
    while k < len(order):
        phi = order[k]
        for letter in letters:
            nxt = progress(phi, letter)
            if nxt not in index:
                if len(order) >= STATE_CAP:
                    raise RuntimeError(f"automaton exceeds {STATE_CAP} states")
                index[nxt] = len(order)
                order.append(nxt)
            trans[(k, letter)] = index[nxt]
        k += 1
    accepting = frozenset(i for i, phi in enumerate(order) if accepts_empty(phi))
    aut = FiniteAutomaton(atoms, list(range(len(order))), trans, 0, accepting, dict(enumerate(order)))
    return _minimize(aut, letters) if minimize else aut


def _minimize(aut: FiniteAutomaton, letters) -> FiniteAutomaton:
    """Moore partition refinement; state 0 stays initial."""
    block = {q: int(q in aut.accepting) for q in aut.states}
    while True:
        sig = {q: (block[q],) + tuple(block[aut.transitions[(q, l)]] for l in letters) for q in aut.states}
        ids: dict = {}
        new = {}
        for q in aut.states:  # numbering by first occurrence keeps it deterministic
            new[q] = ids.setdefault(sig[q], len(ids))
        if len(ids) == len(set(block.values())):
            block = new
            break
        block = new
    # renumber so the initial state is 0, others by first appearance in BFS
    order, seen = [], set()
    todo = [block[aut.initial]]
    rep = {}
    for q in aut.states:
        rep.setdefault(block[q], q)
    while todo:
        b = todo.pop(0)
        if b in seen:
            continue
        seen.add(b)
        order.append(b)
        for l in letters:
            todo.append(block[aut.transitions[(rep[b], l)]])
    num = {b: i for i, b in enumerate(order)}
    trans = {(num[block[q]], l): num[block[aut.transitions[(q, l)]]] for (q, l) in aut.transitions if block[q] in num}
    accepting = frozenset(num[block[q]] for q in aut.accepting if block[q] in num)
    formulas = {num[b]: aut.formulas[rep[b]] for b in order}
    return FiniteAutomaton(aut.atoms, list(range(len(order))), trans, 0, accepting, formulas)


def trace_check(ast: Formula | str, trace: Sequence) -> bool:
    """Direct finite-trace semantics of ``ast`` on ``trace`` (a list of atom sets)."""
    if isinstance(ast, str):
        ast = parse(ast)
    trace = [frozenset(s) for s in trace]
    n = len(trace)

    def sat(node, i):
        if isinstance(node, Const):
            return node.value
        if isinstance(node, Atom):
            return i < n and node.name in trace[i]
        if isinstance(node, Not):
            return not sat(node.child, i)
        if isinstance(node, And):
            return sat(node.left, i) and sat(node.right, i)
        if isinstance(node, Or):
            return sat(node.left, i) or sat(node.right, i)
        if isinstance(node, Implies):
            return (not sat(node.left, i)) or sat(node.right, i)
        if isinstance(node, Globally):
            return all(sat(node.child, j) for j in range(i, n))
        if isinstance(node, Finally):
            return any(sat(node.child, j) for j in range(i, n))
        if isinstance(node, Until):
            return any(sat(node.right, j) and all(sat(node.left, k) for k in range(i, j)) for j in range(i, n))
        raise TypeError(node)

    return sat(ast, 0)
