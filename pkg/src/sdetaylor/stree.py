"""Coloured rooted S-trees: labelled trees, growth rules, canonical classes.

A tree has one root ``g`` (the functional), deterministic nodes ``t`` (drift)
and stochastic nodes ``s`` (diffusion columns).  Every stochastic node carries
an index variable ``k`` standing for a Wiener component ``j_k``.

Nodes are stored 0-based internally (the root is node 0); the public bracket
notation and the 1-based helpers follow the usual labels 1..l.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import cached_property

from .errors import CapExceeded, ParseError, SubscriptError

__all__ = [
    "Calculus",
    "Kind",
    "NodeColor",
    "LabelledSTree",
    "CanonicalSTree",
    "ROOT",
    "grow",
    "canonicalize",
    "enumerate_trees",
    "labelled_closure",
    "parse_bracket",
    "to_bracket",
    "to_latex",
    "tree_from_encoding",
    "DEFAULT_TREE_CAP",
]

DEFAULT_TREE_CAP = 5


class Calculus(str, Enum):
    ITO = "ito"
    STRATONOVICH = "stratonovich"

    @classmethod
    def parse(cls, value: "str | Calculus") -> "Calculus":
        if isinstance(value, Calculus):
            return value
        v = value.strip().lower()
        if v in ("ito", "i", "itô"):
            return cls.ITO
        if v in ("stratonovich", "strat", "s"):
            return cls.STRATONOVICH
        raise ValueError(f"unknown calculus {value!r}")


class Kind(str, Enum):
    ROOT = "g"
    DET = "t"
    STOCH = "s"


@dataclass(frozen=True)
class NodeColor:
    kind: Kind
    index: int | None = None

    def __post_init__(self):
        if (self.kind is Kind.STOCH) != (self.index is not None):
            raise ValueError("a stochastic node needs exactly one index variable")
        if self.index is not None and self.index < 1:
            raise ValueError("index variables are numbered from 1")


@dataclass(frozen=True)
class LabelledSTree:
    """Monotonically labelled S-tree.

    ``parent[i]`` is the parent of node ``i`` (0-based, ``parent[0] == -1``),
    ``kinds[i]`` one of ``"g"``, ``"t"``, ``"s"`` and ``index[i]`` the index
    variable of a stochastic node (0 elsewhere).
    """

    parent: tuple[int, ...]
    kinds: str
    index: tuple[int, ...]

    def __post_init__(self):
        n = len(self.parent)
        if n < 1 or len(self.kinds) != n or len(self.index) != n:
            raise ValueError("parent, kinds and index must have equal length >= 1")
        if self.parent[0] != -1 or self.kinds[0] != "g":
            raise ValueError("node 1 must be the root")
        for i in range(1, n):
            if not 0 <= self.parent[i] < i:
                raise ValueError(f"labelling is not monotone at node {i + 1}")
            k = self.kinds[i]
            if k == "s":
                if self.index[i] < 1:
                    raise ValueError(f"stochastic node {i + 1} has no index variable")
            elif k == "t":
                if self.index[i] != 0:
                    raise ValueError(f"deterministic node {i + 1} carries an index")
            else:
                raise ValueError(f"bad node kind {k!r} at node {i + 1}")
        used = {j for j in self.index if j}
        if used != set(range(1, len(used) + 1)):
            raise ValueError(f"index variables {sorted(used)} are not dense 1..K")

    @property
    def size(self) -> int:
        return len(self.parent)

    @cached_property
    def children(self) -> tuple[tuple[int, ...], ...]:
        ch: list[list[int]] = [[] for _ in self.parent]
        for i in range(1, len(self.parent)):
            ch[self.parent[i]].append(i)
        return tuple(tuple(c) for c in ch)

    @property
    def n_det(self) -> int:
        return self.kinds.count("t")

    @property
    def n_stoch(self) -> int:
        return self.kinds.count("s")

    @property
    def n_indices(self) -> int:
        return max(self.index)

    @property
    def order(self) -> Fraction:
        return Fraction(2 * self.n_det + self.n_stoch, 2)

    def parent_of(self, label: int) -> int:
        """1-based parent label of node ``label`` (``label >= 2``)."""
        if label < 2:
            raise ValueError("the root has no parent")
        return self.parent[label - 1] + 1

    def color(self, label: int) -> NodeColor:
        k = self.kinds[label - 1]
        if k == "s":
            return NodeColor(Kind.STOCH, self.index[label - 1])
        return NodeColor(Kind(k))

    def extend(self, parents: tuple[int, ...], kinds: str, index: tuple[int, ...]) -> "LabelledSTree":
        """Append new nodes (labels ``size+1, ...``) with 0-based parents."""
        return LabelledSTree(self.parent + parents, self.kinds + kinds, self.index + index)

    def __str__(self) -> str:
        return to_bracket(self)


ROOT = LabelledSTree((-1,), "g", (0,))


# -- growth ------------------------------------------------------------------


def _moves(t: LabelledSTree, calculus: Calculus):
    """Yield ``(tree, ito_admissible)`` for every single growth step of ``t``."""
    n = t.size
    fresh = t.n_indices + 1
    for r in range(n):
        yield t.extend((r,), "t", (0,)), True
    # the pair (n, n+1) is ordered; under Ito node n+1 may not hang off node n
    last = n + 1 if calculus is Calculus.STRATONOVICH else n
    for r in range(n):
        for s in range(last):
            yield t.extend((r, s), "ss", (fresh, fresh)), s < n


def grow(t: LabelledSTree, calculus: Calculus | str) -> list[LabelledSTree]:
    """All labelled trees reachable from ``t`` by one growth step."""
    calculus = Calculus.parse(calculus)
    return [u for u, _ in _moves(t, calculus)]


# -- canonical form ----------------------------------------------------------


def _encode(t: LabelledSTree, relabel: dict[int, int] | None) -> str:
    children = t.children
    kinds = t.kinds
    index = t.index

    def enc(v: int) -> str:
        k = kinds[v]
        if k == "s":
            tag = "s" if relabel is None else f"s{relabel[index[v]]}"
        else:
            tag = k
        ch = children[v]
        if not ch:
            return tag
        return tag + "(" + ",".join(sorted(enc(c) for c in ch)) + ")"

    return enc(0)


def _blind_codes(t: LabelledSTree) -> list[str]:
    children = t.children
    codes = [""] * t.size
    for v in range(t.size - 1, -1, -1):
        ch = children[v]
        tag = t.kinds[v]
        codes[v] = tag if not ch else tag + "(" + ",".join(sorted(codes[c] for c in ch)) + ")"
    return codes


def canonicalize(t: LabelledSTree) -> str:
    """Canonical encoding of the equivalence class of ``t``.

    Equal for two trees iff they differ only by a root-fixing relabelling of
    the nodes and a renaming of the index variables.
    """
    k = t.n_indices
    if k == 0:
        return _encode(t, None)
    blind = _blind_codes(t)
    depth = [0] * t.size
    for v in range(1, t.size):
        depth[v] = depth[t.parent[v]] + 1
    nodes: dict[int, list[tuple]] = {}
    for v in range(1, t.size):
        if t.index[v]:
            nodes.setdefault(t.index[v], []).append((depth[v], blind[v], blind[t.parent[v]]))
    # isomorphism-invariant signature per index; only ties need to be permuted
    groups: dict[tuple, list[int]] = {}
    for j in range(1, k + 1):
        groups.setdefault(tuple(sorted(nodes[j])), []).append(j)
    ordered = [groups[key] for key in sorted(groups)]
    best = None
    for choice in itertools.product(*(itertools.permutations(g) for g in ordered)):
        relabel = {j: n + 1 for n, j in enumerate(itertools.chain.from_iterable(choice))}
        code = _encode(t, relabel)
        if best is None or code < best:
            best = code
    return best


def tree_from_encoding(code: str) -> LabelledSTree:
    """Rebuild the preorder-labelled representative of a canonical encoding."""
    parent: list[int] = []
    kinds: list[str] = []
    index: list[int] = []
    pos = 0

    def node(par: int) -> None:
        nonlocal pos
        me = len(parent)
        k = code[pos]
        pos += 1
        j = 0
        if k == "s":
            start = pos
            while pos < len(code) and code[pos].isdigit():
                pos += 1
            j = int(code[start:pos])
        parent.append(par)
        kinds.append(k)
        index.append(j)
        if pos < len(code) and code[pos] == "(":
            pos += 1
            node(me)
            while code[pos] == ",":
                pos += 1
                node(me)
            pos += 1  # ')'

    node(-1)
    return LabelledSTree(tuple(parent), "".join(kinds), tuple(index))


@dataclass(frozen=True)
class CanonicalSTree:
    """Representative of an equivalence class of S-trees with its cardinalities."""

    encoding: str
    n_nodes: int
    n_det: int
    n_stoch: int
    order: Fraction
    card_ito: int
    card_strat: int
    representative: LabelledSTree

    @classmethod
    def from_encoding(cls, code: str, card_ito: int = 0, card_strat: int = 0) -> "CanonicalSTree":
        rep = tree_from_encoding(code)
        return cls(code, rep.size, rep.n_det, rep.n_stoch, rep.order, card_ito, card_strat, rep)

    @property
    def n_indices(self) -> int:
        return self.representative.n_indices

    @property
    def bracket(self) -> str:
        return to_bracket(self.representative)

    def cardinality(self, calculus: Calculus | str) -> int:
        if Calculus.parse(calculus) is Calculus.ITO:
            return self.card_ito
        return self.card_strat

    def __str__(self) -> str:
        return self.bracket


class _ClassTable:
    """Per-order tables ``encoding -> [card_ito, card_strat]``, grown on demand."""

    def __init__(self):
        self._lock = threading.Lock()
        self.levels: list[dict[str, list[int]]] = [{_encode(ROOT, None): [1, 1]}]

    def upto(self, order: int) -> list[dict[str, list[int]]]:
        with self._lock:
            while len(self.levels) <= order:
                self.levels.append(self._next(self.levels[-1]))
            return self.levels[: order + 1]

    @staticmethod
    def _next(level: dict[str, list[int]]) -> dict[str, list[int]]:
        # Every labelled tree in a class has the same multiset of growth
        # products up to equivalence, so counts propagate class by class.
        out: dict[str, list[int]] = {}
        for code in sorted(level):
            c_ito, c_strat = level[code]
            rep = tree_from_encoding(code)
            for child, ito_ok in _moves(rep, Calculus.STRATONOVICH):
                slot = out.setdefault(canonicalize(child), [0, 0])
                slot[1] += c_strat
                if ito_ok:
                    slot[0] += c_ito
        return out


_TABLE = _ClassTable()


def enumerate_trees(
    calculus: Calculus | str, max_order: int, cap: int = DEFAULT_TREE_CAP
) -> list[CanonicalSTree]:
    """Canonical trees of order <= ``max_order`` reachable under ``calculus``.

    Sorted by ``(order, encoding)``; both cardinalities are always filled in.
    """
    calculus = Calculus.parse(calculus)
    if max_order < 0:
        raise ValueError("max_order must be non-negative")
    if max_order > cap:
        raise CapExceeded(max_order, cap)
    slot = 0 if calculus is Calculus.ITO else 1
    out = []
    for level in _TABLE.upto(max_order):
        for code in sorted(level):
            c_ito, c_strat = level[code]
            if (c_ito, c_strat)[slot]:
                out.append(CanonicalSTree.from_encoding(code, c_ito, c_strat))
    return out


def labelled_closure(calculus: Calculus | str, max_order: int) -> list[list[LabelledSTree]]:
    """Every labelled growth product, level by level (``result[n]`` has order n).

    Exponential in ``max_order``; meant as a brute-force reference.
    """
    calculus = Calculus.parse(calculus)
    levels = [[ROOT]]
    for _ in range(max_order):
        levels.append([u for t in levels[-1] for u, ito_ok in _moves(t, calculus)
                       if ito_ok or calculus is Calculus.STRATONOVICH])
    return levels


# -- bracket notation ----------------------------------------------------------


def to_bracket(t: LabelledSTree) -> str:
    """ASCII bracket form, e.g. ``([s2],s1)``; the bare root is ``g``."""
    children = t.children

    def sub(v: int) -> str:
        k = t.kinds[v]
        inner = ",".join(sub(c) for c in children[v])
        if k == "t":
            return f"[{inner}]" if inner else "t"
        j = t.index[v]
        return f"{{{inner}}}_{j}" if inner else f"s{j}"

    if not children[0]:
        return "g"
    return "(" + ",".join(sub(c) for c in children[0]) + ")"


def to_latex(t: LabelledSTree) -> str:
    children = t.children

    def sub(v: int) -> str:
        k = t.kinds[v]
        inner = ",".join(sub(c) for c in children[v])
        if k == "t":
            return f"[{inner}]" if inner else r"\tau"
        j = t.index[v]
        return rf"\{{{inner}\}}_{{j_{{{j}}}}}" if inner else rf"\sigma_{{j_{{{j}}}}}"

    if not children[0]:
        return r"\gamma"
    return "(" + ",".join(sub(c) for c in children[0]) + ")"


def parse_bracket(text: str) -> LabelledSTree:
    """Parse the ASCII bracket grammar into a preorder-labelled tree.

    ``tree := "g" | "(" list ")"``;
    ``child := "t" | "s" INT | "[" list "]" | "{" list "}_" INT``.
    """
    s = "".join(text.split())
    parent: list[int] = [-1]
    kinds: list[str] = ["g"]
    index: list[int] = [0]
    pos = 0

    def fail(msg: str):
        raise ParseError(msg, pos, text)

    def expect(ch: str) -> None:
        nonlocal pos
        if pos >= len(s) or s[pos] != ch:
            fail(f"expected {ch!r}")
        pos += 1

    def integer() -> int:
        nonlocal pos
        start = pos
        while pos < len(s) and s[pos].isdigit():
            pos += 1
        if start == pos:
            fail("expected an index number")
        return int(s[start:pos])

    def child(par: int) -> None:
        nonlocal pos
        if pos >= len(s):
            fail("unexpected end of input")
        c = s[pos]
        me = len(parent)
        if c == "t":
            pos += 1
            parent.append(par), kinds.append("t"), index.append(0)
        elif c == "s":
            pos += 1
            j = integer()
            parent.append(par), kinds.append("s"), index.append(j)
        elif c == "[":
            pos += 1
            parent.append(par), kinds.append("t"), index.append(0)
            children(me)
            expect("]")
        elif c == "{":
            pos += 1
            parent.append(par), kinds.append("s"), index.append(0)
            children(me)
            expect("}")
            expect("_")
            index[me] = integer()
        else:
            fail(f"unexpected character {c!r}")

    def children(par: int) -> None:
        nonlocal pos
        child(par)
        while pos < len(s) and s[pos] == ",":
            pos += 1
            child(par)

    if s in ("", "g"):
        return ROOT
    expect("(")
    children(0)
    expect(")")
    if pos != len(s):
        fail("trailing characters")
    used = {j for j in index if j}
    if 0 in [j for j, k in zip(index, kinds) if k == "s"]:
        fail("stochastic index must be >= 1")
    if used != set(range(1, len(used) + 1)):
        raise SubscriptError(f"indices {sorted(used)} are not dense 1..{len(used)}", None, text)
    return LabelledSTree(tuple(parent), "".join(kinds), tuple(index))
