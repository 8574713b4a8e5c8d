"""Elementary differentials F(t) of S-trees for a concrete SDE.

Two routes compute the same numbers:

* :func:`build_F` expands every component sum into one symbolic
  :class:`~sdetaylor.expr.Expr` (used for symbolic work and as a check);
* :class:`PointEvaluator` evaluates derivative tensors of ``f``, ``a`` and
  ``b^j`` once at a point and contracts them along the tree, which is what
  the expansion uses.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .errors import DimensionError
from .expr import ZERO, Expr, add, diff, evaluate, mul
from .sde import SDESpec
from .stree import CanonicalSTree, LabelledSTree

__all__ = [
    "build_F",
    "index_assignments",
    "sum_over_indices",
    "PointEvaluator",
    "notation",
]

Tree = CanonicalSTree | LabelledSTree


def _labelled(tree: Tree) -> LabelledSTree:
    return tree.representative if isinstance(tree, CanonicalSTree) else tree


def _check_idx(t: LabelledSTree, spec: SDESpec, idx: Sequence[int]) -> tuple[int, ...]:
    idx = tuple(int(j) for j in idx)
    if len(idx) != t.n_indices:
        raise DimensionError(f"tree has {t.n_indices} index variables, got {len(idx)} values")
    for j in idx:
        if not 1 <= j <= spec.m:
            raise DimensionError(f"index value {j} outside 1..{spec.m}")
    return idx


def index_assignments(n_indices: int, m: int) -> Iterator[tuple[int, ...]]:
    """All assignments j_1..j_K in 1..m, in lexicographic order."""
    return itertools.product(range(1, m + 1), repeat=n_indices)


def _contract(g: Expr, vecs: Sequence[Sequence[Expr]], d: int) -> Expr:
    if not vecs:
        return g
    first, rest = vecs[0], vecs[1:]
    terms = []
    for J in range(d):
        if first[J].is_zero():
            continue
        dg = diff(g, J + 1)
        if dg.is_zero():
            continue
        inner = _contract(dg, rest, d)
        if not inner.is_zero():
            terms.append(mul(inner, first[J]))
    return add(*terms) if terms else ZERO


@lru_cache(maxsize=8192)
def _build(t: LabelledSTree, spec: SDESpec, idx: tuple[int, ...]) -> Expr:
    children = t.children
    d = spec.d

    def vec(v: int) -> tuple[Expr, ...]:
        g = spec.drift if t.kinds[v] == "t" else spec.column(idx[t.index[v] - 1])
        args = [vec(c) for c in children[v]]
        return tuple(_contract(g[i], args, d) for i in range(d))

    return _contract(spec.functional, [vec(c) for c in children[0]], d)


def build_F(tree: Tree, spec: SDESpec, idx: Sequence[int] = ()) -> Expr:
    """Symbolic elementary differential of ``tree`` for index values ``idx``.

    ``idx[k-1]`` is the Wiener component assigned to index variable ``j_k``.
    """
    t = _labelled(tree)
    return _build(t, spec, _check_idx(t, spec, idx))


class PointEvaluator:
    """Numeric elementary differentials of one spec at one point ``x``.

    Derivative tensors are computed lazily and shared between trees, so
    evaluating a whole expansion costs one pass over the distinct derivatives.
    """

    def __init__(self, spec: SDESpec, x: Sequence[float]):
        if len(x) != spec.d:
            raise DimensionError(f"point has length {len(x)}, expected {spec.d}")
        self.spec = spec
        self.x = [float(v) for v in x]
        self._tensors: dict[tuple, np.ndarray] = {}

    def _components(self, key) -> tuple[Expr, ...]:
        if key == "f":
            return (self.spec.functional,)
        if key == "a":
            return self.spec.drift
        return self.spec.column(key)

    def tensor(self, key, k: int) -> np.ndarray:
        """``k``-th derivative tensor of ``f`` (key ``"f"``), ``a`` (``"a"``) or ``b^j`` (``j``).

        Shape ``(d,)*k`` for ``f`` and ``(d,)+(d,)*k`` for vector fields.
        """
        hit = self._tensors.get((key, k))
        if hit is not None:
            return hit
        d = self.spec.d
        comps = self._components(key)
        combos = list(itertools.combinations_with_replacement(range(d), k))
        exprs = []
        for g in comps:
            for combo in combos:
                e = g
                for J in combo:
                    e = diff(e, J + 1)
                exprs.append(e)
        values = evaluate(exprs, self.x)
        out = np.empty((len(comps),) + (d,) * k)
        where = {combo: n for n, combo in enumerate(combos)}
        for i in range(len(comps)):
            base = i * len(combos)
            for multi in itertools.product(range(d), repeat=k):
                out[(i,) + multi] = values[base + where[tuple(sorted(multi))]]
        if key == "f":
            out = out[0]
        self._tensors[(key, k)] = out
        return out

    def F(self, tree: Tree, idx: Sequence[int] = ()) -> float:
        t = _labelled(tree)
        idx = _check_idx(t, self.spec, idx)
        children = t.children

        def node(v: int):
            k = t.kinds[v]
            key = "f" if k == "g" else "a" if k == "t" else idx[t.index[v] - 1]
            ch = children[v]
            T = self.tensor(key, len(ch))
            for c in ch:
                T = T @ node(c)
            return T

        return float(node(0))

    def summed(self, tree: Tree) -> float:
        """Sum of F over all index assignments, in lexicographic order."""
        t = _labelled(tree)
        return math.fsum(self.F(t, idx) for idx in index_assignments(t.n_indices, self.spec.m))


def sum_over_indices(
    tree: Tree, spec: SDESpec, x: Sequence[float], evaluator: PointEvaluator | None = None
) -> float:
    """Sum over j_1..j_K in 1..m of F(tree)(x)."""
    ev = evaluator if evaluator is not None else PointEvaluator(spec, x)
    return ev.summed(tree)


def _primes(k: int) -> str:
    return "'" * k if k <= 4 else f"^({k})"


def notation(tree: Tree) -> str:
    """Operator notation such as ``f''(a'(b^j2), b^j1)``."""
    t = _labelled(tree)
    children = t.children

    def sub(v: int) -> str:
        k = t.kinds[v]
        name = "f" if k == "g" else "a" if k == "t" else f"b^j{t.index[v]}"
        ch = children[v]
        if not ch:
            return name
        if k == "s":
            name = f"(b^j{t.index[v]})"
        return f"{name}{_primes(len(ch))}(" + ", ".join(sub(c) for c in ch) + ")"

    return sub(0)
