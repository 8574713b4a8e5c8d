"""Truncated tree expansions of E f(X_t) and empirical convergence orders."""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .eldiff import PointEvaluator
from .errors import CapExceeded, DimensionError, InsufficientGrid
from .expr import Expr, diff, eval_at, parse_expr
from .oracle import DEFAULT_ORACLE_CAP, MCConfig, mc_estimate, taylor_reference
from .sde import SDESpec, modified_drift
from .stree import Calculus, CanonicalSTree, LabelledSTree, enumerate_trees, labelled_closure

__all__ = [
    "ExpansionTerm",
    "Expansion",
    "expand",
    "labelled_total",
    "tree_weight",
    "modified_drift",
    "scalar_monomial",
    "symbolic_expansion",
    "evaluate_symbolic",
    "ConvergenceResult",
    "convergence_study",
    "analytic_reference",
    "fit_slope",
    "DEFAULT_EXPANSION_CAP",
    "FLOAT_FLOOR",
]

DEFAULT_EXPANSION_CAP = 4
FLOAT_FLOOR = 1e-13


def tree_weight(alpha: int, n_stoch: int, order: int) -> Fraction:
    """alpha / (2^(s/2) * rho!)."""
    return Fraction(alpha, 2 ** (n_stoch // 2) * math.factorial(order))


@dataclass(frozen=True)
class ExpansionTerm:
    tree: CanonicalSTree
    alpha: int
    weight: Fraction
    value: float  # F(tree)(x0) summed over all index assignments
    power: int

    @property
    def coefficient(self) -> float:
        """Contribution to the coefficient of (t - t0)^power."""
        return float(self.weight) * self.value

    def contribution(self, dt: float) -> float:
        return self.coefficient * dt**self.power


@dataclass(frozen=True)
class Expansion:
    spec: SDESpec
    order: int
    t0: float
    t: float
    terms: tuple[ExpansionTerm, ...] = field(repr=False)

    @property
    def dt(self) -> float:
        return self.t - self.t0

    @property
    def total(self) -> float:
        return self.at(self.t)

    def at(self, t: float) -> float:
        dt = t - self.t0
        return math.fsum(term.contribution(dt) for term in self.terms)

    def by_power(self) -> dict[int, list[ExpansionTerm]]:
        out: dict[int, list[ExpansionTerm]] = {p: [] for p in range(self.order + 1)}
        for term in self.terms:
            out[term.power].append(term)
        return out

    def coefficients(self, exact: bool = False) -> list:
        """Polynomial coefficients c_0..c_n in (t - t0).

        ``exact=True`` returns Fractions: rational weights times the exact
        binary value of each float F.
        """
        groups = self.by_power()
        if exact:
            return [sum((tm.weight * Fraction(tm.value) for tm in groups[p]), Fraction(0))
                    for p in range(self.order + 1)]
        return [math.fsum(tm.coefficient for tm in groups[p]) for p in range(self.order + 1)]

    def polynomial(self, t: float) -> float:
        dt = t - self.t0
        return math.fsum(c * dt**p for p, c in enumerate(self.coefficients()))


def expand(
    spec: SDESpec,
    n: int,
    t0: float = 0.0,
    t: float | None = None,
    cap: int = DEFAULT_EXPANSION_CAP,
    threads: int = 1,
) -> Expansion:
    """Tree expansion of E f(X_t) up to order ``n`` around ``(t0, x0)``.

    Itô specs sum over TS(I) with alpha_I; Stratonovich specs sum over TS(S)
    with alpha_S and use their own (Stratonovich) drift in F.
    """
    if n > cap:
        raise CapExceeded(n, cap)
    if n < 0:
        raise ValueError("n must be non-negative")
    t = t0 if t is None else t
    if t < t0:
        raise ValueError("need t >= t0")
    trees = enumerate_trees(spec.calculus, n, cap=max(cap, n))
    ev = PointEvaluator(spec, spec.x0)

    def term(tree: CanonicalSTree) -> ExpansionTerm:
        alpha = tree.cardinality(spec.calculus)
        rho = int(tree.order)
        return ExpansionTerm(tree, alpha, tree_weight(alpha, tree.n_stoch, rho), ev.summed(tree), rho)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            terms = tuple(pool.map(term, trees))
    else:
        terms = tuple(term(tr) for tr in trees)
    return Expansion(spec, n, t0, t, terms)


def labelled_total(spec: SDESpec, n: int, t0: float, t: float) -> float:
    """Same truncation summed over every labelled growth product with weight 1/(2^(s/2) rho!)."""
    ev = PointEvaluator(spec, spec.x0)
    dt = t - t0
    parts = []
    for rho, level in enumerate(labelled_closure(spec.calculus, n)):
        for lt in level:
            parts.append(float(tree_weight(1, lt.n_stoch, rho)) * ev.summed(lt) * dt**rho)
    return math.fsum(parts)


# -- symbolic form for d = m = 1 ----------------------------------------------

Monomial = tuple[tuple[tuple[str, int], int], ...]


def scalar_monomial(tree: CanonicalSTree | LabelledSTree) -> Monomial:
    """F(tree) for d = m = 1 as a product of derivatives, e.g. f''*a'*b^2.

    Returned as sorted ``((name, derivative_order), exponent)`` pairs.
    """
    t = tree.representative if isinstance(tree, CanonicalSTree) else tree
    names = {"g": "f", "t": "a", "s": "b"}
    counts = Counter((names[t.kinds[v]], len(t.children[v])) for v in range(t.size))
    return tuple(sorted(counts.items()))


def symbolic_expansion(calculus: Calculus | str, n: int) -> dict[int, dict[Monomial, Fraction]]:
    """Coefficient of (t - t0)^p as a combination of derivative monomials (d = m = 1)."""
    calculus = Calculus.parse(calculus)
    out: dict[int, dict[Monomial, Fraction]] = {p: {} for p in range(n + 1)}
    for tree in enumerate_trees(calculus, n):
        rho = int(tree.order)
        w = tree_weight(tree.cardinality(calculus), tree.n_stoch, rho)
        mono = scalar_monomial(tree)
        out[rho][mono] = out[rho].get(mono, Fraction(0)) + w
    return out


def evaluate_symbolic(sym: dict[int, dict[Monomial, Fraction]], spec: SDESpec) -> list[float]:
    """Numeric coefficients of a d = m = 1 symbolic expansion at ``spec.x0``."""
    if spec.d != 1 or spec.m != 1:
        raise DimensionError("symbolic monomials are defined for d = m = 1")
    base = {"f": spec.functional, "a": spec.drift[0], "b": spec.diffusion[0][0]}
    cache: dict[tuple[str, int], float] = {}

    def value(name: str, k: int) -> float:
        if (name, k) not in cache:
            e = base[name]
            for _ in range(k):
                e = diff(e, 1)
            cache[(name, k)] = eval_at(e, spec.x0)
        return cache[(name, k)]

    coeffs = []
    for p in sorted(sym):
        total = []
        for mono, c in sym[p].items():
            v = float(c)
            for (name, k), e in mono:
                v *= value(name, k) ** e
            total.append(v)
        coeffs.append(math.fsum(total))
    return coeffs


# -- convergence -----------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceResult:
    order: int
    points: tuple[tuple[float, float], ...]  # (t, |expansion - reference|)
    slope: float | None
    floor: float | None = None  # set instead of a slope when noise or rounding dominates
    stderrs: tuple[float, ...] | None = None


def fit_slope(dts: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(dt)."""
    return float(np.polyfit(np.log(dts), np.log(errors), 1)[0])


def analytic_reference(text: str) -> Callable[[float], float]:
    """Reference E f(X_t) given as an expression in ``t``, e.g. ``exp(0.5*t)``."""
    e = parse_expr(text, 1, names={"t": 1})
    return lambda t: eval_at(e, [t])


def convergence_study(
    spec: SDESpec,
    n: int,
    t0: float,
    t_grid: Sequence[float],
    reference: str | MCConfig | Callable[[float], float] | Expr = "oracle",
    cap: int = DEFAULT_EXPANSION_CAP,
) -> ConvergenceResult:
    """Error of the order-``n`` truncation over a grid of times shrinking to ``t0``.

    ``reference`` is ``"oracle"`` (generator series to order n+2), an
    :class:`MCConfig` (Euler-Maruyama), a callable of ``t`` or an Expr in x1 = t.
    """
    grid = [float(t) for t in t_grid]
    if len(grid) < 4:
        raise InsufficientGrid(f"need at least 4 grid points, got {len(grid)}")
    if any(b >= a for a, b in zip(grid, grid[1:])) or grid[-1] <= t0:
        raise InsufficientGrid("grid must decrease strictly towards t0 and stay above it")
    exp = expand(spec, n, t0, grid[0], cap=cap)
    coeffs = exp.coefficients()

    def model(t: float) -> float:
        return math.fsum(c * (t - t0) ** p for p, c in enumerate(coeffs))

    stderrs = None
    if isinstance(reference, str):
        if reference != "oracle":
            raise ValueError(f"unknown reference {reference!r}")
        ref_order = n + 2
        refs = [taylor_reference(spec, ref_order, t - t0, cap=max(DEFAULT_ORACLE_CAP, ref_order)) for t in grid]
    elif isinstance(reference, MCConfig):
        results = [mc_estimate(spec, t0, t, reference) for t in grid]
        refs = [r.mean for r in results]
        stderrs = tuple(r.stderr for r in results)
    elif isinstance(reference, Expr):
        refs = [eval_at(reference, [t]) for t in grid]
    else:
        refs = [float(reference(t)) for t in grid]

    errors = [abs(model(t) - r) for t, r in zip(grid, refs)]
    points = tuple(zip(grid, errors))
    if stderrs is not None and any(s > e for s, e in zip(stderrs, errors)):
        return ConvergenceResult(n, points, None, max(stderrs), stderrs)
    dts = [t - t0 for t in grid]
    if errors[-1] < FLOAT_FLOOR:
        dts, errors = dts[:-1], errors[:-1]
    if len(errors) < 2 or min(errors) <= 0 or min(errors) < FLOAT_FLOOR:
        return ConvergenceResult(n, points, None, FLOAT_FLOOR, stderrs)
    return ConvergenceResult(n, points, fit_slope(dts, errors), None, stderrs)
