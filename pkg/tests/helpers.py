"""Shared fixtures: the order <= 2 tree table and random polynomial SDEs."""

from __future__ import annotations

import itertools
import math

import numpy as np

from sdetaylor import SDESpec
from sdetaylor.expr import ZERO, add, const, mul, var

# (name, bracket, alpha_I, alpha_S, rho); every tree of order <= 2
ORDER_TWO_TREES = [
    ("t0.1", "g", 1, 1, 0),
    ("t1.1", "(t)", 1, 1, 1),
    ("t1.2", "(s1,s1)", 1, 1, 1),
    ("t1.3", "({s1}_1)", 0, 1, 1),
    ("t2.1", "([t])", 1, 1, 2),
    ("t2.2", "(t,t)", 1, 1, 2),
    ("t2.3", "([{s1}_1])", 0, 1, 2),
    ("t2.4", "([s1,s1])", 1, 1, 2),
    ("t2.5", "(s1,[s1])", 2, 2, 2),
    ("t2.6", "({s1}_1,t)", 0, 2, 2),
    ("t2.7", "(s1,s1,t)", 2, 2, 2),
    ("t2.8", "(s1,{t}_1)", 2, 2, 2),
    ("t2.9", "({{t}_1}_1)", 0, 1, 2),
    ("t2.10", "({s1,t}_1)", 0, 1, 2),
    ("t2.11", "(s1,s1,s2,s2)", 1, 1, 2),
    ("t2.12a", "(s1,s1,{s2}_2)", 0, 2, 2),
    ("t2.12b", "(s1,s2,{s2}_1)", 4, 4, 2),
    ("t2.13a", "(s1,{s2,s2}_1)", 2, 2, 2),
    ("t2.13b", "(s2,{s2,s1}_1)", 0, 2, 2),
    ("t2.14a", "(s1,{{s2}_2}_1)", 0, 2, 2),
    ("t2.14b", "(s2,{{s2}_1}_1)", 0, 2, 2),
    ("t2.15a", "({s1}_1,{s2}_2)", 0, 1, 2),
    ("t2.15b", "({s2}_1,{s2}_1)", 2, 2, 2),
    ("t2.16", "({s1,s2,s2}_1)", 0, 1, 2),
    ("t2.17a", "({s1,{s2}_2}_1)", 0, 1, 2),
    ("t2.17b", "({s2,{s2}_1}_1)", 0, 2, 2),
    ("t2.18", "({{s2,s2}_1}_1)", 0, 1, 2),
    ("t2.19", "({{{s2}_2}_1}_1)", 0, 1, 2),
]


def random_poly(rng: np.random.Generator, d: int, degree: int, density: float = 0.7):
    """Random polynomial in x1..xd of total degree <= ``degree``, coefficients in [-1, 1]."""
    terms = []
    for deg in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(1, d + 1), deg):
            if rng.random() < density:
                c = float(np.round(rng.uniform(-1, 1), 6))
                terms.append(mul(const(c), *(var(k) for k in combo)))
    return add(*terms) if terms else ZERO


def random_spec(
    rng: np.random.Generator,
    d: int,
    m: int,
    degree: int = 2,
    calculus: str = "ito",
    f_degree: int | None = None,
) -> SDESpec:
    drift = [random_poly(rng, d, degree) for _ in range(d)]
    diffusion = [[random_poly(rng, d, degree) for _ in range(m)] for _ in range(d)]
    f = random_poly(rng, d, degree + 2 if f_degree is None else f_degree, density=0.8)
    x0 = [float(np.round(rng.uniform(-1, 1), 4)) for _ in range(d)]
    return SDESpec(d, m, drift, diffusion, f, x0, calculus)


def rel_err(x: float, ref: float, scale: float | None = None) -> float:
    """|x - ref| relative to ``scale`` (default max(|ref|, |x|)); 0 when both vanish."""
    s = max(abs(ref), abs(x)) if scale is None else scale
    if s == 0:
        return abs(x - ref)
    return abs(x - ref) / s


def close(x: float, ref: float, rtol: float, scale: float | None = None) -> bool:
    return math.isfinite(x) and rel_err(x, ref, scale) <= rtol


# -- growth identities: directional derivatives of F(t) versus sums over grown trees ---------


def _residual_scale(lhs, terms):
    return np.maximum(np.abs(lhs), np.sum(np.abs(terms), axis=0))


def first_growth_residuals(tree, spec, points, idx, j=None):
    """max relative gap of sum_k g^k d_k F(t) against sum over one attached node.

    ``j=None`` uses g = a (attach tau); otherwise g = b^j (attach sigma_j).
    """
    from sdetaylor.eldiff import PointEvaluator, build_F
    from sdetaylor.expr import add, diff, evaluate, mul

    F = build_F(tree, spec, idx)
    g = spec.drift if j is None else spec.column(j)
    lhs_expr = add(*(mul(g[k], diff(F, k + 1)) for k in range(spec.d)))
    cols = [np.array([p[i] for p in points]) for i in range(spec.d)]
    lhs = np.broadcast_to(np.asarray(evaluate(lhs_expr, cols, array=True), dtype=float), (len(points),))
    fresh = tree.n_indices + 1
    grown = []
    for r in range(tree.size):
        if j is None:
            grown.append((tree.extend((r,), "t", (0,)), tuple(idx)))
        else:
            grown.append((tree.extend((r,), "s", (fresh,)), tuple(idx) + (j,)))
    evs = [PointEvaluator(spec, p) for p in points]
    terms = np.array([[ev.F(u, ix) for ev in evs] for u, ix in grown])
    rhs = np.sum(terms, axis=0)
    return np.max(np.abs(lhs - rhs) / np.maximum(_residual_scale(lhs, terms), 1e-300))


def second_growth_residuals(tree, spec, points, idx, j):
    """Same for sum_{k,l} b^{k,j} b^{l,j} d_k d_l F(t) against pairs of sigma_j nodes."""
    from sdetaylor.eldiff import PointEvaluator, build_F
    from sdetaylor.expr import add, diff, evaluate, mul

    F = build_F(tree, spec, idx)
    b = spec.column(j)
    lhs_expr = add(*(mul(b[k], b[l], diff(diff(F, k + 1), l + 1)) for k in range(spec.d) for l in range(spec.d)))
    cols = [np.array([p[i] for p in points]) for i in range(spec.d)]
    lhs = np.broadcast_to(np.asarray(evaluate(lhs_expr, cols, array=True), dtype=float), (len(points),))
    fresh = tree.n_indices + 1
    ix = tuple(idx) + (j,)
    grown = [tree.extend((r, s), "ss", (fresh, fresh)) for r in range(tree.size) for s in range(tree.size)]
    evs = [PointEvaluator(spec, p) for p in points]
    terms = np.array([[ev.F(u, ix) for ev in evs] for u in grown])
    rhs = np.sum(terms, axis=0)
    return np.max(np.abs(lhs - rhs) / np.maximum(_residual_scale(lhs, terms), 1e-300))
