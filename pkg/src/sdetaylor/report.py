"""Text renderings of tree tables and expansions (CSV, JSON, DOT, LaTeX, plain text).

Emitters are deterministic: the same inputs always give byte-identical output.
"""

from __future__ import annotations

import csv
import io
import json
import math
from fractions import Fraction
from typing import Sequence

from .eldiff import notation
from .expansion import Expansion, Monomial, symbolic_expansion
from .stree import Calculus, CanonicalSTree, to_latex

__all__ = [
    "TREE_CSV_COLUMNS",
    "trees_csv",
    "trees_json",
    "trees_dot",
    "trees_latex",
    "tree_record",
    "expansion_text",
    "expansion_json",
    "expansion_latex",
    "symbolic_text",
    "symbolic_latex",
    "symbolic_tree_text",
]

TREE_CSV_COLUMNS = ("encoding", "order", "nDet", "nStoch", "cardI", "cardS", "bracket")


def tree_record(t: CanonicalSTree) -> dict:
    return {
        "encoding": t.encoding,
        "order": int(t.order),
        "nDet": t.n_det,
        "nStoch": t.n_stoch,
        "cardI": t.card_ito,
        "cardS": t.card_strat,
        "bracket": t.bracket,
    }


def trees_csv(trees: Sequence[CanonicalSTree]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TREE_CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for t in trees:
        w.writerow(tree_record(t))
    return buf.getvalue()


def trees_json(trees: Sequence[CanonicalSTree], **meta) -> str:
    return json.dumps({**meta, "trees": [tree_record(t) for t in trees]}, indent=2) + "\n"


def trees_dot(trees: Sequence[CanonicalSTree]) -> str:
    """One digraph per tree; ``rankdir=BT`` draws the root at the bottom."""
    out = []
    for n, t in enumerate(trees):
        rep = t.representative
        out.append(f'digraph t{n} {{\n  label="{t.bracket}";\n  rankdir=BT;')
        for v in range(rep.size):
            k = rep.kinds[v]
            if k == "g":
                out.append(f'  n{v + 1} [label="gamma", shape=doublecircle];')
            elif k == "t":
                out.append(f'  n{v + 1} [label="tau", shape=circle, style=filled, fillcolor=black, fontcolor=white];')
            else:
                out.append(f'  n{v + 1} [label="sigma_j{rep.index[v]}", shape=circle];')
        for v in range(1, rep.size):
            out.append(f"  n{rep.parent[v] + 1} -> n{v + 1};")
        out.append("}")
    return "\n".join(out) + "\n"


def trees_latex(trees: Sequence[CanonicalSTree]) -> str:
    lines = [
        r"\begin{tabular}{|c|c|c|c|}",
        r"\hline",
        r"tree & $\alpha_I$ & $\alpha_S$ & $\rho$ \\",
        r"\hline",
    ]
    for t in trees:
        lines.append(f"${to_latex(t.representative)}$ & {t.card_ito} & {t.card_strat} & {int(t.order)} \\\\")
    lines += [r"\hline", r"\end{tabular}"]
    return "\n".join(lines) + "\n"


def _frac(w: Fraction) -> str:
    return str(w.numerator) if w.denominator == 1 else f"{w.numerator}/{w.denominator}"


def expansion_text(exp: Expansion) -> str:
    lines = [
        f"# calculus={exp.spec.calculus.value} d={exp.spec.d} m={exp.spec.m} order={exp.order} "
        f"t0={exp.t0!r} t={exp.t!r}",
        f"# {'tree':<24} {'alpha':>5} {'weight':>8} {'value':>24} power",
    ]
    for term in exp.terms:
        lines.append(
            f"{term.tree.bracket:<26} {term.alpha:>5} {_frac(term.weight):>8} {term.value!r:>24} {term.power}"
        )
    for p, c in enumerate(exp.coefficients()):
        lines.append(f"coefficient[{p}] = {c!r}")
    lines.append(f"total = {exp.total!r}")
    return "\n".join(lines) + "\n"


def expansion_json(exp: Expansion, **meta) -> str:
    doc = {
        **meta,
        "calculus": exp.spec.calculus.value,
        "d": exp.spec.d,
        "m": exp.spec.m,
        "order": exp.order,
        "t0": exp.t0,
        "t": exp.t,
        "terms": [
            {
                "encoding": term.tree.encoding,
                "bracket": term.tree.bracket,
                "alpha": term.alpha,
                "weight": _frac(term.weight),
                "value": term.value,
                "power": term.power,
            }
            for term in exp.terms
        ],
        "coefficients": exp.coefficients(),
        "total": exp.total,
    }
    return json.dumps(doc, indent=2) + "\n"


def expansion_latex(exp: Expansion) -> str:
    lines = [r"\begin{align*}", r"E^{t_0,x_0}(f(X_t)) &\approx"]
    for p, c in enumerate(exp.coefficients()):
        sep = "" if p == 0 else "+"
        lines.append(f"  &{sep} {c!r} \\, (t-t_0)^{{{p}}} \\\\")
    lines.append(r"\end{align*}")
    return "\n".join(lines) + "\n"


# -- symbolic (d = m = 1) ------------------------------------------------------

_NAME_ORDER = {"f": 0, "a": 1, "b": 2}


def _factor(name: str, k: int, e: int, latex: bool) -> str:
    if latex:
        base = name + ("'" * k if k <= 4 else f"^{{({k})}}")
        if e == 1:
            return base
        return f"{{{base}}}^{{{e}}}" if k else f"{base}^{{{e}}}"
    base = name + ("'" * k if k <= 4 else f"^({k})")
    return base if e == 1 else (f"({base})^{e}" if k else f"{base}^{e}")


def _coef(c: Fraction, latex: bool) -> str:
    if c == 1:
        return ""
    if c.denominator == 1:
        return f"{c.numerator}" + (r" \, " if latex else "*")
    if latex:
        return rf"\tfrac{{{c.numerator}}}{{{c.denominator}}} \, "
    return f"{c.numerator}/{c.denominator}*"


def _grouped(sym: dict[int, dict[Monomial, Fraction]], latex: bool) -> list[tuple[int, str]]:
    """Per power p: p! * coefficient, grouped by the derivative order of f."""
    rows = []
    for p in sorted(sym):
        groups: dict[int, list[tuple[Fraction, Monomial]]] = {}
        for mono, c in sym[p].items():
            fk = next(k for (name, k), _ in mono if name == "f")
            rest = tuple(item for item in mono if item[0][0] != "f")
            groups.setdefault(fk, []).append((c * math.factorial(p), rest))
        parts = []
        for fk in sorted(groups):
            sep = r" \, " if latex else "*"
            fpart = _factor("f", fk, 1, latex)
            items = sorted(groups[fk], key=lambda cr: [(_NAME_ORDER[n], k, e) for (n, k), e in cr[1]])
            bodies = [sep.join(_factor(n, k, e, latex) for (n, k), e in rest) for _, rest in items]
            if len(items) == 1:
                c, body = items[0][0], bodies[0]
                parts.append(_coef(c, latex) + fpart + (sep + body if body else ""))
                continue
            inner = [_coef(c, latex) + body for (c, _), body in zip(items, bodies)]
            joined = " + ".join(inner)
            parts.append(f"{fpart} \\cdot \\left( {joined} \\right)" if latex else f"{fpart}*({joined})")
        rows.append((p, " + ".join(parts)))
    return rows


def symbolic_text(calculus: Calculus | str, n: int) -> str:
    """Expansion of E f(X_t) for d = m = 1 in derivative notation, grouped by f^(k)."""
    sym = symbolic_expansion(calculus, n)
    pieces = []
    for p, body in _grouped(sym, latex=False):
        if p == 0:
            pieces.append(body)
        elif p == 1:
            pieces.append(f"({body})*(t-t0)")
        else:
            pieces.append(f"({body})*(t-t0)^{p}/{p}!")
    return "E f(X_t) = " + "\n  + ".join(pieces) + f"\n  + R_{n}\n"


def symbolic_latex(calculus: Calculus | str, n: int) -> str:
    sym = symbolic_expansion(calculus, n)
    lines = [r"\begin{align*}", r"E^{t_0,x_0}(f(X_t)) = {} &"]
    for p, body in _grouped(sym, latex=True):
        if p == 0:
            lines[-1] += f" {body} \\\\"
        elif p == 1:
            lines.append(rf"  & + \left( {body} \right) (t-t_0) \\")
        else:
            lines.append(rf"  & + \left( {body} \right) \frac{{(t-t_0)^{{{p}}}}}{{{p}!}} \\")
    lines.append(rf"  & + \mathcal{{R}}_{{{n}}}(t,t_0)")
    lines.append(r"\end{align*}")
    return "\n".join(lines) + "\n"


def symbolic_tree_text(trees: Sequence[CanonicalSTree], calculus: Calculus | str) -> str:
    """General d, m: one line per tree, alpha/(2^(s/2) rho!) * sum_j F(t) * (t-t0)^rho."""
    from .expansion import tree_weight

    calculus = Calculus.parse(calculus)
    lines = []
    for t in trees:
        alpha = t.cardinality(calculus)
        rho = int(t.order)
        w = tree_weight(alpha, t.n_stoch, rho)
        sums = "".join(f"sum_j{k} " for k in range(1, t.n_indices + 1))
        lines.append(f"{_frac(w):>6} * {sums}{notation(t)} * (t-t0)^{rho}    # {t.bracket}")
    return "\n".join(lines) + "\n"


def is_finite_number(x: float) -> bool:
    return isinstance(x, float) and math.isfinite(x)
