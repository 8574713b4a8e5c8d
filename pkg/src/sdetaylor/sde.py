"""SDE problem descriptions and the line-oriented spec-file format.

Example file::

    # geometric Brownian motion
    d = 1
    m = 1
    calculus = ito
    a1 = 0.5*x1
    b1_1 = x1
    f = x1
    x0 = 1.0
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .errors import CalculusError, DimensionError, ParseError
from .expr import ZERO, Expr, add, const, diff, mul, parse_expr, to_str, variables
from .stree import Calculus

__all__ = ["SDESpec", "modified_drift", "parse_spec", "load_spec", "format_spec"]


@dataclass(frozen=True)
class SDESpec:
    """Autonomous SDE ``dX = a(X) dt + b(X) * dW`` with functional ``f`` and start ``x0``.

    For a Stratonovich spec ``drift`` is the Stratonovich drift.
    """

    d: int
    m: int
    drift: tuple[Expr, ...]
    diffusion: tuple[tuple[Expr, ...], ...]  # diffusion[i][j] = b^{i+1, j+1}
    functional: Expr
    x0: tuple[float, ...]
    calculus: Calculus = Calculus.ITO

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise DimensionError("d and m must be >= 1")
        object.__setattr__(self, "calculus", Calculus.parse(self.calculus))
        object.__setattr__(self, "drift", tuple(self.drift))
        object.__setattr__(self, "diffusion", tuple(tuple(r) for r in self.diffusion))
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if len(self.drift) != self.d:
            raise DimensionError(f"drift has {len(self.drift)} components, expected {self.d}")
        if len(self.diffusion) != self.d or any(len(r) != self.m for r in self.diffusion):
            raise DimensionError(f"diffusion must be {self.d}x{self.m}")
        if len(self.x0) != self.d:
            raise DimensionError(f"x0 has length {len(self.x0)}, expected {self.d}")
        for e in (*self.drift, *(b for r in self.diffusion for b in r), self.functional):
            bad = [k for k in variables(e) if k > self.d]
            if bad:
                raise DimensionError(f"{to_str(e)} uses x{bad[0]} but d = {self.d}")

    @classmethod
    def from_strings(
        cls,
        drift: Sequence[str],
        diffusion: Sequence[Sequence[str]],
        functional: str,
        x0: Sequence[float],
        calculus: Calculus | str = Calculus.ITO,
    ) -> "SDESpec":
        d = len(drift)
        m = len(diffusion[0]) if diffusion else 1
        return cls(
            d,
            m,
            tuple(parse_expr(s, d) for s in drift),
            tuple(tuple(parse_expr(s, d) for s in row) for row in diffusion),
            parse_expr(functional, d),
            tuple(x0),
            Calculus.parse(calculus),
        )

    def column(self, j: int) -> tuple[Expr, ...]:
        """Diffusion column ``b^j`` (1-based ``j``)."""
        if not 1 <= j <= self.m:
            raise IndexError(f"noise index {j} outside 1..{self.m}")
        return tuple(row[j - 1] for row in self.diffusion)

    @property
    def noise_free(self) -> bool:
        return all(b.is_zero() for row in self.diffusion for b in row)

    def with_drift(self, drift: Sequence[Expr]) -> "SDESpec":
        return replace(self, drift=tuple(drift))

    def ito_form(self) -> "SDESpec":
        """The Itô SDE with the same solution (identity for Itô specs)."""
        if self.calculus is Calculus.ITO:
            return self
        return replace(self, drift=modified_drift(self), calculus=Calculus.ITO)


def modified_drift(spec: SDESpec) -> tuple[Expr, ...]:
    """Itô drift of a Stratonovich system: a_i + 1/2 sum_{k,l} b^{k,l} d_k b^{i,l}."""
    if spec.calculus is not Calculus.STRATONOVICH:
        raise CalculusError("modified drift is defined for Stratonovich specs only")
    half = const(Fraction(1, 2))
    out = []
    for i in range(spec.d):
        corr = [
            mul(spec.diffusion[k][l], diff(spec.diffusion[i][l], k + 1))
            for k in range(spec.d)
            for l in range(spec.m)
        ]
        out.append(add(spec.drift[i], mul(half, add(*corr))))
    return tuple(out)


_KEY = re.compile(r"^(d|m|calculus|f|x0|a(\d+)|b(\d+)_(\d+))$")


def parse_spec(text: str) -> SDESpec:
    """Parse the ``key = value`` spec format.  Missing diffusion entries are 0."""
    entries: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = value'", 0, raw)
        key, value = (p.strip() for p in line.split("=", 1))
        if not _KEY.match(key):
            raise ParseError(f"line {lineno}: unknown key {key!r}", 0, raw)
        if key in entries:
            raise ParseError(f"line {lineno}: duplicate key {key!r}", 0, raw)
        entries[key] = (value, lineno)

    def need(key: str) -> str:
        if key not in entries:
            raise ParseError(f"missing required key {key!r}")
        return entries[key][0]

    def expr(key: str, d: int) -> Expr:
        value, lineno = entries[key]
        try:
            return parse_expr(value, d)
        except ParseError as exc:
            exc.args = (f"line {lineno} ({key}): {exc.args[0]}",)
            raise

    try:
        d = int(need("d"))
        m = int(entries.get("m", ("1", 0))[0])
    except ValueError as exc:
        raise ParseError(f"d and m must be integers: {exc}") from None
    calculus = Calculus.parse(entries.get("calculus", ("ito", 0))[0])
    for key in entries:
        mt = _KEY.match(key)
        if mt.group(2) and not 1 <= int(mt.group(2)) <= d:
            raise ParseError(f"drift component {key} outside 1..{d}")
        if mt.group(3) and not (1 <= int(mt.group(3)) <= d and 1 <= int(mt.group(4)) <= m):
            raise ParseError(f"diffusion entry {key} outside {d}x{m}")
    drift = tuple(expr(f"a{i}", d) if f"a{i}" in entries else ZERO for i in range(1, d + 1))
    diffusion = tuple(
        tuple(expr(f"b{i}_{j}", d) if f"b{i}_{j}" in entries else ZERO for j in range(1, m + 1))
        for i in range(1, d + 1)
    )
    functional = expr("f", d)
    try:
        x0 = tuple(float(v) for v in need("x0").split(","))
    except ValueError:
        raise ParseError("x0 must be a comma-separated list of numbers") from None
    if len(x0) != d:
        raise ParseError(f"x0 has {len(x0)} entries, expected {d}")
    return SDESpec(d, m, drift, diffusion, functional, x0, calculus)


def load_spec(path: str | Path) -> SDESpec:
    return parse_spec(Path(path).read_text())


def format_spec(spec: SDESpec) -> str:
    lines = [f"d = {spec.d}", f"m = {spec.m}", f"calculus = {spec.calculus.value}"]
    lines += [f"a{i + 1} = {to_str(a)}" for i, a in enumerate(spec.drift)]
    for i, row in enumerate(spec.diffusion):
        lines += [f"b{i + 1}_{j + 1} = {to_str(b)}" for j, b in enumerate(row) if not b.is_zero()]
    lines.append(f"f = {to_str(spec.functional)}")
    lines.append("x0 = " + ", ".join(repr(v) for v in spec.x0))
    return "\n".join(lines) + "\n"
