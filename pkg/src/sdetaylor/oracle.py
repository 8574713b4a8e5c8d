"""Independent references for E f(X_t).

* Brute force: iterate the generator L0 symbolically; the order-n Taylor
  coefficient of E f(X_t) is (L0)^n f(x0) / n!.
* Monte Carlo: Euler-Maruyama paths with a counter-based random stream.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal

import numpy as np

from .errors import CalculusError, CapExceeded, NumericalBlowup
from .expr import ZERO, Expr, add, const, diff, eval_at, evaluate, mul
from .sde import SDESpec
from .stree import Calculus

__all__ = [
    "apply_L0",
    "apply_Lj",
    "generator_powers",
    "brute_force_coefficient",
    "taylor_reference",
    "MCConfig",
    "MCResult",
    "mc_estimate",
    "BLOWUP_THRESHOLD",
    "DEFAULT_ORACLE_CAP",
]

DEFAULT_ORACLE_CAP = 4
BLOWUP_THRESHOLD = 1e12
BLOCK_PATHS = 1 << 14


def apply_L0(f: Expr, spec: SDESpec) -> Expr:
    """Generator sum_k a^k d_k f + 1/2 sum_{k,l,j} b^{k,j} b^{l,j} d_k d_l f of an Itô spec."""
    if spec.calculus is not Calculus.ITO:
        raise CalculusError("apply_L0 needs the Itô form; use spec.ito_form()")
    d = spec.d
    grad = [diff(f, k + 1) for k in range(d)]
    terms = [mul(spec.drift[k], grad[k]) for k in range(d)]
    second = []
    for k in range(d):
        for l in range(d):
            h = diff(grad[k], l + 1)
            if h.is_zero():
                continue
            bb = add(*(mul(spec.diffusion[k][j], spec.diffusion[l][j]) for j in range(spec.m)))
            second.append(mul(bb, h))
    if second:
        terms.append(mul(const(Fraction(1, 2)), add(*second)))
    return add(*terms) if terms else ZERO


def apply_Lj(f: Expr, spec: SDESpec, j: int) -> Expr:
    """sum_k b^{k,j} d_k f for noise component ``j`` (1-based)."""
    col = spec.column(j)
    return add(*(mul(col[k], diff(f, k + 1)) for k in range(spec.d)))


def generator_powers(spec: SDESpec, n: int) -> list[Expr]:
    """[f, L0 f, ..., (L0)^n f] for the Itô form of ``spec``."""
    ito = spec.ito_form()
    out = [ito.functional]
    for _ in range(n):
        out.append(apply_L0(out[-1], ito))
    return out


def brute_force_coefficient(n: int, spec: SDESpec, cap: int = DEFAULT_ORACLE_CAP) -> float:
    """(L0)^n f(x0) / n!, the coefficient of (t - t0)^n in E f(X_t)."""
    if n > cap:
        raise CapExceeded(n, cap)
    if n < 0:
        raise ValueError("n must be non-negative")
    return eval_at(generator_powers(spec, n)[-1], spec.x0) / math.factorial(n)


def taylor_reference(spec: SDESpec, n: int, dt: float, cap: int = DEFAULT_ORACLE_CAP) -> float:
    """sum_{i<=n} (L0)^i f(x0) dt^i / i!."""
    if n > cap:
        raise CapExceeded(n, cap)
    powers = generator_powers(spec, n)
    values = evaluate(powers, list(spec.x0))
    return math.fsum(float(v) * dt**i / math.factorial(i) for i, v in enumerate(values))


@dataclass(frozen=True)
class MCConfig:
    paths: int = 100_000
    steps: int = 100
    seed: int = 0
    scheme: Literal["euler_maruyama"] = "euler_maruyama"

    def __post_init__(self):
        if self.paths < 1 or self.steps < 1:
            raise ValueError("paths and steps must be >= 1")
        if self.scheme != "euler_maruyama":
            raise ValueError(f"unsupported scheme {self.scheme!r}")


@dataclass(frozen=True)
class MCResult:
    mean: float
    stderr: float
    paths: int


def _block(spec: SDESpec, cfg: MCConfig, dt: float, block: int, start: int, count: int):
    # stream keyed by (seed, block); path start+i always sees the same normals
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed, spawn_key=(block,))))
    d, m = spec.d, spec.m
    x = [np.full(count, v) for v in spec.x0]
    drift = spec.drift
    diffusion = [b for row in spec.diffusion for b in row]
    active = [not b.is_zero() for b in diffusion]
    sqdt = math.sqrt(dt)
    for step in range(cfg.steps):
        vals = evaluate([*drift, *diffusion], x, array=True)
        a_vals, b_vals = vals[:d], vals[d:]
        dw = rng.standard_normal((m, count)) * sqdt if any(active) else None
        new = []
        for i in range(d):
            xi = x[i] + a_vals[i] * dt
            for j in range(m):
                if active[i * m + j]:
                    xi = xi + b_vals[i * m + j] * dw[j]
            new.append(np.broadcast_to(xi, (count,)).astype(float))
        x = new
        worst = np.max(np.abs(np.stack(x)), axis=0)
        bad = ~(worst <= BLOWUP_THRESHOLD)
        if bad.any():
            p = int(np.argmax(bad))
            raise NumericalBlowup(start + p, step + 1, float(worst[p]))
    fx = np.broadcast_to(np.asarray(evaluate(spec.functional, x, array=True), dtype=float), (count,))
    if np.all(fx == fx[0]):
        return count, float(fx[0]), 0.0
    mean = float(np.mean(fx))
    m2 = float(np.sum((fx - mean) ** 2))
    return count, mean, m2


def mc_estimate(
    spec: SDESpec, t0: float, t: float, cfg: MCConfig = MCConfig(), threads: int = 1
) -> MCResult:
    """Euler-Maruyama estimate of E f(X_t) and its standard error.

    Stratonovich specs are simulated through their Itô form.  Results depend
    only on ``cfg`` (not on ``threads``).
    """
    if not t > t0:
        raise ValueError("need t > t0")
    ito = spec.ito_form()
    dt = (t - t0) / cfg.steps
    blocks = [(b, s, min(BLOCK_PATHS, cfg.paths - s)) for b, s in enumerate(range(0, cfg.paths, BLOCK_PATHS))]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda args: _block(ito, cfg, dt, *args), blocks))
    else:
        parts = [_block(ito, cfg, dt, *args) for args in blocks]
    # Chan et al. merge of (count, mean, M2), always in block order
    n, mean, m2 = parts[0]
    for nb, mb, m2b in parts[1:]:
        tot = n + nb
        delta = mb - mean
        mean += delta * nb / tot
        m2 += m2b + delta * delta * n * nb / tot
        n = tot
    stderr = math.sqrt(m2 / (n - 1) / n) if n > 1 else math.nan
    return MCResult(mean, stderr, n)
