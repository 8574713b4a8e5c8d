"""Command-line front end: ``sdetaylor {trees,expand,validate,convergence}``.

Exit codes: 0 success, 1 a validation check failed, 2 order above the cap,
3 unparsable spec/expression/tree, 4 any other library error, 64 bad usage.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .errors import CapExceeded, ParseError, SDETaylorError
from .expansion import (
    DEFAULT_EXPANSION_CAP,
    analytic_reference,
    convergence_study,
    evaluate_symbolic,
    expand,
    symbolic_expansion,
)
from .oracle import DEFAULT_ORACLE_CAP, MCConfig, brute_force_coefficient, mc_estimate
from .report import (
    expansion_json,
    expansion_latex,
    expansion_text,
    symbolic_latex,
    symbolic_text,
    symbolic_tree_text,
    trees_csv,
    trees_dot,
    trees_json,
    trees_latex,
)
from .sde import SDESpec, parse_spec
from .stree import DEFAULT_TREE_CAP, Calculus, enumerate_trees

EXIT_OK, EXIT_FAIL, EXIT_CAP, EXIT_PARSE, EXIT_ERROR, EXIT_USAGE = 0, 1, 2, 3, 4, 64

DEFAULT_SEED = 0
ORACLE_RTOL = 1e-9
ORACLE_ATOL = 1e-12


@dataclass
class RunManifest:
    command: str
    spec_sha256: str | None
    parameters: dict
    seed: int
    version: str = __version__
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def write_atomic(path: str | Path, text: str) -> None:
    """Write via a temp file in the same directory and rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_spec(path: str) -> tuple[SDESpec, str]:
    raw = Path(path).read_bytes()
    return parse_spec(raw.decode("utf-8")), hashlib.sha256(raw).hexdigest()


def _emit(args, text: str, manifest: RunManifest) -> None:
    if args.out:
        write_atomic(args.out, text)
        write_atomic(args.out + ".manifest.json", manifest.to_json())
    else:
        sys.stdout.write(text)
        if not args.quiet:
            sys.stderr.write(manifest.to_json())


def _params(args, *names) -> dict:
    return {n: getattr(args, n) for n in names}


# -- subcommands ----------------------------------------------------------------


def cmd_trees(args) -> int:
    calculus = Calculus.parse(args.calculus)
    trees = enumerate_trees(calculus, args.order, cap=args.cap)
    if args.format == "csv":
        text = trees_csv(trees)
    elif args.format == "json":
        text = trees_json(trees, calculus=calculus.value, max_order=args.order)
    elif args.format == "dot":
        text = trees_dot(trees)
    else:
        text = trees_latex(trees)
    params = _params(args, "order", "format", "cap")
    params["calculus"] = calculus.value
    _emit(args, text, RunManifest("trees", None, params, args.seed))
    return EXIT_OK


def cmd_expand(args) -> int:
    spec, sha = _read_spec(args.specfile)
    if args.order > args.cap:
        raise CapExceeded(args.order, args.cap)
    t = args.t0 if args.t is None else args.t
    if args.mode == "numeric":
        exp = expand(spec, args.order, args.t0, t, cap=args.cap, threads=args.threads)
        if args.format == "json":
            text = expansion_json(exp)
        elif args.format == "latex":
            text = expansion_latex(exp)
        else:
            text = expansion_text(exp)
    elif spec.d == 1 and spec.m == 1:
        if args.format == "json":
            sym = symbolic_expansion(spec.calculus, args.order)
            text = json.dumps(
                {
                    "calculus": spec.calculus.value,
                    "order": args.order,
                    "powers": {
                        str(p): [
                            {"monomial": [[n, k, e] for (n, k), e in mono], "coefficient": str(c)}
                            for mono, c in sorted(sym[p].items())
                        ]
                        for p in sym
                    },
                    "numeric_coefficients": evaluate_symbolic(sym, spec),
                },
                indent=2,
            ) + "\n"
        elif args.format == "latex":
            text = symbolic_latex(spec.calculus, args.order)
        else:
            text = symbolic_text(spec.calculus, args.order)
    else:
        trees = enumerate_trees(spec.calculus, args.order, cap=args.cap)
        text = symbolic_tree_text(trees, spec.calculus)
    params = _params(args, "order", "t0", "mode", "format", "cap")
    params["t"] = t
    _emit(args, text, RunManifest("expand", sha, params, args.seed))
    return EXIT_OK


def _close(x: float, ref: float, rtol: float, atol: float) -> bool:
    return math.isfinite(x) and abs(x - ref) <= atol + rtol * abs(ref)


def cmd_validate(args) -> int:
    spec, sha = _read_spec(args.specfile)
    t = args.t0 if args.t is None else args.t
    exp = expand(spec, args.order, args.t0, t, cap=args.cap, threads=args.threads)
    coeffs = exp.coefficients()
    dt = exp.dt
    checks: list[dict] = []

    def record(name, ok, **info):
        checks.append({"check": name, "status": "PASS" if ok else "FAIL", **info})

    for k, c in enumerate(coeffs):
        ref = brute_force_coefficient(k, spec, cap=max(args.cap, DEFAULT_ORACLE_CAP))
        scale = max(1.0, abs(ref))
        record(f"oracle order {k}", _close(c, ref, args.rtol, ORACLE_ATOL * scale), expansion=c, reference=ref)

    # size of the first neglected term; used as truncation allowance
    nxt = args.order + 1
    if nxt <= max(args.cap, DEFAULT_ORACLE_CAP):
        remainder = abs(brute_force_coefficient(nxt, spec, cap=nxt)) * abs(dt) ** nxt
    else:
        remainder = 0.0
    allowance = 2.0 * remainder + args.slack

    if args.expected:
        doc = json.loads(Path(args.expected).read_text())
        want = doc["coefficients"]
        for k, c in enumerate(coeffs):
            if k < len(want):
                record(f"expected order {k}", _close(c, want[k], args.rtol, ORACLE_ATOL), expansion=c, reference=want[k])

    if args.analytic:
        ref = analytic_reference(args.analytic)(t)
        record("analytic", abs(exp.total - ref) <= allowance + ORACLE_ATOL * max(1.0, abs(ref)),
               expansion=exp.total, reference=ref, tolerance=allowance)

    if args.paths > 0 and dt > 0:
        cfg = MCConfig(paths=args.paths, steps=args.steps, seed=args.seed)
        mc = mc_estimate(spec, args.t0, t, cfg, threads=args.threads)
        tol = 3.0 * mc.stderr + allowance
        record("monte carlo", abs(exp.total - mc.mean) <= tol, expansion=exp.total, reference=mc.mean,
               stderr=mc.stderr, tolerance=tol)

    failed = any(c["status"] == "FAIL" for c in checks)
    if args.format == "json":
        text = json.dumps({"checks": checks, "passed": not failed}, indent=2) + "\n"
    else:
        lines = []
        for c in checks:
            extra = " ".join(f"{k}={v!r}" for k, v in c.items() if k not in ("check", "status"))
            lines.append(f"{c['status']}  {c['check']}: {extra}")
        lines.append("FAIL" if failed else "PASS")
        text = "\n".join(lines) + "\n"
    params = _params(args, "order", "t0", "paths", "steps", "rtol", "slack", "analytic", "expected", "format", "cap")
    params["t"] = t
    _emit(args, text, RunManifest("validate", sha, params, args.seed))
    return EXIT_FAIL if failed else EXIT_OK


def _grid(args) -> list[float]:
    if args.grid:
        try:
            return [float(v) for v in args.grid.split(",")]
        except ValueError:
            raise ParseError(f"bad grid {args.grid!r}") from None
    return [args.t0 + args.grid_start * args.grid_ratio**k for k in range(args.grid_count)]


def cmd_convergence(args) -> int:
    spec, sha = _read_spec(args.specfile)
    grid = _grid(args)
    if args.reference == "oracle":
        ref = "oracle"
    elif args.reference == "mc":
        ref = MCConfig(paths=args.paths, steps=args.steps, seed=args.seed)
    else:
        if not args.analytic:
            raise ParseError("--reference analytic needs --analytic EXPR")
        ref = analytic_reference(args.analytic)
    res = convergence_study(spec, args.order, args.t0, grid, ref, cap=args.cap)
    if args.format == "json":
        text = json.dumps(
            {
                "order": res.order,
                "points": [{"t": t, "error": e} for t, e in res.points],
                "stderrs": res.stderrs,
                "slope": res.slope,
                "floor": res.floor,
                "expected_slope": args.order + 1,
            },
            indent=2,
        ) + "\n"
    else:
        lines = [f"# order={res.order} reference={args.reference}", "# t error" + (" stderr" if res.stderrs else "")]
        for n, (t, e) in enumerate(res.points):
            lines.append(f"{t!r} {e!r}" + (f" {res.stderrs[n]!r}" if res.stderrs else ""))
        if res.slope is not None:
            lines.append(f"slope = {res.slope:.6f} (expected {args.order + 1})")
        else:
            lines.append(f"slope = n/a (error floor {res.floor!r})")
        text = "\n".join(lines) + "\n"
    params = _params(args, "order", "t0", "reference", "analytic", "paths", "steps", "format", "cap")
    params["grid"] = grid
    _emit(args, text, RunManifest("convergence", sha, params, args.seed))
    return EXIT_OK


# -- argument parsing --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    def common(cap):
        # a fresh parent per subcommand, since parents share their actions
        c = argparse.ArgumentParser(add_help=False)
        c.add_argument("--seed", type=int, default=DEFAULT_SEED, help="seed for all randomness (default 0)")
        c.add_argument("--threads", type=int, default=1)
        c.add_argument("--out", help="write output here (atomically) plus <out>.manifest.json")
        c.add_argument("--quiet", action="store_true", help="do not print the manifest to stderr")
        c.add_argument("--cap", type=int, default=cap, help=f"maximum order (default {cap})")
        return [c]

    p = _Parser(prog="sdetaylor", description="Tree expansions of E f(X_t) for Itô and Stratonovich SDEs.")
    p.add_argument("--version", action="version", version=f"sdetaylor {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("trees", parents=common(DEFAULT_TREE_CAP), help="enumerate S-trees with their cardinalities")
    t.add_argument("--calculus", default="ito")
    t.add_argument("--order", type=int, required=True)
    t.add_argument("--format", choices=["csv", "json", "dot", "latex"], default="csv")
    t.set_defaults(func=cmd_trees)

    def spec_args(sp):
        sp.add_argument("specfile")
        sp.add_argument("--order", type=int, required=True)
        sp.add_argument("--t0", type=float, default=0.0)

    e = sub.add_parser("expand", parents=common(DEFAULT_EXPANSION_CAP), help="truncated expansion of E f(X_t)")
    spec_args(e)
    e.add_argument("--t", type=float)
    e.add_argument("--mode", choices=["numeric", "symbolic"], default="numeric")
    e.add_argument("--format", choices=["text", "json", "latex"], default="text")
    e.set_defaults(func=cmd_expand)

    def mc_args(sp, paths):
        sp.add_argument("--paths", type=int, default=paths)
        sp.add_argument("--steps", type=int, default=100)

    v = sub.add_parser("validate", parents=common(DEFAULT_EXPANSION_CAP), help="check an expansion against the oracles")
    spec_args(v)
    v.add_argument("--t", type=float)
    mc_args(v, 100_000)
    v.add_argument("--rtol", type=float, default=ORACLE_RTOL)
    v.add_argument("--slack", type=float, default=0.0, help="extra absolute tolerance for MC/analytic checks")
    v.add_argument("--analytic", help="closed form of E f(X_t) in the variable t")
    v.add_argument("--expected", help="JSON from 'expand --format json' to compare coefficients with")
    v.add_argument("--format", choices=["text", "json"], default="text")
    v.set_defaults(func=cmd_validate)

    c = sub.add_parser("convergence", parents=common(DEFAULT_EXPANSION_CAP), help="error of the truncation as t -> t0")
    spec_args(c)
    c.add_argument("--grid", help="comma-separated decreasing times")
    c.add_argument("--grid-start", type=float, default=0.2, help="first step t - t0 of a geometric grid")
    c.add_argument("--grid-ratio", type=float, default=0.5)
    c.add_argument("--grid-count", type=int, default=5)
    c.add_argument("--reference", choices=["oracle", "mc", "analytic"], default="oracle")
    c.add_argument("--analytic", help="closed form of E f(X_t) in the variable t")
    mc_args(c, 100_000)
    c.add_argument("--format", choices=["text", "json"], default="text")
    c.set_defaults(func=cmd_convergence)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (SDETaylorError, ArithmeticError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
