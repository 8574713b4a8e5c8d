"""Stochastic Taylor expansions of E f(X_t) indexed by coloured S-trees."""

__version__ = "0.1.0"

from .errors import (
    CalculusError,
    CapExceeded,
    DimensionError,
    DomainError,
    InsufficientGrid,
    NumericalBlowup,
    ParseError,
    SDETaylorError,
    SubscriptError,
    UnknownVariable,
)
from .stree import (
    ROOT,
    Calculus,
    CanonicalSTree,
    LabelledSTree,
    canonicalize,
    enumerate_trees,
    grow,
    labelled_closure,
    parse_bracket,
    to_bracket,
    to_latex,
)
from .expr import Expr, diff, eval_at, evaluate, parse_expr, to_str
from .sde import SDESpec, format_spec, load_spec, modified_drift, parse_spec
from .eldiff import PointEvaluator, build_F, notation, sum_over_indices
from .oracle import MCConfig, MCResult, apply_L0, apply_Lj, brute_force_coefficient, mc_estimate
from .expansion import Expansion, ConvergenceResult, convergence_study, expand, symbolic_expansion

__all__ = [name for name in dir() if not name.startswith("_")]
