import itertools
import random
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import ORDER_TWO_TREES
from sdetaylor.errors import CapExceeded, ParseError, SubscriptError
from sdetaylor.stree import (
    ROOT,
    Calculus,
    CanonicalSTree,
    Kind,
    LabelledSTree,
    canonicalize,
    enumerate_trees,
    grow,
    labelled_closure,
    parse_bracket,
    to_bracket,
    to_latex,
    tree_from_encoding,
)


# -- construction -----------------------------------------------------------------


def test_root_properties():
    assert ROOT.size == 1
    assert ROOT.order == 0
    assert ROOT.n_indices == 0
    assert ROOT.color(1).kind is Kind.ROOT


@pytest.mark.parametrize(
    "parent,kinds,index",
    [
        ((0,), "g", (0,)),            # root must have parent -1
        ((-1, 1), "gt", (0, 0)),      # parent not smaller
        ((-1, 0), "gg", (0, 0)),      # second root
        ((-1, 0), "gs", (0, 0)),      # stochastic without index
        ((-1, 0), "gt", (0, 1)),      # deterministic with index
        ((-1, 0, 0), "gss", (0, 1, 3)),  # not dense
    ],
)
def test_invalid_labelled_trees(parent, kinds, index):
    with pytest.raises(ValueError):
        LabelledSTree(parent, kinds, index)


def test_parent_and_color_are_one_based():
    t = parse_bracket("([s2],s1)")
    assert t.parent_of(2) == 1
    assert [t.color(i).kind for i in range(1, t.size + 1)].count(Kind.STOCH) == 2
    with pytest.raises(ValueError):
        t.parent_of(1)


# -- growth -----------------------------------------------------------------------


def test_grow_root_ito():
    out = grow(ROOT, "ito")
    assert len(out) == 2
    assert {to_bracket(t) for t in out} == {"(t)", "(s1,s1)"}


def test_grow_root_stratonovich():
    out = grow(ROOT, "stratonovich")
    assert len(out) == 3
    assert {to_bracket(t) for t in out} == {"(t)", "(s1,s1)", "({s1}_1)"}


def test_grow_tau_ito_counts_ordered_pairs():
    # 2 deterministic attachments plus all 4 ordered parent pairs over 2 nodes
    tau = parse_bracket("(t)")
    out = grow(tau, Calculus.ITO)
    assert len(out) == 6
    assert sum(t.n_det == 2 for t in out) == 2
    pairs = sorted((t.parent[2], t.parent[3]) for t in out if t.n_stoch == 2)
    assert pairs == [(0, 0), (0, 1), (1, 0), (1, 1)]
    # Stratonovich adds the pairs whose second node hangs off the first new one
    assert len(grow(tau, Calculus.STRATONOVICH)) == 8


def test_grow_labels_follow_addition_order():
    for t in grow(parse_bracket("(s1,s1)"), "strat"):
        assert t.parent[: 3] == (-1, 0, 0)
        if t.n_stoch == 4:
            assert t.index[3] == t.index[4] == 2


# -- canonical form -----------------------------------------------------------------


SAME_CLASS = [
    LabelledSTree((-1, 0, 1, 0), "gtss", (0, 0, 1, 2)),
    LabelledSTree((-1, 0, 0, 1), "gtss", (0, 0, 1, 2)),
    LabelledSTree((-1, 0, 0, 2), "gsts", (0, 1, 0, 2)),
]


def test_relabelled_trees_share_one_class():
    codes = {canonicalize(t) for t in SAME_CLASS}
    assert len(codes) == 1
    assert codes == {canonicalize(parse_bracket("([s2],s1)"))}


def test_tau_child_vs_tau_sibling_differ():
    t_i = parse_bracket("([s2],s1)")
    t_ii = parse_bracket("({t,s2}_1)")
    assert canonicalize(t_i) != canonicalize(t_ii)
    assert t_ii.kinds.count("t") == 1 and t_ii.n_stoch == 2


def test_root_encoding():
    assert canonicalize(ROOT) == "g"


def test_index_renaming_is_invisible():
    a = parse_bracket("(s1,s2,{s2}_1)")
    b = parse_bracket("(s2,s1,{s1}_2)")
    assert canonicalize(a) == canonicalize(b)
    # but attaching to the other pair changes the class
    c = parse_bracket("(s1,s1,{s2}_2)")
    assert canonicalize(a) != canonicalize(c)


def _relabel(t: LabelledSTree, rnd: random.Random) -> LabelledSTree:
    """Random root-fixing monotone relabelling plus a random index bijection."""
    children = t.children
    order, frontier = [], [0]
    while frontier:  # random topological order
        v = frontier.pop(rnd.randrange(len(frontier)))
        order.append(v)
        frontier.extend(children[v])
    new = {v: n for n, v in enumerate(order)}
    k = t.n_indices
    perm = list(range(1, k + 1))
    rnd.shuffle(perm)
    pi = {0: 0, **{j + 1: perm[j] for j in range(k)}}
    parent = [0] * t.size
    kinds = [""] * t.size
    index = [0] * t.size
    for v in range(t.size):
        parent[new[v]] = -1 if v == 0 else new[t.parent[v]]
        kinds[new[v]] = t.kinds[v]
        index[new[v]] = pi[t.index[v]]
    return LabelledSTree(tuple(parent), "".join(kinds), tuple(index))


STRAT3 = [t.representative for t in enumerate_trees("strat", 3)]


@settings(max_examples=200, deadline=None)
@given(st.integers(0, len(STRAT3) - 1), st.integers(0, 2**32))
def test_canonicalize_is_class_function(n, seed):
    t = STRAT3[n]
    u = _relabel(t, random.Random(seed))
    assert canonicalize(u) == canonicalize(t)


def test_distinct_classes_have_distinct_codes():
    codes = [canonicalize(t) for t in STRAT3]
    assert len(codes) == len(set(codes))


def test_canonicalize_is_exact_on_brute_force_isomorphism():
    # compare against an exhaustive isomorphism test over all index bijections
    def all_codes(t):
        out = set()
        for perm in itertools.permutations(range(1, t.n_indices + 1)):
            pi = {0: 0, **{j + 1: perm[j] for j in range(t.n_indices)}}
            u = LabelledSTree(t.parent, t.kinds, tuple(pi[j] for j in t.index))
            out.add(_unordered(u))
        return out

    def _unordered(t):
        ch = t.children

        def enc(v):
            tag = t.kinds[v] + (str(t.index[v]) if t.kinds[v] == "s" else "")
            return tag + "(" + ",".join(sorted(enc(c) for c in ch[v])) + ")"

        return enc(0)

    trees = [t for level in labelled_closure("strat", 2) for t in level]
    by_code: dict[str, set] = {}
    for t in trees:
        by_code.setdefault(canonicalize(t), set()).update(all_codes(t))
    groups = list(by_code.values())
    for a, b in itertools.combinations(groups, 2):
        assert not (a & b)


def test_encoding_roundtrip():
    for t in STRAT3:
        code = canonicalize(t)
        assert canonicalize(tree_from_encoding(code)) == code


# -- enumeration ----------------------------------------------------------------------


def test_order_two_golden():
    ito = {t.encoding: t for t in enumerate_trees("ito", 2)}
    strat = {t.encoding: t for t in enumerate_trees("strat", 2)}
    assert len(ito) == 13 and len(strat) == 28
    for name, bracket, a_i, a_s, rho in ORDER_TWO_TREES:
        code = canonicalize(parse_bracket(bracket))
        assert code in strat, name
        tree = strat[code]
        assert (tree.card_ito, tree.card_strat, tree.order) == (a_i, a_s, rho), name
        assert (code in ito) == (a_i > 0), name
    assert len({canonicalize(parse_bracket(b)) for _, b, *_ in ORDER_TWO_TREES}) == 28


def test_order_zero():
    trees = enumerate_trees("ito", 0)
    assert len(trees) == 1 and trees[0].encoding == "g" and trees[0].card_ito == 1


def test_order_one_stratonovich():
    assert len(enumerate_trees("strat", 1)) == 4


def test_sorted_by_order_then_encoding():
    trees = enumerate_trees("strat", 3)
    keys = [(t.order, t.encoding) for t in trees]
    assert keys == sorted(keys)


def test_cap():
    with pytest.raises(CapExceeded):
        enumerate_trees("ito", 6)
    with pytest.raises(CapExceeded):
        enumerate_trees("ito", 3, cap=2)
    with pytest.raises(ValueError):
        enumerate_trees("ito", -1)


@pytest.mark.parametrize("calculus", ["ito", "strat"])
def test_class_counts_match_labelled_brute_force(calculus):
    enumerated = {t.encoding: t.cardinality(calculus) for t in enumerate_trees(calculus, 3)}
    counted = Counter(canonicalize(t) for level in labelled_closure(calculus, 3) for t in level)
    assert enumerated == dict(counted)


def test_labelled_totals():
    assert [len(level) for level in labelled_closure("ito", 3)] == [1, 2, 18, 434]
    assert [len(level) for level in labelled_closure("strat", 3)] == [1, 3, 38, 1158]


def test_invariants_over_order_three():
    for calc in ("ito", "strat"):
        for level in labelled_closure(calc, 3):
            for t in level:
                assert all(t.parent[i] < i for i in range(1, t.size))
                assert t.n_stoch % 2 == 0
                counts = Counter(j for j in t.index if j)
                assert set(counts.values()) <= {2}
                assert len(counts) == t.n_stoch // 2
                assert t.order.denominator == 1


def test_subset_property():
    strat = enumerate_trees("strat", 4)
    ito_codes = {t.encoding for t in enumerate_trees("ito", 4)}
    assert ito_codes <= {t.encoding for t in strat}
    for t in strat:
        assert t.card_ito <= t.card_strat
        assert t.order == t.n_det + Fraction(t.n_stoch, 2)
        assert t.n_indices == t.n_stoch // 2


def test_t213b_has_no_ito_growth():
    code = canonicalize(parse_bracket("(s2,{s2,s1}_1)"))
    assert code not in {t.encoding for t in enumerate_trees("ito", 2)}


def test_canonical_tree_from_encoding():
    t = CanonicalSTree.from_encoding("g(s1,t(s1))", 2, 2)
    assert t.bracket == "(s1,[s1])"
    assert t.cardinality("ito") == 2
    assert (t.n_nodes, t.n_det, t.n_stoch, t.order) == (4, 1, 2, 2)


# -- bracket notation -------------------------------------------------------------------


@pytest.mark.parametrize("text", ["", "g", "  g "])
def test_parse_root(text):
    assert parse_bracket(text) == ROOT


def test_parse_two_index_trees():
    t = parse_bracket("([s2],s1)")
    assert t.kinds == "gtss"
    assert t.n_indices == 2
    u = parse_bracket("({t,s2}_1)")
    assert u.kinds[1] == "s" and u.index[1] == 1
    assert sorted(u.kinds[v] for v in u.children[1]) == ["s", "t"]


@pytest.mark.parametrize(
    "text,pos",
    [("(", 1), ("(t", 2), ("(x)", 1), ("(t,)", 3), ("({t}", 4), ("({t}_)", 5), ("(t))", 3), ("t", 0)],
)
def test_parse_errors_report_position(text, pos):
    with pytest.raises(ParseError) as info:
        parse_bracket(text)
    assert info.value.position == pos


def test_parse_rejects_sparse_subscripts():
    with pytest.raises(SubscriptError):
        parse_bracket("(s1,s3)")
    with pytest.raises(IndexError):
        parse_bracket("(s2,s2)")


def test_bracket_roundtrip_over_order_three():
    for t in STRAT3:
        assert canonicalize(parse_bracket(to_bracket(t))) == canonicalize(t)


def test_latex():
    assert to_latex(parse_bracket("(s1,[s1])")) == r"(\sigma_{j_{1}},[\sigma_{j_{1}}])"
    assert to_latex(ROOT) == r"\gamma"
