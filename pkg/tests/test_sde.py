import pytest

from sdetaylor import SDESpec, parse_spec
from sdetaylor.errors import CalculusError, DimensionError, ParseError, UnknownVariable
from sdetaylor.expr import ZERO, diff, eval_at, parse_expr
from sdetaylor.sde import format_spec, load_spec, modified_drift
from sdetaylor.stree import Calculus

GBM = """
# geometric Brownian motion
d = 1
m = 1
calculus = ito
a1 = 0.5*x1
b1_1 = x1   # beta = 1
f = x1
x0 = 1.0
"""


def test_parse_gbm():
    spec = parse_spec(GBM)
    assert (spec.d, spec.m, spec.calculus) == (1, 1, Calculus.ITO)
    assert eval_at(spec.drift[0], [2.0]) == 1.0
    assert spec.x0 == (1.0,)


def test_missing_entries_default_to_zero():
    spec = parse_spec("d = 2\nm = 2\nb1_2 = x2\nf = x1*x2\nx0 = 1, 2\n")
    assert spec.drift == (ZERO, ZERO)
    assert spec.diffusion[0][0] is ZERO and not spec.diffusion[0][1].is_zero()
    assert not spec.noise_free


@pytest.mark.parametrize(
    "text,exc",
    [
        ("m = 1\nf = x1\nx0 = 1", ParseError),            # no d
        ("d = 1\nf = x1\n", ParseError),                  # no x0
        ("d = 1\nf = x1\nx0 = 1, 2", ParseError),         # x0 length
        ("d = 1\nf = x2\nx0 = 1", UnknownVariable),       # variable beyond d
        ("d = 1\nf = x1\nf = x1\nx0 = 1", ParseError),    # duplicate
        ("d = 1\ng = x1\nx0 = 1", ParseError),            # unknown key
        ("d = 1\na2 = x1\nf = x1\nx0 = 1", ParseError),   # drift component beyond d
        ("d = 1\nb1_2 = x1\nf = x1\nx0 = 1", ParseError), # noise column beyond m
        ("d = one\nf = x1\nx0 = 1", ParseError),
        ("d = 1\nf = x1 +\nx0 = 1", ParseError),
        ("d = 1\nf = x1\nx0 = a", ParseError),
        ("d = 1\nf x1\nx0 = 1", ParseError),
    ],
)
def test_parse_spec_errors(text, exc):
    with pytest.raises(exc):
        parse_spec(text)


def test_calculus_aliases():
    for word in ("stratonovich", "strat", "S"):
        assert parse_spec(f"d = 1\ncalculus = {word}\nf = x1\nx0 = 0").calculus is Calculus.STRATONOVICH
    with pytest.raises(ValueError):
        Calculus.parse("levy")


def test_dimension_checks():
    x = parse_expr("x1", 1)
    with pytest.raises(DimensionError):
        SDESpec(1, 1, (x, x), ((x,),), x, (0.0,))
    with pytest.raises(DimensionError):
        SDESpec(1, 1, (x,), ((x, x),), x, (0.0,))
    with pytest.raises(DimensionError):
        SDESpec(1, 1, (x,), ((x,),), x, (0.0, 1.0))
    with pytest.raises(DimensionError):
        SDESpec(1, 1, (x,), ((x,),), parse_expr("x2", 2), (0.0,))
    with pytest.raises(DimensionError):
        SDESpec(0, 1, (), (), x, ())


def test_column_index_errors():
    spec = parse_spec(GBM)
    assert spec.column(1) == (spec.diffusion[0][0],)
    with pytest.raises(IndexError):
        spec.column(2)
    with pytest.raises(IndexError):
        spec.column(0)


def test_format_roundtrip(tmp_path):
    spec = SDESpec.from_strings(["x2", "-x1 + 1/3"], [["x1", "0"], ["0", "sin(x2)"]], "x1*x2", [0.5, -1], "strat")
    text = format_spec(spec)
    assert parse_spec(text) == spec
    path = tmp_path / "s.sde"
    path.write_text(text)
    assert load_spec(path) == spec


# -- Ito/Stratonovich drift conversion -------------------------------------------------------


def test_modified_drift_without_noise_is_identity():
    spec = SDESpec.from_strings(["x1^2"], [["0"]], "x1", [1.0], "strat")
    assert modified_drift(spec) == spec.drift


def test_modified_drift_scalar_linear_noise():
    spec = SDESpec.from_strings(["0"], [["0.7*x1"]], "x1", [1.0], "strat")
    (a,) = modified_drift(spec)
    assert eval_at(a, [2.0]) == pytest.approx(0.5 * 0.49 * 2.0, rel=1e-15)


def test_modified_drift_rotation_example():
    spec = SDESpec.from_strings(["x1*x2", "1"], [["x2"], ["x1"]], "x1", [0.0, 0.0], "strat")
    a1, a2 = modified_drift(spec)
    assert a1 is parse_expr("x1*x2 + 1/2*x1", 2)
    assert a2 is parse_expr("1 + 1/2*x2", 2)


def test_modified_drift_matches_formula_numerically():
    spec = SDESpec.from_strings(
        ["x1 - x2", "x1*x2"], [["x1^2", "sin(x2)"], ["x2", "x1*x2"]], "x1", [0.3, -0.4], "strat"
    )
    x = [0.3, -0.4]
    for i, ai in enumerate(modified_drift(spec)):
        ref = eval_at(spec.drift[i], x) + 0.5 * sum(
            eval_at(spec.diffusion[k][l], x) * eval_at(diff(spec.diffusion[i][l], k + 1), x)
            for k in range(2)
            for l in range(2)
        )
        assert eval_at(ai, x) == pytest.approx(ref, rel=1e-14)


def test_modified_drift_rejects_ito():
    with pytest.raises(CalculusError):
        modified_drift(parse_spec(GBM))


def test_ito_form():
    spec = SDESpec.from_strings(["0"], [["x1"]], "x1", [1.0], "strat")
    ito = spec.ito_form()
    assert ito.calculus is Calculus.ITO and ito.drift == modified_drift(spec)
    assert ito.ito_form() is ito
