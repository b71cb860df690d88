import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import central_gradient, random_polynomial_source
from lagreg.chart import ChartSpec
from lagreg.errors import EvaluationDomainError, UnknownIdentifierError
from lagreg.expr import (
    BinOp,
    Call,
    Neg,
    Num,
    Var,
    evaluate,
    eval_with_gradient,
    expression_from_node,
    hessian_block,
    parse,
    to_source,
)

CHART = ChartSpec(leaves=("x",), fibers=("f",))
JET = ChartSpec(leaves=("x",), fibers=("f",), has_time=True)


def point(**values):
    base = {name: 0.0 for name in CHART.coords}
    base.update(values)
    return base


class TestParse:
    def test_product_ast(self):
        expr = parse("0.5*xdot^2", CHART)
        assert isinstance(expr.root, BinOp) and expr.root.op == "*"
        assert expr.names == {"xdot"}

    def test_unknown_identifier(self):
        with pytest.raises(UnknownIdentifierError) as err:
            parse("sin(f) + x*t", CHART)
        assert err.value.name == "t"

    def test_time_allowed_on_jet_chart(self):
        expr = parse("sin(f) + x*t", JET)
        assert "t" in expr.names

    def test_arithmetic(self):
        expr = parse("0.5*(x^2 + f^2)", CHART)
        assert evaluate(expr, point(x=3.0, f=4.0)) == pytest.approx(12.5)

    def test_syntax_error_has_position(self):
        with pytest.raises(SyntaxError) as err:
            parse("1 + * 2", CHART)
        assert "position 4" in str(err.value)

    def test_unbalanced_parenthesis(self):
        with pytest.raises(SyntaxError):
            parse("sin(x", CHART)

    def test_unknown_function(self):
        with pytest.raises(SyntaxError):
            parse("tan(x)", CHART)

    def test_power_right_associative(self):
        expr = parse("2^3^2", CHART)
        assert evaluate(expr, point()) == pytest.approx(512.0)

    def test_negative_exponent(self):
        expr = parse("2^-1", CHART)
        assert evaluate(expr, point()) == pytest.approx(0.5)

    def test_deterministic_evaluation(self):
        expr = parse("sin(x)*exp(f) - x/1.7 + f^3", CHART)
        p = point(x=0.3121, f=-1.44)
        assert evaluate(expr, p) == evaluate(expr, p)


class TestGradient:
    def test_square(self):
        value, grad = eval_with_gradient(parse("x^2", CHART), point(x=2.0))
        assert value == pytest.approx(4.0)
        assert grad[CHART.index["x"]] == pytest.approx(4.0)

    def test_kinetic(self):
        value, grad = eval_with_gradient(parse("0.5*xdot^2", CHART), point(xdot=3.0))
        assert value == pytest.approx(4.5)
        expected = np.zeros(CHART.dim)
        expected[CHART.index["xdot"]] = 3.0
        assert np.allclose(grad, expected)

    def test_against_finite_differences(self):
        expr = parse("sin(f)*x", CHART)
        arr = CHART.as_array(point(x=2.0, f=0.0))
        value, grad = eval_with_gradient(expr, point(x=2.0, f=0.0))
        assert value == pytest.approx(0.0)
        assert grad[CHART.index["x"]] == pytest.approx(0.0, abs=1e-12)
        assert grad[CHART.index["f"]] == pytest.approx(2.0)
        oracle = central_gradient(expr, CHART, arr, h=1e-6)
        assert np.max(np.abs(grad - oracle)) <= 1e-9 * max(1.0, np.max(np.abs(oracle)))

    def test_random_polynomials_match_finite_differences(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            source = random_polynomial_source(rng, CHART.coords)
            expr = parse(source, CHART)
            arr = rng.uniform(-2.0, 2.0, size=CHART.dim)
            _, grad = eval_with_gradient(expr, arr)
            oracle = central_gradient(expr, CHART, arr)
            scale = max(1.0, float(np.max(np.abs(oracle))))
            assert np.max(np.abs(grad - oracle)) / scale <= 1e-6


class TestHessian:
    def test_kinetic_block(self):
        block = hessian_block(
            parse("0.5*xdot^2", CHART), point(), ("xdot", "fdot"), ("xdot", "fdot")
        )
        assert np.allclose(block, [[1.0, 0.0], [0.0, 0.0]])

    def test_cross_term(self):
        block = hessian_block(
            parse("xdot*fdot", CHART), point(), ("xdot", "fdot"), ("xdot", "fdot")
        )
        assert np.allclose(block, [[0.0, 1.0], [1.0, 0.0]])

    def test_position_dependent_mass(self):
        expr = parse("0.5*(1 + x^2)*xdot^2", CHART)
        block = hessian_block(expr, point(x=1.0, xdot=0.7), ("xdot",), ("xdot",))
        assert block[0, 0] == pytest.approx(2.0)

    def test_symmetric_when_square(self):
        expr = parse("sin(x*f) + x^2*f - exp(f)*xdot", CHART)
        names = CHART.coords
        block = hessian_block(expr, point(x=0.3, f=-0.8, xdot=1.1), names, names)
        assert np.array_equal(block, block.T)

    def test_rectangular_block(self):
        expr = parse("f*xdot", CHART)
        block = hessian_block(expr, point(), ("xdot", "fdot"), ("x", "f"))
        assert np.allclose(block, [[0.0, 1.0], [0.0, 0.0]])


class TestDomainErrors:
    def test_log_of_negative(self):
        expr = parse("log(x)", CHART)
        with pytest.raises(EvaluationDomainError) as err:
            evaluate(expr, point(x=-1.0))
        assert "log(x)" in str(err.value)

    def test_division_by_zero(self):
        expr = parse("1/x", CHART)
        with pytest.raises(EvaluationDomainError):
            evaluate(expr, point(x=0.0))

    def test_fractional_power_of_negative(self):
        expr = parse("x^0.5", CHART)
        with pytest.raises(EvaluationDomainError):
            evaluate(expr, point(x=-2.0))


# -- parse / print round trip ---------------------------------------------


def _leaf(names):
    return st.one_of(
        st.floats(
            min_value=-4.0, max_value=4.0, allow_nan=False, allow_infinity=False
        ).map(Num),
        st.sampled_from(names).map(Var),
    )


def _nodes(names):
    return st.recursive(
        _leaf(names),
        lambda children: st.one_of(
            st.tuples(st.sampled_from("+-*/"), children, children).map(
                lambda t: BinOp(t[0], t[1], t[2])
            ),
            st.tuples(children, st.integers(min_value=0, max_value=3)).map(
                lambda t: BinOp("^", t[0], Num(float(t[1])))
            ),
            children.map(Neg),
            st.tuples(st.sampled_from(["sin", "cos"]), children).map(
                lambda t: Call(t[0], t[1])
            ),
        ),
        max_leaves=12,
    )


@settings(max_examples=100, deadline=None)
@given(node=_nodes(CHART.coords), data=st.data())
def test_parse_print_parse_round_trip(node, data):
    expr = expression_from_node(node, CHART)
    reparsed = parse(expr.to_source(), CHART)
    assert to_source(reparsed.root) == expr.to_source()
    values = data.draw(
        st.lists(
            st.floats(min_value=-2.0, max_value=2.0, allow_nan=False),
            min_size=CHART.dim,
            max_size=CHART.dim,
        )
    )
    arr = np.array(values)
    try:
        original = evaluate(expr, arr)
    except EvaluationDomainError:
        with pytest.raises(EvaluationDomainError):
            evaluate(reparsed, arr)
        return
    assert evaluate(reparsed, arr) == original
