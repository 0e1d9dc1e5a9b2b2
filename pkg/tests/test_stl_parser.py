import pytest
from hypothesis import given, strategies as st

from swarmmon.stl import (AlwaysPast, And, Atom, Event, EventuallyPast, FalseF, FormulaError, Not,
                          Or, ParseError, Since, TrueF, Until, atoms, parse, parse_definitions,
                          parse_formula_file)

M = ("mx", "my")


def atom(a, c):
    return Atom(a, c, M)


class TestAtoms:
    def test_upper_bound(self):
        assert parse("mx <= 50", M) == atom((1, 0), 50)

    def test_lower_bound_flips_sign(self):
        assert parse("mx >= -50", M) == atom((-1, 0), 50)

    def test_linear_expression(self):
        assert parse("2*mx - 0.5*my + mx <= 1e1", M) == atom((3, -0.5), 10)
        assert parse("-my <= 3", M) == atom((0, -1), 3)

    def test_unknown_moment(self):
        with pytest.raises(ParseError, match="unknown moment"):
            parse("mz <= 1", M)
        with pytest.raises(ParseError, match="unknown moment"):
            parse("mx + mz <= 1", M)


class TestStructure:
    def test_precedence(self):
        a, b, c = "mx <= 1", "my <= 2", "mx >= 0"
        f = parse(f"{a} | {b} & {c}", M)
        assert isinstance(f, Or) and isinstance(f.right, And)
        f = parse(f"!{a} & {b}", M)
        assert isinstance(f, And) and isinstance(f.left, Not)
        f = parse(f"{a} => {b} => {c}", M)
        assert f == Or(Not(parse(a, M)), Or(Not(parse(b, M)), parse(c, M)))

    def test_temporal_operators(self):
        f = parse("P[1,3] mx <= 1", M)
        assert f == EventuallyPast(atom((1, 0), 1), 1, 3)
        f = parse("H[0,2] !e", M)
        assert f == AlwaysPast(Not(Event("e")), 0, 2)
        f = parse("mx <= 1 S[2,4] my <= 0", M)
        assert f == Since(atom((1, 0), 1), atom((0, 1), 0), 2, 4)
        f = parse("e U[0,5] true", M)
        assert f == Until(Event("e"), TrueF(), 0, 5)

    def test_since_binds_tighter_than_and(self):
        f = parse("a & b S[0,1] c", M)
        assert f == And(Event("a"), Since(Event("b"), Event("c"), 0, 1))

    def test_constants_and_parentheses(self):
        assert parse("(true | false)", M) == Or(TrueF(), FalseF())

    def test_retention_formula(self):
        defs = parse_definitions({"in_wh": "mx >= -50 & mx <= 50 & my >= -50 & my <= 50"}, M)
        f = parse("P[1000,2000] in_wh => P[0,800] !in_wh", M, defs)
        wh = defs["in_wh"]
        assert f == Or(Not(EventuallyPast(wh, 1000, 2000)), EventuallyPast(Not(wh), 0, 800))


class TestErrors:
    def test_trailing_operator(self):
        with pytest.raises(ParseError) as exc:
            parse("mx <= 50 &", M)
        assert exc.value.line == 1 and exc.value.col == 11

    def test_reversed_interval(self):
        with pytest.raises(ParseError, match="exceeds"):
            parse("P[5,2] e", M)

    def test_non_integer_interval(self):
        with pytest.raises(ParseError):
            parse("P[0.5,2] e", M)

    @pytest.mark.parametrize("text", ["", "(", "mx <=", "mx <= 1 )", "& e", "P[1] e", "mx < 3", "e $"])
    def test_malformed(self, text):
        with pytest.raises(ParseError):
            parse(text, M)

    def test_line_and_column_in_file(self):
        text = "# retention\ndef w = mx <= 1\n\nP[0,2] w &\n"
        with pytest.raises(ParseError) as exc:
            parse_formula_file(text, M)
        assert exc.value.line == 4

    def test_definition_shadowing_moment(self):
        with pytest.raises(FormulaError):
            parse_definitions({"mx": "true"}, M)


class TestFormulaFile:
    def test_defs_and_target(self):
        text = "def w = mx <= 1 # inside\ndef v = P[0,3] w\n!v\n"
        assert parse_formula_file(text, M) == Not(EventuallyPast(atom((1, 0), 1), 0, 3))

    def test_requires_one_target(self):
        with pytest.raises(FormulaError):
            parse_formula_file("def w = e\n", M)
        with pytest.raises(ParseError):
            parse_formula_file("e\nf\n", M)


names = st.sampled_from(["mx", "my"])
numbers = st.integers(-100, 100)


@st.composite
def formula_text(draw, depth=3):
    if depth == 0 or draw(st.booleans()):
        return f"{draw(names)} {draw(st.sampled_from(['<=', '>=']))} {draw(numbers)}"
    op = draw(st.sampled_from(["&", "|", "!", "P", "H", "S", "=>"]))
    a = draw(formula_text(depth - 1))
    if op == "!":
        return f"!({a})"
    if op in "PH":
        lo = draw(st.integers(0, 5))
        return f"{op}[{lo},{lo + draw(st.integers(0, 5))}] ({a})"
    b = draw(formula_text(depth - 1))
    if op == "S":
        return f"({a}) S[0,{draw(st.integers(0, 5))}] ({b})"
    return f"({a}) {op} ({b})"


@given(formula_text())
def test_random_texts_parse(text):
    f = parse(text, M)
    assert len(atoms(f)) == text.count("<=") + text.count(">=")
