"""
Unit tests for polysys.py
"""

import numpy as np
import pytest

from polysys import (
    AFFINE,
    MultihomogeneityError,
    MultiprojectivePoint,
    ParseError,
    Polynomial,
    PolySystem,
    VariableGroups,
    evaluate,
    format_equations,
    jacobian,
    multidegree_of,
    parse_equations,
    parse_variables,
    random_linear,
)
from system_generator import projective_groups, random_dense_system


def point(groups, *coords):
    return MultiprojectivePoint.from_vector(groups, np.array(coords, dtype=complex), normalize=False)


@pytest.mark.unit
class TestParseVariables:
    """Test suite for parse_variables"""

    def test_single_projective_group(self):
        groups = parse_variables("hom_variable_group x_0, x_1, x_2, x_3;")
        assert len(groups) == 1
        assert groups[0].names == ('x_0', 'x_1', 'x_2', 'x_3')
        assert groups[0].is_projective
        assert groups.dims == (3,)

    def test_two_groups_on_separate_lines(self):
        groups = parse_variables("hom_variable_group x_0,x_1;\nhom_variable_group y_0,y_1;")
        assert [g.size for g in groups] == [2, 2]

    def test_affine_group(self):
        groups = parse_variables("variable_group x, y;")
        assert groups[0].kind == AFFINE
        assert groups.dims == (2,)

    def test_comments_are_ignored(self):
        text = "# header\nhom_variable_group a, b; # trailing\n"
        assert parse_variables(text).names == ('a', 'b')

    def test_duplicate_name_rejected(self):
        with pytest.raises(ParseError, match="duplicate"):
            parse_variables("hom_variable_group x, y;\nhom_variable_group y, z;")

    def test_unknown_keyword(self):
        with pytest.raises(ParseError, match="unknown keyword") as info:
            parse_variables("hom_variable_group a, b;\nvariables x, y;")
        assert info.value.line == 2

    def test_missing_semicolon(self):
        with pytest.raises(ParseError, match="missing semicolon"):
            parse_variables("hom_variable_group x_0, x_1")

    def test_missing_semicolon_between_lines(self):
        with pytest.raises(ParseError, match="missing semicolon"):
            parse_variables("hom_variable_group x_0, x_1\nhom_variable_group y_0, y_1;")

    def test_empty_group(self):
        with pytest.raises(ParseError, match="empty"):
            parse_variables("hom_variable_group;")

    def test_single_variable_projective_group_rejected(self):
        with pytest.raises(ParseError):
            parse_variables("hom_variable_group x;")


@pytest.mark.unit
class TestParseEquations:
    """Test suite for parse_equations"""

    def test_twisted_cubic(self, cubic_system):
        assert len(cubic_system) == 3
        assert cubic_system.names == ('f1', 'f2', 'f3')
        assert cubic_system.degrees.tolist() == [[2], [2], [2]]

    def test_bilinear_degrees(self):
        groups = VariableGroups.projective(['x_0', 'x_1'], ['y_0', 'y_1'])
        sys = parse_equations("function f1;\nf1 = x_0*y_0 + x_1*y_1;", groups)
        assert sys.degrees.tolist() == [[1, 1]]

    def test_non_multihomogeneous_rejected(self):
        groups = VariableGroups.projective(['x_0', 'x_1'], ['y_0', 'y_1'])
        with pytest.raises(MultihomogeneityError, match="f1"):
            parse_equations("function f1;\nf1 = x_0 + x_0*y_0;", groups)

    def test_complex_literals_and_subexpressions(self):
        groups = parse_variables("hom_variable_group x, y;")
        text = "function f;\nh = x - 2.5*I*y;\nf = h^2 + (1.5e1 - I)*x*y;"
        sys = parse_equations(text, groups)
        expected = {(2, 0): 1, (1, 1): -5j + 15 - 1j, (0, 2): (-2.5j) ** 2}
        terms = sys.polys[0].terms()
        assert set(terms) == set(expected)
        for key, value in expected.items():
            assert terms[key] == pytest.approx(value)

    def test_division_by_constant(self):
        groups = parse_variables("hom_variable_group x, y;")
        sys = parse_equations("function f;\nf = x/2 - y/4;", groups)
        assert sys.polys[0].terms() == {(1, 0): 0.5, (0, 1): -0.25}

    def test_undeclared_identifier(self, cubic_groups):
        with pytest.raises(ParseError, match="undeclared identifier 'z'") as info:
            parse_equations("function f1;\n\nf1 = x_0*z;", cubic_groups)
        assert info.value.line == 3

    def test_negative_exponent(self, cubic_groups):
        with pytest.raises(ParseError, match="negative exponent"):
            parse_equations("function f1;\nf1 = x_0^(-1)*x_1^2;", cubic_groups)

    def test_cyclic_assignment(self, cubic_groups):
        text = "function f1;\na = b*x_0;\nb = a*x_1;\nf1 = a;"
        with pytest.raises(ParseError, match="cyclic"):
            parse_equations(text, cubic_groups)

    def test_function_never_assigned(self, cubic_groups):
        with pytest.raises(ParseError, match="never assigned"):
            parse_equations("function f1, f2;\nf1 = x_0;", cubic_groups)

    def test_syntax_error_reports_line(self, cubic_groups):
        with pytest.raises(ParseError) as info:
            parse_equations("function f1;\nf1 = x_0 + * x_1;", cubic_groups)
        assert info.value.line == 2

    def test_canonical_form_is_a_fixed_point(self, rng):
        groups = projective_groups((2, 1))
        sys = random_dense_system(groups, [[2, 1], [1, 1]], rng)
        reparsed = parse_equations(format_equations(sys), groups)
        for original, again in zip(sys.polys, reparsed.polys):
            assert original.same_terms(again, tol=1e-15)


@pytest.mark.unit
class TestEvaluate:
    """Test suite for evaluate"""

    def test_point_on_variety(self, cubic_system):
        assert evaluate(cubic_system, point(cubic_system.groups, 1, 1, 1, 1)) == pytest.approx([0, 0, 0])

    def test_direct_arithmetic(self, cubic_system):
        values = evaluate(cubic_system, point(cubic_system.groups, 1, 2, 3, 0))
        assert values[0] == pytest.approx(1)

    def test_bilinear_at_complex_point(self):
        groups = VariableGroups.projective(['x_0', 'x_1'], ['y_0', 'y_1'])
        sys = parse_equations("function f;\nf = x_0*y_0 + x_1*y_1;", groups)
        assert abs(evaluate(sys, point(groups, 1, 1j, 1, 1j))[0]) < 1e-15

    def test_dimension_mismatch(self, cubic_system):
        with pytest.raises(ValueError):
            evaluate(cubic_system, MultiprojectivePoint((np.ones(3, dtype=complex),)))

    def test_scaling_by_group_degree(self, rng):
        groups = projective_groups((2, 1))
        sys = random_dense_system(groups, [[2, 1], [3, 0], [1, 2]], rng)
        x = rng.normal(size=5) + 1j * rng.normal(size=5)
        lam = 0.7 - 1.3j
        base = evaluate(sys, point(groups, *x))
        scaled_x = x.copy()
        scaled_x[:3] *= lam
        scaled = evaluate(sys, point(groups, *scaled_x))
        expected = base * lam ** sys.degrees[:, 0]
        assert np.allclose(scaled, expected, rtol=1e-10)


@pytest.mark.unit
class TestJacobian:
    """Test suite for jacobian"""

    def test_analytic_row(self, cubic_system):
        J = jacobian(cubic_system, point(cubic_system.groups, 1, 2, 3, 0))
        assert J[0] == pytest.approx([-3, 4, -1, 0])

    def test_euler_identity(self, rng):
        groups = projective_groups((2, 1))
        sys = random_dense_system(groups, [[2, 1], [1, 3]], rng)
        x = rng.normal(size=5) + 1j * rng.normal(size=5)
        J = jacobian(sys, point(groups, *x))
        values = evaluate(sys, point(groups, *x))
        for j, group_slice in enumerate(groups.offsets()):
            weighted = J[:, group_slice] @ x[group_slice]
            assert np.allclose(weighted, sys.degrees[:, j] * values, rtol=1e-10)

    def test_matches_central_differences(self, rng):
        h = 1e-6
        for _ in range(50):
            groups = projective_groups((int(rng.integers(1, 3)), int(rng.integers(1, 3))))
            degrees = rng.integers(0, 3, size=(2, 2))
            degrees[:, 0] += 1
            sys = random_dense_system(groups, degrees, rng)
            x = rng.normal(size=groups.n_vars) + 1j * rng.normal(size=groups.n_vars)
            J = jacobian(sys, point(groups, *x))
            numeric = np.zeros_like(J)
            for v in range(groups.n_vars):
                step = np.zeros(groups.n_vars, dtype=complex)
                step[v] = h
                numeric[:, v] = (evaluate(sys, point(groups, *(x + step)))
                                 - evaluate(sys, point(groups, *(x - step)))) / (2 * h)
            assert np.linalg.norm(J - numeric) <= 1e-6 * max(1.0, np.linalg.norm(J))


@pytest.mark.unit
class TestMultidegreeOf:
    """Test suite for multidegree_of"""

    def test_bilinear(self):
        groups = VariableGroups.projective(['x_0', 'x_1'], ['y_0', 'y_1'])
        poly = parse_equations("function f;\nf = x_0*y_0 + x_1*y_1;", groups).polys[0]
        assert multidegree_of(poly, groups).tolist() == [1, 1]

    def test_quadric(self, cubic_system):
        assert multidegree_of(cubic_system.polys[0], cubic_system.groups).tolist() == [2]

    def test_mixed_degrees_rejected(self):
        groups = VariableGroups.projective(['x_0', 'x_1'], ['y_0', 'y_1'])
        poly = Polynomial.from_terms({(1, 0, 0, 0): 1, (0, 1, 1, 0): 1}, 4)
        with pytest.raises(MultihomogeneityError):
            multidegree_of(poly, groups)

    def test_affine_group_reports_total_degree(self):
        groups = parse_variables("variable_group x, y;")
        poly = Polynomial.from_terms({(2, 0): 1, (0, 1): 1, (0, 0): -1}, 2)
        assert multidegree_of(poly, groups).tolist() == [2]

    def test_declared_degrees_checked(self, cubic_groups):
        poly = Polynomial.from_terms({(2, 0, 0, 0): 1}, 4)
        with pytest.raises(MultihomogeneityError):
            PolySystem(cubic_groups, (poly,), [[3]])


@pytest.mark.unit
class TestRandomLinear:
    """Test suite for random_linear"""

    def test_supported_on_one_group(self, p3xp1_groups, rng):
        linear = random_linear(0, p3xp1_groups, rng)
        assert multidegree_of(linear, p3xp1_groups).tolist() == [1, 0]
        assert linear.n_terms == 4

    def test_unit_modulus_coefficients(self, p3xp1_groups, rng):
        linear = random_linear(1, p3xp1_groups, rng)
        assert np.allclose(np.abs(linear.coefficients), 1, atol=1e-12)

    def test_distinct_seeds_give_distinct_forms(self, p3xp1_groups):
        a = random_linear(0, p3xp1_groups, np.random.default_rng(1))
        b = random_linear(0, p3xp1_groups, np.random.default_rng(2))
        assert not a.same_terms(b, tol=1e-6)

    def test_affine_linear_has_constant_term(self, rng):
        groups = parse_variables("variable_group x, y;")
        linear = random_linear(0, groups, rng)
        assert (0, 0) in linear.terms()


@pytest.mark.unit
class TestMultiprojectivePoint:
    """Test suite for MultiprojectivePoint normalization"""

    def test_largest_coordinate_becomes_one(self, p3xp1_groups):
        p = MultiprojectivePoint.from_vector(p3xp1_groups, np.array([1, -4j, 2, 0, 3, 1], dtype=complex))
        assert p.blocks[0][1] == pytest.approx(1)
        assert p.blocks[1][0] == pytest.approx(1)
        assert np.max(np.abs(p.blocks[0])) == pytest.approx(1)

    def test_zero_block_rejected(self, p3xp1_groups):
        with pytest.raises(ValueError):
            MultiprojectivePoint.from_vector(p3xp1_groups, np.array([0, 0, 0, 0, 1, 1], dtype=complex))
