"""
Polynomial Systems Module
Parses, stores, evaluates and differentiates multihomogeneous polynomial systems
over declared variable groups (Bertini-style input files).
"""

import logging
from dataclasses import dataclass

import numpy as np
import pyparsing as pp

logger = logging.getLogger(__name__)

pp.ParserElement.enable_packrat()

PROJECTIVE = 'projective'
AFFINE = 'affine'

GROUP_KEYWORDS = {
    'hom_variable_group': PROJECTIVE,
    'variable_group': AFFINE,
}


class ParseError(ValueError):
    """Input text could not be turned into groups or polynomials"""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MultihomogeneityError(ParseError):
    """A polynomial is not homogeneous in some projective group"""


# ========== Variable groups ==========

@dataclass(frozen=True)
class VariableGroup:
    names: tuple
    kind: str = PROJECTIVE

    @property
    def size(self):
        return len(self.names)

    @property
    def is_projective(self):
        return self.kind == PROJECTIVE

    @property
    def dim(self):
        """Dimension of the space the group coordinatizes (n for P^n or C^n)"""
        return self.size - 1 if self.is_projective else self.size


@dataclass(frozen=True)
class VariableGroups:
    groups: tuple

    def __post_init__(self):
        if not self.groups:
            raise ParseError("at least one variable group is required")
        seen = set()
        for group in self.groups:
            if group.size == 0:
                raise ParseError("empty variable group")
            if group.is_projective and group.size < 2:
                raise ParseError(f"projective group ({group.names[0]}) needs at least two variables")
            for name in group.names:
                if name in seen:
                    raise ParseError(f"duplicate variable name '{name}'")
                seen.add(name)

    @classmethod
    def projective(cls, *name_lists):
        """Shorthand for a product of projective spaces from name lists"""
        return cls(tuple(VariableGroup(tuple(names), PROJECTIVE) for names in name_lists))

    def __len__(self):
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)

    def __getitem__(self, index):
        return self.groups[index]

    @property
    def names(self):
        return tuple(name for group in self.groups for name in group.names)

    @property
    def n_vars(self):
        return sum(group.size for group in self.groups)

    @property
    def dims(self):
        return tuple(group.dim for group in self.groups)

    @property
    def ambient_dim(self):
        return sum(self.dims)

    @property
    def projective_indices(self):
        return tuple(i for i, group in enumerate(self.groups) if group.is_projective)

    def offsets(self):
        """Start offset of every group in the flat coordinate vector"""
        starts = np.cumsum([0] + [group.size for group in self.groups])
        return [slice(int(starts[i]), int(starts[i + 1])) for i in range(len(self.groups))]

    def index_of(self, name):
        return self.names.index(name)


# ========== Polynomials ==========

@dataclass(frozen=True, eq=False)
class Polynomial:
    """
    Sparse polynomial in canonical form: distinct exponent rows, no zero coefficients.

    exponents has shape (terms, n_vars); coefficients has shape (terms,).
    """
    exponents: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'exponents', np.asarray(self.exponents, dtype=np.int64))
        object.__setattr__(self, 'coefficients', np.asarray(self.coefficients, dtype=complex))
        if self.exponents.ndim != 2 or self.exponents.shape[0] != self.coefficients.shape[0]:
            raise ValueError("exponent matrix and coefficient vector disagree")
        if (self.exponents < 0).any():
            raise ValueError("negative exponent")

    @classmethod
    def from_terms(cls, terms, n_vars):
        """Build from a {exponent tuple: coefficient} mapping, combining and dropping zeros"""
        combined = {}
        for exps, coeff in terms.items() if isinstance(terms, dict) else terms:
            key = tuple(int(a) for a in exps)
            combined[key] = combined.get(key, 0j) + complex(coeff)
        kept = sorted((k, c) for k, c in combined.items() if c != 0)
        if not kept:
            return cls.zero(n_vars)
        exponents = np.array([k for k, _ in kept], dtype=np.int64).reshape(len(kept), n_vars)
        coefficients = np.array([c for _, c in kept], dtype=complex)
        return cls(exponents, coefficients)

    @classmethod
    def zero(cls, n_vars):
        return cls(np.zeros((0, n_vars), dtype=np.int64), np.zeros(0, dtype=complex))

    @classmethod
    def constant(cls, value, n_vars):
        return cls.from_terms({(0,) * n_vars: value}, n_vars)

    @classmethod
    def variable(cls, index, n_vars):
        exps = [0] * n_vars
        exps[index] = 1
        return cls.from_terms({tuple(exps): 1.0}, n_vars)

    @classmethod
    def linear_form(cls, coefficients, indices, n_vars, constant=0j):
        """sum_k coefficients[k] * x_{indices[k]} + constant"""
        terms = {}
        for coeff, index in zip(coefficients, indices):
            exps = [0] * n_vars
            exps[index] = 1
            terms[tuple(exps)] = coeff
        if constant != 0:
            terms[(0,) * n_vars] = constant
        return cls.from_terms(terms, n_vars)

    @property
    def n_vars(self):
        return self.exponents.shape[1]

    @property
    def n_terms(self):
        return self.exponents.shape[0]

    def is_zero(self):
        return self.n_terms == 0

    def terms(self):
        return {tuple(int(a) for a in row): complex(c) for row, c in zip(self.exponents, self.coefficients)}

    def constant_value(self):
        """Value of a constant polynomial; ValueError if it depends on a variable"""
        if self.is_zero():
            return 0j
        if self.n_terms != 1 or self.exponents.any():
            raise ValueError("polynomial is not constant")
        return complex(self.coefficients[0])

    def same_terms(self, other, tol=0.0):
        mine, theirs = self.terms(), other.terms()
        if set(mine) != set(theirs):
            return False
        return all(abs(mine[k] - theirs[k]) <= tol for k in mine)

    def __add__(self, other):
        terms = list(self.terms().items()) + list(other.terms().items())
        return Polynomial.from_terms(terms, self.n_vars)

    def __neg__(self):
        return Polynomial(self.exponents, -self.coefficients)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            return self.scale(other)
        if self.is_zero() or other.is_zero():
            return Polynomial.zero(self.n_vars)
        exps = (self.exponents[:, None, :] + other.exponents[None, :, :]).reshape(-1, self.n_vars)
        coeffs = (self.coefficients[:, None] * other.coefficients[None, :]).reshape(-1)
        return Polynomial.from_terms(zip(map(tuple, exps), coeffs), self.n_vars)

    __rmul__ = __mul__

    def scale(self, factor):
        factor = complex(factor)
        if factor == 0:
            return Polynomial.zero(self.n_vars)
        return Polynomial(self.exponents, self.coefficients * factor)

    def __pow__(self, power):
        if power < 0:
            raise ValueError("negative exponent")
        result = Polynomial.constant(1.0, self.n_vars)
        base = self
        while power:
            if power & 1:
                result = result * base
            base = base * base
            power >>= 1
        return result

    def term_values(self, x):
        """Value of every term (coefficient included) at the flat point x"""
        x = np.asarray(x, dtype=complex)
        return self.coefficients * np.prod(x[None, :] ** self.exponents, axis=1)

    def evaluate(self, x):
        return complex(self.term_values(x).sum())

    def gradient(self, x):
        """Analytic partial derivatives at x, one per variable"""
        x = np.asarray(x, dtype=complex)
        grad = np.zeros(self.n_vars, dtype=complex)
        if self.is_zero():
            return grad
        powers = x[None, :] ** self.exponents
        for v in np.flatnonzero(self.exponents.any(axis=0)):
            column = self.exponents[:, v]
            reduced = powers.copy()
            reduced[:, v] = column * x[v] ** np.maximum(column - 1, 0)
            grad[v] = self.coefficients @ reduced.prod(axis=1)
        return grad

    def group_degrees(self, group_slice):
        """Total degree of every term restricted to one group's variables"""
        return self.exponents[:, group_slice].sum(axis=1)


# ========== Systems and points ==========

@dataclass(frozen=True, eq=False)
class PolySystem:
    groups: VariableGroups
    polys: tuple
    degrees: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, 'polys', tuple(self.polys))
        object.__setattr__(self, 'degrees', np.asarray(self.degrees, dtype=np.int64).reshape(len(self.polys), len(self.groups)))
        if not self.names:
            object.__setattr__(self, 'names', tuple(f"f{i + 1}" for i in range(len(self.polys))))
        for i, poly in enumerate(self.polys):
            if not np.array_equal(multidegree_of(poly, self.groups), self.degrees[i]):
                raise MultihomogeneityError(f"degrees row {list(self.degrees[i])} does not match {self.names[i]}")

    @classmethod
    def from_polys(cls, groups, polys, names=()):
        polys = tuple(polys)
        degrees = [multidegree_of(poly, groups) for poly in polys]
        return cls(groups, polys, np.array(degrees, dtype=np.int64).reshape(len(polys), len(groups)), tuple(names))

    def __len__(self):
        return len(self.polys)


@dataclass(frozen=True, eq=False)
class MultiprojectivePoint:
    blocks: tuple

    @classmethod
    def from_vector(cls, groups, x, normalize=True):
        x = np.asarray(x, dtype=complex)
        if x.shape != (groups.n_vars,):
            raise ValueError(f"expected {groups.n_vars} coordinates, got {x.shape}")
        blocks = tuple(x[s].copy() for s in groups.offsets())
        point = cls(blocks)
        return point.normalized(groups) if normalize else point

    @property
    def coordinates(self):
        return np.concatenate(self.blocks)

    def normalized(self, groups):
        """
        Canonical representative: in each projective block the largest-magnitude
        coordinate is scaled to exactly 1. Affine blocks are kept as-is.
        """
        blocks = []
        for group, block in zip(groups, self.blocks):
            block = np.asarray(block, dtype=complex)
            if group.is_projective:
                pivot = block[int(np.argmax(np.abs(block)))]
                if pivot == 0:
                    raise ValueError("projective block is the zero vector")
                block = block / pivot
            blocks.append(block)
        return MultiprojectivePoint(tuple(blocks))


def _check_point(groups, point):
    sizes = [len(block) for block in point.blocks]
    if sizes != [group.size for group in groups]:
        raise ValueError(f"point blocks {sizes} do not match groups {[g.size for g in groups]}")


def evaluate(sys, p):
    """
    Evaluate every polynomial of the system at a point.

    Parameters:
    - sys: PolySystem
    - p: MultiprojectivePoint with one block per group

    Returns:
    - complex vector of polynomial values
    """
    _check_point(sys.groups, p)
    return evaluate_polys(sys.polys, p.coordinates)


def jacobian(sys, p):
    """Matrix of partial derivatives d f_i / d x_v at p"""
    _check_point(sys.groups, p)
    return jacobian_polys(sys.polys, p.coordinates)


def evaluate_polys(polys, x):
    return np.array([poly.evaluate(x) for poly in polys], dtype=complex)


def jacobian_polys(polys, x):
    x = np.asarray(x, dtype=complex)
    if not polys:
        return np.zeros((0, x.shape[0]), dtype=complex)
    return np.array([poly.gradient(x) for poly in polys], dtype=complex)


def multidegree_of(poly, groups):
    """
    Common group-degree vector of all terms of a polynomial.

    Projective groups must agree across terms; affine groups report the maximal
    total degree in that group.
    """
    if poly.is_zero():
        raise ValueError("zero polynomial has no multidegree")
    degrees = []
    for group, group_slice in zip(groups, groups.offsets()):
        term_degrees = poly.group_degrees(group_slice)
        if group.is_projective and term_degrees.min() != term_degrees.max():
            raise MultihomogeneityError(
                f"polynomial is not homogeneous in group ({', '.join(group.names)}): "
                f"term degrees range over {sorted(set(term_degrees.tolist()))}")
        degrees.append(int(term_degrees.max()))
    return np.array(degrees, dtype=np.int64)


def random_unit_complex(rng, size=None):
    """Independent draws from the complex unit circle"""
    return np.exp(2j * np.pi * rng.random(size))


def random_linear(group_index, groups, rng):
    """
    General linear polynomial in one group's variables.

    Coefficients are uniform on the complex unit circle. Affine groups also get
    a unit-modulus constant term so the hyperplane is not forced through the origin.
    """
    group = groups[group_index]
    group_slice = groups.offsets()[group_index]
    coefficients = random_unit_complex(rng, group.size)
    constant = random_unit_complex(rng) if not group.is_projective else 0j
    indices = range(group_slice.start, group_slice.stop)
    return Polynomial.linear_form(coefficients, indices, groups.n_vars, constant)


# ========== Input grammars ==========

def strip_comments(text):
    return '\n'.join(line.split('#', 1)[0] for line in text.splitlines())


IDENT = pp.Word(pp.alphas + '_', pp.alphanums + '_')
COMMA = pp.Suppress(',')
SEMI = pp.Suppress(';')
NAME_LIST = pp.Group(IDENT + pp.ZeroOrMore(COMMA + IDENT))

GROUP_STATEMENT = IDENT + pp.Optional(NAME_LIST) + pp.StringEnd()


def parse_variables(text):
    """
    Parse a bertiniInput_variables file.

    Parameters:
    - text: lines of `hom_variable_group a, b;` / `variable_group x, y;`

    Returns:
    - VariableGroups in declaration order
    """
    clean = strip_comments(text)
    chunks = clean.split(';')
    if chunks[-1].strip():
        offset = len(clean) - len(chunks[-1]) + (len(chunks[-1]) - len(chunks[-1].lstrip()))
        raise ParseError("missing semicolon", line=pp.lineno(offset, clean))

    groups = []
    offset = 0
    for chunk in chunks[:-1]:
        start = offset + len(chunk) - len(chunk.lstrip())
        line = pp.lineno(start, clean)
        offset += len(chunk) + 1
        if not chunk.strip():
            raise ParseError("empty statement", line=line)
        try:
            statement = GROUP_STATEMENT.parse_string(chunk.strip(), parse_all=True)
        except pp.ParseBaseException:
            later_lines = chunk.strip().splitlines()[1:]
            if any(part.split() and part.split()[0] in GROUP_KEYWORDS for part in later_lines):
                raise ParseError("missing semicolon", line=line) from None
            raise ParseError(f"cannot read '{chunk.strip()}'", line=line) from None
        keyword = statement[0]
        if keyword not in GROUP_KEYWORDS:
            raise ParseError(f"unknown keyword '{keyword}'", line=line)
        names = tuple(statement[1]) if len(statement) > 1 else ()
        if not names:
            raise ParseError("empty variable group", line=line)
        groups.append(VariableGroup(names, GROUP_KEYWORDS[keyword]))

    try:
        return VariableGroups(tuple(groups))
    except ParseError as err:
        raise ParseError(str(err)) from None


@dataclass(frozen=True)
class _Leaf:
    kind: str
    value: str
    loc: int


@dataclass(frozen=True)
class _Statement:
    kind: str
    names: tuple
    expr: object
    loc: int


def _leaf(kind):
    return lambda s, loc, toks: _Leaf(kind, toks[0], loc)


def _build_equations_grammar():
    number = pp.Regex(r'(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?').set_parse_action(_leaf('num'))
    imag = pp.Keyword('I').set_parse_action(_leaf('imag'))
    ident = IDENT.copy().set_parse_action(_leaf('ident'))
    expression = pp.infix_notation(number | imag | ident, [
        ('^', 2, pp.OpAssoc.RIGHT),
        (pp.one_of('+ -'), 1, pp.OpAssoc.RIGHT),
        (pp.one_of('* /'), 2, pp.OpAssoc.LEFT),
        (pp.one_of('+ -'), 2, pp.OpAssoc.LEFT),
    ])
    declaration = (pp.Keyword('function') + NAME_LIST + SEMI).set_parse_action(
        lambda s, loc, toks: _Statement('function', tuple(toks[1]), None, loc))
    assignment = (IDENT + pp.Suppress('=') + expression + SEMI).set_parse_action(
        lambda s, loc, toks: _Statement('assign', (toks[0],), toks[1], loc))
    return pp.ZeroOrMore(declaration | assignment) + pp.StringEnd()


EQUATIONS_FILE = _build_equations_grammar()


class _Expander:
    """Expands parsed expression trees into canonical polynomials"""

    def __init__(self, text, groups, assignments):
        self.text = text
        self.n_vars = groups.n_vars
        self.variables = {name: i for i, name in enumerate(groups.names)}
        self.assignments = assignments
        self.cache = {}
        self.active = []

    def line(self, node):
        leaf = _first_leaf(node)
        return pp.lineno(leaf.loc, self.text) if leaf is not None else None

    def resolve(self, name, loc):
        if name in self.variables:
            return Polynomial.variable(self.variables[name], self.n_vars)
        if name in self.cache:
            return self.cache[name]
        if name not in self.assignments:
            raise ParseError(f"undeclared identifier '{name}'", line=pp.lineno(loc, self.text))
        if name in self.active:
            cycle = ' -> '.join(self.active[self.active.index(name):] + [name])
            raise ParseError(f"cyclic assignment {cycle}", line=pp.lineno(loc, self.text))
        self.active.append(name)
        value = self.expand(self.assignments[name].expr)
        self.active.pop()
        self.cache[name] = value
        return value

    def expand(self, node):
        if isinstance(node, _Leaf):
            if node.kind == 'num':
                return Polynomial.constant(float(node.value), self.n_vars)
            if node.kind == 'imag':
                return Polynomial.constant(1j, self.n_vars)
            return self.resolve(node.value, node.loc)

        items = list(node)
        if len(items) == 1:
            return self.expand(items[0])
        if isinstance(items[0], str):
            operand = self.expand(items[1])
            return -operand if items[0] == '-' else operand
        if items[1] == '^':
            result = self.expand(items[-1])
            for base in reversed(items[:-1:2]):
                result = self._power(self.expand(base), result, node)
            return result

        result = self.expand(items[0])
        for op, operand in zip(items[1::2], items[2::2]):
            value = self.expand(operand)
            if op == '+':
                result = result + value
            elif op == '-':
                result = result - value
            elif op == '*':
                result = result * value
            else:
                result = result.scale(1.0 / self._divisor(value, operand))
        return result

    def _divisor(self, value, node):
        try:
            divisor = value.constant_value()
        except ValueError:
            raise ParseError("division is only supported by constants", line=self.line(node)) from None
        if divisor == 0:
            raise ParseError("division by zero", line=self.line(node))
        return divisor

    def _power(self, base, exponent, node):
        try:
            value = exponent.constant_value()
        except ValueError:
            raise ParseError("exponents must be integer constants", line=self.line(node)) from None
        if value.imag != 0 or value.real != int(value.real):
            raise ParseError(f"exponent {value} is not an integer", line=self.line(node))
        if value.real < 0:
            raise ParseError(f"negative exponent {int(value.real)}", line=self.line(node))
        return base ** int(value.real)


def _first_leaf(node):
    if isinstance(node, _Leaf):
        return node
    if isinstance(node, pp.ParseResults):
        for item in node:
            leaf = _first_leaf(item)
            if leaf is not None:
                return leaf
    return None


def parse_equations(text, groups):
    """
    Parse a bertiniInput_equations file into a PolySystem.

    Parameters:
    - text: `function f1, f2;` declaration followed by `name = expr;` assignments
    - groups: VariableGroups the expressions are written in

    Returns:
    - PolySystem whose polynomials are fully expanded, in declaration order
    """
    clean = strip_comments(text)
    try:
        statements = EQUATIONS_FILE.parse_string(clean, parse_all=True)
    except pp.ParseBaseException as err:
        raise ParseError(f"syntax error near '{err.line.strip()}'", line=err.lineno) from None

    functions = []
    assignments = {}
    for stmt in statements:
        line = pp.lineno(stmt.loc, clean)
        if stmt.kind == 'function':
            for name in stmt.names:
                if name in functions:
                    raise ParseError(f"function '{name}' declared twice", line=line)
                functions.append(name)
            continue
        target = stmt.names[0]
        if target in groups.names:
            raise ParseError(f"cannot assign to variable '{target}'", line=line)
        if target in assignments:
            raise ParseError(f"'{target}' assigned twice", line=line)
        assignments[target] = stmt

    if not functions:
        raise ParseError("no `function` declaration found")
    for name in functions:
        if name not in assignments:
            raise ParseError(f"function '{name}' is declared but never assigned")

    expander = _Expander(clean, groups, assignments)
    polys = []
    for name in functions:
        line = pp.lineno(assignments[name].loc, clean)
        poly = expander.resolve(name, assignments[name].loc)
        if poly.is_zero():
            raise ParseError(f"function '{name}' expands to zero", line=line)
        try:
            multidegree_of(poly, groups)
        except MultihomogeneityError as err:
            raise MultihomogeneityError(f"{name}: {err}", line=line) from None
        polys.append(poly)
    logger.debug("parsed %d polynomials over %d variables", len(polys), groups.n_vars)
    return PolySystem.from_polys(groups, polys, names=functions)


def format_complex(value):
    value = complex(value)
    re, im = f"{value.real:.17g}", f"{abs(value.imag):.17g}"
    if value.imag == 0:
        return f"({re})"
    sign = '-' if value.imag < 0 else '+'
    return f"({re}{sign}{im}*I)"


def format_polynomial(poly, groups):
    """Render a polynomial in the equations grammar; parse_equations reads it back exactly"""
    if poly.is_zero():
        return "0"
    pieces = []
    for exps, coeff in sorted(poly.terms().items(), reverse=True):
        factors = [format_complex(coeff)]
        for name, power in zip(groups.names, exps):
            if power == 1:
                factors.append(name)
            elif power > 1:
                factors.append(f"{name}^{power}")
        pieces.append('*'.join(factors))
    return ' + '.join(pieces)


def format_variables(groups):
    lines = []
    for group in groups:
        keyword = 'hom_variable_group' if group.is_projective else 'variable_group'
        lines.append(f"{keyword} {', '.join(group.names)};")
    return '\n'.join(lines) + '\n'


def format_equations(sys):
    lines = [f"function {', '.join(sys.names)};"]
    for name, poly in zip(sys.names, sys.polys):
        lines.append(f"{name} = {format_polynomial(poly, sys.groups)};")
    return '\n'.join(lines) + '\n'
