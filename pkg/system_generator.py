"""
System Generator Module
Builds random generic multihomogeneous systems and writes run directories in
the four-file input format, including the worked examples shipped in inputs/.
"""

import itertools
import logging
from pathlib import Path

import numpy as np

from polysys import (
    AFFINE,
    PROJECTIVE,
    Polynomial,
    PolySystem,
    VariableGroup,
    VariableGroups,
    format_equations,
    format_variables,
    random_unit_complex,
)

logger = logging.getLogger(__name__)

GROUP_LETTERS = 'xyzuvw'

TWISTED_CUBIC_VARIABLES = """\
# The text in bertiniInput_variables for the twisted cubic example.
hom_variable_group x_0, x_1, x_2, x_3;
"""

TWISTED_CUBIC_EQUATIONS = """\
function f1, f2, f3;
f1 = x_1^2 - x_0*x_2; f2 = x_2^2 - x_1*x_3; f3 = x_0*x_3 - x_1*x_2;
"""

P3XP1_VARIABLES = """\
hom_variable_group x_0, x_1, x_2, x_3;
hom_variable_group y_0, y_1;
"""

P3XP1_EQUATIONS = """\
function f1, f2, f3;
f1 = x_0*y_0 + x_1*y_1;
f2 = x_1*y_0 + x_2*y_1;
f3 = x_2*y_0 + x_3*y_1;
"""

TORUS_LINE_VARIABLES = """\
hom_variable_group x_0, x_1;
"""

TORUS_LINE_EQUATIONS = """\
function f1;
f1 = x_0;
"""


def projective_groups(dims):
    """P^{n_1} x ... x P^{n_k} with variables x_0.., y_0.., ..."""
    if len(dims) > len(GROUP_LETTERS):
        raise ValueError(f"at most {len(GROUP_LETTERS)} groups are supported")
    return VariableGroups(tuple(
        VariableGroup(tuple(f"{letter}_{i}" for i in range(n + 1)), PROJECTIVE)
        for letter, n in zip(GROUP_LETTERS, dims)))


def affine_groups(sizes):
    return VariableGroups(tuple(
        VariableGroup(tuple(f"{letter}{i + 1}" for i in range(n)), AFFINE)
        for letter, n in zip(GROUP_LETTERS, sizes)))


def _monomials(size, degree, homogeneous):
    degrees = [degree] if homogeneous else range(degree + 1)
    for total in degrees:
        for combo in itertools.combinations_with_replacement(range(size), total):
            exps = [0] * size
            for index in combo:
                exps[index] += 1
            yield tuple(exps)


def random_dense_polynomial(groups, multidegree, rng):
    """
    Every monomial of the given multidegree with a random unit-modulus coefficient.

    Affine groups take all monomials up to the given degree.
    """
    per_group = [list(_monomials(group.size, int(d), group.is_projective)) for group, d in zip(groups, multidegree)]
    terms = {}
    for parts in itertools.product(*per_group):
        exps = tuple(a for part in parts for a in part)
        terms[exps] = complex(random_unit_complex(rng))
    return Polynomial.from_terms(terms, groups.n_vars)


def random_dense_system(groups, degrees, rng):
    """
    Random complete intersection with the given degree rows.

    Parameters:
    - groups: VariableGroups
    - degrees: one multidegree row per polynomial
    - rng: numpy Generator

    Returns:
    - PolySystem named f1, f2, ...
    """
    degrees = np.asarray(degrees, dtype=np.int64).reshape(-1, len(groups))
    polys = [random_dense_polynomial(groups, row, rng) for row in degrees]
    return PolySystem(groups, tuple(polys), degrees)


def input_file_text(degrees, verbose=1, torus_groups=(), max_processes=1, **options):
    rows = ', '.join('[' + ', '.join(str(int(d)) for d in row) + ']' for row in degrees)
    lines = [
        f"degrees = [{rows}]",
        f"verbose = {int(verbose)}",
        f"algebraicTorusVariableGroups = [{', '.join(str(int(j)) for j in torus_groups)}]",
        f"maxProcesses = {int(max_processes)}",
    ]
    lines.extend(f"{key} = {value!r}" for key, value in options.items())
    return '\n'.join(lines) + '\n'


def tracking_options_text(final_tol=1e-12):
    return f"FinalTol: {final_tol:g};\n"


def system_files(sys, final_tol=1e-12, **input_options):
    """The four input files of a parsed or generated system"""
    return {
        'inputFile': input_file_text(sys.degrees.tolist(), **input_options),
        'bertiniInput_variables': format_variables(sys.groups),
        'bertiniInput_equations': format_equations(sys),
        'bertiniInput_trackingOptions': tracking_options_text(final_tol),
    }


def twisted_cubic_files(**input_options):
    return {
        'inputFile': input_file_text([[2], [2], [2]], **input_options),
        'bertiniInput_variables': TWISTED_CUBIC_VARIABLES,
        'bertiniInput_equations': TWISTED_CUBIC_EQUATIONS,
        'bertiniInput_trackingOptions': tracking_options_text(1e-12),
    }


def p3xp1_files(**input_options):
    return {
        'inputFile': input_file_text([[1, 1], [1, 1], [1, 1]], **input_options),
        'bertiniInput_variables': P3XP1_VARIABLES,
        'bertiniInput_equations': P3XP1_EQUATIONS,
        'bertiniInput_trackingOptions': tracking_options_text(1e-12),
    }


def torus_line_files(**input_options):
    return {
        'inputFile': input_file_text([[1]], **input_options),
        'bertiniInput_variables': TORUS_LINE_VARIABLES,
        'bertiniInput_equations': TORUS_LINE_EQUATIONS,
        'bertiniInput_trackingOptions': tracking_options_text(1e-12),
    }


EXAMPLES = {
    'twisted_cubic': twisted_cubic_files,
    'p3xp1': p3xp1_files,
    'torus_line': torus_line_files,
}


def write_input_dir(directory, files):
    """Write a {file name: text} mapping into directory, creating it if needed"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (directory / name).write_text(text)
    logger.info("wrote %d input files to %s", len(files), directory)
    return directory
