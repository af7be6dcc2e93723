"""
Pytest configuration and shared fixtures for the multiregeneration tests
"""

import numpy as np
import pytest

from polysys import parse_equations, parse_variables
from system_generator import (
    P3XP1_EQUATIONS,
    P3XP1_VARIABLES,
    TWISTED_CUBIC_EQUATIONS,
    TWISTED_CUBIC_VARIABLES,
    p3xp1_files,
    torus_line_files,
    twisted_cubic_files,
    write_input_dir,
)
from tracker import TrackSettings


@pytest.fixture
def rng():
    """Seeded generator for generic choices in tests"""
    return np.random.default_rng(20191)


@pytest.fixture
def cubic_groups():
    """P^3 with coordinates x_0..x_3"""
    return parse_variables(TWISTED_CUBIC_VARIABLES)


@pytest.fixture
def cubic_system(cubic_groups):
    """
    The twisted cubic as the zero set of three quadrics.

    Returns:
        PolySystem: f1, f2, f3 with degrees [[2], [2], [2]]
    """
    return parse_equations(TWISTED_CUBIC_EQUATIONS, cubic_groups)


@pytest.fixture
def p3xp1_groups():
    """P^3 x P^1 with groups (x_0..x_3), (y_0, y_1)"""
    return parse_variables(P3XP1_VARIABLES)


@pytest.fixture
def p3xp1_system(p3xp1_groups):
    """Three bilinear forms whose multidegree is T0^3 + 3*T0^2*T1"""
    return parse_equations(P3XP1_EQUATIONS, p3xp1_groups)


@pytest.fixture
def tight_settings():
    """Tracking settings with the endgame tolerance used by the sample inputs"""
    return TrackSettings(final_tol=1e-12)


@pytest.fixture
def twisted_cubic_dir(tmp_path):
    """Run directory holding the four twisted cubic input files"""
    return write_input_dir(tmp_path / 'twisted_cubic', twisted_cubic_files())


@pytest.fixture
def p3xp1_dir(tmp_path):
    """Run directory for the P^3 x P^1 example"""
    return write_input_dir(tmp_path / 'p3xp1', p3xp1_files())


@pytest.fixture
def torus_line_dir(tmp_path):
    """V(x_0) in P^1 with the algebraic torus restriction on group 0"""
    return write_input_dir(tmp_path / 'torus_line', torus_line_files(torus_groups=[0]))


@pytest.fixture
def completed_listing_names():
    """Solution file names of a completed P^3 x P^1 run"""
    return {
        0: ["depth_0_gens_1_dim_2_1_varGroup_1_regenLinear_1_pointId_429439718721_285170369818",
            "depth_0_gens_1_dim_3_0_varGroup_1_regenLinear_1_pointId_429439718721_494593912469"],
        1: ["depth_1_gens_1_1_dim_1_1_varGroup_1_regenLinear_1_pointId_285170369818_258141170677",
            "depth_1_gens_1_1_dim_2_0_varGroup_1_regenLinear_1_pointId_285170369818_257010786796",
            "depth_1_gens_1_1_dim_2_0_varGroup_1_regenLinear_1_pointId_494593912469_916362171011"],
        2: ["depth_2_gens_1_1_1_dim_0_1_varGroup_1_regenLinear_1_pointId_258141170677_929159838948",
            "depth_2_gens_1_1_1_dim_1_0_varGroup_1_regenLinear_1_pointId_257010786796_156506717710",
            "depth_2_gens_1_1_1_dim_1_0_varGroup_1_regenLinear_1_pointId_258141170677_604647130850",
            "depth_2_gens_1_1_1_dim_1_0_varGroup_1_regenLinear_1_pointId_916362171011_957285449047"],
    }
