"""
Command Line Module
Reads the four input files of a run directory, runs multiregeneration and
prints the multidegree table.
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pyparsing as pp
from dotenv import load_dotenv

import persist
import regen
from polysys import ParseError, parse_equations, parse_variables, strip_comments
from tracker import TrackSettings, parse_tracking_options

logger = logging.getLogger(__name__)

INPUT_FILE_NAMES = ('inputFile', 'inputFile.py')
VARIABLES_FILE = 'bertiniInput_variables'
EQUATIONS_FILE = 'bertiniInput_equations'
TRACKING_FILE = 'bertiniInput_trackingOptions'

ENV_SEED = 'MULTIREGEN_SEED'
ENV_MAX_PROCESSES = 'MULTIREGEN_MAX_PROCESSES'
ENV_LOG_LEVEL = 'MULTIREGEN_LOG_LEVEL'

TABLE_HEADER = (
    "| # smooth isolated solutions  | # of general linear equations |\n"
    "| found                        | added with variables in group |"
)


class InputError(ValueError):
    """Input files are individually valid but inconsistent with each other"""


@dataclass(frozen=True)
class InputConfig:
    degrees: tuple
    verbose: int = 1
    algebraic_torus_variable_groups: tuple = ()
    max_processes: int = 1
    depth_first: bool = True
    seed: int = None
    target_dimensions: tuple = ()
    membership_tol: float = 1e-8
    dedup_tol: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, 'degrees', tuple(tuple(int(d) for d in row) for row in self.degrees))
        object.__setattr__(self, 'algebraic_torus_variable_groups',
                           tuple(int(j) for j in self.algebraic_torus_variable_groups))
        object.__setattr__(self, 'target_dimensions', tuple(tuple(int(v) for v in e) for e in self.target_dimensions))
        if self.verbose < 0:
            raise ValueError("verbose must be 0 or positive")
        if self.max_processes < 1:
            raise ValueError("maxProcesses must be at least 1")
        if self.seed is not None and not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.membership_tol <= 0 or self.dedup_tol <= 0:
            raise ValueError("tolerances must be positive")


# ========== inputFile ==========

@dataclass(frozen=True)
class _Assignment:
    key: str
    value: object
    loc: int


def _build_input_grammar():
    ident = pp.Word(pp.alphas + '_', pp.alphanums + '_')
    value = pp.Forward()
    string = pp.QuotedString("'") | pp.QuotedString('"')
    items = pp.Optional(pp.DelimitedList(value, allow_trailing_delim=True))
    listing = pp.Group(pp.Suppress('[') + items + pp.Suppress(']'), aslist=True)
    value <<= listing | pp.pyparsing_common.number | string | ident
    assignment = (ident + pp.Suppress('=') + value).set_parse_action(
        lambda s, loc, toks: _Assignment(toks[0], toks[1], loc))
    return pp.ZeroOrMore(assignment) + pp.StringEnd()


INPUT_FILE_GRAMMAR = _build_input_grammar()

INPUT_KEYS = {
    'degrees': 'degrees',
    'verbose': 'verbose',
    'algebraicTorusVariableGroups': 'algebraic_torus_variable_groups',
    'maxProcesses': 'max_processes',
    'depthFirst': 'depth_first',
    'explorationOrder': 'depth_first',
    'seed': 'seed',
    'targetDimensions': 'target_dimensions',
    'membershipTolerance': 'membership_tol',
    'dedupTolerance': 'dedup_tol',
}


def _coerce(key, value, line):
    def fail(expected):
        raise ParseError(f"{key} must be {expected}, got {value!r}", line)

    if key in ('degrees', 'targetDimensions'):
        if not isinstance(value, list) or not all(
                isinstance(row, list) and all(isinstance(v, int) and v >= 0 for v in row) for row in value):
            fail("a list of lists of nonnegative integers")
        return value
    if key == 'algebraicTorusVariableGroups':
        if not isinstance(value, list) or not all(isinstance(v, int) for v in value):
            fail("a list of integers")
        return value
    if key in ('verbose', 'maxProcesses', 'seed'):
        if not isinstance(value, int):
            fail("an integer")
        return value
    if key == 'depthFirst':
        if value not in ('True', 'False'):
            fail("True or False")
        return value == 'True'
    if key == 'explorationOrder':
        try:
            return regen.Strategy(value) is regen.Strategy.DFS
        except ValueError:
            fail("'depthFirst' or 'breadthFirst'")
    if key in ('membershipTolerance', 'dedupTolerance'):
        if not isinstance(value, (int, float)) or value <= 0:
            fail("a positive number")
        return float(value)
    return value


def parse_input_file(text):
    """
    Read the key = value lines of an inputFile.

    The file is parsed, never executed: values are integers, reals, quoted
    strings, True/False and nested lists.

    Returns:
    - dict of InputConfig field values
    """
    clean = strip_comments(text)
    try:
        statements = INPUT_FILE_GRAMMAR.parse_string(clean, parse_all=True)
    except pp.ParseBaseException as err:
        raise ParseError(f"cannot read inputFile: {err.msg}", err.lineno) from None

    fields = {}
    for statement in statements:
        key, value = statement.key, statement.value
        line = pp.lineno(statement.loc, clean)
        if key not in INPUT_KEYS:
            logger.warning("ignoring unknown inputFile key %s (line %d)", key, line)
            continue
        fields[INPUT_KEYS[key]] = _coerce(key, value, line)
    if 'degrees' not in fields:
        raise ParseError("inputFile must set degrees")
    return fields


# ========== Loading a run directory ==========

def _read(directory, name):
    path = Path(directory) / name
    if not path.is_file():
        raise FileNotFoundError(f"missing input file {path}")
    return path.read_text()


def _vector(row):
    return '(' + ', '.join(str(int(v)) for v in row) + ')'


def load_inputs(directory):
    """
    Parse and cross-check the input files of a run directory.

    Parameters:
    - directory: folder holding inputFile, bertiniInput_variables,
      bertiniInput_equations and optionally bertiniInput_trackingOptions

    Returns:
    - (PolySystem, InputConfig, TrackSettings)

    Raises:
    - FileNotFoundError for a missing required file
    - InputError for parse errors (file and line named) and degree mismatches
    """
    directory = Path(directory)
    input_name = next((name for name in INPUT_FILE_NAMES if (directory / name).is_file()), INPUT_FILE_NAMES[0])

    def parsed(name, parse, *args):
        try:
            return parse(_read(directory, name), *args)
        except ParseError as err:
            raise InputError(f"{name}: {err}") from err

    fields = parsed(input_name, parse_input_file)
    groups = parsed(VARIABLES_FILE, parse_variables)
    system = parsed(EQUATIONS_FILE, parse_equations, groups)

    settings = TrackSettings()
    if (directory / TRACKING_FILE).is_file():
        try:
            settings = replace(settings, **parsed(TRACKING_FILE, parse_tracking_options))
        except ValueError as err:
            if isinstance(err, InputError):
                raise
            raise InputError(f"{TRACKING_FILE}: {err}") from err
    else:
        logger.info("no %s, using default tracking settings", TRACKING_FILE)

    try:
        config = InputConfig(**fields)
    except ValueError as err:
        raise InputError(f"{input_name}: {err}") from err

    if len(config.degrees) != len(system):
        raise InputError(f"{input_name}: degrees lists {len(config.degrees)} polynomials, "
                         f"{EQUATIONS_FILE} defines {len(system)}")
    for name, declared, computed in zip(system.names, config.degrees, system.degrees):
        if len(declared) != len(groups) or tuple(declared) != tuple(computed.tolist()):
            raise InputError(f"declared degree {_vector(declared)} != computed {_vector(computed)} for {name}")
    for j in config.algebraic_torus_variable_groups:
        if not 0 <= j < len(groups):
            raise InputError(f"algebraicTorusVariableGroups: group {j} does not exist")
    for e in config.target_dimensions:
        if len(e) != len(groups) or any(v > n for v, n in zip(e, groups.dims)):
            raise InputError(f"targetDimensions: {list(e)} is not a slice type for dims {list(groups.dims)}")
    return system, config, settings


# ========== Output ==========

def render_table(table):
    """The two-column summary printed at the end of a run, each row followed by its T-monomial"""
    frame = table.to_frame()
    columns = [name for name in frame.columns if name.startswith('e_')]
    rows = ["  " + str(record['count']).ljust(31) + "".join(f"{record[c]}  " for c in columns) + record['monomial']
            for record in frame.to_dict('records')]
    return "\n".join([TABLE_HEADER] + rows)


def render_status(frame):
    """Text for --status from persist.status_frame"""
    if frame.empty:
        return "no completed solutions"
    lines = []
    for depth, rows in frame.groupby('depth', sort=True):
        lines.append(f"depth_{depth}")
        lines.extend(f"  dim {record['dim']}: {record['count']}" for record in rows.to_dict('records'))
    return "\n".join(lines)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog='multiregeneration',
                     description="Multidegree of a multiprojective variety by multiregeneration.")
    parser.add_argument('--dir', default='.', help="directory with the input files and the run/ output")
    parser.add_argument('--seed', type=int, default=None, help="master seed (unsigned 64-bit)")
    parser.add_argument('--bfs', action='store_true', help="explore breadth first")
    parser.add_argument('--max-processes', type=int, default=None, help="number of tracking processes")
    parser.add_argument('--status', action='store_true', help="print counts of saved solutions and exit")
    parser.add_argument('--log-level', default=None, help="DEBUG, INFO, WARNING or ERROR")
    return parser


def _env_int(name):
    raw = os.environ.get(name)
    if raw is None or not raw.strip():
        return None
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"environment variable {name} must be an integer, got '{raw}'") from None


def _configure_logging(level_name):
    level = getattr(logging, (level_name or 'WARNING').upper(), None)
    if not isinstance(level, int):
        raise InputError(f"unknown log level '{level_name}'")
    logging.basicConfig(level=level, stream=sys.stderr, format="%(asctime)s %(name)s %(levelname)s: %(message)s")


def main(argv=None):
    """
    Entry point.

    Returns:
    - 0 on success, 1 on input errors, 2 when some paths failed
    """
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exit_:
        return exit_.code

    directory = Path(args.dir)
    load_dotenv(directory / '.env', override=False)
    try:
        _configure_logging(args.log_level or os.environ.get(ENV_LOG_LEVEL))
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1

    if args.status:
        print(render_status(persist.status_frame(directory)))
        return 0

    try:
        system, config, settings = load_inputs(directory)
        seed = args.seed if args.seed is not None else _env_int(ENV_SEED)
        max_processes = args.max_processes if args.max_processes is not None else _env_int(ENV_MAX_PROCESSES)
    except (ParseError, InputError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1

    if seed is None:
        seed = config.seed if config.seed is not None else int(np.random.SeedSequence().entropy % 2 ** 64)
    strategy = regen.Strategy.BFS if args.bfs or not config.depth_first else regen.Strategy.DFS
    logger.info("seed %d", seed)
    if config.verbose:
        print(f"seed: {seed}")

    try:
        regen_config = regen.RegenConfig(
            degrees=config.degrees,
            torus_groups=config.algebraic_torus_variable_groups,
            strategy=strategy,
            max_processes=max_processes if max_processes is not None else config.max_processes,
            master_seed=seed,
            membership_tol=config.membership_tol,
            dedup_tol=config.dedup_tol,
            track=settings,
            target_dimensions=config.target_dimensions,
            output_dir=directory,
            verbose=config.verbose,
        )
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1

    result = regen.run(system, regen_config)
    if config.verbose:
        print(render_table(result.table))
    if result.partial:
        logger.warning("partial multidegree: some paths failed")
        return 2
    return 0


if __name__ == '__main__':
    sys.exit(main())
