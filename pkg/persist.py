"""
Persistence Module
File-per-solution checkpointing under run/_completed_smooth_solutions and a
filename-only status scanner that is safe to use while a run is still writing.
"""

import logging
import os
import re
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

RUN_DIR = 'run'
SOLUTIONS_DIR = '_completed_smooth_solutions'
FAILURES_DIR = '_failed_paths'
POINT_ID_DIGITS = 12

NAME_PATTERN = re.compile(
    r'^depth_(?P<depth>\d+)'
    r'_gens_(?P<gens>\d+(?:_\d+)*)'
    r'_dim_(?P<dim>\d+(?:_\d+)*)'
    r'_varGroup_(?P<var_group>\d+)'
    r'_regenLinear_(?P<regen_linear>\d+)'
    r'_pointId_(?P<parent>\d{12})_(?P<point>\d{12})'
    r'(?:__(?P<status>\w+))?$'
)


@dataclass(frozen=True)
class NodeId:
    depth: int
    gens: tuple
    dim: tuple
    var_group: int
    regen_linear: int
    parent_point_id: str
    point_id: str

    def __post_init__(self):
        object.__setattr__(self, 'gens', tuple(int(g) for g in self.gens))
        object.__setattr__(self, 'dim', tuple(int(v) for v in self.dim))
        for name in ('parent_point_id', 'point_id'):
            value = str(getattr(self, name))
            if len(value) != POINT_ID_DIGITS or not value.isdigit():
                raise ValueError(f"{name} must be {POINT_ID_DIGITS} decimal digits, got '{value}'")
            object.__setattr__(self, name, value)
        if self.depth < 0 or not self.gens or not self.dim:
            raise ValueError("node ids need a nonnegative depth, gens and a dim vector")

    def render(self):
        return (f"depth_{self.depth}_gens_{'_'.join(map(str, self.gens))}"
                f"_dim_{'_'.join(map(str, self.dim))}"
                f"_varGroup_{self.var_group}_regenLinear_{self.regen_linear}"
                f"_pointId_{self.parent_point_id}_{self.point_id}")

    @classmethod
    def parse(cls, name):
        """Inverse of render; a trailing failure status suffix is ignored"""
        match = NAME_PATTERN.match(name)
        if match is None:
            raise ValueError(f"not a solution file name: {name}")
        return cls(
            depth=int(match['depth']),
            gens=tuple(int(g) for g in match['gens'].split('_')),
            dim=tuple(int(v) for v in match['dim'].split('_')),
            var_group=int(match['var_group']),
            regen_linear=int(match['regen_linear']),
            parent_point_id=match['parent'],
            point_id=match['point'],
        )


@dataclass(frozen=True)
class SolutionRecord:
    node_id: NodeId
    coordinates: tuple


def format_coordinate(value):
    """'<real> <imag>' with a 15-decimal mantissa and an unpadded exponent"""
    value = complex(value)
    return f"{_format_real(value.real)} {_format_real(value.imag)}"


def _format_real(x):
    mantissa, exponent = f"{x:.15e}".split('e')
    return f"{mantissa}e{int(exponent)}"


def _write_atomic(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix='.tmp_')
    try:
        with os.fdopen(fd, 'w') as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def _record_text(rec):
    return ''.join(format_coordinate(c) + '\n' for c in rec.coordinates)


def save_solution(root_dir, rec):
    """
    Write one solution file under root_dir/run/_completed_smooth_solutions/depth_<d>/.

    Returns:
    - Path of the written file

    Raises:
    - FileExistsError when the file name (and so the point id) is already taken
    """
    path = Path(root_dir) / RUN_DIR / SOLUTIONS_DIR / f"depth_{rec.node_id.depth}" / rec.node_id.render()
    if path.exists():
        raise FileExistsError(f"duplicate solution file {path.name}")
    _write_atomic(path, _record_text(rec))
    return path


def save_failure(root_dir, rec, status):
    """Diagnostic copy of a discarded endpoint under run/_failed_paths/; never read back"""
    path = Path(root_dir) / RUN_DIR / FAILURES_DIR / f"depth_{rec.node_id.depth}" / f"{rec.node_id.render()}__{status}"
    if path.exists():
        raise FileExistsError(f"duplicate failure file {path.name}")
    _write_atomic(path, _record_text(rec))
    return path


def read_solution(path):
    """Read a solution file back into a SolutionRecord"""
    path = Path(path)
    coordinates = []
    for number, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path.name} line {number}: expected '<real> <imag>'")
        coordinates.append(complex(float(parts[0]), float(parts[1])))
    return SolutionRecord(NodeId.parse(path.name), tuple(coordinates))


class SolutionStore:
    """Checkpoint writer bound to one output directory"""

    def __init__(self, root_dir):
        self.root_dir = Path(root_dir)
        self.saved = 0

    @property
    def solutions_dir(self):
        return self.root_dir / RUN_DIR / SOLUTIONS_DIR

    @property
    def failures_dir(self):
        return self.root_dir / RUN_DIR / FAILURES_DIR

    def reset(self):
        """Start a fresh run: previous solutions and failure records are removed"""
        for directory in (self.solutions_dir, self.failures_dir):
            if directory.exists():
                logger.info("removing previous results in %s", directory)
                shutil.rmtree(directory)
        self.solutions_dir.mkdir(parents=True, exist_ok=True)

    def save(self, rec):
        path = save_solution(self.root_dir, rec)
        self.saved += 1
        logger.debug("saved %s", path.name)
        return path

    def save_failure(self, rec, status):
        return save_failure(self.root_dir, rec, status)


def status(root_dir):
    """
    Count saved solutions per depth and slice type from file names only.

    Returns:
    - {depth: {dim tuple: count}}; an empty or missing run directory gives {}
    """
    solutions = Path(root_dir) / RUN_DIR / SOLUTIONS_DIR
    counts = {}
    if not solutions.is_dir():
        return counts
    for depth_dir in sorted(solutions.iterdir()):
        if not depth_dir.is_dir():
            continue
        for entry in depth_dir.iterdir():
            if entry.name.startswith('.tmp_'):
                continue
            try:
                node_id = NodeId.parse(entry.name)
            except ValueError:
                logger.warning("skipping unparsable file name %s", entry.name)
                continue
            per_depth = counts.setdefault(node_id.depth, {})
            per_depth[node_id.dim] = per_depth.get(node_id.dim, 0) + 1
    return dict(sorted(counts.items()))


def status_frame(root_dir):
    """status() as a long-format DataFrame with columns depth, dim, count"""
    records = [{'depth': depth, 'dim': ' '.join(map(str, dim)), 'count': count}
               for depth, per_dim in status(root_dir).items()
               for dim, count in sorted(per_dim.items(), reverse=True)]
    return pd.DataFrame(records, columns=['depth', 'dim', 'count'])


def fresh_point_id(rng, used=None):
    """Uniform 12-digit decimal id; redrawn while it collides with `used`"""
    used = used if used is not None else ()
    while True:
        point_id = f"{int(rng.integers(0, 10 ** POINT_ID_DIGITS, dtype=np.int64)):0{POINT_ID_DIGITS}d}"
        if point_id not in used:
            return point_id
