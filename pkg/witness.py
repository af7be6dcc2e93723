"""
Witness Module
Slice types, generic linear slices, the root witness of the ambient product
space, and the multidegree table assembled from leaf witness nodes.
"""

import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from numerics import SingularMatrixError, lu_solve, residual_norm
from polysys import MultiprojectivePoint, evaluate_polys, random_linear
from tracker import PatchSet

logger = logging.getLogger(__name__)

ROOT_RESAMPLES = 3


class WitnessError(RuntimeError):
    """Generic choices kept producing a degenerate linear system"""


@dataclass(frozen=True, order=True)
class SliceType:
    e: tuple

    def __post_init__(self):
        object.__setattr__(self, 'e', tuple(int(v) for v in self.e))
        if any(v < 0 for v in self.e):
            raise ValueError(f"slice type {self.e} has a negative entry")

    def __len__(self):
        return len(self.e)

    def __iter__(self):
        return iter(self.e)

    def __getitem__(self, index):
        return self.e[index]

    @property
    def total(self):
        return sum(self.e)

    def is_valid_for(self, groups):
        return len(self.e) == len(groups) and all(v <= n for v, n in zip(self.e, groups.dims))

    def minus(self, j):
        e = list(self.e)
        e[j] -= 1
        return SliceType(tuple(e))

    def dominates(self, other):
        return all(a >= b for a, b in zip(self.e, other.e))

    def label(self, sep='_'):
        return sep.join(str(v) for v in self.e)


@dataclass(frozen=True, eq=False)
class Slice:
    """Generic linear forms as (group_index, Polynomial) pairs, grouped in draw order"""
    linears: tuple = ()
    n_groups: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'linears', tuple(self.linears))

    @property
    def slice_type(self):
        counts = Counter(j for j, _ in self.linears)
        return SliceType(tuple(counts.get(j, 0) for j in range(self.n_groups)))

    @property
    def polys(self):
        return tuple(poly for _, poly in self.linears)

    def without_last(self, j):
        """Remove the last-added linear of group j; returns (reduced slice, removed linear)"""
        positions = [k for k, (group, _) in enumerate(self.linears) if group == j]
        if not positions:
            raise ValueError(f"slice has no linear in group {j}")
        last = positions[-1]
        removed = self.linears[last][1]
        return Slice(self.linears[:last] + self.linears[last + 1:], self.n_groups), removed


@dataclass(frozen=True, eq=False)
class WitnessNode:
    prefix_count: int
    slice: Slice
    points: tuple = ()
    node_id: object = None
    point_ids: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, 'points', tuple(self.points))
        object.__setattr__(self, 'point_ids', tuple(self.point_ids))
        if self.point_ids and len(self.point_ids) != len(self.points):
            raise ValueError("point_ids must match points one to one")

    @property
    def slice_type(self):
        return self.slice.slice_type

    @property
    def depth(self):
        return self.prefix_count - 1

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class MultidegreeTable:
    rows: tuple = ()
    dims: tuple = field(default=(), compare=False)

    def __post_init__(self):
        rows = tuple((int(count), SliceType(tuple(e))) for count, e in self.rows)
        types = [e for _, e in rows]
        if len(set(types)) != len(types):
            raise ValueError("multidegree table rows must have distinct slice types")
        if any(count <= 0 for count, _ in rows):
            raise ValueError("multidegree table counts must be positive")
        object.__setattr__(self, 'rows', rows)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def total(self):
        return sum(count for count, _ in self.rows)

    def as_dict(self):
        return {e.e: count for count, e in self.rows}

    def monomial(self, e):
        """T-monomial of a row: prod_j T_j^(n_j - e_j)"""
        factors = []
        for j, (n, v) in enumerate(zip(self.dims, e)):
            power = n - v
            if power == 1:
                factors.append(f"T{j}")
            elif power > 1:
                factors.append(f"T{j}^{power}")
        return '*'.join(factors) or '1'

    def polynomial_text(self):
        return ' + '.join(f"{count}*{self.monomial(e)}" for count, e in self.rows) or '0'

    def to_frame(self):
        """One row per slice type with the count and its T-monomial"""
        columns = [f"e_{j + 1}" for j in range(len(self.dims))]
        records = []
        for count, e in self.rows:
            record = {'count': count}
            record.update(dict(zip(columns, e.e)))
            record['monomial'] = self.monomial(e) if self.dims else ''
            records.append(record)
        return pd.DataFrame(records, columns=['count'] + columns + ['monomial'])


def valid_slice_types(groups, dim):
    """
    All slice types e with sum(e) = dim and 0 <= e_j <= n_j.

    Ordered with larger leading entries first, e.g. (1,0) before (0,1).
    """
    bounds = groups.dims
    if dim < 0 or dim > sum(bounds):
        return []
    types = [SliceType(e) for e in itertools.product(*(range(n + 1) for n in bounds)) if sum(e) == dim]
    return sorted(types, reverse=True)


def make_slice(e, groups, rng):
    """e_j fresh random linears in group j, drawn group by group"""
    e = SliceType(tuple(e))
    if not e.is_valid_for(groups):
        raise ValueError(f"slice type {e.e} is not valid for dims {groups.dims}")
    linears = [(j, random_linear(j, groups, rng)) for j in range(len(groups)) for _ in range(e[j])]
    return Slice(tuple(linears), len(groups))


def _linear_system(polys, n_vars):
    """Rows A, right-hand side b with poly(x) = A x - b for linear polys"""
    A = np.zeros((len(polys), n_vars), dtype=complex)
    b = np.zeros(len(polys), dtype=complex)
    for row, poly in enumerate(polys):
        for exps, coeff in zip(poly.exponents, poly.coefficients):
            degree = exps.sum()
            if degree == 0:
                b[row] = -coeff
            elif degree == 1:
                A[row, int(np.argmax(exps))] = coeff
            else:
                raise ValueError("root slice contains a nonlinear form")
    return A, b


def solve_slice(slice_, patches, groups):
    """The unique point of V(slice) on the patches, by one dense solve"""
    A, b = _linear_system(slice_.polys, groups.n_vars)
    A = np.vstack([A, patches.jacobian(groups.n_vars)])
    b = np.concatenate([b, np.ones(len(patches), dtype=complex)])
    return lu_solve(A, b)


def root_witness(groups, rng, settings, slice_=None, patches=None):
    """
    Witness node of the whole ambient product space.

    Parameters:
    - groups: VariableGroups
    - rng: numpy Generator for the generic choices
    - settings: TrackSettings (final_tol bounds the residual of the root point)
    - slice_, patches: fixed generic choices; drawn from rng when omitted

    Returns:
    - WitnessNode with prefix_count 0, slice type (n_1, ..., n_k) and one point

    Raises:
    - WitnessError when the linear system stays singular after resampling
    """
    e = SliceType(groups.dims)
    for attempt in range(ROOT_RESAMPLES + 1):
        current_slice = slice_ if slice_ is not None and attempt == 0 else make_slice(e, groups, rng)
        current_patches = patches if patches is not None and attempt == 0 else PatchSet.random(groups, rng)
        try:
            x = solve_slice(current_slice, current_patches, groups)
        except SingularMatrixError:
            logger.warning("root slice is degenerate, resampling (attempt %d)", attempt + 1)
            continue
        residual = residual_norm(np.concatenate([
            evaluate_polys(current_slice.polys, x), current_patches.evaluate(x)]))
        if residual > settings.final_tol:
            logger.warning("root point residual %.3e above %.1e, resampling", residual, settings.final_tol)
            continue
        point = MultiprojectivePoint.from_vector(groups, x)
        return WitnessNode(0, current_slice, (point,))
    raise WitnessError(f"no regular root witness after {ROOT_RESAMPLES} resamples")


def multidegree_table(leaves, groups):
    """
    Aggregate leaf point counts per slice type.

    Rows with zero points are left out; rows are ordered like valid_slice_types.
    """
    leaves = list(leaves)
    if len({leaf.prefix_count for leaf in leaves}) > 1:
        raise ValueError("leaves must all have the full system imposed")
    counts = Counter()
    for leaf in leaves:
        counts[leaf.slice_type] += len(leaf.points)
    rows = [(count, e) for e, count in sorted(counts.items(), reverse=True) if count > 0]
    table = MultidegreeTable(tuple(rows), groups.dims)
    for count, e in table.rows:
        logger.info("row %d  %s  ->  %d*%s", count, e.label(' '), count, table.monomial(e))
    return table


def truncated_product_table(degrees, groups):
    """
    Multidegree predicted for a generic complete intersection.

    Expands prod_i (sum_j d_ij T_j), drops monomials with a T_j power above n_j,
    and maps the coefficient c of prod_j T_j^(a_j) to the row (c, n - a).
    """
    dims = groups.dims
    degrees = np.asarray(degrees, dtype=np.int64).reshape(-1, len(dims))
    product = {tuple([0] * len(dims)): 1}
    for row in degrees:
        expanded = Counter()
        for exps, coeff in product.items():
            for j, d in enumerate(row):
                if d == 0 or exps[j] + 1 > dims[j]:
                    continue
                bumped = list(exps)
                bumped[j] += 1
                expanded[tuple(bumped)] += coeff * int(d)
        product = expanded
    rows = [(count, SliceType(tuple(n - a for n, a in zip(dims, exps))))
            for exps, count in product.items() if count > 0]
    return MultidegreeTable(tuple(sorted(rows, key=lambda row: row[1], reverse=True)), dims)
