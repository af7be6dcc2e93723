"""
Regeneration Module
The multiregeneration engine: imposes the polynomials of a system one at a time,
splitting every witness node into the part contained in the next hypersurface
(membership by evaluation) and the part regenerated through two homotopies per
variable group, with depth-first or breadth-first scheduling.
"""

import logging
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import Enum
from functools import reduce
from multiprocessing import Pool

import numpy as np
from tqdm import tqdm

import persist
from polysys import MultiprojectivePoint, Polynomial, multidegree_of, random_linear, random_unit_complex
from tracker import Homotopy, MovingPair, PatchSet, PathStatus, TrackSettings, track_path
from witness import SliceType, WitnessNode, make_slice, multidegree_table, root_witness

logger = logging.getLogger(__name__)

# Keys of the independent random streams derived from the master seed
SLICE_STREAM = 1
PATCH_STREAM = 2
REGEN_LINEAR_STREAM = 3
GAMMA_STREAM = 4
RANDOMIZER_STREAM = 5
ID_STREAM = 6
ROOT_STREAM = 7

STAGE_A = 'A'
STAGE_B = 'B'
GAMMA_KEYS = {STAGE_A: 1, STAGE_B: 2}
MEMBERSHIP_INSIDE = 'inside'
MEMBERSHIP_OUTSIDE = 'outside'


class Strategy(Enum):
    DFS = 'depthFirst'
    BFS = 'breadthFirst'


@dataclass(frozen=True)
class RegenConfig:
    degrees: tuple
    torus_groups: tuple = ()
    strategy: Strategy = Strategy.DFS
    max_processes: int = 1
    master_seed: int = 0
    membership_tol: float = 1e-8
    dedup_tol: float = 1e-8
    track: TrackSettings = field(default_factory=TrackSettings)
    target_dimensions: tuple = ()
    output_dir: object = None
    verbose: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'degrees', tuple(tuple(int(d) for d in row) for row in self.degrees))
        object.__setattr__(self, 'torus_groups', tuple(int(j) for j in self.torus_groups))
        object.__setattr__(self, 'target_dimensions', tuple(SliceType(tuple(e)) for e in self.target_dimensions))
        if isinstance(self.strategy, str):
            object.__setattr__(self, 'strategy', Strategy(self.strategy))
        if self.max_processes < 1:
            raise ValueError("max_processes must be at least 1")
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if self.membership_tol <= 0 or self.dedup_tol <= 0:
            raise ValueError("tolerances must be positive")
        if any(d < 0 for row in self.degrees for d in row):
            raise ValueError("degrees must be nonnegative")

    def check_system(self, sys):
        """Cross-check the declared degrees against the parsed system"""
        declared = np.array(self.degrees, dtype=np.int64).reshape(-1, len(sys.groups)) if self.degrees else None
        if declared is None or declared.shape != sys.degrees.shape:
            raise ValueError(f"declared degrees {list(self.degrees)} do not match {len(sys)} polynomials "
                             f"in {len(sys.groups)} groups")
        for i, (row, computed) in enumerate(zip(declared, sys.degrees)):
            if not np.array_equal(row, computed):
                raise ValueError(f"declared degree {tuple(row.tolist())} != computed {tuple(computed.tolist())} "
                                 f"for {sys.names[i]}")
        for j in self.torus_groups:
            if not 0 <= j < len(sys.groups):
                raise ValueError(f"algebraic torus group {j} is out of range")
        for e in self.target_dimensions:
            if not e.is_valid_for(sys.groups):
                raise ValueError(f"target dimension {e.e} is not a valid slice type")


class RandomStreams:
    """
    Generic choices of a run, each drawn from its own keyed stream so they do not
    depend on scheduling order or on which worker asks.
    """

    def __init__(self, seed, groups):
        self.seed = int(seed)
        self.groups = groups
        self._root_slice = None
        self._patches = None

    def rng(self, purpose, *keys):
        return np.random.default_rng([self.seed, purpose, *(int(k) for k in keys)])

    def root_slice(self):
        if self._root_slice is None:
            self._root_slice = make_slice(self.groups.dims, self.groups, self.rng(SLICE_STREAM))
        return self._root_slice

    def patches(self):
        if self._patches is None:
            self._patches = PatchSet.random(self.groups, self.rng(PATCH_STREAM))
        return self._patches

    def regen_linear(self, depth, group_index, copy_index):
        return random_linear(group_index, self.groups, self.rng(REGEN_LINEAR_STREAM, depth, group_index, copy_index))

    def gamma(self, *keys):
        return complex(random_unit_complex(self.rng(GAMMA_STREAM, *keys)))

    def randomizer(self, prefix_count, codim):
        return random_unit_complex(self.rng(RANDOMIZER_STREAM, prefix_count, codim), (codim, prefix_count))


@dataclass(frozen=True, eq=False)
class BranchTask:
    parent_id: str
    target_index: int
    stage: str
    group_index: int
    copy_index: int
    start: MultiprojectivePoint
    homotopy: Homotopy
    patches: PatchSet
    settings: TrackSettings

    def __post_init__(self):
        if self.stage not in (STAGE_A, STAGE_B):
            raise ValueError(f"unknown stage {self.stage}")
        if self.stage == STAGE_A and self.copy_index < 1:
            raise ValueError("stage A tasks need a copy index of at least 1")


def _track_task(task):
    return track_path(task.homotopy, task.patches, task.start, task.settings)


class PathPool:
    """Runs BranchTasks in worker processes, or inline when max_processes is 1"""

    def __init__(self, max_processes=1, verbose=0):
        self.max_processes = max_processes
        self.verbose = verbose
        self._pool = None

    def __enter__(self):
        if self.max_processes > 1:
            self._pool = Pool(processes=self.max_processes)
        return self

    def __exit__(self, exc_type, exc, tb):
        if self._pool is not None:
            self._pool.close() if exc_type is None else self._pool.terminate()
            self._pool.join()
            self._pool = None
        return False

    def track(self, tasks, desc="Tracking paths"):
        tasks = list(tasks)
        if not tasks:
            return []
        results = self._pool.imap(_track_task, tasks) if self._pool is not None else map(_track_task, tasks)
        if self.verbose:
            results = tqdm(results, total=len(tasks), desc=desc, leave=False, disable=None)
        return list(results)


@dataclass
class RegenResult:
    """
    Outcome of one run.

    stats counts path outcomes under (depth, stage, status value) and the
    membership split under (depth, 'inside') and (depth, 'outside').
    """
    table: object
    root: WitnessNode
    leaves: tuple
    children: dict
    seed: int
    partial: bool = False
    stats: Counter = field(default_factory=Counter)


class RegenContext:
    """Scheduler-side state of one run: system, generic choices, ids, storage"""

    def __init__(self, sys, config, pool, store=None):
        self.system = sys
        self.groups = sys.groups
        self.config = config
        self.pool = pool
        self.store = store
        self.streams = RandomStreams(config.master_seed, sys.groups)
        self.id_rng = self.streams.rng(ID_STREAM)
        self.used_ids = set()
        self.partial = False
        self.stats = Counter()
        self._squared = {}

    def next_point_id(self):
        point_id = persist.fresh_point_id(self.id_rng, self.used_ids)
        self.used_ids.add(point_id)
        return point_id

    def patch_linears(self):
        offsets = self.groups.offsets()
        patches = self.streams.patches()
        return {j: Polynomial.linear_form(vector, range(offsets[j].start, offsets[j].stop), self.groups.n_vars)
                for j, vector in patches.vectors.items()}

    def squared_prefix(self, prefix_count, codim):
        """
        The first prefix_count polynomials as codim equations.

        Extra polynomials are brought to a common multidegree with powers of the
        patch linears and mixed by a generic matrix.
        """
        key = (prefix_count, codim)
        if key in self._squared:
            return self._squared[key]
        polys = self.system.polys[:prefix_count]
        if codim > prefix_count:
            raise ValueError(f"{prefix_count} polynomials cannot cut codimension {codim}")
        if codim == prefix_count:
            squared = tuple(polys)
        else:
            degrees = self.system.degrees[:prefix_count]
            target = degrees.max(axis=0)
            patch_linears = self.patch_linears()
            lifted = []
            for poly, row in zip(polys, degrees):
                for j, linear in patch_linears.items():
                    if target[j] > row[j]:
                        poly = poly * linear ** int(target[j] - row[j])
                lifted.append(poly)
            mix = self.streams.randomizer(prefix_count, codim)
            zero = Polynomial.zero(self.groups.n_vars)
            squared = tuple(reduce(lambda acc, k: acc + lifted[k].scale(mix[r, k]), range(prefix_count), zero)
                            for r in range(codim))
            logger.debug("randomized %d polynomials down to %d equations", prefix_count, codim)
        self._squared[key] = squared
        return squared

    def reachable(self, e, prefix_count):
        """Whether a node of slice type e can still end at one of the requested slice types"""
        targets = self.config.target_dimensions
        if not targets:
            return True
        remaining = len(self.system) - prefix_count
        return any(e.dominates(t) and e.total - t.total <= remaining for t in targets)

    def record(self, outcomes, stage, depth):
        for outcome in outcomes:
            self.stats[(depth, stage, outcome.status.value)] += 1
            if outcome.status is PathStatus.STEP_FAILURE:
                self.partial = True


# ========== Point filters ==========

def _block_norms(x, groups):
    """Per-variable infinity norm of the block each variable belongs to"""
    magnitudes = np.abs(x)
    if groups is None:
        return np.full(x.shape, magnitudes.max() if x.size else 0.0)
    norms = np.empty(x.shape)
    for group, group_slice in zip(groups, groups.offsets()):
        norm = magnitudes[group_slice].max()
        norms[group_slice] = norm if group.is_projective else max(1.0, norm)
    return norms


def relative_residual(poly, x, groups=None):
    """
    |g(x)| over a scale that does not shrink when the terms of g cancel.

    The scale is the larger of the biggest term magnitude and
    sum_k |c_k| * prod_v ||x_block(v)||^{e_kv}. Affine block norms are floored at 1.
    """
    x = np.asarray(x, dtype=complex)
    values = poly.term_values(x)
    value = abs(values.sum())
    if not values.size:
        return 0.0
    bounds = np.abs(poly.coefficients) * np.prod(_block_norms(x, groups)[None, :] ** poly.exponents, axis=1)
    scale = max(float(np.max(np.abs(values))), float(bounds.sum()))
    if scale == 0:
        return 0.0 if value == 0 else np.inf
    return value / scale


def _satisfies(polys, x, tol, groups=None):
    return all(relative_residual(poly, x, groups) <= tol for poly in polys)


def _membership_mask(g, points, tol, groups=None):
    return [relative_residual(g, p.coordinates, groups) <= tol for p in points]


def membership_filter(g, node, tol, groups=None):
    """
    Split the points of a node by whether g vanishes on them.

    The test is relative: |g(p)| <= tol * scale(g, p), see relative_residual.

    Returns:
    - (inside, outside) point tuples
    """
    mask = _membership_mask(g, node.points, tol, groups)
    inside = tuple(p for p, keep in zip(node.points, mask) if keep)
    outside = tuple(p for p, keep in zip(node.points, mask) if not keep)
    return inside, outside


def _same_point(a, b, groups, tol):
    projective = [g.is_projective for g in groups] if groups is not None else [False] * len(a.blocks)
    for is_projective, block_a, block_b in zip(projective, a.blocks, b.blocks):
        if is_projective:
            pivot = int(np.argmax(np.abs(block_a)))
            if block_b[pivot] == 0:
                return False
            block_a = block_a / block_a[pivot]
            block_b = block_b / block_b[pivot]
        if np.max(np.abs(block_a - block_b)) >= tol:
            return False
    return True


def _dedup_indices(points, tol, groups):
    kept = []
    for k, point in enumerate(points):
        if not any(_same_point(points[i], point, groups, tol) for i in kept):
            kept.append(k)
    return kept


def dedup(points, tol, groups=None):
    """
    Greedy clustering: a point within tol (coordinatewise, after normalization)
    of an earlier representative is merged into it. Without groups the stored
    representatives are compared as they are.
    """
    points = list(points)
    return [points[k] for k in _dedup_indices(points, tol, groups)]


def _torus_mask(points, torus_groups, tol):
    return [all(np.min(np.abs(p.blocks[j])) > tol for j in torus_groups) for p in points]


def torus_filter(points, torus_groups, tol):
    """Drop points with a coordinate of magnitude <= tol in any designated group"""
    points = list(points)
    if not torus_groups:
        return points
    return [p for p, keep in zip(points, _torus_mask(points, torus_groups, tol)) if keep]


# ========== One regeneration step ==========

def _keyed(*parts):
    keys = []
    for part in parts:
        keys.extend(part if isinstance(part, (tuple, list, SliceType)) else (part,))
    return keys


def _successful(tasks, outcomes):
    return [(task, outcome) for task, outcome in zip(tasks, outcomes) if outcome.succeeded]


def _save_failures(ctx, tasks, outcomes, child_type, depth):
    if ctx.store is None:
        return
    for task, outcome in zip(tasks, outcomes):
        if outcome.succeeded:
            continue
        node_id = persist.NodeId(depth, (1,) * (depth + 1), child_type.e, task.group_index + 1,
                                 task.copy_index, task.parent_id, ctx.next_point_id())
        coordinates = outcome.endpoint.coordinates if outcome.endpoint is not None else ()
        ctx.store.save_failure(persist.SolutionRecord(node_id, tuple(coordinates)),
                               f"stage{task.stage}_{outcome.status.value}")


def regenerate_step(node, g, config, ctx):
    """
    Regenerate the points of a node through the hypersurface V(g).

    For every group j with m_j >= 1 and e_j >= 1, the last slice linear of group j
    is moved onto each generic linear r_{j,s} (stage A), then the product of all
    r_{j,s} is deformed into g (stage B). Regular endpoints on the full prefix and
    on g form one child node per realized child slice type.

    Parameters:
    - node: WitnessNode whose points all lie outside V(g)
    - g: the next polynomial of the system
    - config: RegenConfig
    - ctx: RegenContext owning the generic choices, worker pool and storage

    Returns:
    - list of child WitnessNodes (empty slice types are omitted)
    """
    groups = ctx.groups
    depth = node.prefix_count
    if not node.point_ids:
        node = WitnessNode(node.prefix_count, node.slice, node.points, node.node_id,
                           tuple(ctx.next_point_id() for _ in node.points))
    m = multidegree_of(g, groups)
    e = node.slice_type
    codim = groups.ambient_dim - e.total
    prefix = ctx.system.polys[:node.prefix_count]
    static_prefix = ctx.squared_prefix(node.prefix_count, codim)
    patches = ctx.streams.patches()
    linears = {(j, s): ctx.streams.regen_linear(depth, j, s)
               for j in range(len(groups)) for s in range(1, int(m[j]) + 1)}
    product = reduce(lambda acc, r: acc * r, linears.values(), Polynomial.constant(1.0, groups.n_vars))

    children = []
    for j in range(len(groups)):
        if m[j] < 1 or e[j] < 1:
            continue
        child_type = e.minus(j)
        if not ctx.reachable(child_type, node.prefix_count + 1):
            logger.info("skipping slice type %s: no requested dimension below it", child_type.e)
            continue
        reduced, removed = node.slice.without_last(j)
        static = tuple(static_prefix) + reduced.polys

        tasks_a = []
        for s in range(1, int(m[j]) + 1):
            homotopy = Homotopy(static, (MovingPair(removed, linears[(j, s)],
                                                    ctx.streams.gamma(*_keyed(GAMMA_KEYS[STAGE_A], depth, e, j, s))),),
                                groups)
            tasks_a.extend(BranchTask(pid, depth, STAGE_A, j, s, point, homotopy, patches, config.track)
                           for pid, point in zip(node.point_ids, node.points))
        outcomes_a = ctx.pool.track(tasks_a, desc=f"depth {depth} group {j + 1} stage A")
        ctx.record(outcomes_a, STAGE_A, depth)
        _save_failures(ctx, tasks_a, outcomes_a, child_type, depth)

        homotopy_b = Homotopy(static, (MovingPair(product, g, ctx.streams.gamma(*_keyed(GAMMA_KEYS[STAGE_B], depth, child_type))),),
                              groups)
        tasks_b = [BranchTask(task.parent_id, depth, STAGE_B, j, task.copy_index, outcome.endpoint, homotopy_b,
                              patches, config.track)
                   for task, outcome in _successful(tasks_a, outcomes_a)
                   if _satisfies(prefix, outcome.endpoint.coordinates, config.membership_tol, groups)]
        outcomes_b = ctx.pool.track(tasks_b, desc=f"depth {depth} group {j + 1} stage B")
        ctx.record(outcomes_b, STAGE_B, depth)
        _save_failures(ctx, tasks_b, outcomes_b, child_type, depth)

        found = []
        for task, outcome in _successful(tasks_b, outcomes_b):
            if _satisfies(prefix + (g,), outcome.endpoint.coordinates, config.membership_tol, groups):
                found.append((task, outcome.endpoint))
            else:
                logger.warning("discarding endpoint off the imposed polynomials (randomization junk)")

        points = [point for _, point in found]
        kept = _dedup_indices(points, config.dedup_tol, groups)
        kept = [k for k in kept if _torus_mask([points[k]], config.torus_groups, config.membership_tol)[0]]
        if not kept:
            if tasks_a and all(o.status is PathStatus.STEP_FAILURE for o in outcomes_a + outcomes_b):
                logger.warning("every path of branch %s at depth %d failed; slice type %s is incomplete",
                               j + 1, depth, child_type.e)
            continue

        point_ids = []
        for k in kept:
            task, point = found[k]
            point_id = ctx.next_point_id()
            point_ids.append(point_id)
            if ctx.store is not None:
                node_id = persist.NodeId(depth, (1,) * (depth + 1), child_type.e, j + 1, task.copy_index,
                                         task.parent_id, point_id)
                ctx.store.save(persist.SolutionRecord(node_id, tuple(point.coordinates)))
        child = WitnessNode(node.prefix_count + 1, reduced, tuple(points[k] for k in kept),
                            f"{node.node_id}/g{j + 1}", tuple(point_ids))
        logger.info("depth %d: slice type %s regenerated into %s with %d points",
                    depth, e.e, child_type.e, len(child))
        children.append(child)
    return children


def _pass_inside(node, inside_indices, ctx):
    """Child node for the points already on the next hypersurface"""
    depth = node.prefix_count
    points = tuple(node.points[k] for k in inside_indices)
    point_ids = []
    for k in inside_indices:
        point_id = ctx.next_point_id()
        point_ids.append(point_id)
        if ctx.store is not None:
            node_id = persist.NodeId(depth, (1,) * (depth + 1), node.slice_type.e, 0, 0,
                                     node.point_ids[k], point_id)
            ctx.store.save(persist.SolutionRecord(node_id, tuple(node.points[k].coordinates)))
    return WitnessNode(node.prefix_count + 1, node.slice, points, f"{node.node_id}/in", tuple(point_ids))


def expand(node, config, ctx):
    """Membership split followed by regeneration of the outside points"""
    g = ctx.system.polys[node.prefix_count]
    mask = _membership_mask(g, node.points, config.membership_tol, ctx.groups)
    inside = [k for k, keep in enumerate(mask) if keep]
    outside = [k for k, keep in enumerate(mask) if not keep]
    ctx.stats[(node.prefix_count, MEMBERSHIP_INSIDE)] += len(inside)
    ctx.stats[(node.prefix_count, MEMBERSHIP_OUTSIDE)] += len(outside)
    logger.info("depth %d, slice type %s: %d inside V(%s), %d outside",
                node.prefix_count, node.slice_type.e, len(inside), ctx.system.names[node.prefix_count], len(outside))

    children = []
    if inside and ctx.reachable(node.slice_type, node.prefix_count + 1):
        children.append(_pass_inside(node, inside, ctx))
    if outside:
        outside_node = WitnessNode(node.prefix_count, node.slice, tuple(node.points[k] for k in outside),
                                   node.node_id, tuple(node.point_ids[k] for k in outside))
        children.extend(regenerate_step(outside_node, g, config, ctx))
    return children


def _merge_leaves(leaves, config, groups):
    """One node per slice type with duplicates across lineages removed"""
    by_type = {}
    for leaf in leaves:
        by_type.setdefault(leaf.slice_type, []).append(leaf)
    merged = []
    for e, nodes in sorted(by_type.items(), reverse=True):
        points = [p for leaf in nodes for p in leaf.points]
        ids = [pid for leaf in nodes for pid in leaf.point_ids]
        kept = _dedup_indices(points, config.dedup_tol, groups)
        if len(kept) < len(points):
            logger.warning("slice type %s: %d duplicate leaf points merged", e.e, len(points) - len(kept))
        merged.append(WitnessNode(nodes[0].prefix_count, nodes[0].slice, tuple(points[k] for k in kept),
                                  nodes[0].node_id, tuple(ids[k] for k in kept)))
    return merged


def run(sys, config):
    """
    Compute the multidegree of the variety cut out by sys.

    Parameters:
    - sys: PolySystem
    - config: RegenConfig; when output_dir is set every regular endpoint is
      written under output_dir/run/ as soon as it is found

    Returns:
    - RegenResult carrying the MultidegreeTable, the root node, the leaves and
      the parent-to-children map of node ids

    Raises:
    - ValueError when config and sys disagree; OSError from the file store
    """
    config.check_system(sys)
    groups = sys.groups
    store = None
    if config.output_dir is not None:
        store = persist.SolutionStore(config.output_dir)
        store.reset()

    logger.info("multiregeneration with seed %d, strategy %s, %d process(es)",
                config.master_seed, config.strategy.value, config.max_processes)
    with PathPool(config.max_processes, config.verbose) as pool:
        ctx = RegenContext(sys, config, pool, store)
        streams = ctx.streams
        root = root_witness(groups, streams.rng(ROOT_STREAM), config.track,
                            slice_=streams.root_slice(), patches=streams.patches())
        root = WitnessNode(0, root.slice, root.points, 'root', (ctx.next_point_id(),))

        frontier = deque([root])
        leaves = []
        children_of = {}
        while frontier:
            node = frontier.pop() if config.strategy is Strategy.DFS else frontier.popleft()
            if node.prefix_count == len(sys):
                leaves.append(node)
                continue
            children = [child for child in expand(node, config, ctx) if len(child)]
            children_of[node.node_id] = tuple(child.node_id for child in children)
            if config.strategy is Strategy.DFS:
                frontier.extend(reversed(children))
            else:
                frontier.extend(children)

    merged = _merge_leaves(leaves, config, groups)
    table = multidegree_table(merged, groups)
    if config.target_dimensions:
        wanted = set(config.target_dimensions)
        table = type(table)(tuple(row for row in table.rows if row[1] in wanted), table.dims)

    logger.info("finished: %s; path statistics %s", table.polynomial_text(), dict(ctx.stats))
    if ctx.partial:
        logger.warning("some paths failed; the multidegree may be incomplete")
    return RegenResult(table, root, tuple(merged), children_of, config.master_seed, ctx.partial, ctx.stats)
