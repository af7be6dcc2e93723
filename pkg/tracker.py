"""
Tracker Module
Follows one solution path of a homotopy from t = 1 to t = 0 with an Euler
predictor, a Newton corrector and adaptive step control, then classifies the
endpoint.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from numerics import (
    SINGULARITY_THRESHOLD,
    NewtonReport,
    SingularMatrixError,
    is_numerically_singular,
    lu_solve,
    newton_correct,
    residual_norm,
    smallest_singular_value,
)
from polysys import (
    MultiprojectivePoint,
    ParseError,
    evaluate_polys,
    jacobian_polys,
    multidegree_of,
    random_unit_complex,
    strip_comments,
)

logger = logging.getLogger(__name__)

TRACKING_OPTION_KEYS = {'FinalTol': 'final_tol'}


class PathStatus(Enum):
    REGULAR_SUCCESS = 'RegularSuccess'
    SINGULAR_ENDPOINT = 'SingularEndpoint'
    DIVERGED = 'Diverged'
    STEP_FAILURE = 'StepFailure'


@dataclass(frozen=True)
class TrackSettings:
    initial_step: float = 0.1
    min_step: float = 1e-10
    step_increase: float = 2.0
    step_decrease: float = 0.5
    successes_before_increase: int = 5
    corrector_tol: float = 1e-7
    corrector_max_iter: int = 3
    final_tol: float = 1e-10
    max_steps: int = 10000
    infinity_threshold: float = 1e8
    endgame_start: float = 1e-4
    max_correction: float = 0.1
    singular_threshold: float = SINGULARITY_THRESHOLD
    refine_max_iter: int = 10

    def __post_init__(self):
        if not 0 < self.min_step < self.initial_step <= 1:
            raise ValueError("step sizes must satisfy 0 < min_step < initial_step <= 1")
        if not 0 < self.step_decrease < 1 or self.step_increase < 1:
            raise ValueError("step_decrease must lie in (0, 1) and step_increase be at least 1")
        for name in ('corrector_tol', 'final_tol', 'infinity_threshold', 'endgame_start',
                     'max_correction', 'singular_threshold'):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.corrector_max_iter < 1 or self.max_steps < 1 or self.refine_max_iter < 1:
            raise ValueError("iteration limits must be at least 1")


@dataclass(frozen=True, eq=False)
class MovingPair:
    """Row t*gamma*start + (1 - t)*target"""
    start: object
    target: object
    gamma: complex = 1 + 0j


@dataclass(frozen=True, eq=False)
class Homotopy:
    static_eqs: tuple
    moving_eqs: tuple
    groups: object

    def __post_init__(self):
        object.__setattr__(self, 'static_eqs', tuple(self.static_eqs))
        object.__setattr__(self, 'moving_eqs', tuple(self.moving_eqs))
        projective = list(self.groups.projective_indices)
        for k, pair in enumerate(self.moving_eqs):
            start = multidegree_of(pair.start, self.groups)[projective]
            target = multidegree_of(pair.target, self.groups)[projective]
            if not np.array_equal(start, target):
                raise ValueError(
                    f"moving row {k}: start multidegree {start.tolist()} differs from target {target.tolist()}")

    @property
    def n_equations(self):
        return len(self.static_eqs) + len(self.moving_eqs)


@dataclass(frozen=True, eq=False)
class PatchSet:
    """One normalization <p_j, x_j> = 1 per projective group"""
    groups: object
    vectors: dict = field(default_factory=dict)

    @classmethod
    def random(cls, groups, rng):
        return cls(groups, {j: random_unit_complex(rng, groups[j].size) for j in groups.projective_indices})

    def __len__(self):
        return len(self.vectors)

    def evaluate(self, x):
        offsets = self.groups.offsets()
        return np.array([self.vectors[j] @ x[offsets[j]] - 1 for j in sorted(self.vectors)], dtype=complex)

    def jacobian(self, n_vars):
        offsets = self.groups.offsets()
        rows = np.zeros((len(self.vectors), n_vars), dtype=complex)
        for row, j in enumerate(sorted(self.vectors)):
            rows[row, offsets[j]] = self.vectors[j]
        return rows

    def rescale(self, x):
        """Scale each projective block of x onto its patch"""
        x = np.array(x, dtype=complex)
        offsets = self.groups.offsets()
        for j, vector in self.vectors.items():
            value = vector @ x[offsets[j]]
            if abs(value) < 1e-14 * max(1.0, np.max(np.abs(x[offsets[j]]))):
                raise ValueError(f"point lies on the hyperplane at infinity of the patch for group {j}")
            x[offsets[j]] /= value
        return x


@dataclass(frozen=True, eq=False)
class TrackOutcome:
    status: PathStatus
    endpoint: MultiprojectivePoint = None
    residual: float = float('nan')
    sigma_min: float = float('nan')
    steps: int = 0
    final_t: float = 1.0

    @property
    def succeeded(self):
        return self.status is PathStatus.REGULAR_SUCCESS


def _check_square(h, patches):
    n_rows = h.n_equations + len(patches)
    if n_rows != h.groups.n_vars:
        raise ValueError(f"homotopy has {n_rows} equations after patching but {h.groups.n_vars} variables")


def make_patched_system(h, t, patches):
    """
    Evaluators for H(x, t) and its x-Jacobian at a fixed t.

    Rows are ordered static equations, moving rows t*gamma*start + (1-t)*target,
    then one patch row per projective group.

    Returns:
    - (F_eval, J_eval) closures over flat coordinate vectors
    """
    _check_square(h, patches)
    t = float(t)
    n_vars = h.groups.n_vars
    starts = [pair.start for pair in h.moving_eqs]
    targets = [pair.target for pair in h.moving_eqs]
    gammas = np.array([pair.gamma for pair in h.moving_eqs], dtype=complex)
    patch_jacobian = patches.jacobian(n_vars)

    def F_eval(x):
        x = np.asarray(x, dtype=complex)
        moving = t * gammas * evaluate_polys(starts, x) + (1 - t) * evaluate_polys(targets, x)
        return np.concatenate([evaluate_polys(h.static_eqs, x), moving, patches.evaluate(x)])

    def J_eval(x):
        x = np.asarray(x, dtype=complex)
        moving = t * gammas[:, None] * jacobian_polys(starts, x) + (1 - t) * jacobian_polys(targets, x)
        return np.vstack([jacobian_polys(h.static_eqs, x), moving.reshape(-1, n_vars), patch_jacobian])

    return F_eval, J_eval


def time_derivative(h, patches, x):
    """dH/dt at x: gamma*start - target on moving rows, zero elsewhere"""
    x = np.asarray(x, dtype=complex)
    moving = np.array([pair.gamma * pair.start.evaluate(x) - pair.target.evaluate(x) for pair in h.moving_eqs],
                      dtype=complex)
    return np.concatenate([np.zeros(len(h.static_eqs), dtype=complex), moving,
                           np.zeros(len(patches), dtype=complex)])


def refine_endpoint(F_eval, J_eval, x, final_tol, max_iter=10):
    """
    Sharpen an endpoint with Newton's method.

    The iterate counts as converged once the residual is at most final_tol and
    the last correction is below final_tol relative to the point, so slowly
    contracting iterations near a multiple root are not mistaken for convergence.
    The best iterate seen is returned when max_iter corrections are not enough.
    """
    x = np.array(x, dtype=complex)
    residual = residual_norm(F_eval(x))
    residuals = [residual]
    if residual == 0:
        return NewtonReport(x, 0.0, 0, True, residuals=(0.0,))

    best_x, best_residual = x, residual
    for iteration in range(1, max_iter + 1):
        try:
            dx = lu_solve(J_eval(x), F_eval(x))
        except SingularMatrixError:
            return NewtonReport(best_x, best_residual, iteration - 1, False, singular=True, residuals=tuple(residuals))
        x = x - dx
        residual = residual_norm(F_eval(x))
        residuals.append(residual)
        if not np.isfinite(residual):
            break
        if residual <= best_residual:
            best_x, best_residual = x, residual
        step = float(np.max(np.abs(dx)))
        if residual <= final_tol and step <= final_tol * max(1.0, float(np.max(np.abs(x)))):
            return NewtonReport(best_x, best_residual, iteration, True, residuals=tuple(residuals))
    return NewtonReport(best_x, best_residual, len(residuals) - 1, False, residuals=tuple(residuals))


def classify_endpoint(F_eval, J_eval, x, s, groups=None, refinement=None):
    """
    Decide the status of a t = 0 endpoint.

    RegularSuccess needs residual <= final_tol and a Jacobian that is not
    numerically singular. A small residual with a singular Jacobian, or with a
    refinement that never settled, is a SingularEndpoint. Anything else is a
    StepFailure.
    """
    x = np.asarray(x, dtype=complex)
    residual = residual_norm(F_eval(x))
    J = J_eval(x)
    sigma_min = smallest_singular_value(J)
    singular = is_numerically_singular(J, s.singular_threshold)
    unsettled = refinement is not None and not refinement.converged

    endpoint = None
    if groups is not None:
        try:
            endpoint = MultiprojectivePoint.from_vector(groups, x)
        except ValueError:
            endpoint = None

    if residual <= s.final_tol and not singular and not unsettled:
        status = PathStatus.REGULAR_SUCCESS
    elif residual <= s.final_tol or (refinement is not None and refinement.singular) or (unsettled and singular):
        status = PathStatus.SINGULAR_ENDPOINT
    else:
        status = PathStatus.STEP_FAILURE
    return TrackOutcome(status, endpoint, residual, sigma_min, final_t=0.0)


def _diverging(x, s):
    return float(np.max(np.abs(x))) > s.infinity_threshold


def _settle(h, patches, x, s, steps):
    F0, J0 = make_patched_system(h, 0.0, patches)
    refinement = refine_endpoint(F0, J0, x, s.final_tol, s.refine_max_iter)
    outcome = classify_endpoint(F0, J0, refinement.final_point, s, h.groups, refinement)
    return replace(outcome, steps=steps)


def track_path(h, patches, start, s):
    """
    Track one path of h from t = 1 to t = 0.

    Parameters:
    - h: Homotopy, square once the patches are added
    - patches: PatchSet for the projective groups
    - start: MultiprojectivePoint solving H(., 1)
    - s: TrackSettings

    Returns:
    - TrackOutcome; numerical trouble never escapes as an exception
    """
    _check_square(h, patches)
    try:
        x = patches.rescale(start.coordinates)
    except ValueError:
        logger.debug("start point is not on a finite patch chart")
        return TrackOutcome(PathStatus.STEP_FAILURE)

    F1, J1 = make_patched_system(h, 1.0, patches)
    polish = newton_correct(F1, J1, x, s.corrector_tol, s.corrector_max_iter)
    if not polish.converged:
        logger.debug("start point rejected: residual %.3e", polish.residual_norm)
        return TrackOutcome(PathStatus.STEP_FAILURE, residual=polish.residual_norm)
    x = polish.final_point

    t = 1.0
    step = s.initial_step
    streak = 0
    steps = 0
    while t > 0:
        if steps >= s.max_steps:
            logger.debug("step budget exhausted at t=%.3e", t)
            return TrackOutcome(PathStatus.STEP_FAILURE, steps=steps, final_t=t)
        steps += 1

        dt = min(step, t)
        t_next = t - dt if t - dt > 1e-15 else 0.0
        F_t, J_t = make_patched_system(h, t, patches)
        try:
            velocity = lu_solve(J_t(x), time_derivative(h, patches, x))
            x_pred = x + dt * velocity
            F_next, J_next = make_patched_system(h, t_next, patches)
            report = newton_correct(F_next, J_next, x_pred, s.corrector_tol, s.corrector_max_iter)
            jump = float(np.max(np.abs(report.final_point - x_pred)))
            accepted = report.converged and jump <= s.max_correction * max(1.0, float(np.max(np.abs(x_pred))))
        except SingularMatrixError:
            accepted = False

        if accepted:
            x = report.final_point
            t = t_next
            if _diverging(x, s):
                logger.debug("path diverged at t=%.3e", t)
                return TrackOutcome(PathStatus.DIVERGED, residual=report.residual_norm, steps=steps, final_t=t)
            streak += 1
            if streak >= s.successes_before_increase:
                step = min(step * s.step_increase, s.initial_step)
                streak = 0
            continue

        streak = 0
        step *= s.step_decrease
        if step < s.min_step:
            if t <= s.endgame_start:
                logger.debug("path stalled at t=%.3e, settling at t=0", t)
                return _settle(h, patches, x, s, steps)
            logger.debug("step size underflow at t=%.3e", t)
            return TrackOutcome(PathStatus.STEP_FAILURE, steps=steps, final_t=t)

    outcome = _settle(h, patches, x, s, steps)
    logger.debug("path finished in %d steps: %s (residual %.3e)", steps, outcome.status.value, outcome.residual)
    return outcome


def parse_tracking_options(text):
    """
    Read `Key: value;` lines of a tracking-options file.

    Returns:
    - dict of TrackSettings field overrides; unknown keys are logged and skipped
    """
    overrides = {}
    for number, raw in enumerate(strip_comments(text).splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        for statement in filter(None, (part.strip() for part in line.split(';'))):
            key, sep, value = statement.partition(':')
            if not sep:
                raise ParseError(f"expected 'Key: value;' but found '{statement}'", number)
            key = key.strip()
            if key not in TRACKING_OPTION_KEYS:
                logger.warning("ignoring unknown tracking option %s", key)
                continue
            try:
                overrides[TRACKING_OPTION_KEYS[key]] = float(value.strip())
            except ValueError:
                raise ParseError(f"{key} needs a real value, got '{value.strip()}'", number) from None
    return overrides
