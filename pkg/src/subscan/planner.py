"""Sensing-sequence planners.

The main planner alternates: score every candidate point with Expected
Improvement over the current occupancy posterior, pick the best, find a
workspace pose that points at it, sense, and fold the reading back into
the map. Two baselines share the bookkeeping: uniform random poses
without replacement, and a coarse-to-fine multi-resolution raster scan.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from . import hilbert_map as hm
from . import metrics as metrics_mod
from . import sensor as sensor_mod
from .scenario import seed_entropy

PLANNER_STREAM = 211

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class AcquisitionConfig:
    """Parameters for choosing the next query point and pose."""

    candidate_points: np.ndarray
    ei_xi: float = 0.01
    angle_threshold: float = math.radians(5.0)

    def __post_init__(self):
        cand = np.atleast_2d(np.asarray(self.candidate_points, dtype=np.float64))
        if cand.shape[0] < 1 or cand.shape[1] != 3:
            raise ValueError("candidate_points must be a non-empty (C, 3) array")
        if self.ei_xi < 0:
            raise ValueError("ei_xi must be non-negative")
        if not (0.0 < self.angle_threshold <= math.pi):
            raise ValueError("angle_threshold must lie in (0, pi]")
        object.__setattr__(self, "candidate_points", cand)


def ei_values(mean, std, f_best, ei_xi):
    """Closed-form Expected Improvement, vectorized.

    With d = mean - f_best - ei_xi: EI = d Phi(d/s) + s phi(d/s) for
    s > 0, and max(0, d) for s = 0. Non-negative for all finite inputs.
    """
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    d = mean - f_best - ei_xi
    out = np.maximum(d, 0.0)  # exact closed form at s = 0
    pos = std > 0
    if np.any(pos):
        z = d[pos] / std[pos]
        phi = np.exp(-0.5 * z * z) / _SQRT_2PI
        # Clamp: the analytic value is >= 0 but the two terms cancel
        # catastrophically deep in the left tail.
        out[pos] = np.maximum(d[pos] * ndtr(z) + std[pos] * phi, 0.0)
    return out


def expected_improvement(estimate, f_best, ei_xi):
    """EI of one occupancy estimate against the incumbent best value."""
    value = ei_values(
        np.array([estimate.probability]),
        np.array([math.sqrt(estimate.latent_variance)]),
        f_best,
        ei_xi,
    )
    return float(value[0])


def _candidate_scores(posterior, grid, config, features=None):
    prob, _, var = hm.query_arrays(
        posterior, grid, config.candidate_points, features=features
    )
    f_best = float(prob.max())
    scores = ei_values(prob, np.sqrt(var), f_best, config.ei_xi)
    return scores, f_best


def select_query_point(posterior, grid, config, features=None):
    """Candidate point maximizing EI; ties break to the lowest index."""
    scores, _ = _candidate_scores(posterior, grid, config, features)
    idx = int(np.argmax(scores))
    return config.candidate_points[idx].copy()


def pose_alignment_angles(target, workspace):
    """Angle between each pose's orientation and its view ray to target.

    A pose coincident with the target gets angle 0.
    """
    q = np.asarray(target, dtype=np.float64) - workspace.positions
    norms = np.linalg.norm(q, axis=1)
    dots = np.einsum("ij,ij->i", workspace.orientations, q)
    with np.errstate(invalid="ignore", divide="ignore"):
        cosang = np.where(norms > 0, dots / np.where(norms > 0, norms, 1.0), 1.0)
    return np.arccos(np.clip(cosang, -1.0, 1.0))


def next_sensing_pose_index(target, workspace, config):
    angles = pose_alignment_angles(target, workspace)
    qualifying = np.flatnonzero(angles <= config.angle_threshold)
    if qualifying.size:
        return int(qualifying[0])
    return int(np.argmin(angles))


def next_sensing_pose(a_t, workspace, config):
    """First workspace pose pointing at a_t within the angle threshold.

    Poses are scanned in workspace order; when none qualifies, the pose
    with the smallest alignment angle is returned.
    """
    if len(workspace) < 1:
        raise ValueError("workspace is empty")
    return workspace.pose(next_sensing_pose_index(a_t, workspace, config))


@dataclass
class PlanTrace:
    """Recorded outcome of one planning run.

    coverage (and auprc, when evaluated) carry one entry per iteration
    plus a leading entry for the state before any sensing, so their
    length is len(pose_indices) + 1.
    """

    pose_indices: list = field(default_factory=list)
    readings: list = field(default_factory=list)
    coverage: list = field(default_factory=list)
    auprc: list | None = None
    poses_to_detection: int | None = None
    detection_threshold: float = 0.95
    repeat_count: int = 0
    final_posterior: object = None
    workspace: object = None

    @property
    def iterations(self):
        return len(self.pose_indices)

    @property
    def poses(self):
        return [self.workspace.pose(i) for i in self.pose_indices]


class _TraceRecorder:
    """Shared bookkeeping for all planners."""

    def __init__(self, anatomy, detection_threshold, evaluate):
        self.anatomy = anatomy
        self.n_tumor = int(anatomy.tumor_mask.sum())
        if self.n_tumor == 0:
            raise ValueError("planning needs at least one tumor point")
        self.covered = set()
        self.detection_threshold = detection_threshold
        self.evaluate = evaluate
        self.trace = PlanTrace(
            coverage=[0.0],
            auprc=None if evaluate is None else [],
            detection_threshold=detection_threshold,
        )

    def record_prior(self, posterior):
        if self.evaluate is not None:
            self.trace.auprc.append(self.evaluate(posterior))

    def record(self, pose_index, reading, posterior):
        trace = self.trace
        if pose_index in trace.pose_indices:
            trace.repeat_count += 1
        trace.pose_indices.append(pose_index)
        trace.readings.append(reading)
        tumor = self.anatomy.tumor_mask
        real = reading.anatomy_indices[reading.anatomy_indices >= 0]
        self.covered.update(int(i) for i in real if tumor[i])
        cov = len(self.covered) / self.n_tumor
        trace.coverage.append(cov)
        if (
            trace.poses_to_detection is None
            and cov >= self.detection_threshold
        ):
            trace.poses_to_detection = trace.iterations
        if self.evaluate is not None:
            trace.auprc.append(self.evaluate(posterior))
        return cov

    def finish(self, posterior, workspace):
        self.trace.final_posterior = posterior
        self.trace.workspace = workspace
        return self.trace


def _make_evaluator(grid, eval_points, eval_labels, eval_features):
    if eval_points is None:
        return None
    eval_points = np.atleast_2d(np.asarray(eval_points, dtype=np.float64))
    eval_labels = np.asarray(eval_labels)
    if eval_features is None:
        eval_features = grid.features(eval_points)

    def evaluate(posterior):
        curve = metrics_mod.evaluate_map(
            posterior, grid, eval_points, eval_labels, features=eval_features
        )
        return curve.auprc

    return evaluate


def plan(anatomy, workspace, sensor, map_config, acq_config, budget, seed, *,
         stop_coverage=None, detection_threshold=0.95, filler=200,
         eval_points=None, eval_labels=None, candidate_features=None,
         eval_features=None):
    """Acquisition-driven sensing loop.

    The first pose is drawn uniformly at random from the workspace; each
    later pose comes from maximizing EI over the candidate points and
    aiming at the winner. Stops at the budget, or earlier when coverage
    reaches stop_coverage (if set).
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if len(workspace) < 1:
        raise ValueError("workspace is empty")
    grid = map_config.make_grid(anatomy.bounds)
    posterior = hm.init_posterior(grid.size, map_config.prior_variance)
    if candidate_features is None:
        candidate_features = grid.features(acq_config.candidate_points)
    evaluate = _make_evaluator(grid, eval_points, eval_labels, eval_features)
    recorder = _TraceRecorder(anatomy, detection_threshold, evaluate)
    recorder.record_prior(posterior)
    rng = np.random.default_rng(seed_entropy(PLANNER_STREAM, seed))

    for t in range(1, budget + 1):
        if t == 1:
            pose_index = int(rng.integers(len(workspace)))
        else:
            target = select_query_point(
                posterior, grid, acq_config, features=candidate_features
            )
            pose_index = next_sensing_pose_index(target, workspace, acq_config)
        reading = sensor_mod.sense(
            workspace.pose(pose_index), sensor, anatomy, filler=filler
        )
        if reading.n:
            posterior = hm.update(
                posterior, reading, grid,
                em_tol=map_config.em_tol, em_max_iter=map_config.em_max_iter,
            )
        cov = recorder.record(pose_index, reading, posterior)
        if stop_coverage is not None and cov >= stop_coverage:
            break
    return recorder.finish(posterior, workspace)


def _run_pose_sequence(pose_indices, anatomy, workspace, sensor, *,
                       map_config=None, stop_coverage=None,
                       detection_threshold=0.95, filler=200,
                       eval_points=None, eval_labels=None, eval_features=None):
    """Sense a fixed pose sequence with full trace bookkeeping.

    Baseline planners do not consult the map to pick poses, so the
    posterior is maintained only when an evaluation lattice asks for
    map-quality metrics.
    """
    maintain_map = eval_points is not None
    grid = posterior = None
    evaluate = None
    if maintain_map:
        if map_config is None:
            raise ValueError("map_config is required when evaluating AUPRC")
        grid = map_config.make_grid(anatomy.bounds)
        posterior = hm.init_posterior(grid.size, map_config.prior_variance)
        evaluate = _make_evaluator(grid, eval_points, eval_labels, eval_features)
    recorder = _TraceRecorder(anatomy, detection_threshold, evaluate)
    recorder.record_prior(posterior)
    for pose_index in pose_indices:
        reading = sensor_mod.sense(
            workspace.pose(pose_index), sensor, anatomy, filler=filler
        )
        if maintain_map and reading.n:
            posterior = hm.update(
                posterior, reading, grid,
                em_tol=map_config.em_tol, em_max_iter=map_config.em_max_iter,
            )
        cov = recorder.record(int(pose_index), reading, posterior)
        if stop_coverage is not None and cov >= stop_coverage:
            break
    return recorder.finish(posterior, workspace)


def plan_random(anatomy, workspace, sensor, budget, seed, **kwargs):
    """Uniform-without-replacement baseline."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if budget > len(workspace):
        raise ValueError(
            f"budget {budget} exceeds the {len(workspace)} available poses"
        )
    rng = np.random.default_rng(seed_entropy(PLANNER_STREAM, seed))
    order = rng.permutation(len(workspace))[:budget]
    return _run_pose_sequence(order, anatomy, workspace, sensor, **kwargs)


def multiresolution_cell_centers(round_index, x_range, y_range):
    """Raster-ordered cell centers of round r: 4**(r-1) equal cells."""
    n = 2 ** (round_index - 1)
    x0, x1 = x_range
    y0, y1 = y_range
    wx = (x1 - x0) / n
    wy = (y1 - y0) / n
    centers = []
    for i in range(n):
        for j in range(n):
            centers.append((x0 + (j + 0.5) * wx, y0 + (i + 0.5) * wy))
    return np.asarray(centers)


def multiresolution_pose_indices(workspace, budget):
    """Pose sequence of the coarse-to-fine scan, truncated at budget."""
    xy = workspace.positions[:, :2]
    x_range = (float(xy[:, 0].min()), float(xy[:, 0].max()))
    y_range = (float(xy[:, 1].min()), float(xy[:, 1].max()))
    indices = []
    round_index = 1
    while len(indices) < budget:
        for cx, cy in multiresolution_cell_centers(round_index, x_range, y_range):
            d2 = (xy[:, 0] - cx) ** 2 + (xy[:, 1] - cy) ** 2
            indices.append(int(np.argmin(d2)))
            if len(indices) == budget:
                break
        round_index += 1
    return indices


def plan_multiresolution(anatomy, workspace, sensor, budget, **kwargs):
    """Coarse-to-fine raster baseline: sense nearest poses to cell centers."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    indices = multiresolution_pose_indices(workspace, budget)
    return _run_pose_sequence(indices, anatomy, workspace, sensor, **kwargs)
