"""Noiseless cone-volume sensing.

A sensing action at a pose returns every anatomy point inside the cone
plus a deterministic low-discrepancy set of filler points, each paired
with its exact ground-truth occupancy. Filler points supply the
negative evidence the occupancy map needs in empty regions.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc


@dataclass(frozen=True)
class ConeSensor:
    """Cone geometry: half-opening angle (radians) and axial depth."""

    half_angle: float
    depth: float

    def __post_init__(self):
        if not (0.0 < self.half_angle < math.pi / 2.0):
            raise ValueError("half_angle must lie in (0, pi/2)")
        if not (self.depth > 0.0):
            raise ValueError("depth must be positive")


@dataclass(frozen=True)
class SensorReading:
    """Labeled occupancy tuples from one sensing action.

    anatomy_indices maps each sample back into the anatomy cloud
    (-1 for filler points), which keeps coverage accounting exact.
    """

    pose: object
    points: np.ndarray
    occupied: np.ndarray
    anatomy_indices: np.ndarray

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def samples(self):
        """(point, occupied) tuples in sample order."""
        return [
            (tuple(p), int(o)) for p, o in zip(self.points, self.occupied)
        ]


def cone_mask(position, orientation, sensor, points):
    """Vectorized cone membership for an (n, 3) array of points.

    A point x is inside iff its axial coordinate t = (x - p) . o lies
    in [0, depth] and the angle between (x - p) and o is at most the
    half angle. The apex itself counts as inside.
    """
    d = np.atleast_2d(points) - np.asarray(position, dtype=np.float64)
    t = d @ np.asarray(orientation, dtype=np.float64)
    norms = np.linalg.norm(d, axis=1)
    cos_half = math.cos(sensor.half_angle)
    return (t >= 0.0) & (t <= sensor.depth) & (t >= norms * cos_half)


def cone_contains(pose, sensor, x):
    """Scalar cone membership test."""
    return bool(
        cone_mask(pose.position, pose.orientation, sensor,
                  np.asarray(x, dtype=np.float64).reshape(1, 3))[0]
    )


def cone_basis(orientation):
    """Deterministic right-handed orthonormal complement (u, v) of the axis."""
    o = np.asarray(orientation, dtype=np.float64)
    helper = np.array([0.0, 0.0, 1.0]) if abs(o[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(o, helper)
    u /= np.linalg.norm(u)
    v = np.cross(o, u)
    return u, v


def filler_points(pose, sensor, count):
    """Halton-sequence filler points inside the cone.

    Half the points are uniform in the cone volume; the other half are
    uniform along the axis (dense near the apex, where per-slice volume
    vanishes and purely volumetric sampling would leave the near-apex
    region starved of evidence). Deterministic for a given pose and
    sensor; strictly interior by construction.
    """
    if count <= 0:
        return np.empty((0, 3))
    sampler = qmc.Halton(d=3, scramble=False)
    sampler.fast_forward(1)
    u = sampler.random(count)
    n_vol = count // 2
    t = np.empty(count)
    t[:n_vol] = sensor.depth * np.cbrt(u[:n_vol, 0])
    t[n_vol:] = sensor.depth * u[n_vol:, 0]
    radius = t * math.tan(sensor.half_angle) * np.sqrt(u[:, 1])
    ang = 2.0 * math.pi * u[:, 2]
    bu, bv = cone_basis(pose.orientation)
    return (
        pose.position
        + t[:, None] * pose.orientation
        + radius[:, None] * (np.cos(ang)[:, None] * bu + np.sin(ang)[:, None] * bv)
    )


def sense(pose, sensor, anatomy, filler=200):
    """One noiseless sensing action.

    Returns all anatomy points inside the cone plus `filler` volumetric
    samples, each labeled with exact ground truth. An empty cone gives
    an empty reading when filler is 0.
    """
    inside = cone_mask(pose.position, pose.orientation, sensor, anatomy.points)
    idx = np.flatnonzero(inside)
    pts = anatomy.points[idx]
    labels = anatomy.labels[idx]
    fill = filler_points(pose, sensor, filler)
    if fill.shape[0]:
        fill_labels = anatomy.label_points(fill)
        pts = np.concatenate([pts, fill])
        labels = np.concatenate([labels, fill_labels])
        idx = np.concatenate([idx, np.full(fill.shape[0], -1, dtype=np.int64)])
    return SensorReading(
        pose=pose,
        points=pts,
        occupied=np.asarray(labels, dtype=np.uint8),
        anatomy_indices=np.asarray(idx, dtype=np.int64),
    )


def covered_tumor_indices(readings, anatomy):
    """Indices of distinct anatomy tumor points appearing in any reading."""
    tumor = anatomy.tumor_mask
    seen = set()
    for reading in readings:
        real = reading.anatomy_indices[reading.anatomy_indices >= 0]
        seen.update(int(i) for i in real if tumor[i])
    return seen


def coverage_fraction(readings, anatomy):
    """Fraction of ground-truth tumor points sensed so far."""
    n_tumor = int(anatomy.tumor_mask.sum())
    if n_tumor == 0:
        raise ValueError("anatomy has no tumor points; coverage is undefined")
    return len(covered_tumor_indices(readings, anatomy)) / n_tumor
