"""Scenario construction: synthetic anatomies, cloud ingestion, sensor workspaces.

A scenario couples three things: a labeled point cloud (the anatomy,
with ground-truth tumor geometry), the sensing surface above it, and
the workspace of candidate sensing poses derived from that surface.
"""

import csv
import gzip
import importlib.resources
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataFormatError, GeometryError

# Seed-stream tags: every random draw hangs off (tag, seed) so the
# surface, tumor placement, and planner never share a stream.
SURFACE_STREAM = 101
TUMOR_STREAM = 103


def seed_entropy(tag, seed):
    """Normalize (stream tag, seed or seed sequence) into PCG64 entropy."""
    if isinstance(seed, (int, np.integer)):
        return [tag, int(seed)]
    return [tag, *(int(s) for s in seed)]


@dataclass(frozen=True)
class SensingPose:
    """Position plus unit pointing direction of one sensing action."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        ori = np.asarray(self.orientation, dtype=np.float64).reshape(3)
        if not (np.isfinite(pos).all() and np.isfinite(ori).all()):
            raise ValueError("pose contains non-finite values")
        if abs(np.linalg.norm(ori) - 1.0) > 1e-9:
            raise ValueError("orientation must be unit length (within 1e-9)")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", ori)


@dataclass(frozen=True)
class SensorWorkspace:
    """Ordered candidate poses: positions (N, 3) and unit orientations (N, 3)."""

    positions: np.ndarray
    orientations: np.ndarray

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64)
        ori = np.ascontiguousarray(self.orientations, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ValueError("workspace needs at least one (x, y, z) position")
        if ori.shape != pos.shape:
            raise ValueError("orientations must match positions in shape")
        norms = np.linalg.norm(ori, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-9:
            raise ValueError("workspace orientations must be unit length")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "orientations", ori)

    def __len__(self):
        return self.positions.shape[0]

    def pose(self, i):
        return SensingPose(self.positions[i], self.orientations[i])


@dataclass(frozen=True)
class AnatomyModel:
    """Labeled cloud defining the search space and ground-truth tumors.

    spheres, when present, is a (k, 4) array of (cx, cy, cz, r) giving
    the analytic tumor geometry; otherwise arbitrary points are labeled
    by proximity to the stored tumor points (within tumor_label_radius).
    """

    points: np.ndarray
    labels: np.ndarray
    bounds: np.ndarray
    spheres: np.ndarray | None = None
    tumor_label_radius: float | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        bounds = np.asarray(self.bounds, dtype=np.float64).reshape(2, 3)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError("anatomy needs at least one (x, y, z) point")
        if labels.shape != (pts.shape[0],):
            raise ValueError("labels must be one flag per point")
        if not np.isfinite(pts).all():
            raise ValueError("anatomy points contain NaN/inf coordinates")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 (free) or 1 (tumor)")
        eps = 1e-9
        if ((pts < bounds[0] - eps) | (pts > bounds[1] + eps)).any():
            raise ValueError("anatomy points fall outside the stated bounds")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "bounds", bounds)
        if self.spheres is not None:
            spheres = np.asarray(self.spheres, dtype=np.float64).reshape(-1, 4)
            object.__setattr__(self, "spheres", spheres)

    @property
    def n_points(self):
        return self.points.shape[0]

    @property
    def tumor_mask(self):
        return self.labels == 1

    @property
    def tumor_points(self):
        return self.points[self.tumor_mask]

    @cached_property
    def _tumor_tree(self):
        return cKDTree(self.tumor_points)

    @cached_property
    def _auto_label_radius(self):
        tumor = self.tumor_points
        if tumor.shape[0] < 2:
            return 0.0
        d, _ = cKDTree(tumor).query(tumor, k=2)
        return float(np.median(d[:, 1]))

    def label_points(self, q):
        """Ground-truth occupancy of arbitrary query points.

        Uses the analytic spheres when available, else a ball union of
        radius tumor_label_radius around the stored tumor points.
        """
        q = np.atleast_2d(np.asarray(q, dtype=np.float64))
        out = np.zeros(q.shape[0], dtype=np.uint8)
        if self.spheres is not None:
            for cx, cy, cz, r in self.spheres:
                d2 = ((q - np.array([cx, cy, cz])) ** 2).sum(axis=1)
                out |= (d2 <= r * r).astype(np.uint8)
            return out
        if not self.tumor_mask.any():
            return out
        radius = self.tumor_label_radius
        if radius is None:
            radius = self._auto_label_radius
        if radius <= 0:
            return out
        d, _ = self._tumor_tree.query(q, k=1)
        out[d <= radius] = 1
        return out


def _surface_height(params, x, y):
    """Signed Gaussian bumps on an optional dome (peaks-style field).

    The dome term is a paraboloid cap of the given height over the
    patch, mimicking the convex top of an organ; bumps ride on it.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    g = 0.0
    for a, cx, cy, s in params["bumps"]:
        g = g + a * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * s * s))
    h = params["base"] + params["amp"] * g
    dome = params.get("dome", 0.0)
    if dome:
        half = params["half_extent"]
        h = h + dome * (1.0 - (x * x + y * y) / (2.0 * half * half))
    return h


@dataclass(frozen=True)
class SurfacePatch:
    """Sampled height field z = h(x, y) over a square patch."""

    points: np.ndarray
    extent: float
    resolution: int
    params: dict = field(compare=False, default_factory=dict)

    @property
    def min_height(self):
        return float(self.points[:, 2].min())

    @property
    def max_height(self):
        return float(self.points[:, 2].max())

    def height(self, x, y):
        """Analytic surface height at arbitrary (x, y)."""
        return _surface_height(self.params, x, y)


def generate_surface(grid_resolution, seed, *, extent=12.0, base_height=9.6,
                     amplitude=1.0, n_bumps=12, dome_height=0.0):
    """Uneven sensing surface: signed Gaussian bumps on a square grid.

    Returns a SurfacePatch whose .points hold grid_resolution**2 samples
    of z = h(x, y) over [-extent/2, extent/2]^2. Bump amplitudes, signs,
    widths, and centers are drawn deterministically from the seed, and
    the overall amplitude is seed-scaled, so every seed yields a
    different uneven organ surface.
    """
    if grid_resolution < 2:
        raise ValueError("grid_resolution must be at least 2")
    rng = np.random.default_rng(seed_entropy(SURFACE_STREAM, seed))
    half = extent / 2.0
    bumps = []
    for k in range(n_bumps):
        sign = 1.0 if k % 2 == 0 else -1.0
        bumps.append(
            (
                sign * rng.uniform(0.55, 1.0),
                rng.uniform(-0.9 * half, 0.9 * half),
                rng.uniform(-0.9 * half, 0.9 * half),
                rng.uniform(0.08 * extent, 0.13 * extent),
            )
        )
    params = {
        "base": float(base_height),
        "amp": float(amplitude * rng.uniform(0.85, 1.15)),
        "bumps": bumps,
        "dome": float(dome_height),
        "half_extent": half,
    }
    axis = np.linspace(-half, half, grid_resolution)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    zz = _surface_height(params, xx, yy)
    pts = np.stack([xx.reshape(-1), yy.reshape(-1), zz.reshape(-1)], axis=1)
    return SurfacePatch(points=pts, extent=float(extent),
                        resolution=int(grid_resolution), params=params)


@dataclass(frozen=True)
class TumorSphere:
    center: np.ndarray
    radius: float
    points: np.ndarray


def place_spherical_tumor(surface, radius, point_budget, seed, *, floor=0.0,
                          z_top=None, z_range=None, clearance=0.05,
                          max_attempts=10000):
    """Place one spherical tumor strictly below the surface.

    The center is drawn uniformly from the feasible region (rejection
    sampling inside the bounding box, optionally restricted to a center
    depth band z_range); the returned cloud holds point_budget uniform
    samples inside the sphere.
    """
    if point_budget < 1:
        raise ValueError("point_budget must be at least 1")
    if z_top is None:
        z_top = surface.min_height
    half = surface.extent / 2.0
    r = float(radius)
    lo_xy, hi_xy = -half + r, half - r
    lo_z = floor + r + clearance
    hi_z = z_top - r - clearance
    if z_range is not None:
        lo_z = max(lo_z, float(z_range[0]))
        hi_z = min(hi_z, float(z_range[1]))
    if lo_xy >= hi_xy or lo_z >= hi_z:
        raise GeometryError(
            f"no feasible center for tumor radius {r} under this surface"
        )
    rng = np.random.default_rng(seed_entropy(TUMOR_STREAM, seed))
    # Offsets probing the surface over the sphere's footprint disk.
    ang = np.linspace(0.0, 2.0 * math.pi, 8, endpoint=False)
    disk = np.concatenate(
        [np.zeros((1, 2))]
        + [rho * np.stack([np.cos(ang), np.sin(ang)], axis=1) for rho in (0.5 * r, r)]
    )
    center = None
    for _ in range(max_attempts):
        c = rng.uniform([lo_xy, lo_xy, lo_z], [hi_xy, hi_xy, hi_z])
        h_local = surface.height(c[0] + disk[:, 0], c[1] + disk[:, 1])
        if c[2] + r + clearance < float(np.min(h_local)):
            center = c
            break
    if center is None:
        raise GeometryError(
            f"could not place a radius-{r} tumor in {max_attempts} attempts"
        )
    pts = np.empty((0, 3))
    while pts.shape[0] < point_budget:
        cand = rng.uniform(-r, r, size=(2 * point_budget, 3))
        cand = cand[(cand * cand).sum(axis=1) <= r * r]
        pts = np.concatenate([pts, cand + center])
    return TumorSphere(center=center, radius=r, points=pts[:point_budget])


def estimate_normals(surface_points, k_neighbors=10):
    """Workspace poses from a surface cloud: one pose per point.

    The orientation is the unit normal of the best-fit plane through
    each point's k nearest neighbors (smallest principal direction of
    the neighborhood covariance), flipped to point into the anatomy
    (negative z).
    """
    pts = np.ascontiguousarray(surface_points, dtype=np.float64)
    if k_neighbors < 3:
        raise ValueError("k_neighbors must be at least 3")
    if pts.shape[0] < k_neighbors:
        raise ValueError("surface must contain at least k_neighbors points")
    tree = cKDTree(pts)
    _, idx = tree.query(pts, k=k_neighbors)
    neigh = pts[idx]                                  # (N, k, 3)
    centered = neigh - neigh.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k_neighbors
    evals, evecs = np.linalg.eigh(cov)
    scale = np.max(evals[:, 2])
    degenerate = evals[:, 1] <= 1e-12 * max(scale, 1e-300)
    if degenerate.any():
        bad = int(np.flatnonzero(degenerate)[0])
        raise GeometryError(
            f"degenerate neighborhood (rank < 2) around surface point {bad}"
        )
    normals = evecs[:, :, 0]
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    # Interior-pointing convention: flip to negative z; for vertical
    # normals fall back to the first nonzero component for determinism.
    flip = normals[:, 2] > 0
    vertical = normals[:, 2] == 0
    if vertical.any():
        lead = np.where(normals[vertical, 0] != 0,
                        normals[vertical, 0], normals[vertical, 1])
        flip[vertical] = lead < 0
    normals[flip] *= -1.0
    return SensorWorkspace(positions=pts.copy(), orientations=normals)


def extract_top_surface(points, grid_shape=(80, 80)):
    """Top-surface cloud of an ingested anatomy: per-(x, y)-cell highest point."""
    pts = np.asarray(points, dtype=np.float64)
    lo = pts[:, :2].min(axis=0)
    hi = pts[:, :2].max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    ij = np.minimum(
        ((pts[:, :2] - lo) / span * np.asarray(grid_shape)).astype(int),
        np.asarray(grid_shape) - 1,
    )
    flat = ij[:, 0] * grid_shape[1] + ij[:, 1]
    order = np.lexsort((pts[:, 2], flat))
    flat_sorted = flat[order]
    # Last entry per cell after sorting by (cell, z) is the cell maximum.
    last = np.flatnonzero(np.diff(flat_sorted, append=flat_sorted[-1] + 1))
    return pts[order[last]]


# ---------------------------------------------------------------------------
# Labeled point-cloud files: CSV (x,y,z,label) and JSON {points, labels}.
# ---------------------------------------------------------------------------

CSV_HEADER = ["x", "y", "z", "label"]


def _open_text(path, mode="rt"):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def _infer_format(path, fmt):
    if fmt is not None:
        return fmt.lower()
    name = str(path)
    if name.endswith(".gz"):
        name = name[:-3]
    if name.endswith(".json"):
        return "json"
    return "csv"


def _parse_csv_cloud(path):
    points, labels = [], []
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError("empty point-cloud file", path=path)
        if [c.strip().lower() for c in header] != CSV_HEADER:
            raise DataFormatError(
                f"expected header {','.join(CSV_HEADER)!r}", path=path, line=1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DataFormatError(
                    f"expected 4 fields, got {len(row)}", path=path, line=lineno
                )
            try:
                x, y, z = float(row[0]), float(row[1]), float(row[2])
            except ValueError:
                raise DataFormatError(
                    f"unparseable coordinate in {row!r}", path=path, line=lineno
                ) from None
            if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
                raise DataFormatError(
                    "non-finite coordinate", path=path, line=lineno
                )
            lab = row[3].strip()
            if lab not in ("0", "1"):
                raise DataFormatError(
                    f"unknown label {lab!r} (expected 0 or 1)", path=path, line=lineno
                )
            points.append((x, y, z))
            labels.append(int(lab))
    if not points:
        raise DataFormatError("point-cloud file has no data rows", path=path)
    return np.asarray(points), np.asarray(labels, dtype=np.uint8)


def _parse_json_cloud(path):
    with _open_text(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(
                f"invalid JSON: {exc.msg}", path=path, line=exc.lineno
            ) from None
    pts = payload.get("points")
    labels = payload.get("labels")
    if not isinstance(pts, list) or not isinstance(labels, list) or not pts:
        raise DataFormatError(
            "JSON cloud must carry non-empty 'points' and 'labels' lists", path=path
        )
    if len(pts) != len(labels):
        raise DataFormatError(
            f"{len(pts)} points but {len(labels)} labels", path=path
        )
    for i, (p, lab) in enumerate(zip(pts, labels)):
        if not (isinstance(p, list) and len(p) == 3):
            raise DataFormatError(f"points[{i}] is not an [x, y, z] triple", path=path)
        if lab not in (0, 1):
            raise DataFormatError(f"labels[{i}] = {lab!r} is not 0 or 1", path=path)
    arr = np.asarray(pts, dtype=np.float64)
    if not np.isfinite(arr).all():
        bad = int(np.flatnonzero(~np.isfinite(arr).all(axis=1))[0])
        raise DataFormatError(f"points[{bad}] has a non-finite coordinate", path=path)
    return arr, np.asarray(labels, dtype=np.uint8)


def load_labeled_point_cloud(path, format=None, *, tumor_label_radius=None,
                             bounds=None):
    """Read a labeled cloud; bounds default to its bounding box."""
    fmt = _infer_format(path, format)
    if fmt == "csv":
        pts, labels = _parse_csv_cloud(path)
    elif fmt == "json":
        pts, labels = _parse_json_cloud(path)
    else:
        raise DataFormatError(f"unknown point-cloud format {fmt!r}", path=path)
    if bounds is None:
        bounds = np.stack([pts.min(axis=0), pts.max(axis=0)])
    return AnatomyModel(
        points=pts, labels=labels, bounds=bounds,
        tumor_label_radius=tumor_label_radius,
    )


def save_labeled_point_cloud(path, anatomy, format=None):
    """Write a cloud so that a reload reproduces points and labels exactly."""
    fmt = _infer_format(path, format)
    if fmt == "csv":
        with _open_text(path, "wt") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for (x, y, z), lab in zip(anatomy.points, anatomy.labels):
                writer.writerow(
                    [repr(float(x)), repr(float(y)), repr(float(z)), int(lab)]
                )
    elif fmt == "json":
        with _open_text(path, "wt") as fh:
            json.dump(
                {"points": anatomy.points.tolist(),
                 "labels": anatomy.labels.tolist()},
                fh,
            )
    else:
        raise DataFormatError(f"unknown point-cloud format {fmt!r}", path=path)


# ---------------------------------------------------------------------------
# Scenario assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioBundle:
    """Everything one trial needs: anatomy, surface, workspace, metadata."""

    anatomy: AnatomyModel
    workspace: SensorWorkspace
    surface_points: np.ndarray
    meta: dict


def build_synthetic_scenario(*, surface_resolution, surface_seed, tumor_seed,
                             n_tumors=1, tumor_radius=0.8, tumor_points=500,
                             extent=12.0, base_height=9.6, amplitude=1.0,
                             n_bumps=12, dome_height=0.0, box_margin=1.6,
                             tumor_z_range=(4.0, 4.8), k_neighbors=10):
    """Bumpy surface with spherical tumors strictly below it.

    The search box top sits box_margin below the lowest surface point,
    so every sensing cone has opened up before entering the box and
    every hinge is reachable. The surface (and hence the workspace)
    depends only on surface_seed; tumor placement depends on
    tumor_seed, so multi-trial campaigns re-place tumors while sharing
    one workspace.
    """
    surface = generate_surface(
        surface_resolution, surface_seed, extent=extent,
        base_height=base_height, amplitude=amplitude, n_bumps=n_bumps,
        dome_height=dome_height,
    )
    z_top = surface.min_height - box_margin
    tumors = []
    for k in range(n_tumors):
        tumors.append(
            place_spherical_tumor(
                surface, tumor_radius, tumor_points,
                [int(tumor_seed), k], z_top=z_top, z_range=tumor_z_range,
            )
        )
    pts = np.concatenate([t.points for t in tumors])
    spheres = np.array([[*t.center, t.radius] for t in tumors])
    half = extent / 2.0
    bounds = np.array([[-half, -half, 0.0], [half, half, z_top]])
    anatomy = AnatomyModel(
        points=pts, labels=np.ones(len(pts), dtype=np.uint8),
        bounds=bounds, spheres=spheres,
    )
    workspace = estimate_normals(surface.points, k_neighbors=k_neighbors)
    meta = {
        "kind": "synthetic",
        "surface_params": dict(surface.params),
        "tumor_centers": [t.center.tolist() for t in tumors],
        "tumor_radius": tumor_radius,
        "z_top": z_top,
        "surface_max_height": surface.max_height,
    }
    return ScenarioBundle(
        anatomy=anatomy, workspace=workspace,
        surface_points=surface.points, meta=meta,
    )


def build_cloud_scenario(anatomy, *, surface_grid=(80, 80), k_neighbors=10):
    """Workspace extraction for an ingested labeled cloud."""
    surface_pts = extract_top_surface(anatomy.points, grid_shape=surface_grid)
    workspace = estimate_normals(surface_pts, k_neighbors=k_neighbors)
    meta = {
        "kind": "cloud",
        "n_points": anatomy.n_points,
        "n_tumor_points": int(anatomy.tumor_mask.sum()),
        "surface_max_height": float(surface_pts[:, 2].max()),
    }
    return ScenarioBundle(
        anatomy=anatomy, workspace=workspace,
        surface_points=surface_pts, meta=meta,
    )


# ---------------------------------------------------------------------------
# Bundled phantom: slab organ with three small embedded tumors, ~1:300
# tumor-to-free point ratio. Committed under subscan/data; the generator
# stays here so the artifact can be reproduced.
# ---------------------------------------------------------------------------

PHANTOM_SEED = 710
PHANTOM_RESOURCE = "phantom_cloud.csv.gz"


def generate_phantom_cloud(seed=PHANTOM_SEED, *, extent=12.0, base_height=7.0,
                           amplitude=0.35, n_bumps=6, spacing=0.35,
                           surface_grid=80, tumor_radius=0.68, n_tumors=3):
    """Labeled organ phantom: jittered interior lattice + clean top layer."""
    surface = generate_surface(
        surface_grid, seed, extent=extent,
        base_height=base_height, amplitude=amplitude, n_bumps=n_bumps,
    )
    rng = np.random.default_rng([TUMOR_STREAM, int(seed), 7])
    half = extent / 2.0
    lo = np.array([-half + 1.5 * tumor_radius, -half + 1.5 * tumor_radius,
                   2.5 * tumor_radius])
    hi = np.array([half - 1.5 * tumor_radius, half - 1.5 * tumor_radius,
                   surface.min_height - 2.0 * tumor_radius])
    if np.any(lo >= hi):
        raise GeometryError(
            f"phantom tumors of radius {tumor_radius} do not fit this organ"
        )
    # Tumor centers: feasible, pairwise well separated.
    centers = []
    while len(centers) < n_tumors:
        c = rng.uniform(lo, hi)
        if all(np.linalg.norm(c - p) > 4.0 * tumor_radius for p in centers):
            centers.append(c)
    centers = np.asarray(centers)

    axis = np.arange(-half + spacing / 2.0, half, spacing)
    zmax = surface.max_height
    zaxis = np.arange(spacing / 2.0, zmax, spacing)
    gx, gy, gz = np.meshgrid(axis, axis, zaxis, indexing="ij")
    grid = np.stack([gx.reshape(-1), gy.reshape(-1), gz.reshape(-1)], axis=1)
    grid = grid + rng.uniform(-0.3 * spacing, 0.3 * spacing, size=grid.shape)
    inside = grid[:, 2] < surface.height(grid[:, 0], grid[:, 1]) - 0.5 * spacing
    interior = grid[inside]

    labels = np.zeros(len(interior), dtype=np.uint8)
    for c in centers:
        d2 = ((interior - c) ** 2).sum(axis=1)
        labels[d2 <= tumor_radius**2] = 1

    surface_layer = surface.points
    pts = np.concatenate([interior, surface_layer])
    labels = np.concatenate(
        [labels, np.zeros(len(surface_layer), dtype=np.uint8)]
    )
    return pts, labels, {
        "seed": int(seed),
        "tumor_centers": centers.tolist(),
        "tumor_radius": tumor_radius,
        "spacing": spacing,
    }


def load_bundled_cloud():
    """The phantom cloud shipped with the package, as an AnatomyModel."""
    resource = importlib.resources.files("subscan") / "data" / PHANTOM_RESOURCE
    with importlib.resources.as_file(resource) as path:
        return load_labeled_point_cloud(path)
