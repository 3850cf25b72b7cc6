"""Experiment harness: seeded multi-trial campaigns with reproducible artifacts.

Layout under the output directory:

    manifest.json                 everything needed to rerun the campaign
    summary.json                  aggregate statistics (exact on rerun)
    <planner>/<seed>/trace.csv    per-iteration pose and metric rows

All randomness flows from per-trial integer seeds through named PCG64
streams, so a rerun from the manifest (on the same kernel backend)
reproduces every statistic exactly.
"""

import csv
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__, hilbert_map as hm, kernels, planner as planner_mod
from . import scenario as scenario_mod
from .config import RunConfig
from .errors import ConfigError, SubscanError
from .sensor import ConeSensor

MANIFEST_FORMAT = "subscan-manifest/1"
SUMMARY_FORMAT = "subscan-summary/1"

RNG_NOTE = (
    "numpy.random.PCG64 via default_rng([stream_tag, seed...]); "
    "stream tags: surface=101, tumor=103, planner=211"
)


def make_manifest(config):
    digest_src = json.dumps(config.to_dict(), sort_keys=True).encode()
    return {
        "format": MANIFEST_FORMAT,
        "config": config.to_dict(),
        "config_digest": hashlib.sha256(digest_src).hexdigest(),
        "backend": kernels.active_backend(),
        "rng": RNG_NOTE,
        "tool": {"name": "subscan", "version": __version__},
        "versions": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }


def config_from_manifest_or_config(data):
    """Accept either a raw run config or an emitted manifest."""
    if isinstance(data, dict) and data.get("format") == MANIFEST_FORMAT:
        return RunConfig.from_dict(data["config"]), data.get("backend")
    return RunConfig.from_dict(data), None


class ScenarioFactory:
    """Builds per-trial scenarios, reusing surface/workspace across trials."""

    def __init__(self, config):
        self.config = config
        self.scenario_cfg = config.scenario
        self._cloud_bundle = None
        self._surface = None
        self._workspace = None

    def bundle(self, trial_seed):
        cfg = self.scenario_cfg
        if cfg.kind == "cloud":
            if self._cloud_bundle is None:
                if cfg.cloud_path is None:
                    anatomy = scenario_mod.load_bundled_cloud()
                else:
                    anatomy = scenario_mod.load_labeled_point_cloud(
                        cfg.cloud_path,
                        tumor_label_radius=cfg.tumor_label_radius,
                    )
                self._cloud_bundle = scenario_mod.build_cloud_scenario(
                    anatomy,
                    surface_grid=(cfg.cloud_surface_grid, cfg.cloud_surface_grid),
                    k_neighbors=cfg.k_neighbors,
                )
            return self._cloud_bundle
        if self._surface is None:
            self._surface = scenario_mod.generate_surface(
                cfg.surface_resolution, cfg.seed, extent=cfg.extent,
                base_height=cfg.base_height, amplitude=cfg.amplitude,
                n_bumps=cfg.n_bumps, dome_height=cfg.dome_height,
            )
            self._workspace = scenario_mod.estimate_normals(
                self._surface.points, k_neighbors=cfg.k_neighbors
            )
        surface = self._surface
        z_top = surface.min_height - cfg.box_margin
        tumors = [
            scenario_mod.place_spherical_tumor(
                surface, cfg.tumor_radius, cfg.tumor_points,
                [int(trial_seed), k], z_top=z_top, z_range=cfg.tumor_z_range,
            )
            for k in range(cfg.n_tumors)
        ]
        pts = np.concatenate([t.points for t in tumors])
        spheres = np.array([[*t.center, t.radius] for t in tumors])
        half = cfg.extent / 2.0
        bounds = np.array([[-half, -half, 0.0], [half, half, z_top]])
        anatomy = scenario_mod.AnatomyModel(
            points=pts, labels=np.ones(len(pts), dtype=np.uint8),
            bounds=bounds, spheres=spheres,
        )
        meta = {
            "kind": "synthetic",
            "tumor_centers": [t.center.tolist() for t in tumors],
            "z_top": z_top,
        }
        return scenario_mod.ScenarioBundle(
            anatomy=anatomy, workspace=self._workspace,
            surface_points=surface.points, meta=meta,
        )

    def make_sensor(self, bundle):
        return make_sensor(self.config.sensor, bundle)


def make_sensor(sensor_cfg, bundle):
    """Cone from config; depth defaults to the full search-space height."""
    depth = sensor_cfg.depth
    if depth is None:
        depth = float(bundle.surface_points[:, 2].max()
                      - bundle.anatomy.bounds[0, 2])
    return ConeSensor(
        half_angle=math.radians(sensor_cfg.half_angle_deg), depth=depth
    )


def run_trial(config, bundle, planner_name, seed, *, grid=None,
              candidate_features=None, eval_features=None, lattice=None):
    """One (planner, seed) cell; returns the PlanTrace."""
    cfg = config
    anatomy = bundle.anatomy
    sensor = make_sensor(cfg.sensor, bundle)
    if grid is None:
        grid = cfg.map.make_grid(anatomy.bounds)
    if lattice is None:
        lattice = cfg.eval.make_lattice(anatomy.bounds)
    eval_points = eval_labels = None
    if cfg.evaluate_auprc:
        eval_points = lattice
        eval_labels = anatomy.label_points(lattice)
    common = dict(
        stop_coverage=cfg.stop_coverage,
        detection_threshold=cfg.detection_threshold,
        filler=cfg.sensor.filler_points,
        eval_points=eval_points,
        eval_labels=eval_labels,
        eval_features=eval_features,
    )
    budget = cfg.budget_for(planner_name)
    if planner_name == "bo":
        candidates = lattice
        cand_features = candidate_features
        inset = cfg.acquisition.candidate_z_inset
        if inset > 0:
            keep = lattice[:, 2] <= anatomy.bounds[1, 2] - inset
            candidates = lattice[keep]
            if cand_features is not None:
                cand_features = cand_features[keep]
        acq = planner_mod.AcquisitionConfig(
            candidate_points=candidates,
            ei_xi=cfg.acquisition.ei_xi,
            angle_threshold=cfg.acquisition.angle_threshold,
        )
        return planner_mod.plan(
            anatomy, bundle.workspace, sensor, cfg.map, acq, budget, seed,
            candidate_features=cand_features, **common,
        )
    if planner_name == "random":
        return planner_mod.plan_random(
            anatomy, bundle.workspace, sensor, budget, seed,
            map_config=cfg.map, **common,
        )
    if planner_name == "multires":
        return planner_mod.plan_multiresolution(
            anatomy, bundle.workspace, sensor, budget,
            map_config=cfg.map, **common,
        )
    raise ConfigError(f"unknown planner {planner_name!r}")


def write_trace_csv(path, trace):
    """Per-iteration rows; iteration 0 is the pre-sensing state."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "iteration", "pose_index", "pos_x", "pos_y", "pos_z",
            "ori_x", "ori_y", "ori_z", "n_samples", "coverage", "auprc",
        ])
        auprc = trace.auprc
        writer.writerow([
            0, "", "", "", "", "", "", "", "",
            repr(trace.coverage[0]),
            repr(float(auprc[0])) if auprc is not None else "",
        ])
        for t, pose_index in enumerate(trace.pose_indices, start=1):
            pose = trace.workspace.pose(pose_index)
            writer.writerow([
                t, pose_index,
                repr(float(pose.position[0])), repr(float(pose.position[1])),
                repr(float(pose.position[2])),
                repr(float(pose.orientation[0])), repr(float(pose.orientation[1])),
                repr(float(pose.orientation[2])),
                trace.readings[t - 1].n,
                repr(trace.coverage[t]),
                repr(float(auprc[t])) if auprc is not None else "",
            ])


def _aggregate(values_by_seed):
    """Element-wise mean/std over equal-importance trials.

    Trials may have stopped at different iterations; aggregation runs
    over the common prefix. Population (ddof=0) standard deviation.
    """
    if not values_by_seed:
        return None
    length = min(len(v) for v in values_by_seed)
    if length == 0:
        return None
    mat = np.array([v[:length] for v in values_by_seed], dtype=np.float64)
    return {
        "mean": [float(x) for x in mat.mean(axis=0)],
        "std": [float(x) for x in mat.std(axis=0)],
    }


def _detection_stats(per_seed, budget):
    detected = [v for v in per_seed if v is not None]
    censored = [budget if v is None else v for v in per_seed]
    stats = {
        "per_seed": per_seed,
        "n_detected": len(detected),
        "median_censored": float(np.median(censored)) if censored else None,
        "mean_detected": float(np.mean(detected)) if detected else None,
        "std_detected": float(np.std(detected)) if detected else None,
    }
    return stats


def run_campaign(config, out_dir, *, backend=None, echo=None):
    """Execute every (planner, seed) cell and write all artifacts.

    Returns the summary dict. Cell failures are recorded per cell and
    the campaign continues.
    """
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    previous_backend = kernels.active_backend()
    if backend is not None and backend != previous_backend:
        kernels.use_backend(backend)
    try:
        factory = ScenarioFactory(config)
        manifest = make_manifest(config)
        with open(out_dir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2)

        stats = {}
        grid = None
        candidate_features = None
        lattice = None
        for planner_name in config.planners:
            cells = {}
            coverage_by_seed = []
            auprc_by_seed = []
            detection = []
            for seed in config.seeds:
                if echo:
                    echo(f"[campaign] {planner_name} seed {seed}")
                cell_dir = out_dir / planner_name / str(seed)
                cell_dir.mkdir(parents=True, exist_ok=True)
                try:
                    bundle = factory.bundle(seed)
                    if grid is None:
                        grid = config.map.make_grid(bundle.anatomy.bounds)
                        lattice = config.eval.make_lattice(bundle.anatomy.bounds)
                        needs_features = config.evaluate_auprc or "bo" in config.planners
                        if needs_features:
                            candidate_features = grid.features(lattice)
                    trace = run_trial(
                        config, bundle, planner_name, seed,
                        grid=grid, lattice=lattice,
                        candidate_features=candidate_features,
                        eval_features=candidate_features,
                    )
                except (SubscanError, ValueError) as exc:
                    cells[str(seed)] = {"error": str(exc)}
                    detection.append(None)
                    continue
                write_trace_csv(cell_dir / "trace.csv", trace)
                cells[str(seed)] = {
                    "error": None,
                    "iterations": trace.iterations,
                    "poses_to_detection": trace.poses_to_detection,
                    "final_coverage": trace.coverage[-1],
                    "final_auprc": (
                        None if trace.auprc is None else trace.auprc[-1]
                    ),
                    "repeat_count": trace.repeat_count,
                }
                detection.append(trace.poses_to_detection)
                coverage_by_seed.append(trace.coverage)
                if trace.auprc is not None:
                    auprc_by_seed.append(trace.auprc)
            stats[planner_name] = {
                "seeds": list(config.seeds),
                "cells": cells,
                "poses_to_detection": _detection_stats(
                    detection, config.budget_for(planner_name)
                ),
                "coverage_by_iteration": _aggregate(coverage_by_seed),
                "auprc_by_iteration": _aggregate(auprc_by_seed),
            }

        summary = {
            "format": SUMMARY_FORMAT,
            "config_digest": manifest["config_digest"],
            "backend": manifest["backend"],
            "stats": stats,
        }
        with open(out_dir / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2)
        return summary
    finally:
        if backend is not None:
            kernels.use_backend(previous_backend)


# ---------------------------------------------------------------------------
# Occupancy-map slices
# ---------------------------------------------------------------------------

_AXES = {"x": 0, "y": 1, "z": 2}


def emit_occupancy_slices(posterior, grid, axis, offset, bounds, *,
                          resolution=(50, 50), path=None):
    """Probability lattice on an axis-aligned plane through the map.

    Returns the (resolution[1], resolution[0]) probability matrix; when
    path is given, writes a CSV whose header row carries the first
    in-plane axis coordinates and whose leading column carries the
    second.
    """
    if axis not in _AXES:
        raise ConfigError(f"slice axis must be one of x, y, z, got {axis!r}")
    k = _AXES[axis]
    lo, hi = np.asarray(bounds, dtype=np.float64)
    if not (lo[k] <= offset <= hi[k]):
        raise ConfigError(
            f"slice {axis}={offset} lies outside the search box "
            f"[{lo[k]}, {hi[k]}]"
        )
    in_plane = [a for a in range(3) if a != k]
    u_axis, v_axis = in_plane
    us = np.linspace(lo[u_axis], hi[u_axis], resolution[0])
    vs = np.linspace(lo[v_axis], hi[v_axis], resolution[1])
    uu, vv = np.meshgrid(us, vs, indexing="xy")
    pts = np.empty((uu.size, 3))
    pts[:, u_axis] = uu.reshape(-1)
    pts[:, v_axis] = vv.reshape(-1)
    pts[:, k] = offset
    prob, _, _ = hm.query_arrays(posterior, grid, pts)
    matrix = prob.reshape(uu.shape)
    if path is not None:
        axis_names = "xyz"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [f"{axis_names[v_axis]}\\{axis_names[u_axis]}"]
                + [repr(float(u)) for u in us]
            )
            for v, row in zip(vs, matrix):
                writer.writerow([repr(float(v))] + [repr(float(p)) for p in row])
    return matrix
