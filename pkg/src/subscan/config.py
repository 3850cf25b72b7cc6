"""Run configuration: JSON-facing dataclasses with validation.

Every parameter that can change a run's output lives in one of these
blocks and is echoed into the run manifest.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .hilbert_map import HingeGrid


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


@dataclass
class ScenarioConfig:
    kind: str = "synthetic"            # "synthetic" | "cloud"
    surface_resolution: int = 120
    extent: float = 12.0
    base_height: float = 9.6
    amplitude: float = 1.0
    n_bumps: int = 12
    dome_height: float = 0.0           # paraboloid cap height (organ top)
    box_margin: float = 1.6            # gap between lowest surface and box top
    seed: int = 0                      # surface seed (synthetic)
    n_tumors: int = 1
    tumor_radius: float = 0.8
    tumor_points: int = 500
    tumor_z_range: tuple | None = (4.0, 4.8)
    k_neighbors: int = 10
    cloud_path: str | None = None      # "cloud" kind; None = bundled phantom
    cloud_surface_grid: int = 80
    tumor_label_radius: float | None = None

    def validate(self):
        _require(self.kind in ("synthetic", "cloud"),
                 f"scenario.kind must be synthetic or cloud, got {self.kind!r}")
        if self.kind == "synthetic":
            _require(self.surface_resolution >= 2,
                     "scenario.surface_resolution must be >= 2")
            _require(self.extent > 0, "scenario.extent must be positive")
            _require(self.n_tumors >= 1, "scenario.n_tumors must be >= 1")
            _require(self.tumor_radius > 0, "scenario.tumor_radius must be positive")
            _require(self.tumor_points >= 1, "scenario.tumor_points must be >= 1")
            _require(self.box_margin >= 0, "scenario.box_margin must be >= 0")
            if self.tumor_z_range is not None:
                z0, z1 = self.tumor_z_range
                _require(0 <= z0 < z1, "scenario.tumor_z_range must be (lo, hi)")
        _require(self.k_neighbors >= 3, "scenario.k_neighbors must be >= 3")
        return self


@dataclass
class SensorConfig:
    half_angle_deg: float = 15.0
    depth: float | None = None         # None = full search-space height
    filler_points: int = 200

    def validate(self):
        _require(0 < self.half_angle_deg < 90,
                 "sensor.half_angle_deg must lie in (0, 90)")
        _require(self.depth is None or self.depth > 0,
                 "sensor.depth must be positive when given")
        _require(self.filler_points >= 0,
                 "sensor.filler_points must be non-negative")
        return self


@dataclass
class MapConfig:
    gamma: float = 5.0
    hinge_shape: tuple = (17, 17, 10)
    prior_variance: float = 1e4
    em_tol: float = 1e-3
    em_max_iter: int = 3

    def validate(self):
        _require(self.gamma > 0, "map.gamma must be positive")
        shape = tuple(self.hinge_shape)
        _require(len(shape) == 3 and all(int(s) >= 1 for s in shape),
                 "map.hinge_shape must be three positive integers")
        _require(self.prior_variance > 0, "map.prior_variance must be positive")
        _require(self.em_tol > 0, "map.em_tol must be positive")
        _require(self.em_max_iter >= 1, "map.em_max_iter must be >= 1")
        return self

    @property
    def n_hinges(self):
        return int(np.prod(self.hinge_shape))

    def make_grid(self, bounds):
        return HingeGrid.regular(
            bounds, shape=tuple(self.hinge_shape), gamma=self.gamma
        )


@dataclass
class AcquisitionSettings:
    ei_xi: float = 0.01
    angle_threshold_deg: float = 5.0
    candidate_z_inset: float = 0.0     # exclude the top slab from EI queries

    def validate(self):
        _require(self.ei_xi >= 0, "acquisition.ei_xi must be non-negative")
        _require(0 < self.angle_threshold_deg <= 180,
                 "acquisition.angle_threshold_deg must lie in (0, 180]")
        _require(self.candidate_z_inset >= 0,
                 "acquisition.candidate_z_inset must be >= 0")
        return self

    @property
    def angle_threshold(self):
        return math.radians(self.angle_threshold_deg)


@dataclass
class EvalConfig:
    lattice_shape: tuple = (22, 22, 13)

    def validate(self):
        shape = tuple(self.lattice_shape)
        _require(len(shape) == 3 and all(int(s) >= 2 for s in shape),
                 "eval.lattice_shape must be three integers >= 2")
        return self

    @property
    def n_points(self):
        return int(np.prod(self.lattice_shape))

    def make_lattice(self, bounds):
        lo, hi = np.asarray(bounds, dtype=np.float64)
        axes = [np.linspace(lo[k], hi[k], self.lattice_shape[k]) for k in range(3)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)


_SECTIONS = {
    "scenario": ScenarioConfig,
    "sensor": SensorConfig,
    "map": MapConfig,
    "acquisition": AcquisitionSettings,
    "eval": EvalConfig,
}


@dataclass
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    map: MapConfig = field(default_factory=MapConfig)
    acquisition: AcquisitionSettings = field(default_factory=AcquisitionSettings)
    eval: EvalConfig = field(default_factory=EvalConfig)
    planners: list = field(default_factory=lambda: ["bo"])
    budget: int = 50
    budgets: dict = field(default_factory=dict)   # per-planner overrides
    seeds: list = field(default_factory=lambda: list(range(10)))
    stop_coverage: float | None = None
    detection_threshold: float = 0.95
    evaluate_auprc: bool = True

    def validate(self):
        for section in _SECTIONS:
            getattr(self, section).validate()
        _require(self.budget >= 1, "budget must be >= 1")
        _require(len(self.planners) >= 1, "at least one planner is required")
        for name in self.planners:
            _require(name in ("bo", "random", "multires"),
                     f"unknown planner {name!r} (expected bo, random, multires)")
        _require(len(self.seeds) >= 1, "at least one seed is required")
        _require(
            self.stop_coverage is None or 0 < self.stop_coverage <= 1,
            "stop_coverage must lie in (0, 1] when given",
        )
        _require(0 < self.detection_threshold <= 1,
                 "detection_threshold must lie in (0, 1]")
        for name, value in self.budgets.items():
            _require(int(value) >= 1, f"budgets[{name!r}] must be >= 1")
        return self

    def budget_for(self, planner):
        return int(self.budgets.get(planner, self.budget))

    def to_dict(self):
        out = asdict(self)
        out["map"]["hinge_shape"] = list(self.map.hinge_shape)
        out["eval"]["lattice_shape"] = list(self.eval.lattice_shape)
        if self.scenario.tumor_z_range is not None:
            out["scenario"]["tumor_z_range"] = list(self.scenario.tumor_z_range)
        return out

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("run config must be a JSON object")
        known = {"planners", "budget", "budgets", "seeds", "stop_coverage",
                 "detection_threshold", "evaluate_auprc", *_SECTIONS}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for section, klass in _SECTIONS.items():
            payload = data.get(section, {})
            if not isinstance(payload, dict):
                raise ConfigError(f"config section {section!r} must be an object")
            names = {f.name for f in klass.__dataclass_fields__.values()}
            bad = set(payload) - names
            if bad:
                raise ConfigError(f"unknown keys in {section!r}: {sorted(bad)}")
            try:
                obj = klass(**payload)
            except TypeError as exc:
                raise ConfigError(f"bad {section!r} section: {exc}") from None
            if "hinge_shape" in payload:
                obj.hinge_shape = tuple(payload["hinge_shape"])
            if "lattice_shape" in payload:
                obj.lattice_shape = tuple(payload["lattice_shape"])
            kwargs[section] = obj
        for key in known - set(_SECTIONS):
            if key in data:
                kwargs[key] = data[key]
        try:
            cfg = cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"bad run config: {exc}") from None
        return cfg.validate()

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from None
        return cls.from_dict(data)
