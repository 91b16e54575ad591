"""Run configuration: JSON files plus ``key.sub=value`` overrides, and object builders."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from shepard_dp.geometry import NodeSet, fill_distance, grid_nodes, sigma_for_overlap
from shepard_dp.kernels import ShapeFunction, sigma_from_fill
from shepard_dp.pgm import load_obstacle_map
from shepard_dp.problems import PROBLEMS, ControlProblem, make_problem


class ConfigError(ValueError):
    pass


@dataclass
class KernelConfig:
    kind: str = "wendland42"
    sigma: float | None = None
    c_sigma: float | None = None
    overlap_count: int | None = None


@dataclass
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 2000


@dataclass
class FeedbackConfig:
    eta: float = 1.0
    floor: float = 1e-20
    x0: list | None = None
    steps: int = 80


@dataclass
class MapConfig:
    path: str | None = None
    origin: list = field(default_factory=lambda: [0.0, 0.0])
    pixel_size: list = field(default_factory=lambda: [1.0, 1.0])


@dataclass
class StudyConfig:
    # grid resolutions: k for linear1d (k+1 nodes), nodes per axis otherwise
    k_list: list = field(default_factory=list)
    reference: int | None = None
    metric: str = "value"  # "value" compares V~, "transformed" compares v~
    relative: bool = False


@dataclass
class RunConfig:
    problem: str = "linear1d"
    overrides: dict = field(default_factory=dict)
    grid: list = field(default_factory=lambda: [11])
    kernel: KernelConfig = field(default_factory=KernelConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    feedback: FeedbackConfig = field(default_factory=FeedbackConfig)
    map: MapConfig = field(default_factory=MapConfig)
    study: StudyConfig = field(default_factory=StudyConfig)
    output: str = "out"
    seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self, exclude=()) -> str:
        d = self.to_dict()
        for key in exclude:
            d.pop(key, None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


_SECTIONS = {
    "kernel": KernelConfig,
    "solver": SolverConfig,
    "feedback": FeedbackConfig,
    "map": MapConfig,
    "study": StudyConfig,
}


def from_dict(d: dict) -> RunConfig:
    d = dict(d)
    kwargs = {}
    top = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(d) - top
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for name, value in d.items():
        if name in _SECTIONS:
            cls = _SECTIONS[name]
            if not isinstance(value, dict):
                raise ConfigError(f"section {name!r} must be an object")
            allowed = {f.name for f in dataclasses.fields(cls)}
            bad = set(value) - allowed
            if bad:
                raise ConfigError(f"unknown keys in {name!r}: {sorted(bad)}")
            kwargs[name] = cls(**value)
        else:
            kwargs[name] = value
    cfg = RunConfig(**kwargs)
    validate(cfg)
    return cfg


def apply_overrides(d: dict, assignments) -> dict:
    """Apply ``a.b.c=value`` strings (value parsed as JSON, else kept as a string)."""
    d = json.loads(json.dumps(d))
    for item in assignments or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = d
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot set {key!r}: {part!r} is not a section")
        node[parts[-1]] = value
    return d


def load_config(path=None, assignments=None) -> RunConfig:
    d = {}
    if path is not None:
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(apply_overrides(d, assignments))


def validate(cfg: RunConfig) -> None:
    if cfg.problem not in PROBLEMS:
        raise ConfigError(f"unknown problem {cfg.problem!r}; expected one of {PROBLEMS}")
    given = [k for k in ("sigma", "c_sigma", "overlap_count") if getattr(cfg.kernel, k) is not None]
    if len(given) != 1:
        raise ConfigError(f"kernel needs exactly one of sigma / c_sigma / overlap_count, got {given or 'none'}")
    if not isinstance(cfg.grid, list) or not cfg.grid or min(cfg.grid) < 1:
        raise ConfigError("grid must be a nonempty list of positive counts")
    if not cfg.solver.tol > 0 or cfg.solver.max_iter < 1:
        raise ConfigError("solver.tol must be > 0 and solver.max_iter >= 1")
    if not 0 < cfg.feedback.eta <= 1:
        raise ConfigError("feedback.eta must lie in (0, 1]")
    if not 0 < cfg.feedback.floor < 1:
        raise ConfigError("feedback.floor must lie in (0, 1)")
    if cfg.study.metric not in ("value", "transformed"):
        raise ConfigError("study.metric must be 'value' or 'transformed'")
    if cfg.map.path is not None and not Path(cfg.map.path).exists():
        raise ConfigError(f"map file {cfg.map.path} does not exist")


def build_problem(cfg: RunConfig, grid=None) -> ControlProblem:
    grid = list(grid if grid is not None else cfg.grid)
    overrides = dict(cfg.overrides)
    if cfg.problem == "linear1d":
        overrides.setdefault("k", grid[0] - 1)
    if cfg.problem == "shortest_path" and cfg.map.path is not None:
        overrides["mask"] = load_obstacle_map(cfg.map.path, cfg.map.origin, cfg.map.pixel_size)
    try:
        return make_problem(cfg.problem, overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{cfg.problem}: {exc}") from exc


def build_nodes(cfg: RunConfig, p: ControlProblem, grid=None) -> NodeSet:
    grid = list(grid if grid is not None else cfg.grid)
    if len(grid) == 1 and p.dim > 1:
        grid = grid * p.dim
    if len(grid) != p.dim:
        raise ConfigError(f"{p.name} is {p.dim}-d but grid has {len(grid)} counts")
    return grid_nodes(p.domain, grid, p.mask)


def build_kernel(cfg: RunConfig, p: ControlProblem, nodes: NodeSet) -> ShapeFunction:
    """Shape function with sigma taken directly, from c_sigma / h, or from an overlap count.

    h and overlaps are measured in kernel coordinates (states divided by the
    problem's metric scale).
    """
    kc = cfg.kernel
    scaled = nodes.scaled(p.metric_scale)
    if kc.sigma is not None:
        sigma = float(kc.sigma)
    elif kc.c_sigma is not None:
        sigma = sigma_from_fill(float(kc.c_sigma), fill_distance(scaled))
    else:
        sigma = sigma_for_overlap(scaled, int(kc.overlap_count))
    try:
        return ShapeFunction(kc.kind, sigma)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def check_delta(p: ControlProblem, nodes: NodeSet) -> float:
    """Reject problems whose stage cost is not bounded away from zero off the target."""
    delta = p.delta_estimate(nodes)
    if not delta > 0:
        raise ConfigError(f"{p.name}: stage cost vanishes off the target (delta = {delta:g}); no contraction")
    return delta


def state_array(x, dim: int) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (dim,):
        raise ConfigError(f"expected a state of length {dim}, got {x.tolist()}")
    return x
