"""Strict JSON run configuration shared by all CLI commands."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .ioutil import SCHEMA_VERSION, stable_hash
from .lattice import BOND_CONVENTIONS, BOUNDARIES, MAX_SITES, LatticeError, LatticeSpec
from .hamiltonian import SECTORS
from .sweep import SolverSettings, SweepPlan, default_grid, make_grid

CACHE_ENV = "TFIM_CACHE_DIR"

TOP_KEYS = {
    "schema_version", "dimension", "sizes", "boundary", "bond_convention", "lambda_grid",
    "solver", "output_dir", "cache_dir", "workers", "max_sites", "fss", "verify", "export",
}
GRID_KEYS = {"start", "stop", "step", "explicit", "refine"}
SOLVER_KEYS = {"tol", "max_iter", "seed", "sector"}
FSS_KEYS = {"runs", "lambda_exclude_sizes", "nu_exclude_sizes", "window", "centering"}
VERIFY_KEYS = {"max_n", "tolerance"}
EXPORT_KEYS = {"runs", "fss_dirs", "fig8_runs"}


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name
        self.message = message


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(where, "must be an object")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}" if where else unknown[0], "unknown key")


def _number(d: dict, key: str, where: str, kind=float, default=None):
    if key not in d:
        if default is None:
            raise ConfigError(f"{where}.{key}", "required")
        return default
    value = d[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key}", "must be a number")
    if kind is int and int(value) != value:
        raise ConfigError(f"{where}.{key}", "must be an integer")
    return kind(value)


@dataclass
class RunConfig:
    path: Path
    raw: dict
    lattice: LatticeSpec | None = None
    grid: tuple[float, ...] = ()
    refine: bool = True
    solver: SolverSettings = field(default_factory=SolverSettings)
    output_dir: Path | None = None
    cache_dir: Path | None = None
    workers: int = 1

    @property
    def config_hash(self) -> str:
        """Hash of the content that determines results; paths and workers excluded."""
        content = {k: v for k, v in self.raw.items() if k not in ("output_dir", "cache_dir", "workers")}
        return stable_hash(content)

    def resolve(self, p: str) -> Path:
        p = Path(p)
        return p if p.is_absolute() else (self.path.parent / p).resolve()

    def section(self, name: str) -> dict:
        if name not in self.raw:
            raise ConfigError(name, "section required for this command")
        return self.raw[name]

    def sweep_plan(self) -> SweepPlan:
        if self.lattice is None:
            raise ConfigError("sizes", "a lattice (dimension, sizes) is required")
        if self.output_dir is None:
            raise ConfigError("output_dir", "required")
        return SweepPlan(self.lattice, self.grid, self.solver, self.output_dir, self.cache_dir,
                         self.workers, self.refine)


def _parse_grid(raw: dict | None, dimension: int) -> tuple[tuple[float, ...], bool]:
    if raw is None:
        return default_grid(dimension), True
    _check_keys(raw, GRID_KEYS, "lambda_grid")
    refine = raw.get("refine", True)
    if not isinstance(refine, bool):
        raise ConfigError("lambda_grid.refine", "must be true or false")
    if "explicit" in raw:
        if {"start", "stop", "step"} & set(raw):
            raise ConfigError("lambda_grid", "give either explicit or start/stop/step, not both")
        values = raw["explicit"]
        if not isinstance(values, list) or not values:
            raise ConfigError("lambda_grid.explicit", "must be a non-empty list")
        grid = tuple(_number({"v": v}, "v", "lambda_grid.explicit") for v in values)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("lambda_grid.explicit", "must be strictly increasing")
        if any(v < 0 for v in grid):
            raise ConfigError("lambda_grid.explicit", "values must be >= 0")
        return grid, refine
    start = _number(raw, "start", "lambda_grid")
    stop = _number(raw, "stop", "lambda_grid")
    step = _number(raw, "step", "lambda_grid")
    if step <= 0:
        raise ConfigError("lambda_grid.step", "must be > 0")
    if start < 0:
        raise ConfigError("lambda_grid.start", "must be >= 0")
    if stop < start:
        raise ConfigError("lambda_grid.stop", "must be >= start")
    return make_grid(start, stop, step), refine


def _parse_solver(raw: dict | None) -> SolverSettings:
    if raw is None:
        return SolverSettings()
    _check_keys(raw, SOLVER_KEYS, "solver")
    tol = _number(raw, "tol", "solver", default=1e-10)
    max_iter = _number(raw, "max_iter", "solver", int, default=2000)
    seed = _number(raw, "seed", "solver", int, default=0)
    sector = raw.get("sector", "full")
    if sector not in SECTORS:
        raise ConfigError("solver.sector", f"must be one of {list(SECTORS)}")
    if tol <= 0:
        raise ConfigError("solver.tol", "must be > 0")
    if max_iter < 2:
        raise ConfigError("solver.max_iter", "must be >= 2")
    return SolverSettings(tol, max_iter, seed, sector)


def load_config(path: str | Path, cache_override: str | None = None,
                workers_override: int | None = None) -> RunConfig:
    """Parse and validate a run config.

    Relative paths resolve against the config file's directory. The cache
    directory comes from ``cache_override`` (the CLI flag), else the
    TFIM_CACHE_DIR environment variable, else the config.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    _check_keys(raw, TOP_KEYS, "")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version!r}")
    cfg = RunConfig(path=path, raw=raw)

    if "sizes" in raw or "dimension" in raw:
        dimension = _number(raw, "dimension", "", int)
        sizes = raw.get("sizes")
        if not isinstance(sizes, list) or not all(isinstance(s, int) and not isinstance(s, bool) for s in sizes):
            raise ConfigError("sizes", "must be a list of integers")
        if len(sizes) != dimension:
            raise ConfigError("sizes", f"expected {dimension} entries for dimension {dimension}")
        boundary = raw.get("boundary", "periodic")
        if boundary not in BOUNDARIES:
            raise ConfigError("boundary", f"must be one of {list(BOUNDARIES)}")
        convention = raw.get("bond_convention", "unique-pairs")
        if convention not in BOND_CONVENTIONS:
            raise ConfigError("bond_convention", f"must be one of {list(BOND_CONVENTIONS)}")
        max_sites = _number(raw, "max_sites", "", int, default=MAX_SITES)
        try:
            cfg.lattice = LatticeSpec(tuple(sizes), boundary, convention, max_sites)
        except LatticeError as exc:
            raise ConfigError("sizes", str(exc)) from exc
        cfg.grid, cfg.refine = _parse_grid(raw.get("lambda_grid"), dimension)
    elif "lambda_grid" in raw:
        raise ConfigError("lambda_grid", "given without a lattice")

    cfg.solver = _parse_solver(raw.get("solver"))
    workers = workers_override if workers_override is not None else _number(raw, "workers", "", int, default=1)
    if workers < 1:
        raise ConfigError("workers", "must be >= 1")
    cfg.workers = workers
    if "output_dir" in raw:
        if not isinstance(raw["output_dir"], str):
            raise ConfigError("output_dir", "must be a string")
        cfg.output_dir = cfg.resolve(raw["output_dir"])
    cache = cache_override or os.environ.get(CACHE_ENV) or raw.get("cache_dir")
    if cache is not None:
        if not isinstance(cache, str):
            raise ConfigError("cache_dir", "must be a string")
        cfg.cache_dir = Path(cache) if cache_override or os.environ.get(CACHE_ENV) else cfg.resolve(cache)

    for name, keys in (("fss", FSS_KEYS), ("verify", VERIFY_KEYS), ("export", EXPORT_KEYS)):
        if name in raw:
            _check_keys(raw[name], keys, name)
    return cfg


def path_list(cfg: RunConfig, section: dict, key: str, where: str, required: bool = True) -> list[Path]:
    value = section.get(key)
    if value is None:
        if required:
            raise ConfigError(f"{where}.{key}", "required")
        return []
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigError(f"{where}.{key}", "must be a list of paths")
    return [cfg.resolve(v) for v in value]


def int_list(section: dict, key: str, where: str) -> list[int]:
    value = section.get(key, [])
    if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise ConfigError(f"{where}.{key}", "must be a list of integers")
    return value


def optional_number(section: dict, key: str, where: str) -> Any:
    if section.get(key) is None:
        return None
    return _number(section, key, where)
