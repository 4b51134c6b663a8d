"""Lambda sweeps: ground-state observables on a grid, dE_gl/dlambda and its peak."""

from __future__ import annotations

import json
import logging
import multiprocessing
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .eigensolver import ConvergenceError, default_krylov_dim, lanczos_ground_state, memory_budget
from .hamiltonian import HamiltonianOperator, write_state
from .ioutil import log_event, parse_float, read_csv, read_json, stable_hash, write_csv, write_json
from .lattice import LatticeSpec, build_lattice
from .observables import ObservableSet, compute_observables

DEFAULT_GRIDS = {1: (0.0, 2.0, 0.02), 2: (0.0, 1.0, 0.01), 3: (0.0, 0.8, 0.01)}
REFINE_HALF_WIDTH = 10
REFINE_FACTOR = 4
GRID_DECIMALS = 12

SWEEP_COLUMNS = (
    "d", "sizes", "N", "lambda", "energy", "e_gl", "n_tangle", "i_local",
    "i_nonlocal", "mag_x", "mag_z", "ghz_fidelity",
)


class SweepError(RuntimeError):
    pass


class ResourceError(SweepError):
    pass


class PeakError(ValueError):
    pass


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-10
    max_iter: int = 2000
    seed: int = 0
    sector: str = "full"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("solver tol must be positive")
        if self.max_iter < 2:
            raise ValueError("solver max_iter must be >= 2")

    def to_dict(self) -> dict:
        return asdict(self)


def make_grid(start: float, stop: float, step: float) -> tuple[float, ...]:
    """Inclusive uniform grid, rounded so grid points are reproducible keys."""
    if not step > 0:
        raise ValueError("grid step must be positive")
    if stop < start:
        raise ValueError("grid stop must be >= start")
    n = int(math.floor((stop - start) / step + 1e-9))
    return tuple(round(start + k * step, GRID_DECIMALS) for k in range(n + 1))


def default_grid(dimension: int) -> tuple[float, ...]:
    return make_grid(*DEFAULT_GRIDS[dimension])


@dataclass(frozen=True)
class SweepPlan:
    lattice: LatticeSpec
    grid: tuple[float, ...]
    solver: SolverSettings = SolverSettings()
    output_dir: Path | None = None
    cache_dir: Path | None = None
    workers: int = 1
    refine: bool = True
    store_vectors: bool = False

    def __post_init__(self):
        grid = tuple(float(x) for x in self.grid)
        object.__setattr__(self, "grid", grid)
        if not grid:
            raise ValueError("lambda grid is empty")
        if any(x < 0 for x in grid):
            raise ValueError("lambda values must be >= 0")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("lambda grid must be strictly increasing")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def fingerprint(self) -> str:
        return stable_hash({
            "lattice": self.lattice.to_dict(),
            "grid": list(self.grid),
            "solver": self.solver.to_dict(),
            "refine": self.refine,
        })


@dataclass(frozen=True)
class SweepRecord:
    lattice: LatticeSpec
    lam: float
    observables: ObservableSet
    iterations: int = 0
    residual: float = 0.0
    degenerate: bool = False

    def row(self) -> list:
        o = self.observables
        return [
            self.lattice.dimension, self.lattice.sizes_str, self.lattice.n_sites, self.lam,
            o.energy, o.e_gl, o.n_tangle, o.i_local, o.i_nonlocal, o.mag_x, o.mag_z,
            o.ghz_fidelity,
        ]

    def to_json(self) -> dict:
        return {
            "lambda": self.lam,
            "observables": self.observables.to_dict(),
            "iterations": self.iterations,
            "residual": self.residual,
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_json(cls, lattice: LatticeSpec, d: dict) -> "SweepRecord":
        return cls(lattice, float(d["lambda"]), ObservableSet(**d["observables"]),
                   int(d["iterations"]), float(d["residual"]), bool(d["degenerate"]))


@dataclass(frozen=True)
class DerivativeCurve:
    lam: np.ndarray
    value: np.ndarray
    error: np.ndarray


@dataclass(frozen=True)
class PeakEstimate:
    lambda_m: float
    peak_value: float
    n_or_l: int
    refinement_width: float

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PeakEstimate":
        return cls(float(d["lambda_m"]), float(d["peak_value"]), int(d["n_or_l"]),
                   float(d["refinement_width"]))


@dataclass
class SweepResult:
    plan: SweepPlan
    records: list[SweepRecord]
    curve: DerivativeCurve | None = None
    peak: PeakEstimate | None = None
    peak_error: str | None = None
    n_solved: int = 0
    n_cached: int = 0


class SweepFailure(SweepError):
    """Solver failure mid-sweep; ``partial`` holds the records completed so far."""

    def __init__(self, message: str, partial: list[SweepRecord]):
        super().__init__(message)
        self.partial = partial


def solve_point(lattice: LatticeSpec, lam: float, solver: SolverSettings,
                vector_path: Path | None = None) -> SweepRecord:
    H = HamiltonianOperator(lam, build_lattice(lattice), lattice.n_sites, solver.sector)
    gs = lanczos_ground_state(H, tol=solver.tol, max_iter=solver.max_iter, seed=solver.seed)
    if vector_path is not None:
        write_state(vector_path, gs.vector, lam, lattice.fingerprint())
    return SweepRecord(lattice, lam, compute_observables(gs.vector, gs.energy),
                       gs.iterations, gs.residual, gs.degenerate)


def _solve_task(args):
    return solve_point(*args)


def _cache_dir(plan: SweepPlan) -> Path | None:
    if plan.cache_dir is None:
        return None
    return Path(plan.cache_dir) / plan.lattice.fingerprint() / stable_hash(plan.solver.to_dict())


def _cache_file(root: Path, lam: float) -> Path:
    return root / f"lambda_{lam!r}.json"


def concurrency(lattice: LatticeSpec, workers: int, budget: int | None = None) -> int:
    """Concurrent solves permitted by the memory budget; raises if none fit."""
    budget = memory_budget() if budget is None else budget
    dim = 1 << lattice.n_sites
    minimal = 8 * 8 * dim
    if minimal > budget:
        raise ResourceError(
            f"N={lattice.n_sites} needs at least {minimal} bytes, budget is {budget}"
        )
    per_solve = 4 * 8 * dim
    return max(1, min(workers, math.ceil(budget / per_solve) if per_solve else workers))


def run_sweep(plan: SweepPlan, grid: Sequence[float] | None = None) -> tuple[list[SweepRecord], int, int]:
    """Solve every lambda of ``grid`` (default: the plan's grid).

    Returns (records, n_solved, n_cached). Completed points are cached one
    file per lambda, so an interrupted sweep resumes where it stopped.
    """
    grid = plan.grid if grid is None else tuple(grid)
    root = _cache_dir(plan)
    done: dict[float, SweepRecord] = {}
    todo = []
    for lam in grid:
        if root is not None and _cache_file(root, lam).exists():
            done[lam] = SweepRecord.from_json(plan.lattice, json.loads(_cache_file(root, lam).read_text()))
        else:
            todo.append(lam)
    if done:
        log_event("cache_hit", lattice=plan.lattice.sizes_str, points=len(done))
    if root is not None:
        root.mkdir(parents=True, exist_ok=True)

    def store(record: SweepRecord) -> None:
        done[record.lam] = record
        if root is not None:
            path = _cache_file(root, record.lam)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(record.to_json(), sort_keys=True))
            tmp.replace(path)

    def vector_path(lam: float) -> Path | None:
        if plan.store_vectors and root is not None:
            return root / f"lambda_{lam!r}.state"
        return None

    workers = concurrency(plan.lattice, plan.workers) if todo else 1
    try:
        if workers > 1 and len(todo) > 1:
            tasks = [(plan.lattice, lam, plan.solver, vector_path(lam)) for lam in todo]
            # spawn: forking after OpenMP has started threads is unsafe
            ctx = multiprocessing.get_context("spawn")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
                for record in pool.map(_solve_task, tasks):
                    store(record)
        else:
            for lam in todo:
                store(solve_point(plan.lattice, lam, plan.solver, vector_path(lam)))
                log_event("solved", level=logging.DEBUG, lattice=plan.lattice.sizes_str, lam=lam)
    except ConvergenceError as exc:
        partial = [done[lam] for lam in grid if lam in done]
        raise SweepFailure(f"solver failed: {exc}", partial) from exc
    return [done[lam] for lam in grid], len(todo), len(grid) - len(todo)


def derivative(lam: Sequence[float], values: Sequence[float]) -> DerivativeCurve:
    """dE/dlambda by second-order finite differences on a possibly uneven grid.

    Interior points use the three-point centred formula, the ends one-sided
    second-order stencils. ``error`` is a step-doubling estimate
    |D_h - D_2h| / 3 at every other node, interpolated in between.
    """
    x = np.asarray(lam, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("lambda and values must be 1d arrays of equal length")
    if len(x) < 5:
        raise ValueError(f"derivative needs at least 5 grid points, got {len(x)}")
    if np.any(np.diff(x) <= 0):
        raise ValueError("lambda grid must be strictly increasing (duplicate or unsorted values)")
    d = np.gradient(y, x, edge_order=2)
    coarse = np.gradient(y[::2], x[::2], edge_order=2)
    err_coarse = np.abs(d[::2] - coarse) / 3.0
    err = np.interp(x, x[::2], err_coarse)
    return DerivativeCurve(x, d, err)


def records_derivative(records: Sequence[SweepRecord]) -> DerivativeCurve:
    return derivative([r.lam for r in records], [r.observables.e_gl for r in records])


def locate_peak(curve: DerivativeCurve, size_label: int = 0) -> PeakEstimate:
    """Refine the grid maximum of ``curve`` with a 5-point quadratic fit."""
    x, y = curve.lam, curve.value
    n = len(x)
    if n < 5:
        raise PeakError("need at least 5 points to locate a peak")
    k = int(np.argmax(y))
    if k == 0 or k == n - 1:
        side = "lower" if k == 0 else "upper"
        raise PeakError(f"maximum at the {side} grid boundary (lambda={x[k]}); extend the grid")
    lo = min(max(k - 2, 0), n - 5)
    xs, ys = x[lo:lo + 5], y[lo:lo + 5]
    a, b, c = np.polyfit(xs - x[k], ys, 2)
    if not a < 0:
        raise PeakError(f"no downward curvature around lambda={x[k]} (plateau)")
    offset = -b / (2 * a)
    lambda_m = float(x[k] + offset)
    if not xs[0] <= lambda_m <= xs[-1]:
        raise PeakError(f"fitted vertex {lambda_m} falls outside the fit window")
    peak_value = float(c - b * b / (4 * a))
    if not peak_value > 0:
        raise PeakError("peak derivative is not positive")
    return PeakEstimate(lambda_m, peak_value, int(size_label), float(np.mean(np.diff(xs))))


def refinement_grid(grid: Sequence[float], center: float) -> tuple[float, ...]:
    """Points at a quarter of the local spacing within +-10 coarse steps of ``center``."""
    g = np.asarray(grid)
    k = int(np.argmin(np.abs(g - center)))
    step = float(g[k + 1] - g[k]) if k + 1 < len(g) else float(g[k] - g[k - 1])
    fine = step / REFINE_FACTOR
    count = REFINE_HALF_WIDTH * REFINE_FACTOR
    pts = g[k] + fine * np.arange(-count, count + 1)
    pts = pts[(pts >= g[0]) & (pts <= g[-1])]
    merged = set(round(float(p), GRID_DECIMALS) for p in pts) | set(float(p) for p in g)
    return tuple(sorted(merged))


def execute_plan(plan: SweepPlan, config_hash: str | None = None) -> SweepResult:
    """Coarse sweep, optional peak refinement, derivative and peak; writes outputs.

    Writes ``sweep.csv``, ``derivative.csv`` and ``peak.json`` into
    ``plan.output_dir`` when it is set. The derivative and peak need at least
    5 grid points and are skipped otherwise.
    """
    config_hash = config_hash or plan.fingerprint()
    try:
        records, solved, cached = run_sweep(plan)
    except SweepFailure as exc:
        if plan.output_dir is not None:
            write_sweep_outputs(plan, SweepResult(plan, exc.partial), config_hash, failed=str(exc))
        raise
    result = SweepResult(plan, records, n_solved=solved, n_cached=cached)
    if len(records) >= 5:
        result.curve = records_derivative(records)
        if plan.refine:
            k = int(np.argmax(result.curve.value))
            grid = refinement_grid(plan.grid, float(result.curve.lam[k]))
            if len(grid) > len(plan.grid):
                try:
                    records, solved, cached = run_sweep(plan, grid)
                except SweepFailure as exc:
                    if plan.output_dir is not None:
                        write_sweep_outputs(plan, SweepResult(plan, exc.partial), config_hash,
                                            failed=str(exc))
                    raise
                result.records = records
                result.n_solved += solved
                result.curve = records_derivative(records)
        try:
            result.peak = locate_peak(result.curve, plan.lattice.size_label)
        except PeakError as exc:
            result.peak_error = str(exc)
            log_event("peak_not_found", level=logging.WARNING, lattice=plan.lattice.sizes_str,
                      reason=str(exc))
    log_event("sweep_done", lattice=plan.lattice.sizes_str, solved=result.n_solved,
              cached=result.n_cached, points=len(result.records))
    if plan.output_dir is not None:
        write_sweep_outputs(plan, result, config_hash)
    return result


def write_sweep_outputs(plan: SweepPlan, result: SweepResult, config_hash: str,
                        failed: str | None = None) -> None:
    out = Path(plan.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, (r.row() for r in result.records), config_hash)
    if result.curve is not None:
        c = result.curve
        write_csv(out / "derivative.csv", ("lambda", "de_gl_dlambda", "error_estimate"),
                  zip(c.lam.tolist(), c.value.tolist(), c.error.tolist()), config_hash)
    payload = {"lattice": plan.lattice.to_dict(), "size_label": plan.lattice.size_label}
    if failed is not None:
        payload.update(status="failed", message=failed)
    elif result.peak is not None:
        payload.update(status="ok", peak=result.peak.to_dict())
    else:
        payload.update(status="no-peak", message=result.peak_error or "fewer than 5 grid points")
    write_json(out / "peak.json", payload, config_hash)


def load_run(run_dir: str | Path) -> tuple[LatticeSpec, list[dict], DerivativeCurve | None, PeakEstimate | None]:
    """Read a sweep output directory back: lattice, sweep rows, derivative, peak."""
    run_dir = Path(run_dir)
    info = read_json(run_dir / "peak.json")
    lat = info["lattice"]
    lattice = LatticeSpec(tuple(lat["sizes"]), lat["boundary"], lat["bond_convention"])
    _, rows = read_csv(run_dir / "sweep.csv")
    parsed = [{k: (v if k == "sizes" else parse_float(v)) for k, v in row.items()} for row in rows]
    curve = None
    if (run_dir / "derivative.csv").exists():
        _, drows = read_csv(run_dir / "derivative.csv")
        curve = DerivativeCurve(
            np.array([float(r["lambda"]) for r in drows]),
            np.array([float(r["de_gl_dlambda"]) for r in drows]),
            np.array([float(r["error_estimate"]) for r in drows]),
        )
    peak = PeakEstimate.from_dict(info["peak"]) if info.get("status") == "ok" else None
    return lattice, parsed, curve, peak
