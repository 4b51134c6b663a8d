import math

import numpy as np
import pytest

from tfim_entanglement import sweep
from tfim_entanglement.eigensolver import ConvergenceError
from tfim_entanglement.ioutil import read_csv, read_json
from tfim_entanglement.lattice import LatticeSpec
from tfim_entanglement.sweep import (
    DerivativeCurve,
    PeakError,
    ResourceError,
    SolverSettings,
    SweepFailure,
    SweepPlan,
    concurrency,
    default_grid,
    derivative,
    execute_plan,
    load_run,
    locate_peak,
    make_grid,
    refinement_grid,
    run_sweep,
)


def egl_two_site(lam):
    # ground state a|00> + b|11> with 4 a^2 b^2 = lam^2 / (4 + lam^2)
    return lam ** 2 / (4 + lam ** 2)


def test_make_grid_inclusive():
    assert make_grid(0, 2, 2) == (0.0, 2.0)
    assert make_grid(0, 1, 0.1)[-1] == 1.0
    assert len(default_grid(1)) == 101


@pytest.mark.parametrize("args", [(0, 1, 0), (0, 1, -0.1), (1, 0, 0.1)])
def test_bad_grids(args):
    with pytest.raises(ValueError):
        make_grid(*args)


def test_plan_validation():
    lat = LatticeSpec((2,))
    with pytest.raises(ValueError):
        SweepPlan(lat, (0.5, 0.5))
    with pytest.raises(ValueError):
        SweepPlan(lat, (-0.1, 0.5))
    with pytest.raises(ValueError):
        SweepPlan(lat, ())


def test_two_point_sweep(tmp_path):
    plan = SweepPlan(LatticeSpec((2,)), (0.0, 2.0), output_dir=tmp_path)
    res = execute_plan(plan)
    assert [r.lam for r in res.records] == [0.0, 2.0]
    assert res.records[0].observables.energy == pytest.approx(-2.0)
    assert res.records[1].observables.energy == pytest.approx(-math.sqrt(8))
    assert res.records[1].observables.e_gl == pytest.approx(0.5, abs=1e-10)
    meta, rows = read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 2 and float(rows[1]["lambda"]) == 2.0
    assert read_json(tmp_path / "peak.json")["status"] == "no-peak"


def test_derivative_of_smooth_function_is_second_order():
    errs = []
    for step in (0.02, 0.01):
        x = np.arange(0, 2 + step / 2, step)
        d = derivative(x, np.sin(x))
        errs.append(np.max(np.abs(d.value - np.cos(x))))
        assert np.all(d.error >= 0)
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.2)


def test_derivative_error_estimate_tracks_true_error():
    x = np.arange(0, 2.0001, 0.02)
    d = derivative(x, np.sin(3 * x))
    true = np.abs(d.value - 3 * np.cos(3 * x))
    assert np.max(d.error) == pytest.approx(np.max(true), rel=0.5)


def test_derivative_validation():
    with pytest.raises(ValueError):
        derivative([0, 1, 2, 3], [0, 1, 2, 3])
    with pytest.raises(ValueError):
        derivative([0, 1, 1, 2, 3], [0] * 5)


def test_two_site_derivative_accuracy():
    grid = default_grid(1)
    res = execute_plan(SweepPlan(LatticeSpec((2,)), grid, refine=False))
    lam = np.array(grid)
    exact = 8 * lam / (4 + lam ** 2) ** 2
    assert np.max(np.abs(res.curve.value - exact)) <= 1e-4
    e_gl = np.array([r.observables.e_gl for r in res.records])
    np.testing.assert_allclose(e_gl, egl_two_site(lam), atol=1e-10)


def test_two_site_peak():
    res = execute_plan(SweepPlan(LatticeSpec((2,)), default_grid(1)))
    assert res.peak.lambda_m == pytest.approx(2 / math.sqrt(3), abs=2e-4)
    assert res.peak.n_or_l == 2


def test_locate_peak_on_parabola():
    x = np.linspace(0, 1, 21)
    curve = DerivativeCurve(x, 3 - (x - 0.437) ** 2, np.zeros_like(x))
    peak = locate_peak(curve, 7)
    assert peak.lambda_m == pytest.approx(0.437, abs=1e-12)
    assert peak.peak_value == pytest.approx(3.0, abs=1e-12)


@pytest.mark.parametrize("values", [np.linspace(0, 1, 9), np.linspace(1, 0, 9), np.ones(9)])
def test_locate_peak_failures(values):
    x = np.linspace(0, 1, 9)
    with pytest.raises(PeakError):
        locate_peak(DerivativeCurve(x, values, np.zeros(9)))


def test_refinement_grid():
    grid = make_grid(0, 2, 0.02)
    fine = refinement_grid(grid, 0.9)
    assert set(grid) <= set(fine)
    added = sorted(set(fine) - set(grid))
    assert added[0] == pytest.approx(0.705) and added[-1] == pytest.approx(1.095)
    assert len(fine) == len(grid) + 60


def test_refinement_is_robust():
    lat = LatticeSpec((8,))
    coarse = execute_plan(SweepPlan(lat, default_grid(1), SolverSettings(sector="even-parity"), refine=False))
    fine = execute_plan(SweepPlan(lat, default_grid(1), SolverSettings(sector="even-parity")))
    assert abs(coarse.peak.lambda_m - fine.peak.lambda_m) <= 0.02
    assert 0.85 < fine.peak.lambda_m < 0.95


def test_cache_makes_reruns_free_and_identical(tmp_path, caplog):
    lat = LatticeSpec((6,))
    kwargs = dict(cache_dir=tmp_path / "cache", refine=False)
    first = execute_plan(SweepPlan(lat, make_grid(0, 2, 0.1), output_dir=tmp_path / "a", **kwargs))
    assert first.n_solved == 21
    with caplog.at_level("INFO", logger="tfim_entanglement"):
        second = execute_plan(SweepPlan(lat, make_grid(0, 2, 0.1), output_dir=tmp_path / "b", **kwargs))
    assert second.n_solved == 0 and second.n_cached == 21
    assert any("cache_hit" in r.getMessage() for r in caplog.records)
    for name in ("sweep.csv", "derivative.csv", "peak.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cache_separates_solver_settings(tmp_path):
    lat = LatticeSpec((4,))
    grid = (0.5, 1.0)
    run_sweep(SweepPlan(lat, grid, cache_dir=tmp_path))
    _, solved, _ = run_sweep(SweepPlan(lat, grid, SolverSettings(seed=3), cache_dir=tmp_path))
    assert solved == 2


def test_parallel_workers_match_serial(tmp_path):
    lat = LatticeSpec((6,))
    grid = make_grid(0.2, 1.0, 0.2)
    serial, _, _ = run_sweep(SweepPlan(lat, grid))
    parallel, _, _ = run_sweep(SweepPlan(lat, grid, workers=2))
    assert [r.row() for r in serial] == [r.row() for r in parallel]


def test_failure_keeps_partial_results(tmp_path, monkeypatch):
    real = sweep.lanczos_ground_state

    def flaky(H, **kw):
        if H.lam == 1.0:
            raise ConvergenceError("stalled", 1e-3, 5)
        return real(H, **kw)

    monkeypatch.setattr(sweep, "lanczos_ground_state", flaky)
    plan = SweepPlan(LatticeSpec((4,)), (0.0, 1.0, 2.0), output_dir=tmp_path)
    with pytest.raises(SweepFailure) as info:
        execute_plan(plan)
    assert [r.lam for r in info.value.partial] == [0.0]
    assert read_json(tmp_path / "peak.json")["status"] == "failed"
    assert len(read_csv(tmp_path / "sweep.csv")[1]) == 1


def test_memory_gate():
    with pytest.raises(ResourceError):
        concurrency(LatticeSpec((20,)), 1, budget=1 << 20)
    assert concurrency(LatticeSpec((4,)), 3, budget=1 << 30) == 3


def test_load_run_round_trip(tmp_path):
    plan = SweepPlan(LatticeSpec((4,)), make_grid(0, 2, 0.1), output_dir=tmp_path, refine=False)
    res = execute_plan(plan)
    lattice, rows, curve, peak = load_run(tmp_path)
    assert lattice == plan.lattice
    assert len(rows) == 21
    np.testing.assert_array_equal(curve.value, res.curve.value)
    assert peak == res.peak


def test_sweep_vectors_written(tmp_path):
    plan = SweepPlan(LatticeSpec((4,)), (0.5,), cache_dir=tmp_path, store_vectors=True)
    run_sweep(plan)
    assert len(list(tmp_path.rglob("*.state"))) == 1
