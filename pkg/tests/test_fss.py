import json
import math

import numpy as np
import pytest

from tfim_entanglement.fss import (
    FSSError,
    InterpolationError,
    collapse_fit,
    extrapolate_critical_point,
    golden_section,
    interpolate_curve,
    peak_divergence_check,
    run_fss,
)
from tfim_entanglement.ioutil import read_csv
from tfim_entanglement.sweep import DerivativeCurve, PeakEstimate

from fss_fixtures import SIZES, synthetic_curves, synthetic_peaks, write_synthetic_runs


def test_exact_power_law_is_recovered():
    fit = extrapolate_critical_point(synthetic_peaks())
    assert fit.lambda_c == pytest.approx(1.0, abs=1e-8)
    assert fit.alpha == pytest.approx(1.0, abs=1e-8)
    assert fit.c == pytest.approx(2.0, abs=1e-7)
    assert fit.side == "from-above" and fit.monotone and fit.side_consistent


def test_approach_from_below():
    peaks = [PeakEstimate(0.33 - 0.5 * s ** -1.3, 1.0, s, 0.0) for s in (2, 3, 4, 5)]
    fit = extrapolate_critical_point(peaks)
    assert fit.side == "from-below"
    assert fit.lambda_c == pytest.approx(0.33, abs=1e-8)
    assert fit.alpha == pytest.approx(1.3, abs=1e-7)


def test_extrapolation_is_idempotent():
    peaks = synthetic_peaks(noise=1e-4)
    a, b = extrapolate_critical_point(peaks), extrapolate_critical_point(peaks)
    assert abs(a.lambda_c - b.lambda_c) <= 1e-8 and abs(a.alpha - b.alpha) <= 1e-8


def test_extrapolation_scale_covariance():
    # rescaling S -> 2S leaves lambda_c and alpha alone and rescales c by 2^alpha
    peaks = synthetic_peaks(noise=1e-4)
    doubled = [PeakEstimate(p.lambda_m, p.peak_value, 2 * p.n_or_l, 0.0) for p in peaks]
    a, b = extrapolate_critical_point(peaks), extrapolate_critical_point(doubled)
    assert b.lambda_c == pytest.approx(a.lambda_c, abs=1e-8)
    assert b.alpha == pytest.approx(a.alpha, abs=1e-6)
    assert b.c == pytest.approx(a.c * 2 ** a.alpha, rel=1e-6)


def test_extrapolation_exclusion_and_minimum():
    fit = extrapolate_critical_point(synthetic_peaks(), exclude_sizes=[8])
    assert fit.sizes_used == [10, 12, 14, 16]
    with pytest.raises(FSSError):
        extrapolate_critical_point(synthetic_peaks()[:2])


def test_non_monotone_peaks_are_flagged():
    peaks = [PeakEstimate(v, 1.0, s, 0.0) for s, v in ((4, 0.5), (6, 0.7), (8, 0.6), (10, 0.65))]
    assert not extrapolate_critical_point(peaks).monotone


def test_collapse_recovers_nu_one():
    res = collapse_fit(synthetic_curves(), {p.n_or_l: p for p in synthetic_peaks()}, window=0.3)
    assert res.nu == pytest.approx(1.0, abs=1e-3)
    assert res.interior_minimum and not res.inconclusive
    assert res.sizes_used == SIZES


@pytest.mark.parametrize("nu", [0.5, 1.5])
def test_collapse_recovers_other_exponents(nu):
    curves = synthetic_curves(nu=nu)
    res = collapse_fit(curves, {p.n_or_l: p for p in synthetic_peaks(nu=nu)}, window=0.3)
    assert res.nu == pytest.approx(nu, rel=5e-3)


def test_collapse_needs_three_sizes():
    curves = synthetic_curves()
    peaks = {p.n_or_l: p for p in synthetic_peaks()}
    with pytest.raises(FSSError):
        collapse_fit(curves, peaks, exclude_sizes=[8, 10, 12])


def test_collapse_lambda_c_centering_needs_value():
    with pytest.raises(FSSError):
        collapse_fit(synthetic_curves(), {p.n_or_l: p for p in synthetic_peaks()}, centering="lambda_c")


def test_log_divergence():
    div = peak_divergence_check(synthetic_peaks())
    assert div.slope == pytest.approx(1.0, abs=1e-12)
    assert div.r_squared == pytest.approx(1.0, abs=1e-12)
    power = [PeakEstimate(1.0, float(s) ** 2, s, 0.0) for s in (4, 8, 16, 32, 64, 128)]
    assert peak_divergence_check(power).r_squared < 0.98


def test_golden_section():
    x, fx = golden_section(lambda v: (v - 0.3) ** 2 + 1, 0, 1)
    assert x == pytest.approx(0.3, abs=1e-6) and fx == pytest.approx(1.0)


def test_interpolation():
    xs = np.linspace(0, 1, 11)
    assert interpolate_curve((xs, xs ** 2), 0.55) == pytest.approx(0.3025, abs=1e-12)
    assert interpolate_curve((xs, 2 * xs), 1.0) == pytest.approx(2.0)
    with pytest.raises(InterpolationError):
        interpolate_curve((xs, xs), 1.1)
    with pytest.raises(InterpolationError):
        interpolate_curve((xs[::-1], xs), 0.5)


def test_interpolation_guards_against_overshoot():
    xs = np.arange(8.0)
    ys = np.array([0, 0, 0, 0, 1e6, 0, 0, 0.0])
    out = interpolate_curve((xs, ys), np.linspace(0, 7, 50))
    assert np.all(out >= -1e6) and np.all(out <= 2e6)


def test_run_fss_end_to_end(tmp_path):
    runs = write_synthetic_runs(tmp_path / "runs")
    report = run_fss(runs, tmp_path / "fss", config_hash="abc")
    assert report.fit.lambda_c == pytest.approx(1.0, abs=1e-8)
    assert report.collapse.nu == pytest.approx(1.0, abs=1e-3)
    payload = json.loads((tmp_path / "fss" / "scaling_fit.json").read_text())
    assert payload["config_hash"] == "abc"
    for name in ("collapse.csv", "collapse_quality.csv", "peak_divergence.csv"):
        meta, rows = read_csv(tmp_path / "fss" / name)
        assert rows


def test_run_fss_rejects_duplicate_sizes(tmp_path):
    runs = write_synthetic_runs(tmp_path / "runs")
    with pytest.raises(FSSError):
        run_fss(runs + runs[:1])
