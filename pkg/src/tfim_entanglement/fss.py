"""Finite-size scaling of the entanglement-derivative peak.

Three analyses over a family of sweeps:

* extrapolation of the peak position, lambda_m(S) = lambda_c + c * S**-alpha;
* data collapse of dE_gl/dlambda against S**(1/nu) * (lambda - lambda_m),
  with each curve shifted down by its own peak value;
* a linear fit of the peak height against ln S.

S is the scaling variable: N for chains, L for square and cubic lattices.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np
import scipy.optimize
import scipy.stats
from scipy.interpolate import CubicSpline

from .ioutil import log_event, write_csv, write_json
from .sweep import DerivativeCurve, PeakEstimate, load_run

NU_BOUNDS = (0.2, 3.0)
NU_SCAN_POINTS = 57
COLLAPSE_GRID_POINTS = 101
FLAT_LANDSCAPE = 0.01
LOG_DIVERGENCE_R2 = 0.98
# collapse window: ten coarse grid steps either side of each peak
DEFAULT_WINDOWS = {1: 0.2, 2: 0.1, 3: 0.1}


class FSSError(ValueError):
    pass


class InterpolationError(ValueError):
    pass


class _Interpolant:
    """Cubic spline through a table, linear where the spline oscillates."""

    def __init__(self, xs: Sequence[float], ys: Sequence[float]):
        self.x = np.asarray(xs, dtype=float)
        self.y = np.asarray(ys, dtype=float)
        if self.x.ndim != 1 or self.x.shape != self.y.shape or len(self.x) == 0:
            raise InterpolationError("table needs matching 1d x and y arrays")
        if np.any(np.diff(self.x) <= 0):
            raise InterpolationError("table x values must be strictly increasing")
        self.spline = CubicSpline(self.x, self.y) if len(self.x) >= 3 else None

    def __call__(self, q) -> np.ndarray:
        q = np.atleast_1d(np.asarray(q, dtype=float))
        span = self.x[-1] - self.x[0]
        eps = 1e-12 * max(span, 1.0)
        if np.any(q < self.x[0] - eps) or np.any(q > self.x[-1] + eps):
            raise InterpolationError(
                f"query outside table range [{self.x[0]}, {self.x[-1]}]; no extrapolation"
            )
        q = np.clip(q, self.x[0], self.x[-1])
        linear = np.interp(q, self.x, self.y)
        if self.spline is None:
            return linear
        cubic = self.spline(q)
        # oscillation guard: a cubic value far outside the local 4-node
        # envelope falls back to linear interpolation
        k = np.clip(np.searchsorted(self.x, q) - 1, 0, len(self.x) - 2)
        lo = np.clip(k - 1, 0, len(self.x) - 1)
        hi = np.clip(k + 2, 0, len(self.x) - 1)
        window = np.stack([self.y[np.clip(lo + j, 0, hi)] for j in range(4)])
        ymin, ymax = window.min(axis=0), window.max(axis=0)
        band = ymax - ymin
        bad = (cubic < ymin - band) | (cubic > ymax + band)
        return np.where(bad, linear, cubic)


def interpolate_curve(table, x):
    """Interpolate a ``(xs, ys)`` table at ``x``; scalars in, scalars out."""
    result = _Interpolant(*table)(x)
    return float(result[0]) if np.ndim(x) == 0 else result


@dataclass(frozen=True)
class ScalingFit:
    lambda_c: float
    alpha: float
    c: float
    residual_rms: float
    sizes_used: list[int]
    side: str
    linear_intercept: float
    linear_slope: float
    loglog_alpha: float
    monotone: bool = True
    side_consistent: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def _sizes_and_positions(peaks: Sequence[PeakEstimate], exclude: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    chosen = sorted((p for p in peaks if p.n_or_l not in set(exclude)), key=lambda p: p.n_or_l)
    sizes = np.array([p.n_or_l for p in chosen], dtype=float)
    if len(np.unique(sizes)) != len(sizes):
        raise FSSError(f"duplicate system sizes {sizes.tolist()}")
    return sizes, np.array([p.lambda_m for p in chosen])


def extrapolate_critical_point(peaks: Sequence[PeakEstimate],
                               exclude_sizes: Sequence[int] = ()) -> ScalingFit:
    """Fit lambda_m(S) = lambda_c + c * S**-alpha.

    The linear fit against 1/S gives a first lambda_c, the log-log slope of
    |lambda_c - lambda_m| against S a first alpha; both seed a joint
    least-squares fit of all three parameters, whose values are reported.
    """
    sizes, lam_m = _sizes_and_positions(peaks, exclude_sizes)
    if len(sizes) < 3:
        raise FSSError(f"need at least 3 sizes for the extrapolation, got {len(sizes)}")
    steps = np.diff(lam_m)
    monotone = bool(np.all(steps > 0) or np.all(steps < 0))
    if not monotone:
        log_event("non_monotone_peaks", level=logging.WARNING, sizes=sizes.tolist(),
                  lambda_m=lam_m.tolist())

    slope, intercept = np.polyfit(1.0 / sizes, lam_m, 1)
    gaps = np.abs(lam_m - intercept)
    if np.all(gaps > 0):
        neg_alpha, log_amp = np.polyfit(np.log(sizes), np.log(gaps), 1)
        alpha0 = -neg_alpha
        c0 = math.copysign(math.exp(log_amp), float(np.mean(lam_m - intercept)))
    else:
        alpha0, c0 = 1.0, slope
    if not np.isfinite(alpha0) or alpha0 <= 0:
        alpha0, c0 = 1.0, slope

    def residuals(p):
        lc, c, a = p
        return lc + c * sizes ** (-a) - lam_m

    sol = scipy.optimize.least_squares(
        residuals, x0=[intercept, c0, alpha0], method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
        max_nfev=20000,
    )
    lc, c, a = (float(v) for v in sol.x)
    rms = float(np.sqrt(np.mean(residuals(sol.x) ** 2)))
    signs = np.sign(lam_m - lc)
    side = "from-above" if c > 0 else "from-below"
    consistent = bool(np.all(signs == signs[0]))
    if not consistent:
        log_event("mixed_approach_side", level=logging.WARNING, lambda_c=lc,
                  offsets=(lam_m - lc).tolist())
    return ScalingFit(lc, a, c, rms, [int(s) for s in sizes], side,
                      float(intercept), float(slope), float(alpha0), monotone, consistent)


@dataclass(frozen=True)
class CollapseResult:
    nu: float
    quality: float
    lambda_m_per_size: dict[int, float]
    scaled_curves: list[tuple[int, float, float, float]]
    quality_curve: list[tuple[float, float]]
    inconclusive: bool = False
    interior_minimum: bool = True
    sizes_used: list[int] = field(default_factory=list)


class _ScaledCurve:
    def __init__(self, size: int, curve: DerivativeCurve, peak: PeakEstimate,
                 center: float, window: float | None):
        lam, val = curve.lam, curve.value
        if window is not None:
            keep = np.abs(lam - peak.lambda_m) <= window + 1e-12
            lam, val = lam[keep], val[keep]
        if len(lam) < 2:
            raise FSSError(f"size {size}: fewer than 2 derivative points in the collapse window")
        self.size = size
        self.center = center
        self.lam = lam
        self.y = val - peak.peak_value
        self.interp = _Interpolant(lam, self.y)

    def x_range(self, nu: float) -> tuple[float, float]:
        s = self.size ** (1.0 / nu)
        return s * (self.lam[0] - self.center), s * (self.lam[-1] - self.center)

    def at(self, x: np.ndarray, nu: float) -> np.ndarray:
        return self.interp(self.center + x / self.size ** (1.0 / nu))


def _collapse_quality(curves: Sequence[_ScaledCurve], nu: float) -> float:
    ranges = [c.x_range(nu) for c in curves]
    lo = max(r[0] for r in ranges)
    hi = min(r[1] for r in ranges)
    if not hi > lo:
        worst = min(curves, key=lambda c: c.x_range(nu)[1] - c.x_range(nu)[0])
        raise FSSError(f"collapse overlap window is empty at nu={nu:.4g} (size {worst.size})")
    grid = np.linspace(lo, hi, COLLAPSE_GRID_POINTS)
    ys = [c.at(grid, nu) for c in curves]
    pairs = [np.mean((a - b) ** 2) for a, b in itertools.combinations(ys, 2)]
    return float(np.mean(pairs))


def golden_section(f, a: float, b: float, tol: float = 1e-7) -> tuple[float, float]:
    """Minimize a unimodal ``f`` on [a, b]; returns (argmin, min)."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    return x, f(x)


def collapse_fit(curves: Mapping[int, DerivativeCurve], peaks: Mapping[int, PeakEstimate],
                 nu_bounds: tuple[float, float] = NU_BOUNDS, window: float | None = None,
                 centering: str = "lambda_m", lambda_c: float | None = None,
                 exclude_sizes: Sequence[int] = ()) -> CollapseResult:
    """Find nu that best collapses the peak-subtracted derivative curves.

    The objective is the mean squared deviation between every pair of
    curves, interpolated on a common x grid spanning the overlap of their x
    ranges. ``window`` keeps only points within that distance (in lambda) of
    each curve's own peak. A coarse log-spaced scan over ``nu_bounds``
    locates the basin, then golden-section search refines within the
    neighbouring scan points.
    """
    if centering not in ("lambda_m", "lambda_c"):
        raise FSSError(f"unknown centering {centering!r}")
    if centering == "lambda_c" and lambda_c is None:
        raise FSSError("lambda_c centering needs lambda_c")
    sizes = sorted(s for s in curves if s not in set(exclude_sizes))
    if len(sizes) < 3:
        raise FSSError(f"need at least 3 sizes for a collapse, got {len(sizes)}")
    missing = [s for s in sizes if s not in peaks]
    if missing:
        raise FSSError(f"no peak estimate for sizes {missing}")
    scaled = [
        _ScaledCurve(s, curves[s], peaks[s],
                     peaks[s].lambda_m if centering == "lambda_m" else float(lambda_c), window)
        for s in sizes
    ]
    lo, hi = nu_bounds
    scan = np.geomspace(lo, hi, NU_SCAN_POINTS)
    values = np.array([_collapse_quality(scaled, nu) for nu in scan])
    k = int(np.argmin(values))
    a, b = scan[max(k - 1, 0)], scan[min(k + 1, len(scan) - 1)]
    nu, quality = golden_section(lambda v: _collapse_quality(scaled, v), a, b)
    if quality > values[k]:
        nu, quality = float(scan[k]), float(values[k])
    interior = 0 < k < len(scan) - 1
    inconclusive = bool((values.max() - values.min()) < FLAT_LANDSCAPE * values.max())
    if not interior or inconclusive:
        log_event("collapse_warning", level=logging.WARNING, nu=nu, interior=interior,
                  inconclusive=inconclusive)
    table = []
    for c in scaled:
        s = c.size ** (1.0 / nu)
        table += [(c.size, float(l), float(s * (l - c.center)), float(y)) for l, y in zip(c.lam, c.y)]
    quality_curve = sorted([(float(v), float(q)) for v, q in zip(scan, values)] + [(nu, quality)])
    return CollapseResult(
        nu=float(nu), quality=float(quality),
        lambda_m_per_size={s: peaks[s].lambda_m for s in sizes},
        scaled_curves=table, quality_curve=quality_curve,
        inconclusive=inconclusive, interior_minimum=interior, sizes_used=sizes,
    )


class LogDivergence(NamedTuple):
    slope: float
    r_squared: float


def peak_divergence_check(peaks: Sequence[PeakEstimate], exclude_sizes: Sequence[int] = ()) -> LogDivergence:
    """Regress the peak height on ln S; r^2 >= 0.98 counts as logarithmic."""
    chosen = sorted((p for p in peaks if p.n_or_l not in set(exclude_sizes)), key=lambda p: p.n_or_l)
    if len(chosen) < 3:
        raise FSSError(f"need at least 3 sizes, got {len(chosen)}")
    fit = scipy.stats.linregress(np.log([p.n_or_l for p in chosen]), [p.peak_value for p in chosen])
    return LogDivergence(float(fit.slope), float(fit.rvalue ** 2))


@dataclass
class FSSReport:
    dimension: int
    fit: ScalingFit
    collapse: CollapseResult | None
    divergence: LogDivergence | None
    peaks: list[PeakEstimate]


def run_fss(run_dirs: Sequence[str | Path], output_dir: str | Path | None = None,
            config_hash: str = "", lambda_exclude: Sequence[int] = (),
            nu_exclude: Sequence[int] = (), window: float | None = None,
            centering: str = "lambda_m") -> FSSReport:
    """Load sweep outputs, run all three analyses and write the result files.

    ``window`` defaults to DEFAULT_WINDOWS for the runs' dimension.
    """
    curves: dict[int, DerivativeCurve] = {}
    peaks: dict[int, PeakEstimate] = {}
    dims = set()
    for run in run_dirs:
        lattice, _, curve, peak = load_run(run)
        if peak is None or curve is None:
            raise FSSError(f"run {run} has no peak estimate")
        if peak.n_or_l in peaks:
            raise FSSError(f"two runs share system size {peak.n_or_l}")
        dims.add(lattice.dimension)
        curves[peak.n_or_l] = curve
        peaks[peak.n_or_l] = peak
    if len(dims) != 1:
        raise FSSError(f"runs mix lattice dimensions {sorted(dims)}")
    dimension = dims.pop()
    if window is None:
        window = DEFAULT_WINDOWS[dimension]
    peak_list = [peaks[s] for s in sorted(peaks)]
    fit = extrapolate_critical_point(peak_list, lambda_exclude)
    collapse = collapse_fit(curves, peaks, window=window, centering=centering,
                            lambda_c=fit.lambda_c, exclude_sizes=nu_exclude)
    divergence = peak_divergence_check(peak_list)
    report = FSSReport(dimension, fit, collapse, divergence, peak_list)
    if output_dir is not None:
        write_fss_outputs(report, Path(output_dir), config_hash)
    return report


def write_fss_outputs(report: FSSReport, out: Path, config_hash: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "dimension": report.dimension,
        "scaling_fit": report.fit.to_dict(),
        "peaks": [p.to_dict() for p in report.peaks],
    }
    if report.collapse is not None:
        col = report.collapse
        payload["collapse"] = {
            "nu": col.nu, "quality": col.quality, "inconclusive": col.inconclusive,
            "interior_minimum": col.interior_minimum, "sizes_used": col.sizes_used,
            "lambda_m_per_size": {str(k): v for k, v in col.lambda_m_per_size.items()},
        }
        write_csv(out / "collapse.csv", ("size", "lambda", "x", "y"), col.scaled_curves, config_hash)
        write_csv(out / "collapse_quality.csv", ("nu", "quality"), col.quality_curve, config_hash)
    if report.divergence is not None:
        payload["peak_divergence"] = report.divergence._asdict()
        write_csv(out / "peak_divergence.csv", ("size", "ln_size", "lambda_m", "peak_value"),
                  [(p.n_or_l, math.log(p.n_or_l), p.lambda_m, p.peak_value) for p in report.peaks],
                  config_hash)
    write_json(out / "scaling_fit.json", payload, config_hash)
