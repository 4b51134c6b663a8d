"""Plot-ready CSV tables, one per figure of the entanglement study.

Figure numbering follows the dimension of the runs:

========  =====================================  ======  ======  ======
content                                          1d      2d      3d
========  =====================================  ======  ======  ======
curves    E_gl and dE_gl/dlambda vs lambda       fig1    fig4    fig7
peaks     lambda_m vs 1/S with the fitted model  fig2    fig5
collapse  scaled derivative curves (+ inset)     fig3    fig6
========  =====================================  ======  ======  ======

fig8 holds E_gl and the N-tangle against 1/lambda.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

from .fss import FSSError
from .ioutil import read_csv, read_json, write_csv
from .sweep import load_run

CURVE_FIG = {1: "fig1", 2: "fig4", 3: "fig7"}
PEAK_FIG = {1: "fig2", 2: "fig5"}
COLLAPSE_FIG = {1: "fig3", 2: "fig6"}


class ExportError(ValueError):
    pass


def export_figures(runs: Sequence[Path], fss_dirs: Sequence[Path], fig8_runs: Sequence[Path] | None,
                   output_dir: Path, config_hash: str) -> list[Path]:
    """Write the figure tables; returns the files written."""
    if not runs and not fss_dirs and not fig8_runs:
        raise ExportError("no runs to export")
    written = []
    curves: dict[int, list] = {}
    loaded = {}
    for run in runs:
        if not (Path(run) / "peak.json").exists():
            raise ExportError(f"run directory {run} has no sweep output")
        lattice, rows, curve, _ = load_run(run)
        loaded[Path(run)] = (lattice, rows)
        deriv = {}
        if curve is not None:
            deriv = dict(zip(curve.lam.tolist(), curve.value.tolist()))
        for row in rows:
            curves.setdefault(lattice.dimension, []).append(
                (lattice.size_label, lattice.sizes_str, row["lambda"], row["e_gl"], deriv.get(row["lambda"]))
            )
    for dim, rows in sorted(curves.items()):
        path = output_dir / f"{CURVE_FIG[dim]}.csv"
        write_csv(path, ("size", "sizes", "lambda", "e_gl", "de_gl_dlambda"), sorted(rows), config_hash)
        written.append(path)

    for fss_dir in fss_dirs:
        fit_file = Path(fss_dir) / "scaling_fit.json"
        if not fit_file.exists():
            raise ExportError(f"{fss_dir} has no scaling_fit.json")
        info = read_json(fit_file)
        dim = int(info["dimension"])
        if dim not in PEAK_FIG:
            raise FSSError(f"no scaling figures for dimension {dim}")
        fit = info["scaling_fit"]
        rows = []
        for p in info["peaks"]:
            s = p["n_or_l"]
            model = fit["lambda_c"] + fit["c"] * s ** (-fit["alpha"])
            rows.append((s, 1.0 / s, p["lambda_m"], model, abs(p["lambda_m"] - fit["lambda_c"])))
        path = output_dir / f"{PEAK_FIG[dim]}.csv"
        write_csv(path, ("size", "inv_size", "lambda_m", "fitted_lambda_m", "abs_offset"), rows, config_hash)
        written.append(path)
        collapse = Path(fss_dir) / "collapse.csv"
        if collapse.exists():
            _, crow = read_csv(collapse)
            path = output_dir / f"{COLLAPSE_FIG[dim]}.csv"
            write_csv(path, ("size", "lambda", "x", "y"),
                      [(r["size"], r["lambda"], r["x"], r["y"]) for r in crow], config_hash)
            written.append(path)
        inset = [(p["n_or_l"], math.log(p["n_or_l"]), p["peak_value"]) for p in info["peaks"]]
        path = output_dir / f"{COLLAPSE_FIG[dim]}_inset.csv"
        write_csv(path, ("size", "ln_size", "peak_value"), inset, config_hash)
        written.append(path)

    if fig8_runs is None:
        fig8_runs = [r for r, (lat, _) in loaded.items() if lat.n_sites % 2 == 0]
    rows = []
    for run in fig8_runs:
        run = Path(run)
        if run not in loaded:
            lattice, srows, _, _ = load_run(run)
            loaded[run] = (lattice, srows)
        lattice, srows = loaded[run]
        if lattice.n_sites % 2:
            raise ExportError(f"{run}: N-tangle needs an even number of sites, N={lattice.n_sites}")
        for row in srows:
            if row["lambda"] > 0:
                rows.append((lattice.dimension, lattice.sizes_str, 1.0 / row["lambda"], row["lambda"],
                             row["e_gl"], row["n_tangle"]))
    if rows:
        path = output_dir / "fig8.csv"
        write_csv(path, ("d", "sizes", "inv_lambda", "lambda", "e_gl", "n_tangle"), sorted(rows), config_hash)
        written.append(path)
    return written
