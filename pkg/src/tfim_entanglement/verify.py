"""Oracle checks run by ``tfim-ent verify``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .eigensolver import SolverError, dense_ground_state, lanczos_ground_state
from .hamiltonian import HamiltonianOperator, apply, dense_matrix, parity_projector
from .lattice import LatticeSpec, build_lattice
from .observables import (
    compute_observables,
    global_entanglement,
    global_entanglement_site_resolved,
    n_tangle,
    n_tangle_dense,
)

LAMBDAS = (0.1, 0.5, 1.0, 2.0, 10.0)
VERIFY_MAX_ITER = 400


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _ring(n: int, lam: float, sector: str = "full") -> HamiltonianOperator:
    return HamiltonianOperator(lam, build_lattice(LatticeSpec((n,))), n, sector)


def _lanczos(H, tol):
    return lanczos_ground_state(H, tol=tol, max_iter=VERIFY_MAX_ITER)


def check_oracle_equivalence(max_n: int, tol: float) -> str:
    worst_e = worst_g = 0.0
    for n in range(2, max_n + 1):
        for lam in LAMBDAS:
            H = _ring(n, lam)
            lz, dn = _lanczos(H, tol), dense_ground_state(H)
            worst_e = max(worst_e, abs(lz.energy - dn.energy))
            worst_g = max(worst_g, abs(global_entanglement(lz.vector) - global_entanglement(dn.vector)))
    assert worst_e <= tol and worst_g <= 1e-8, f"dE={worst_e:.2e} dEgl={worst_g:.2e}"
    return f"max |dE|={worst_e:.2e}, max |dEgl|={worst_g:.2e}"


def check_residual(max_n: int, tol: float) -> str:
    worst = 0.0
    for lam in LAMBDAS:
        res = _lanczos(_ring(max_n, lam), tol)
        worst = max(worst, res.residual)
    assert worst <= tol, f"residual {worst:.2e} > {tol:.0e}"
    return f"max residual {worst:.2e}"


def check_two_qubit_closed_form(max_n: int, tol: float) -> str:
    worst = 0.0
    for lam in np.linspace(0.0, 5.0, 11):
        res = _lanczos(HamiltonianOperator(lam, [(0, 1)], 2), tol)
        worst = max(worst, abs(res.energy + math.sqrt(4 + lam * lam)),
                    abs(global_entanglement(res.vector) - lam * lam / (4 + lam * lam)))
    assert worst <= max(tol, 1e-10), f"deviation {worst:.2e}"
    return f"max deviation {worst:.2e}"


def check_matrix_free(max_n: int, tol: float) -> str:
    rng = np.random.default_rng(1)
    worst = 0.0
    for n in range(1, min(max_n, 10) + 1):
        H = _ring(n, 0.7)
        v = rng.standard_normal(H.dim)
        worst = max(worst, float(np.max(np.abs(apply(H, v) - dense_matrix(H) @ v))))
    assert worst <= 1e-12, f"deviation {worst:.2e}"
    return f"max deviation {worst:.2e}"


def check_symmetry(max_n: int, tol: float) -> str:
    rng = np.random.default_rng(2)
    worst = 0.0
    for n in range(2, max_n + 1):
        H = _ring(n, 1.3)
        u, v = rng.standard_normal((2, H.dim))
        gap = abs(u @ apply(H, v) - apply(H, u) @ v) / (np.linalg.norm(u) * np.linalg.norm(v))
        worst = max(worst, gap)
    assert worst <= 1e-10, f"asymmetry {worst:.2e}"
    return f"max relative asymmetry {worst:.2e}"


def check_parity_conservation(max_n: int, tol: float) -> str:
    rng = np.random.default_rng(3)
    for n in range(2, max_n + 1):
        H = _ring(n, 0.9)
        even = parity_projector(rng.standard_normal(H.dim), "even-parity")
        leak = np.linalg.norm(parity_projector(apply(H, even), "odd-parity"))
        assert leak == 0.0, f"N={n}: odd-sector leakage {leak:.2e}"
    return "no leakage"


def check_sector_consistency(max_n: int, tol: float) -> str:
    # the even-sector solve against the lowest eigenvalue of the whole,
    # unsplit dense spectrum
    worst = 0.0
    for lam in (0.0, 0.5, 1.0, 3.0, 10.0):
        H = _ring(max_n, lam)
        lowest = scipy.linalg.eigvalsh(dense_matrix(H), subset_by_index=[0, 0])[0]
        worst = max(worst, abs(_lanczos(H.with_sector("even-parity"), tol).energy - lowest))
    assert worst <= max(tol, 1e-10), f"sector mismatch {worst:.2e}"
    return f"max |dE| {worst:.2e}"


def check_observable_invariants(max_n: int, tol: float) -> str:
    for n in range(2, max_n + 1):
        for lam in (0.0,) + LAMBDAS:
            gs = dense_ground_state(_ring(n, lam))
            obs = compute_observables(gs.vector, gs.energy)
            assert 0.0 <= obs.e_gl <= 1.0 + 1e-12, f"N={n} lam={lam}: E_gl={obs.e_gl}"
            assert abs(obs.i_local + obs.i_nonlocal - n) <= 1e-10, "decomposition does not close"
            if lam == 0.0:
                assert obs.e_gl == 0.0, f"E_gl(0) = {obs.e_gl}"
            sites = global_entanglement_site_resolved(gs.vector)
            assert np.ptp(sites) <= 1e-9, f"N={n} lam={lam}: site spread {np.ptp(sites):.2e}"
            assert abs(obs.mag_x) <= 1e-8, f"N={n} lam={lam}: M_x={obs.mag_x:.2e}"
        gs = dense_ground_state(_ring(n, 10.0))
        fid = compute_observables(gs.vector, gs.energy).ghz_fidelity
        assert fid >= 0.99, f"N={n}: GHZ fidelity {fid:.4f} at lambda=10"
    return "ranges, closure, uniformity, M_x, GHZ fidelity ok"


def check_n_tangle(max_n: int, tol: float) -> str:
    worst = 0.0
    for n in range(2, min(max_n, 8) + 1, 2):
        for lam in LAMBDAS:
            v = dense_ground_state(_ring(n, lam)).vector
            worst = max(worst, abs(n_tangle(v) - n_tangle_dense(v)))
    assert worst <= 1e-10, f"deviation {worst:.2e}"
    return f"max deviation {worst:.2e}"


CHECKS: list[tuple[str, Callable[[int, float], str]]] = [
    ("lanczos_vs_dense", check_oracle_equivalence),
    ("residual", check_residual),
    ("two_qubit_closed_form", check_two_qubit_closed_form),
    ("matrix_free_vs_dense", check_matrix_free),
    ("hamiltonian_symmetry", check_symmetry),
    ("parity_conservation", check_parity_conservation),
    ("sector_consistency", check_sector_consistency),
    ("observable_invariants", check_observable_invariants),
    ("n_tangle_vs_dense", check_n_tangle),
]


def run_checks(max_n: int = 10, tol: float = 1e-10) -> list[CheckResult]:
    results = []
    for name, fn in CHECKS:
        try:
            results.append(CheckResult(name, True, fn(max_n, tol)))
        except (AssertionError, SolverError, ValueError) as exc:
            results.append(CheckResult(name, False, str(exc)))
    return results
