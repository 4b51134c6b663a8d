"""Ground states of the transverse-field Ising Hamiltonian.

Lanczos with full reorthogonalization handles large systems; dense
diagonalization of the explicitly built matrix serves as the small-N oracle.

Near lambda -> infinity the even- and odd-parity ground states become
exponentially close in energy, and a full-space solve converges to an
arbitrary mixture of the two. A full-space request is therefore solved as
two independent sector problems and the lower one is kept; ties (relative
difference below DEGENERACY_TOL) go to the even sector and flag the result
as degenerate. The returned state is always a parity eigenstate, i.e. the
symmetric cat-like ground state rather than a symmetry-broken one.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import psutil
import scipy.linalg

from .hamiltonian import (
    HamiltonianOperator,
    apply,
    dense_matrix,
    sector_indices,
    unpack,
)

DENSE_MAX_SITES = 14
DEGENERACY_TOL = 1e-12
MAX_KRYLOV_DIM = 80
LOWEST_CHECK_ITERS = 20

Matvec = Callable[[np.ndarray, np.ndarray], np.ndarray]


class SolverError(RuntimeError):
    pass


class ConvergenceError(SolverError):
    def __init__(self, message: str, best_residual: float, iterations: int):
        super().__init__(f"{message} (best residual {best_residual:.3e} after {iterations} iterations)")
        self.best_residual = best_residual
        self.iterations = iterations


@dataclass(frozen=True)
class GroundStateResult:
    energy: float
    vector: np.ndarray
    iterations: int
    residual: float
    degenerate: bool = False


def memory_budget() -> int:
    """Bytes the solver may use for Krylov vectors."""
    env = os.environ.get("TFIM_MEMORY_BUDGET")
    if env:
        return int(float(env))
    return int(0.6 * psutil.virtual_memory().available)


def default_krylov_dim(dim: int, budget: int | None = None) -> int:
    budget = memory_budget() if budget is None else budget
    fits = budget // (8 * dim) - 4
    return int(max(4, min(MAX_KRYLOV_DIM, fits, dim)))


def canonical_gauge(v: np.ndarray) -> np.ndarray:
    """Flip the global sign so the largest-magnitude amplitude is positive."""
    k = int(np.argmax(np.abs(v)))
    return -v if v[k] < 0 else v


def _operator(H: HamiltonianOperator) -> tuple[Matvec, int]:
    if H.sector == "full":
        return (lambda x, out: apply(H, x, out)), H.dim
    return H.apply_packed, H.packed_dim


def _lanczos_cycle(matvec: Matvec, q: np.ndarray, m: int, tol: float,
                   deflate: Sequence[np.ndarray]) -> tuple[np.ndarray, int]:
    """One Lanczos run of at most ``m`` steps from unit vector ``q``.

    Returns the lowest Ritz vector and the number of operator applications.
    """
    n = q.shape[0]
    basis = np.empty((m, n))
    basis[0] = q
    alphas: list[float] = []
    betas: list[float] = []
    w = np.empty(n)
    s = np.ones(1)
    steps = 0
    for j in range(m):
        matvec(basis[j], w)
        steps += 1
        a = float(basis[j] @ w)
        w -= a * basis[j]
        if j > 0:
            w -= betas[-1] * basis[j - 1]
        before = np.linalg.norm(w)
        # classical Gram-Schmidt, repeated once when cancellation shows
        # orthogonality was lost (ghost eigenvalue guard)
        for _ in range(2):
            w -= (basis[: j + 1] @ w) @ basis[: j + 1]
            for u in deflate:
                w -= (u @ w) * u
            after = np.linalg.norm(w)
            if after > 0.7 * before:
                break
            before = after
        b = float(np.linalg.norm(w))
        alphas.append(a)
        if j == 0:
            s = np.ones(1)
        else:
            _, s = scipy.linalg.eigh_tridiagonal(
                np.array(alphas), np.array(betas), select="i", select_range=(0, 0)
            )
            s = s[:, 0]
        scale = max(abs(a), 1.0)
        if b * abs(s[-1]) <= 0.1 * tol or b <= 1e-13 * scale or j == m - 1:
            break
        betas.append(b)
        basis[j + 1] = w / b
    x = s @ basis[: len(s)]
    return x / np.linalg.norm(x), steps


def _pick_sector(e_even: float, e_odd: float) -> tuple[str, bool]:
    if abs(e_even - e_odd) <= DEGENERACY_TOL * max(1.0, abs(e_even)):
        return "even-parity", True
    return ("even-parity", False) if e_even < e_odd else ("odd-parity", False)


def _curvature_check(matvec: Matvec, energy: float, shift: float, n: int,
                     rng: np.random.Generator) -> bool:
    """CG on (H - (E - shift)) from a random right-hand side.

    Negative curvature p.(H - sigma)p < 0 exposes a state below ``energy``;
    returns False in that case.
    """
    sigma = energy - shift
    b = rng.standard_normal(n)
    r = b.copy()
    p = r.copy()
    ap = np.empty(n)
    rr = float(r @ r)
    for _ in range(LOWEST_CHECK_ITERS):
        matvec(p, ap)
        ap -= sigma * p
        curv = float(p @ ap)
        if curv <= 0.0:
            return False
        step = rr / curv
        r -= step * ap
        rr_new = float(r @ r)
        if rr_new <= 1e-24 * float(b @ b):
            break
        p *= rr_new / rr
        p += r
        rr = rr_new
    return True


def _lanczos(H: HamiltonianOperator, tol: float, max_iter: int, seed: int,
             krylov_dim: int | None, deflate: Sequence[np.ndarray] = (),
             check_lowest: bool = True) -> tuple[float, np.ndarray, int, float]:
    matvec, n = _operator(H)
    m = krylov_dim or default_krylov_dim(n)
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(n)
    for u in deflate:
        q -= (u @ q) * u
    q /= np.linalg.norm(q)
    hx = np.empty(n)
    total, best = 0, np.inf
    while total < max_iter:
        x, steps = _lanczos_cycle(matvec, q, min(m, max_iter - total, n), tol, deflate)
        total += steps
        matvec(x, hx)
        energy = float(x @ hx)
        residual = float(np.linalg.norm(hx - energy * x))
        best = min(best, residual)
        if residual <= tol:
            break
        q = x
    else:
        raise ConvergenceError("Lanczos did not converge", best, total)
    if check_lowest and not deflate and n > 1:
        if not _curvature_check(matvec, energy, max(1e-6, 10 * tol), n, rng):
            raise ConvergenceError("converged to an excited state", best, total)
    return energy, x, total, residual


def lanczos_ground_state(H: HamiltonianOperator, tol: float = 1e-10, max_iter: int = 2000,
                         seed: int = 0, krylov_dim: int | None = None) -> GroundStateResult:
    """Lowest eigenpair of ``H`` by restarted Lanczos.

    Each cycle keeps up to ``krylov_dim`` basis vectors (default: as many as
    fit the memory budget, at most 80) and restarts from the Ritz vector
    until the true residual ``||Hv - Ev||`` drops to ``tol``. Parity sectors
    are solved on packed vectors; the returned vector is always full length.

    Raises ConvergenceError when ``max_iter`` operator applications do not
    suffice, or when a shifted CG probe finds a state below the converged
    energy.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 2:
        raise ValueError("max_iter must be at least 2")
    if H.sector != "full":
        energy, x, total, residual = _lanczos(H, tol, max_iter, seed, krylov_dim)
        return GroundStateResult(energy, canonical_gauge(unpack(x, H.sector)), total, residual)
    even = lanczos_ground_state(H.with_sector("even-parity"), tol, max_iter, seed, krylov_dim)
    odd = lanczos_ground_state(H.with_sector("odd-parity"), tol, max_iter, seed, krylov_dim)
    sector, degenerate = _pick_sector(even.energy, odd.energy)
    best = even if sector == "even-parity" else odd
    return GroundStateResult(best.energy, best.vector, even.iterations + odd.iterations,
                             best.residual, degenerate)


def _dense_sector(mat: np.ndarray, H: HamiltonianOperator, sector: str) -> GroundStateResult:
    idx = sector_indices(H.n_sites, sector)
    block = mat[np.ix_(idx, idx)]
    _, vecs = scipy.linalg.eigh(block, subset_by_index=[0, 0])
    x = vecs[:, 0]
    hx = block @ x
    energy = float(x @ hx)
    full = np.zeros(H.dim)
    full[idx] = x
    return GroundStateResult(energy, canonical_gauge(full), 0, float(np.linalg.norm(hx - energy * x)))


def _dense(H: HamiltonianOperator) -> np.ndarray:
    if H.n_sites > DENSE_MAX_SITES:
        raise SolverError(f"dense diagonalization capped at {DENSE_MAX_SITES} sites, got {H.n_sites}")
    return dense_matrix(H)


def dense_ground_state(H: HamiltonianOperator) -> GroundStateResult:
    """Lowest eigenpair from full diagonalization of the dense matrix."""
    mat = _dense(H)
    if H.sector != "full":
        return _dense_sector(mat, H, H.sector)
    even = _dense_sector(mat, H, "even-parity")
    odd = _dense_sector(mat, H, "odd-parity")
    sector, degenerate = _pick_sector(even.energy, odd.energy)
    best = even if sector == "even-parity" else odd
    return GroundStateResult(best.energy, best.vector, 0, best.residual, degenerate)


def energy_gap(H: HamiltonianOperator, tol: float = 1e-10, seed: int = 0,
               method: str = "auto") -> float:
    """E1 - E0 within the operator's sector (the whole spectrum for ``full``).

    ``method`` is ``dense``, ``lanczos`` or ``auto`` (dense up to 12 sites).
    The Lanczos route deflates the ground state to reach the second level; in
    the full space the two parity sectors are solved separately and merged.
    """
    if method == "auto":
        method = "dense" if H.n_sites <= 12 else "lanczos"
    if method == "dense":
        mat = _dense(H)
        if H.sector != "full":
            idx = sector_indices(H.n_sites, H.sector)
            mat = mat[np.ix_(idx, idx)]
        if mat.shape[0] < 2:
            raise SolverError("sector holds a single state; no gap")
        vals = scipy.linalg.eigh(mat, eigvals_only=True, subset_by_index=[0, 1])
        return float(vals[1] - vals[0])
    if method != "lanczos":
        raise ValueError(f"unknown method {method!r}")
    sectors = ["even-parity", "odd-parity"] if H.sector == "full" else [H.sector]
    levels = []
    for sector in sectors:
        Hs = H.with_sector(sector)
        if Hs.packed_dim < 2:
            levels.append(_lanczos(Hs, tol, 2000, seed, None)[0])
            continue
        e0, v0, *_ = _lanczos(Hs, tol, 2000, seed, None)
        e1, *_ = _lanczos(Hs, tol, 2000, seed + 1, None, deflate=[v0], check_lowest=False)
        levels += [e0, e1]
    if len(levels) < 2:
        raise SolverError("sector holds a single state; no gap")
    levels.sort()
    return max(0.0, levels[1] - levels[0])
