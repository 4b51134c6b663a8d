"""Ground-state observables: marginals, global entanglement, N-tangle, magnetizations."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .hamiltonian import popcounts

NORM_TOL = 1e-8


class ObservableError(ValueError):
    pass


def _n_sites(v: np.ndarray) -> int:
    n = int(v.shape[0]).bit_length() - 1
    if v.ndim != 1 or v.shape[0] != 1 << n:
        raise ObservableError(f"state length {v.shape} is not a power of two")
    return n


def _check_normalized(v: np.ndarray) -> int:
    n = _n_sites(v)
    norm2 = float(v @ v)
    if abs(norm2 - 1.0) > NORM_TOL:
        raise ObservableError(f"state is not normalized (norm^2 = {norm2:.12g})")
    return n


@dataclass(frozen=True)
class SingleSiteRDM:
    entries: np.ndarray

    @property
    def purity(self) -> float:
        return float(np.sum(self.entries * self.entries))

    @property
    def linear_entropy(self) -> float:
        return 2.0 * (1.0 - self.purity)


def _site_rdm(v: np.ndarray, n: int, site: int) -> np.ndarray:
    t = v.reshape(1 << (n - 1 - site), 2, 1 << site)
    up = t[:, 0, :]
    down = t[:, 1, :]
    r00 = float(np.sum(up * up))
    r11 = float(np.sum(down * down))
    r01 = float(np.sum(up * down))
    return np.array([[r00, r01], [r01, r11]])


def reduce_single_site(v: np.ndarray, site: int) -> SingleSiteRDM:
    """Trace out every site but ``site``; real states give a real symmetric rho."""
    n = _check_normalized(v)
    if not 0 <= site < n:
        raise ObservableError(f"site {site} out of range for N={n}")
    return SingleSiteRDM(_site_rdm(v, n, site))


def global_entanglement_site_resolved(v: np.ndarray) -> np.ndarray:
    n = _check_normalized(v)
    return np.array([SingleSiteRDM(_site_rdm(v, n, i)).linear_entropy for i in range(n)])


def global_entanglement(v: np.ndarray) -> float:
    """Linear entropy 2(1 - Tr rho_0^2) of site 0.

    Equals the Meyer-Wallach measure on translation-invariant states, where
    every site has the same marginal.
    """
    return reduce_single_site(v, 0).linear_entropy


def information_decomposition(v: np.ndarray) -> tuple[float, float]:
    """(local, nonlocal) information; they always sum to N."""
    entropies = global_entanglement_site_resolved(v)
    i_nonlocal = float(np.sum(entropies))
    return float(len(entropies) - i_nonlocal), i_nonlocal


def n_tangle(v: np.ndarray) -> float:
    """|<v| Y^{(x)N} |v*>|^2 for a real state of an even number of qubits.

    Y|0> = i|1> and Y|1> = -i|0>, so Y^{(x)N}|b> = i^N (-1)^{popcount(b)} |~b>
    with ~b the bitwise complement. For real v the global i^N drops out of the
    modulus and the overlap is sum_b (-1)^{popcount(b)} v[b] v[~b]. Since
    ~b = 2^N - 1 - b, v[~b] is v reversed.
    """
    n = _check_normalized(v)
    if n % 2:
        raise ObservableError(f"N-tangle is only defined for an even number of qubits, got N={n}")
    if np.iscomplexobj(v):
        raise ObservableError("N-tangle expects a real state vector")
    sign = 1.0 - 2.0 * (popcounts(n) & 1)
    overlap = float(np.sum(sign * v * v[::-1]))
    return overlap * overlap


def sigma_y_string(n: int) -> np.ndarray:
    """Dense Y (x) Y (x) ... (x) Y on n qubits."""
    y = np.array([[0, -1j], [1j, 0]])
    out = np.ones((1, 1), dtype=complex)
    for _ in range(n):
        out = np.kron(out, y)
    return out


def n_tangle_dense(v: np.ndarray) -> float:
    """Oracle: explicit contraction with the dense Y string."""
    n = _n_sites(v)
    amp = np.asarray(v, dtype=complex)
    return float(abs(amp.conj() @ sigma_y_string(n) @ amp.conj()) ** 2)


def magnetization_z(v: np.ndarray) -> float:
    n = _check_normalized(v)
    rdms = [_site_rdm(v, n, i) for i in range(n)]
    return float(np.mean([r[0, 0] - r[1, 1] for r in rdms]))


def magnetization_x(v: np.ndarray) -> float:
    n = _check_normalized(v)
    return float(np.mean([2.0 * _site_rdm(v, n, i)[0, 1] for i in range(n)]))


def ghz_state(n: int) -> np.ndarray:
    """(|+...+> + |-...->)/sqrt(2) written in the Z basis.

    |+...+> is uniform and |-...-> carries (-1)^popcount, so their sum is the
    uniform superposition of even-popcount strings with amplitude
    2^{-(N-1)/2}.
    """
    even = (popcounts(n) & 1) == 0
    return np.where(even, 2.0 ** (-(n - 1) / 2), 0.0)


def ghz_z_state(n: int) -> np.ndarray:
    v = np.zeros(1 << n)
    v[0] = v[-1] = 2 ** -0.5
    return v


def product_x_state(n: int) -> np.ndarray:
    return np.full(1 << n, 2.0 ** (-n / 2))


def ghz_fidelity(v: np.ndarray) -> float:
    n = _check_normalized(v)
    even = (popcounts(n) & 1) == 0
    overlap = float(np.sum(v[even])) * 2.0 ** (-(n - 1) / 2)
    return overlap * overlap


@dataclass(frozen=True)
class ObservableSet:
    energy: float
    e_gl: float
    n_tangle: float | None
    i_local: float
    i_nonlocal: float
    mag_x: float
    mag_z: float
    ghz_fidelity: float

    def to_dict(self) -> dict:
        return asdict(self)


def compute_observables(v: np.ndarray, energy: float) -> ObservableSet:
    """All observables of a ground state from one set of site marginals.

    ``e_gl`` is the site average of the linear entropies (Meyer-Wallach),
    which reduces to the single-site value on periodic lattices.
    ``n_tangle`` is None for odd N.
    """
    n = _check_normalized(v)
    rdms = [_site_rdm(v, n, i) for i in range(n)]
    entropies = np.array([SingleSiteRDM(r).linear_entropy for r in rdms])
    i_nonlocal = float(np.sum(entropies))
    return ObservableSet(
        energy=float(energy),
        e_gl=i_nonlocal / n,
        n_tangle=n_tangle(v) if n % 2 == 0 else None,
        i_local=float(n - i_nonlocal),
        i_nonlocal=i_nonlocal,
        mag_x=float(np.mean([2.0 * r[0, 1] for r in rdms])),
        mag_z=float(np.mean([r[0, 0] - r[1, 1] for r in rdms])),
        ghz_fidelity=ghz_fidelity(v),
    )
