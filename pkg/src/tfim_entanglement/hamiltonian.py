"""Matrix-free transverse-field Ising Hamiltonian in the sigma_z product basis.

    H = -lambda * sum_<ij> X_i X_j - sum_i Z_i

Basis convention: bit ``i`` of a basis index is site ``i``; bit value 0 is
the Z = +1 state |0>, bit value 1 is Z = -1 (|1>). All amplitudes are real.

Besides full-length vectors (length 2**N), parity sectors can be stored
*packed*: a sector of fixed popcount parity holds 2**(N-1) states, and the
packed index ``c`` maps to the full index ``(c << 1) | p`` where the low bit
``p`` is fixed by the required parity. The eigensolver works on packed
vectors to halve memory and time.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numba
import scipy.sparse
import numpy as np

from .lattice import Edge

SECTORS = ("full", "even-parity", "odd-parity")

# the bundled TBB is too old for numba; prefer OpenMP
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


class HamiltonianError(ValueError):
    pass


@numba.njit(cache=True, inline="always")
def _popcount(x):
    x = np.int64(x)
    c = 0
    while x:
        x &= x - 1
        c += 1
    return c


@numba.njit(cache=True, parallel=True)
def _apply_full(v, masks, lam, n_sites, out):
    for i in numba.prange(v.shape[0]):
        b = np.int64(i)
        acc = 0.0
        for m in masks:
            acc += v[b ^ m]
        out[b] = -(n_sites - 2 * _popcount(b)) * v[b] - lam * acc


@numba.njit(cache=True, parallel=True)
def _apply_packed(v, masks, lam, n_sites, odd, out):
    for i in numba.prange(v.shape[0]):
        c = np.int64(i)
        low = (_popcount(c) + odd) & 1
        pc = _popcount(c) + low
        acc = 0.0
        for m in masks:
            acc += v[c ^ m]
        out[c] = -(n_sites - 2 * pc) * v[c] - lam * acc


@numba.njit(cache=True)
def _popcounts(n_sites):
    dim = 1 << n_sites
    pc = np.empty(dim, dtype=np.int8)
    for b in range(dim):
        pc[b] = _popcount(b)
    return pc


def popcounts(n_sites: int) -> np.ndarray:
    return _popcounts(n_sites)


def diagonal_energy(b: int, n_sites: int) -> float:
    """Field energy of basis state ``b``: -(N - 2 popcount(b))."""
    if not 0 <= b < (1 << n_sites):
        raise HamiltonianError(f"basis index {b} out of range for N={n_sites}")
    return -float(n_sites - 2 * bin(b).count("1"))


def _sector_parity(sector: str) -> int:
    if sector not in SECTORS[1:]:
        raise HamiltonianError(f"no parity for sector {sector!r}")
    return 0 if sector == "even-parity" else 1


def parity_projector(v: np.ndarray, sector: str) -> np.ndarray:
    """Zero the amplitudes whose popcount parity does not match ``sector``."""
    if sector not in SECTORS:
        raise HamiltonianError(f"unknown sector {sector!r}")
    if sector == "full":
        return np.array(v, dtype=np.float64, copy=True)
    n_sites = int(v.shape[0]).bit_length() - 1
    keep = (popcounts(n_sites) & 1) == _sector_parity(sector)
    return np.where(keep, v, 0.0)


def sector_indices(n_sites: int, sector: str) -> np.ndarray:
    """Full basis index of every packed index of ``sector``."""
    parity = _sector_parity(sector)
    c = np.arange(1 << (n_sites - 1), dtype=np.int64)
    low = (popcounts(n_sites - 1).astype(np.int64) + parity) & 1
    return (c << 1) | low


def pack(v: np.ndarray, sector: str) -> np.ndarray:
    n_sites = int(v.shape[0]).bit_length() - 1
    return np.ascontiguousarray(v[sector_indices(n_sites, sector)])


def unpack(c: np.ndarray, sector: str) -> np.ndarray:
    n_sites = int(c.shape[0]).bit_length()
    out = np.zeros(1 << n_sites)
    out[sector_indices(n_sites, sector)] = c
    return out


@dataclass(frozen=True)
class HamiltonianOperator:
    lam: float
    edges: tuple[Edge, ...]
    n_sites: int
    sector: str = "full"
    _masks: np.ndarray = field(init=False, repr=False, compare=False)
    _packed_masks: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.lam < 0:
            raise HamiltonianError(f"coupling must be >= 0, got {self.lam}")
        if self.sector not in SECTORS:
            raise HamiltonianError(f"unknown sector {self.sector!r}")
        if self.n_sites < 1:
            raise HamiltonianError("need at least one site")
        object.__setattr__(self, "edges", tuple(Edge(int(a), int(b)) for a, b in self.edges))
        for a, b in self.edges:
            if not (0 <= a < self.n_sites and 0 <= b < self.n_sites) or a == b:
                raise HamiltonianError(f"invalid edge ({a}, {b}) for N={self.n_sites}")
        masks = np.array([(1 << a) | (1 << b) for a, b in self.edges], dtype=np.int64)
        # in packed coordinates bit 0 is implied by parity, so a flip of site 0
        # vanishes from the packed mask
        packed = np.array(
            [((1 << a) | (1 << b)) >> 1 for a, b in self.edges], dtype=np.int64
        )
        object.__setattr__(self, "_masks", masks)
        object.__setattr__(self, "_packed_masks", packed)

    @property
    def dim(self) -> int:
        return 1 << self.n_sites

    @property
    def packed_dim(self) -> int:
        return 1 << (self.n_sites - 1)

    def with_lambda(self, lam: float) -> "HamiltonianOperator":
        return HamiltonianOperator(lam, self.edges, self.n_sites, self.sector)

    def with_sector(self, sector: str) -> "HamiltonianOperator":
        return HamiltonianOperator(self.lam, self.edges, self.n_sites, sector)

    def apply(self, v: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        return apply(self, v, out)

    def apply_packed(self, c: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """H restricted to this operator's parity sector, on packed vectors."""
        if self.sector == "full":
            raise HamiltonianError("packed application needs a parity sector")
        if c.shape != (self.packed_dim,):
            raise HamiltonianError(
                f"packed vector has shape {c.shape}, expected ({self.packed_dim},)"
            )
        c = np.ascontiguousarray(c, dtype=np.float64)
        if out is None:
            out = np.empty_like(c)
        _apply_packed(
            c, self._packed_masks, float(self.lam), self.n_sites,
            _sector_parity(self.sector), out,
        )
        return out


def apply(H: HamiltonianOperator, v: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Return ``H @ v`` for a full-length state vector."""
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.shape != (H.dim,):
        raise HamiltonianError(f"vector has shape {v.shape}, expected ({H.dim},)")
    if H.sector != "full":
        wrong = (popcounts(H.n_sites) & 1) != _sector_parity(H.sector)
        if np.any(v[wrong] != 0.0):
            raise HamiltonianError(f"vector has support outside the {H.sector} sector")
    if out is None:
        out = np.empty_like(v)
    _apply_full(v, H._masks, float(H.lam), H.n_sites, out)
    return out


_PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]])


def _pauli_string(ops: dict[int, np.ndarray], n_sites: int) -> scipy.sparse.csr_matrix:
    # kron ordering puts site N-1 leftmost so that site i is bit i
    out = scipy.sparse.identity(1, format="csr")
    for k in reversed(range(n_sites)):
        out = scipy.sparse.kron(out, ops.get(k, np.eye(2)), format="csr")
    return out


def dense_matrix(H: HamiltonianOperator) -> np.ndarray:
    """Explicit 2**N x 2**N matrix built from Kronecker products (oracle)."""
    if H.n_sites > 14:
        raise HamiltonianError(f"dense construction capped at 14 sites, got {H.n_sites}")
    n = H.n_sites
    mat = scipy.sparse.csr_matrix((H.dim, H.dim))
    for i in range(n):
        mat -= _pauli_string({i: _PAULI_Z}, n)
    for a, b in H.edges:
        # a == b is rejected when the operator is built
        mat -= H.lam * _pauli_string({a: _PAULI_X, b: _PAULI_X}, n)
    return mat.toarray()


# On-disk state vector layout, all little-endian:
#   8 bytes  magic b"TFIMSV01"
#   4 bytes  uint32 N
#   8 bytes  float64 lambda
#  16 bytes  ASCII lattice fingerprint
#   2**N float64 amplitudes
_STATE_MAGIC = b"TFIMSV01"
_STATE_HEADER = struct.Struct("<8sId16s")


def write_state(path: str | Path, v: np.ndarray, lam: float, lattice_hash: str) -> None:
    n_sites = int(v.shape[0]).bit_length() - 1
    if v.shape[0] != 1 << n_sites:
        raise HamiltonianError("state length is not a power of two")
    tag = lattice_hash.encode("ascii")[:16].ljust(16, b"\0")
    with open(path, "wb") as fh:
        fh.write(_STATE_HEADER.pack(_STATE_MAGIC, n_sites, float(lam), tag))
        fh.write(np.asarray(v, dtype="<f8").tobytes())


def read_state(path: str | Path) -> tuple[np.ndarray, float, str]:
    with open(path, "rb") as fh:
        magic, n_sites, lam, tag = _STATE_HEADER.unpack(fh.read(_STATE_HEADER.size))
        if magic != _STATE_MAGIC:
            raise HamiltonianError(f"{path} is not a state vector file")
        v = np.frombuffer(fh.read(8 << n_sites), dtype="<f8")
    if v.shape[0] != 1 << n_sites:
        raise HamiltonianError(f"{path} is truncated")
    return v.astype(np.float64), lam, tag.rstrip(b"\0").decode("ascii")
