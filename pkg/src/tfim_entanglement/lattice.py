"""Hypercubic lattices and their nearest-neighbour bond lists."""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

MAX_SITES = 25

BOUNDARIES = ("periodic", "open")
BOND_CONVENTIONS = ("unique-pairs", "per-direction")


class LatticeError(ValueError):
    pass


class Edge(NamedTuple):
    a: int
    b: int


@dataclass(frozen=True)
class LatticeSpec:
    """Shape of a d-dimensional hypercubic lattice.

    ``bond_convention`` only matters when some extent equals 2 with periodic
    wrapping: ``per-direction`` keeps one bond per site and positive axis, so
    the wrap bond duplicates the direct one; ``unique-pairs`` merges them.
    """

    sizes: tuple[int, ...]
    boundary: str = "periodic"
    bond_convention: str = "unique-pairs"
    max_sites: int = field(default=MAX_SITES, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if len(self.sizes) not in (1, 2, 3):
            raise LatticeError(f"dimension must be 1, 2 or 3, got {len(self.sizes)}")
        if any(s < 1 for s in self.sizes):
            raise LatticeError(f"linear sizes must be >= 1, got {self.sizes}")
        if self.boundary not in BOUNDARIES:
            raise LatticeError(f"unknown boundary {self.boundary!r}")
        if self.bond_convention not in BOND_CONVENTIONS:
            raise LatticeError(f"unknown bond convention {self.bond_convention!r}")
        if self.n_sites > self.max_sites:
            raise LatticeError(
                f"{self.n_sites} sites exceeds the cap of {self.max_sites}"
            )

    @property
    def dimension(self) -> int:
        return len(self.sizes)

    @property
    def n_sites(self) -> int:
        n = 1
        for s in self.sizes:
            n *= s
        return n

    @property
    def size_label(self) -> int:
        """Scaling variable: N for chains, L for square and cubic lattices."""
        if self.dimension == 1:
            return self.n_sites
        return max(self.sizes)

    @property
    def sizes_str(self) -> str:
        return "x".join(str(s) for s in self.sizes)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "sizes": list(self.sizes),
            "boundary": self.boundary,
            "bond_convention": self.bond_convention,
        }

    def fingerprint(self) -> str:
        """Stable short hash of everything that changes the bond list."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def site_index(coords: Sequence[int], spec: LatticeSpec) -> int:
    """Row-major linear index; the last coordinate varies fastest."""
    if len(coords) != spec.dimension:
        raise LatticeError(f"expected {spec.dimension} coordinates, got {len(coords)}")
    idx = 0
    for c, size in zip(coords, spec.sizes):
        if not 0 <= c < size:
            raise LatticeError(f"coordinate {c} out of range [0, {size})")
        idx = idx * size + int(c)
    return idx


def site_coords(index: int, spec: LatticeSpec) -> tuple[int, ...]:
    if not 0 <= index < spec.n_sites:
        raise LatticeError(f"site {index} out of range [0, {spec.n_sites})")
    coords = []
    for size in reversed(spec.sizes):
        index, c = divmod(index, size)
        coords.append(c)
    return tuple(reversed(coords))


def build_lattice(spec: LatticeSpec) -> list[Edge]:
    """Sorted nearest-neighbour bonds of ``spec``.

    Bonds are generated from every site towards its neighbour along each
    positive axis. Wraps onto the site itself (extent 1) are dropped.
    """
    edges = []
    for coords in itertools.product(*(range(s) for s in spec.sizes)):
        i = site_index(coords, spec)
        for axis, size in enumerate(spec.sizes):
            nxt = coords[axis] + 1
            if nxt == size:
                if spec.boundary == "open":
                    continue
                nxt = 0
            neighbour = list(coords)
            neighbour[axis] = nxt
            j = site_index(neighbour, spec)
            if j == i:
                continue
            edges.append(Edge(min(i, j), max(i, j)))
    if spec.bond_convention == "unique-pairs":
        edges = set(edges)
    return sorted(edges)
