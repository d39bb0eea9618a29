"""Periodic chain / torus geometry shared by every engine.

Sites are indexed in raster (row-major) order.  The neighbor table fixes a
canonical neighbor order per site -- 1d: (left, right); 2d: (north, south,
west, east) -- and every engine measures bonds in exactly this order, which
is what makes recorded trajectories replayable across engines.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Lattice:
    """Periodic 1d ring (dimension=1) or square torus (dimension=2)."""

    dimension: int
    L: int
    n_sites: int
    neighbors: np.ndarray = field(repr=False)  # (n_sites, 2*dimension) int32

    @property
    def coordination(self) -> int:
        return 2 * self.dimension

    def bonds(self) -> list[tuple[int, int]]:
        """All undirected bonds (i, j) with i < j, each listed once."""
        out = set()
        for i in range(self.n_sites):
            for j in self.neighbors[i]:
                out.add((min(i, int(j)), max(i, int(j))))
        return sorted(out)


def make_lattice(dimension: int, L: int) -> Lattice:
    """Build the periodic lattice; rejects degenerate sizes.

    1d needs L >= 4 and 2d needs L >= 3, otherwise a site's neighbors
    coincide and bonds are no longer distinct.
    """
    if dimension == 1:
        if L < 4:
            raise ValueError(f"1d ring needs L >= 4, got {L}")
        n = L
        neigh = np.empty((n, 2), dtype=np.int32)
        for i in range(n):
            neigh[i, 0] = (i - 1) % L  # left
            neigh[i, 1] = (i + 1) % L  # right
    elif dimension == 2:
        if L < 3:
            raise ValueError(f"2d torus needs L >= 3, got {L}")
        n = L * L
        neigh = np.empty((n, 4), dtype=np.int32)
        for r in range(L):
            for c in range(L):
                i = r * L + c
                neigh[i, 0] = ((r - 1) % L) * L + c  # north
                neigh[i, 1] = ((r + 1) % L) * L + c  # south
                neigh[i, 2] = r * L + (c - 1) % L    # west
                neigh[i, 3] = r * L + (c + 1) % L    # east
    else:
        raise ValueError(f"dimension must be 1 or 2, got {dimension}")
    neigh.setflags(write=False)
    return Lattice(dimension=dimension, L=L, n_sites=n, neighbors=neigh)


@dataclass(frozen=True)
class RegionPartition:
    """Four disjoint contiguous regions A, B, C, D covering all sites.

    In 1d the regions are arcs of the ring; in 2d they are slabs of
    columns wrapping the torus (the slab geometry is a convention and is
    recorded in output metadata).
    """

    masks: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    geometry: str

    def __post_init__(self):
        total = np.zeros_like(self.masks[0], dtype=np.int64)
        for m in self.masks:
            if not m.any():
                raise ValueError("every region must be nonempty")
            total += m.astype(np.int64)
        if not (total == 1).all():
            raise ValueError("regions must partition the sites")

    @property
    def labels(self) -> np.ndarray:
        """Per-site region index 0..3 (A, B, C, D)."""
        lab = np.zeros(self.masks[0].size, dtype=np.int8)
        for k, m in enumerate(self.masks):
            lab[m] = k
        return lab


def quarter_partition(lattice: Lattice) -> RegionPartition:
    """Split the system into four equal contiguous quarters A, B, C, D.

    1d: four arcs of L/4 sites.  2d: four slabs of L/4 columns.  Requires
    L divisible by 4.
    """
    L = lattice.L
    if L % 4 != 0:
        raise ValueError(f"quarter partition needs L divisible by 4, got {L}")
    w = L // 4
    masks = []
    if lattice.dimension == 1:
        sites = np.arange(lattice.n_sites)
        for k in range(4):
            masks.append((sites >= k * w) & (sites < (k + 1) * w))
        geometry = "1d-arcs"
    else:
        cols = np.arange(lattice.n_sites) % L
        for k in range(4):
            masks.append((cols >= k * w) & (cols < (k + 1) * w))
        geometry = "2d-column-slabs"
    for m in masks:
        m.setflags(write=False)
    return RegionPartition(masks=tuple(masks), geometry=geometry)
