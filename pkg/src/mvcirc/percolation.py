"""Space-time percolation picture of the circuit, via union-find.

A bond round activates spatial bonds between a site and its neighbors; a
site keeps its temporal bond (same node) exactly when X is *not* measured,
so an X measurement creates a fresh node and disconnects the past.  At the
end, sites whose component touches the initial time slice are background
Z eigenstates; components not touching it are GHZ clusters.  This
reproduces the cluster engine's partition from connectivity alone (signs
and bit patterns are invisible here).
"""

from __future__ import annotations

import numpy as np

from .lattice import Lattice
from .schedule import EVENT_X, Schedule


class SpaceTimeForest:
    """Event-driven union-find over dynamically created space-time nodes.

    With the all-zero start the initial slice consists of Z eigenstates
    and connectivity to it marks background sites.  With the all-plus
    start the initial slice is already made of size-1 clusters, so no node
    counts as background-connected.
    """

    def __init__(self, lattice: Lattice, initial: str = "zero"):
        if initial not in ("zero", "plus"):
            raise ValueError("initial must be 'zero' or 'plus'")
        self.lattice = lattice
        n = lattice.n_sites
        cap = max(2 * n, 16)
        self.parent = np.arange(cap, dtype=np.int64)
        self.rank = np.zeros(cap, dtype=np.int8)
        self.touches_initial = np.zeros(cap, dtype=bool)
        self.touches_initial[:n] = initial == "zero"
        self.n_nodes = n
        self.site_node = np.arange(n, dtype=np.int64)
        self.n_x_events = 0

    def _grow(self) -> None:
        cap = self.parent.size
        new = 2 * cap
        for name in ("parent", "rank", "touches_initial"):
            arr = getattr(self, name)
            ext = np.empty(new, dtype=arr.dtype)
            ext[:cap] = arr
            setattr(self, name, ext)
        self.parent[cap:new] = np.arange(cap, new)
        self.rank[cap:new] = 0
        self.touches_initial[cap:new] = False

    def _new_node(self) -> int:
        if self.n_nodes == self.parent.size:
            self._grow()
        node = self.n_nodes
        self.parent[node] = node
        self.n_nodes += 1
        return node

    def find(self, a: int) -> int:
        parent = self.parent
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return int(root)

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        if self.touches_initial[rb]:
            self.touches_initial[ra] = True

    def ingest_event(self, kind: int, site: int) -> None:
        if kind == EVENT_X:
            self.site_node[site] = self._new_node()
            self.n_x_events += 1
        else:
            node = self.site_node[site]
            for j in self.lattice.neighbors[site]:
                self.union(int(node), int(self.site_node[j]))

    def ingest_schedule(self, schedule: Schedule) -> None:
        for ev in schedule.events():
            self.ingest_event(ev.kind, ev.site)

    def classify(self):
        """(background site set, cluster partition) of the current slice."""
        groups: dict[int, list[int]] = {}
        background = []
        for site in range(self.lattice.n_sites):
            root = self.find(int(self.site_node[site]))
            if self.touches_initial[root]:
                background.append(site)
            else:
                groups.setdefault(root, []).append(site)
        clusters = frozenset(frozenset(g) for g in groups.values())
        return frozenset(background), clusters


def run_forest(schedule: Schedule, initial: str = "zero") -> SpaceTimeForest:
    forest = SpaceTimeForest(schedule.lattice, initial=initial)
    forest.ingest_schedule(schedule)
    return forest


def percolation_observables(forest: SpaceTimeForest) -> dict:
    """Connectivity observables of the final slice.

    has_background is True exactly when some site still connects to the
    initial slice, which is also when the global spin-flip expectation of
    the quantum state vanishes.
    """
    background, clusters = forest.classify()
    n = forest.lattice.n_sites
    largest = max((len(c) for c in clusters), default=0)
    return {
        "has_background": len(background) > 0,
        "background_fraction": len(background) / n,
        "largest_cluster_fraction": largest / n,
        "n_clusters": len(clusters),
    }


def partition_matches_cluster_state(forest: SpaceTimeForest, state) -> bool:
    """Sign-blind partition equality against a ClusterState."""
    background, clusters = forest.classify()
    bg, cl = state.canonical()
    state_bg = frozenset(s for s, _ in bg)
    state_cl = frozenset(frozenset(sites) for sites, _, _ in cl)
    return background == state_bg and clusters == state_cl
