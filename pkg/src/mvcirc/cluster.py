"""Production engine: background bits + signed GHZ clusters.

Under this circuit (X measurements, adjacent ZZ measurements with
majority-vote X feedback) the state is always a product of Z eigenstates
("background" sites) and GHZ-like factors (|s> + sigma |s-bar>)/sqrt(2).
A size-1 cluster is the X eigenstate |+> or |->.  The engine tracks that
structure exactly: X measurements give birth to or split clusters, bond
measurements merge clusters or kill them against the background.

One sweep costs O(N) amortized (small-into-large merging); the numba
kernels in _cluster_core do the per-event work.
"""

from __future__ import annotations

import json

import numpy as np

from . import _cluster_core as core
from .lattice import Lattice
from .schedule import (DOMAIN_DYNAMICS, OutcomeTape, RandomStream,
                       ReplayMismatch, Schedule, forced_bits)

INITIAL_STATES = ("zero", "plus")


class ClusterState:
    """Mutable partition of sites into signed background bits and clusters.

    Sign conventions: bits encode signs (0 -> +1, 1 -> -1).  Each cluster
    carries a sign bit and a lazy global flip of its relative bits; the
    representative (first member) always has effective relative bit 0.
    """

    def __init__(self, lattice: Lattice, initial: str = "zero"):
        if initial not in INITIAL_STATES:
            raise ValueError(f"initial must be one of {INITIAL_STATES}")
        n = lattice.n_sites
        self.lattice = lattice
        self.tag = np.zeros(n, dtype=np.uint8)
        self.zbit = np.zeros(n, dtype=np.uint8)
        self.rbit = np.zeros(n, dtype=np.uint8)
        self.cid = np.full(n, -1, dtype=np.int32)
        self.nxt = np.full(n, -1, dtype=np.int32)
        self.prv = np.full(n, -1, dtype=np.int32)
        self.csize = np.zeros(n, dtype=np.int32)
        self.csign = np.zeros(n, dtype=np.uint8)
        self.cflip = np.zeros(n, dtype=np.uint8)
        self.chead = np.full(n, -1, dtype=np.int32)
        self.ctail = np.full(n, -1, dtype=np.int32)
        self.fstack = np.zeros(n, dtype=np.int32)
        self.nfree = np.zeros(1, dtype=np.int64)
        if initial == "zero":
            self.fstack[:] = np.arange(n, dtype=np.int32)
            self.nfree[0] = n
        else:
            self.tag[:] = 1
            self.cid[:] = np.arange(n, dtype=np.int32)
            self.csize[:] = 1
            self.chead[:] = np.arange(n, dtype=np.int32)
            self.ctail[:] = np.arange(n, dtype=np.int32)
        self.initial = initial

    # -- basic queries ----------------------------------------------------

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    def n_background(self) -> int:
        return int((self.tag == 0).sum())

    def live_clusters(self) -> np.ndarray:
        """Slot indices of live clusters."""
        return np.nonzero(self.csize > 0)[0]

    def cluster_members(self, slot: int) -> list[int]:
        """Members in internal list order (first one is the representative)."""
        out = []
        s = int(self.chead[slot])
        while s != -1:
            out.append(s)
            s = int(self.nxt[s])
        return out

    def background_z(self) -> dict[int, int]:
        sites = np.nonzero(self.tag == 0)[0]
        return {int(i): 1 - 2 * int(self.zbit[i]) for i in sites}

    def relative_bit(self, site: int) -> int:
        """Effective (gauge-fixed) relative bit of a member site."""
        if self.tag[site] != 1:
            raise ValueError(f"site {site} is background")
        return int(self.rbit[site] ^ self.cflip[self.cid[site]])

    def cluster_sign(self, slot: int) -> int:
        return 1 - 2 * int(self.csign[slot])

    def canonical(self):
        """Hashable engine-independent snapshot of the physical state.

        (background, clusters) with background a tuple of (site, z) and
        each cluster (sorted sites, relative bits gauged so the lowest
        site has bit 0, sign).
        """
        bg = tuple(sorted(self.background_z().items()))
        clusters = []
        for slot in self.live_clusters():
            members = sorted(self.cluster_members(int(slot)))
            bits = [self.relative_bit(s) for s in members]
            b0 = bits[0]
            clusters.append((tuple(members),
                             tuple(b ^ b0 for b in bits),
                             self.cluster_sign(int(slot))))
        return bg, tuple(sorted(clusters))

    def copy(self) -> "ClusterState":
        other = ClusterState.__new__(ClusterState)
        other.lattice = self.lattice
        other.initial = self.initial
        for name in ("tag", "zbit", "rbit", "cid", "nxt", "prv", "csize",
                     "csign", "cflip", "chead", "ctail", "fstack", "nfree"):
            setattr(other, name, getattr(self, name).copy())
        return other

    # -- single events (thin wrappers over the kernels) -------------------

    def _one(self, fn, args, rng=None, forced=None):
        if forced is not None:
            bits = forced_bits(np.atleast_1d(forced))
        elif rng is not None:
            bits = rng.integers(0, 2, size=8, dtype=np.uint8)
        else:
            bits = np.empty(0, dtype=np.uint8)
        ctr = np.zeros(2, dtype=np.int64)
        empty = np.empty(0, dtype=np.uint8)
        st, m = fn(*args, self.tag, self.zbit, self.rbit, self.cid,
                   self.csize, self.csign, self.cflip, self.chead,
                   self.ctail, self.nxt, self.prv, self.fstack, self.nfree,
                   bits, ctr, empty, empty, empty, 0)
        if st != core.OK:
            raise RuntimeError(core.STATUS_MESSAGES.get(st, f"status {st}"))
        return 1 - 2 * int(m)

    def measure_x(self, site: int, rng=None, forced=None) -> int:
        """Measure X at a site; returns the outcome +1 / -1."""
        return self._one(core.measure_x_live, (site,), rng, forced)

    def measure_bond(self, i: int, j: int, rng=None, forced=None) -> int:
        """Measure Z_i Z_j on a lattice bond; returns the outcome."""
        if i == j:
            raise ValueError("bond endpoints must differ")
        if j not in self.lattice.neighbors[i]:
            raise ValueError(f"sites {i}, {j} are not neighbors")
        return self._one(core.measure_bond_live, (i, j), rng, forced)

    def apply_x_flip(self, site: int) -> None:
        core.apply_x(site, self.tag, self.zbit, self.rbit, self.cid,
                     self.cflip, self.chead)

    def site_update(self, site: int, event_kind: int, rng=None,
                    forced=None) -> None:
        """One scheduled event: X measurement or bond round + feedback."""
        if forced is not None:
            bits = forced_bits(np.atleast_1d(forced))
        elif rng is not None:
            bits = rng.integers(0, 2, size=8, dtype=np.uint8)
        else:
            bits = np.empty(0, dtype=np.uint8)
        ctr = np.zeros(2, dtype=np.int64)
        empty = np.empty(0, dtype=np.uint8)
        st = core.site_update_live(site, event_kind,
                                   self.lattice.neighbors,
                                   self.tag, self.zbit, self.rbit, self.cid,
                                   self.csize, self.csign, self.cflip,
                                   self.chead, self.ctail, self.nxt,
                                   self.prv, self.fstack, self.nfree, bits,
                                   ctr, empty, empty, empty, 0)
        if st != core.OK:
            raise RuntimeError(core.STATUS_MESSAGES.get(st, f"status {st}"))

    # -- full runs ---------------------------------------------------------

    def run(self, schedule: Schedule, stream: RandomStream | None = None,
            bits: np.ndarray | None = None, tape: OutcomeTape | None = None,
            record: bool = False, start_event: int = 0,
            stop_event: int | None = None,
            _scratch: dict | None = None) -> OutcomeTape | None:
        """Evolve through schedule events [start_event, stop_event).

        Exactly one outcome source applies: a replay tape, an explicit bit
        buffer, or a RandomStream (defaulting to the schedule's own).
        With record=True the consumed outcomes are returned as a tape.
        """
        if schedule.lattice.n_sites != self.n_sites:
            raise ValueError("schedule lattice does not match state")
        cap = schedule.max_draws()
        rec_flag = 0
        if tape is not None:
            runner = core.run_events_replay
            bits = np.empty(0, dtype=np.uint8)
            rkind, rval, rdet = tape.rec_kind, tape.rec_val, tape.rec_det
        else:
            runner = core.run_events_live
            if bits is None:
                src = stream if stream is not None else schedule.stream
                if src is None:
                    raise ValueError("no outcome source: give a tape, bits "
                                     "or a RandomStream")
                bits = src.bits(cap, DOMAIN_DYNAMICS)
            if record:
                rec_flag = 1
                rkind = np.empty(cap, dtype=np.uint8)
                rval = np.empty(cap, dtype=np.uint8)
                rdet = np.empty(cap, dtype=np.uint8)
            else:
                rkind = rval = rdet = np.empty(0, dtype=np.uint8)
        ctr = (_scratch or {}).get("ctr")
        if ctr is None:
            ctr = np.zeros(2, dtype=np.int64)
        kinds_flat = schedule.kinds.reshape(-1)
        order_flat = (np.empty(0, dtype=np.int32) if schedule.order is None
                      else schedule.order.reshape(-1).astype(np.int32))
        stop = schedule.n_events if stop_event is None else stop_event
        st, at = runner(
            kinds_flat, order_flat, start_event, stop,
            self.lattice.neighbors, self.tag, self.zbit, self.rbit,
            self.cid, self.csize, self.csign, self.cflip, self.chead,
            self.ctail, self.nxt, self.prv, self.fstack, self.nfree,
            bits, ctr, rkind, rval, rdet, rec_flag)
        if st != core.OK:
            msg = core.STATUS_MESSAGES.get(st, f"status {st}")
            if st in core.REPLAY_STATUSES:
                raise ReplayMismatch(f"{msg} (event {at})")
            raise RuntimeError(f"{msg} (event {at})")
        if _scratch is not None:
            _scratch["ctr"] = ctr
            _scratch["bits"] = bits
        if record:
            n = int(ctr[1])
            return OutcomeTape(rec_kind=rkind[:n].copy(),
                               rec_val=rval[:n].copy(),
                               rec_det=rdet[:n].copy(),
                               schedule=schedule)
        return None

    # -- integrity and serialization ---------------------------------------

    def check_consistency(self) -> None:
        """Partition-integrity audit used by tests; raises on violation."""
        n = self.n_sites
        seen = np.zeros(n, dtype=bool)
        total = 0
        for slot in self.live_clusters():
            slot = int(slot)
            members = self.cluster_members(slot)
            if not members:
                raise AssertionError(f"registered cluster {slot} is empty")
            if len(members) != int(self.csize[slot]):
                raise AssertionError(f"cluster {slot} size mismatch")
            if self.relative_bit(members[0]) != 0:
                raise AssertionError(
                    f"cluster {slot}: representative bit not gauge fixed")
            if int(self.ctail[slot]) != members[-1]:
                raise AssertionError(f"cluster {slot} tail pointer stale")
            for s in members:
                if self.tag[s] != 1 or int(self.cid[s]) != slot:
                    raise AssertionError(f"site {s} tag/registry mismatch")
                if seen[s]:
                    raise AssertionError(f"site {s} in two clusters")
                seen[s] = True
            total += len(members)
        bg = int((self.tag == 0).sum())
        if total + bg != n:
            raise AssertionError("sites lost: background + members != N")
        if (self.cid[self.tag == 0] != -1).any():
            raise AssertionError("background site with a cluster id")
        live = set(int(s) for s in self.live_clusters())
        free = set(int(s) for s in self.fstack[:int(self.nfree[0])])
        if live & free:
            raise AssertionError("slot both live and free")
        if len(live) + len(free) != n:
            raise AssertionError("cluster slot accounting broken")

    def to_json(self) -> str:
        bg, clusters = self.canonical()
        return json.dumps({
            "dimension": self.lattice.dimension,
            "L": self.lattice.L,
            "background": [[s, z] for s, z in bg],
            "clusters": [[list(sites), list(bits), sign]
                         for sites, bits, sign in clusters],
        })

    @classmethod
    def from_json(cls, text: str, lattice: Lattice) -> "ClusterState":
        doc = json.loads(text)
        if doc["dimension"] != lattice.dimension or doc["L"] != lattice.L:
            raise ValueError("snapshot lattice does not match")
        st = cls(lattice, initial="zero")
        st.tag[:] = 0
        st.zbit[:] = 0
        st.cid[:] = -1
        st.nfree[0] = lattice.n_sites
        st.fstack[:] = np.arange(lattice.n_sites, dtype=np.int32)
        st.csize[:] = 0
        for site, z in doc["background"]:
            st.zbit[site] = (1 - z) // 2
        for sites, bits, sign in doc["clusters"]:
            slot = int(st.fstack[st.nfree[0] - 1])
            st.nfree[0] -= 1
            st.csize[slot] = len(sites)
            st.csign[slot] = (1 - sign) // 2
            st.cflip[slot] = 0
            st.chead[slot] = sites[0]
            st.ctail[slot] = sites[-1]
            for k, s in enumerate(sites):
                st.tag[s] = 1
                st.cid[s] = slot
                st.rbit[s] = bits[k]
                st.prv[s] = sites[k - 1] if k > 0 else -1
                st.nxt[s] = sites[k + 1] if k + 1 < len(sites) else -1
        st.check_consistency()
        return st


def init_state(lattice: Lattice, initial: str = "zero") -> ClusterState:
    """All-zero ferromagnetic start, or the all-plus symmetric product."""
    return ClusterState(lattice, initial=initial)
