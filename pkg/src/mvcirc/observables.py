"""Physical diagnostics evaluated on a ClusterState.

Everything here is exact integer arithmetic on the cluster structure: a
GHZ factor straddling a region boundary contributes exactly one bit of
entropy, background sites contribute none, and the global spin flip has
expectation 0 as soon as any background site exists, otherwise the product
of the cluster signs.
"""

from __future__ import annotations

import math

import numpy as np

from .cluster import ClusterState
from .lattice import RegionPartition


def _region_mask(region, n: int) -> np.ndarray:
    mask = np.asarray(region)
    if mask.dtype == bool:
        if mask.size != n:
            raise ValueError("region mask has the wrong length")
        return mask
    out = np.zeros(n, dtype=bool)
    out[np.asarray(region, dtype=np.int64)] = True
    return out


def _inside_counts(state: ClusterState, mask: np.ndarray) -> np.ndarray:
    """Per-cluster-slot count of members inside the mask."""
    members = state.tag == 1
    sel = members & mask
    counts = np.zeros(state.n_sites, dtype=np.int64)
    if sel.any():
        counts += np.bincount(state.cid[sel], minlength=state.n_sites)
    return counts


def entropy(state: ClusterState, region) -> int:
    """Entanglement entropy of a region, in bits: one per straddling cluster."""
    mask = _region_mask(region, state.n_sites)
    inside = _inside_counts(state, mask)
    live = state.csize > 0
    straddle = live & (inside > 0) & (inside < state.csize)
    return int(straddle.sum())


def spanning_cluster_count(state: ClusterState,
                           partition: RegionPartition) -> int:
    """Clusters with members in all four regions (direct count)."""
    live = state.csize > 0
    spans = live.copy()
    for mask in partition.masks:
        spans &= _inside_counts(state, mask) > 0
    return int(spans.sum())


def tripartite_information(state: ClusterState,
                           partition: RegionPartition) -> int:
    """S_A + S_B + S_C + S_ABC - S_AB - S_BC - S_AC.

    For this state structure the combination counts exactly the clusters
    supported on all four regions.
    """
    a, b, c, _ = partition.masks
    return (entropy(state, a) + entropy(state, b) + entropy(state, c)
            + entropy(state, a | b | c)
            - entropy(state, a | b) - entropy(state, b | c)
            - entropy(state, a | c))


def expectation_u(state: ClusterState) -> int:
    """Global spin flip: 0 with any background, else the sign product."""
    if (state.tag == 0).any():
        return 0
    signs = state.csign[state.csize > 0]
    return int(1 - 2 * (int(signs.sum()) & 1))


def magnetization(state: ClusterState) -> int:
    """Sum of <Z_i>; cluster sites average to zero, background adds its z."""
    bg = state.tag == 0
    return int(bg.sum() - 2 * int(state.zbit[bg].sum()))


def zz_correlator(state: ClusterState, i: int, j: int) -> int:
    """<Z_i Z_j>: exact on backgrounds and within a cluster, else 0."""
    ti, tj = state.tag[i], state.tag[j]
    if ti == 0 and tj == 0:
        return 1 - 2 * int(state.zbit[i] ^ state.zbit[j])
    if ti == 1 and tj == 1 and state.cid[i] == state.cid[j]:
        return 1 - 2 * int(state.rbit[i] ^ state.rbit[j])
    return 0


def antipodal_pair(lattice) -> tuple[int, int]:
    """Site 0 and the site half a system away (per axis in 2d)."""
    if lattice.dimension == 1:
        return 0, lattice.L // 2
    half = lattice.L // 2
    return 0, half * lattice.L + half


def trajectory_observables(state: ClusterState,
                           partition: RegionPartition | None = None) -> dict:
    """All per-trajectory diagnostics at the current time."""
    n = state.n_sites
    i, j = antipodal_pair(state.lattice)
    u = expectation_u(state)
    zz = zz_correlator(state, i, j)
    out = {
        "abs_U": abs(u),
        "U_sign": u,
        "mag_per_site": magnetization(state) / n,
        "abs_mag_per_site": abs(magnetization(state)) / n,
        "zz_half": zz,
        "zz_half_sq": zz * zz,
        "background_fraction": state.n_background() / n,
    }
    if partition is not None:
        out["tripartite_info"] = tripartite_information(state, partition)
    return out


def ensemble_reduce(records: list[dict]) -> dict:
    """Sample mean and standard error per observable across trajectories."""
    if not records:
        raise ValueError("no trajectory records to reduce")
    keys = records[0].keys()
    out = {}
    for key in keys:
        vals = np.asarray([r[key] for r in records], dtype=float)
        mean = float(vals.mean())
        if vals.size > 1:
            stderr = float(vals.std(ddof=1) / math.sqrt(vals.size))
        else:
            stderr = 0.0
        out[key] = (mean, stderr)
    return out
