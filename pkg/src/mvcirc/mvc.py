"""Classical majority-vote dynamics on the same lattices and schedules.

Two independent single-site update rules:

* noise form (parameter q < 1/2): follow the strict neighbor majority with
  probability 1 - q, defy it with probability q, and reset uniformly on a
  tie;
* measurement form (parameter p): reset uniformly with probability 1 - p,
  otherwise follow the strict majority (uniform reset if there is none).

With q = (1 - p)/2 the two kernels are the same probability map, which the
tests check by exact enumeration.  The measurement form is also exactly
the bond-round feedback acting on classical configurations, so running it
on a quantum schedule gives the classical side of the ensemble-level
quantum/classical equality.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .lattice import Lattice
from .schedule import DOMAIN_DYNAMICS, EVENT_X, RandomStream, Schedule

INITIAL_SPINS = ("up", "random")


def init_spins(lattice: Lattice, initial: str = "up",
               rng: np.random.Generator | None = None) -> np.ndarray:
    if initial == "up":
        return np.ones(lattice.n_sites, dtype=np.int8)
    if initial == "random":
        if rng is None:
            raise ValueError("random initial spins need an rng")
        return (1 - 2 * rng.integers(0, 2, lattice.n_sites)).astype(np.int8)
    raise ValueError(f"initial must be one of {INITIAL_SPINS}")


@njit(cache=True)
def _majority(spins, neigh, site):
    s = 0
    for a in range(neigh.shape[1]):
        s += spins[neigh[site, a]]
    return s  # >0 majority up, <0 majority down, 0 tie


@njit(cache=True)
def _step_q(spins, neigh, site, q, u, ubit):
    m = _majority(spins, neigh, site)
    if m == 0:
        spins[site] = 1 - 2 * ubit
    elif u < 1.0 - q:
        spins[site] = 1 if m > 0 else -1
    else:
        spins[site] = -1 if m > 0 else 1


@njit(cache=True)
def _step_p(spins, neigh, site, p, u, ubit):
    if u < 1.0 - p:
        spins[site] = 1 - 2 * ubit
    else:
        m = _majority(spins, neigh, site)
        if m == 0:
            spins[site] = 1 - 2 * ubit
        else:
            spins[site] = 1 if m > 0 else -1


@njit(cache=True)
def _run(spins, neigh, formulation, param, sweeps, u, ubits, mag_hist):
    n = spins.size
    for t in range(sweeps):
        base = t * n
        for site in range(n):
            if formulation == 0:
                _step_p(spins, neigh, site, param, u[base + site],
                        ubits[base + site])
            else:
                _step_q(spins, neigh, site, param, u[base + site],
                        ubits[base + site])
        tot = 0
        for site in range(n):
            tot += spins[site]
        mag_hist[t] = tot


def mvc_step_q(spins: np.ndarray, lattice: Lattice, site: int, q: float,
               rng: np.random.Generator) -> None:
    """Noise-form update of one spin, in place."""
    _step_q(spins, lattice.neighbors, site, q, rng.random(),
            int(rng.integers(0, 2)))


def mvc_step_p(spins: np.ndarray, lattice: Lattice, site: int, p: float,
               rng: np.random.Generator) -> None:
    """Measurement-form update of one spin, in place."""
    _step_p(spins, lattice.neighbors, site, p, rng.random(),
            int(rng.integers(0, 2)))


def run_mvc(lattice: Lattice, param: float, sweeps: int,
            stream: RandomStream, formulation: str = "p",
            initial: str = "up") -> tuple[np.ndarray, np.ndarray]:
    """Raster-order sweeps; returns (final spins, magnetization history).

    mag_hist[t] is the total spin after sweep t.
    """
    if formulation == "p":
        form = 0
        if not 0.0 <= param <= 1.0:
            raise ValueError("p must be in [0, 1]")
    elif formulation == "q":
        form = 1
        if not 0.0 <= param < 0.5:
            raise ValueError("q must be in [0, 1/2)")
    else:
        raise ValueError("formulation must be 'p' or 'q'")
    rng = stream.generator(DOMAIN_DYNAMICS)
    spins = init_spins(lattice, initial, rng)
    n = lattice.n_sites
    u = rng.random(sweeps * n)
    ubits = rng.integers(0, 2, size=sweeps * n, dtype=np.uint8)
    mag_hist = np.empty(sweeps, dtype=np.int64)
    _run(spins, lattice.neighbors, form, float(param), sweeps, u, ubits,
         mag_hist)
    return spins, mag_hist


def kernel_distribution(lattice: Lattice, site: int, neighbors_spins,
                        current: int, formulation: str, param):
    """Exact P(new spin = +1) for one update, as a fractions.Fraction.

    neighbors_spins is the tuple of neighbor values; used to check the two
    formulations agree exactly under q = (1 - p)/2.
    """
    from fractions import Fraction

    m = sum(neighbors_spins)
    par = Fraction(param)
    if formulation == "q":
        if m == 0:
            return Fraction(1, 2)
        if m > 0:
            return 1 - par
        return par
    if formulation == "p":
        if m == 0:
            return Fraction(1, 2)
        up = Fraction(1, 2) * (1 - par)
        if m > 0:
            up += par
        return up
    raise ValueError("formulation must be 'p' or 'q'")


# -- exact distribution evolution (small systems) ----------------------------

def schedule_distribution(schedule: Schedule) -> np.ndarray:
    """Evolve the exact configuration distribution through a schedule.

    Starts from the all-up (all-zero-bit) configuration.  X events become
    uniform resets; bond events become the majority feedback kernel.  The
    returned vector is indexed like the dense oracle's computational basis
    (site 0 is the most significant bit, bit 0 means spin up).
    """
    lat = schedule.lattice
    n = lat.n_sites
    if n > 20:
        raise ValueError("distribution evolution is exponential in N")
    size = 1 << n
    dist = np.zeros(size)
    dist[0] = 1.0
    idx = np.arange(size)
    for ev in schedule.events():
        bit = 1 << (n - 1 - ev.site)
        flipped = idx ^ bit
        if ev.kind == EVENT_X:
            dist = 0.5 * (dist + dist[flipped])
        else:
            out = np.zeros_like(dist)
            for s in range(size):
                pr = dist[s]
                if pr == 0.0:
                    continue
                si = -1 if (s >> (n - 1 - ev.site)) & 1 else 1
                nm = 0
                deg = lat.neighbors.shape[1]
                for j in lat.neighbors[ev.site]:
                    sj = -1 if (s >> (n - 1 - int(j))) & 1 else 1
                    if si * sj < 0:
                        nm += 1
                if 2 * nm > deg:
                    out[s ^ bit] += pr
                elif 2 * nm == deg:
                    out[s] += pr / 2
                    out[s ^ bit] += pr / 2
                else:
                    out[s] += pr
            dist = out
    return dist
