"""Dense density-matrix oracle for up to 6 qubits.

Implements the four channels that generate the dynamics at the ensemble
level -- X-measure-and-forget, bond-round-with-feedback, classical bit
reset, and full Z dephasing -- and numerically verifies the operator
identities that reduce the averaged quantum evolution to the classical
majority-vote chain.  This module exists for proofs, not performance.

Basis convention: site 0 is the leftmost tensor factor, so computational
basis index b has bit of site k equal to (b >> (n-1-k)) & 1, with bit 0
meaning Z = +1.
"""

from __future__ import annotations

import itertools

import numpy as np

from .lattice import Lattice
from .schedule import EVENT_BOND, EVENT_X, RandomStream, Schedule

MAX_QUBITS = 6

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def _check_n(n: int) -> None:
    if not 1 <= n <= MAX_QUBITS:
        raise ValueError(f"dense oracle handles 1..{MAX_QUBITS} qubits, got {n}")


def ring_bonds(n: int) -> list[tuple[int, int]]:
    """Bond list of a periodic chain, degenerating gracefully for n <= 2."""
    if n == 1:
        return []
    if n == 2:
        return [(0, 1)]
    return [(i, (i + 1) % n) for i in range(n)]


def incident_bonds(bonds, site: int) -> list[tuple[int, int]]:
    return [b for b in bonds if site in b]


def op_on(n: int, single: np.ndarray, site: int) -> np.ndarray:
    """Single-site operator embedded in the n-qubit space."""
    out = np.array([[1.0 + 0j]])
    for k in range(n):
        out = np.kron(out, single if k == site else _I2)
    return out


def x_op(n: int, site: int) -> np.ndarray:
    return op_on(n, _X, site)


def z_op(n: int, site: int) -> np.ndarray:
    return op_on(n, _Z, site)


def zz_op(n: int, i: int, j: int) -> np.ndarray:
    return z_op(n, i) @ z_op(n, j)


def basis_ket(n: int, bits) -> np.ndarray:
    idx = 0
    for b in bits:
        idx = (idx << 1) | int(b)
    v = np.zeros(2 ** n, dtype=complex)
    v[idx] = 1.0
    return v


def all_zero_rho(n: int) -> np.ndarray:
    v = basis_ket(n, [0] * n)
    return np.outer(v, v.conj())


def random_density_matrix(n: int, rng: np.random.Generator,
                          rank: int | None = None) -> np.ndarray:
    """Random full-support mixed state (Ginibre construction)."""
    d = 2 ** n
    k = d if rank is None else rank
    g = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def check_density(rho: np.ndarray, herm_tol: float = 1e-12,
                  trace_tol: float = 1e-12, eig_tol: float = 1e-10) -> None:
    """Assert Hermiticity, unit trace and positivity within tolerances."""
    if np.abs(rho - rho.conj().T).max() > herm_tol:
        raise AssertionError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > trace_tol:
        raise AssertionError("density matrix trace differs from 1")
    if np.linalg.eigvalsh(rho).min() < -eig_tol:
        raise AssertionError("density matrix has a negative eigenvalue")


def trace_norm(a: np.ndarray) -> float:
    """Sum of singular values (for Hermitian input: sum of |eigenvalues|)."""
    return float(np.abs(np.linalg.eigvalsh((a + a.conj().T) / 2)).sum())


# -- the four channels -------------------------------------------------------

def channel_x(rho: np.ndarray, site: int) -> np.ndarray:
    """Measure X at the site and forget the outcome."""
    n = int(np.log2(rho.shape[0]))
    x = x_op(n, site)
    pp = (np.eye(2 ** n) + x) / 2
    pm = (np.eye(2 ** n) - x) / 2
    return pp @ rho @ pp + pm @ rho @ pm


def channel_t(rho: np.ndarray, site: int) -> np.ndarray:
    """Reset the (qu)bit to up/down with probability 1/2 each."""
    n = int(np.log2(rho.shape[0]))
    z = z_op(n, site)
    pp = (np.eye(2 ** n) + z) / 2
    pm = (np.eye(2 ** n) - z) / 2
    x = x_op(n, site)
    half = pp @ rho @ pp + pm @ rho @ pm
    return (half + x @ half @ x) / 2


def channel_d(rho: np.ndarray) -> np.ndarray:
    """Full dephasing into the computational basis (diagonal part)."""
    return np.diag(np.diag(rho)).astype(complex)


def kraus_f(n: int, site: int, bonds) -> list[np.ndarray]:
    """Kraus operators of the bond round + majority feedback at a site.

    One outcome pattern per incident bond; flip X for a -1 majority, do
    nothing for a +1 majority, and split a tie into two 1/sqrt(2) branches.
    """
    inc = incident_bonds(bonds, site)
    deg = len(inc)
    eye = np.eye(2 ** n, dtype=complex)
    if deg == 0:
        return [eye]
    x = x_op(n, site)
    ops = []
    for outcome in itertools.product((1, -1), repeat=deg):
        proj = eye
        for (a, b), m in zip(inc, outcome):
            proj = proj @ (eye + m * zz_op(n, a, b)) / 2
        nminus = sum(1 for m in outcome if m < 0)
        if 2 * nminus > deg:
            ops.append(x @ proj)
        elif 2 * nminus == deg:
            ops.append(proj / np.sqrt(2))
            ops.append(x @ proj / np.sqrt(2))
        else:
            ops.append(proj)
    return ops


def channel_f(rho: np.ndarray, site: int, bonds) -> np.ndarray:
    """Measure the ZZ bonds around the site, apply the feedback, forget."""
    n = int(np.log2(rho.shape[0]))
    out = np.zeros_like(rho)
    for k in kraus_f(n, site, bonds):
        out += k @ rho @ k.conj().T
    return out


def kraus_completeness_defect(ops) -> float:
    """Max deviation of sum K^dag K from the identity."""
    n = ops[0].shape[0]
    s = sum(k.conj().T @ k for k in ops)
    return float(np.abs(s - np.eye(n)).max())


# -- identity verification ---------------------------------------------------

def verify_relations(n: int, trials: int = 200, seed: int = 0,
                     tol: float = 1e-10) -> dict:
    """Check the two commutation identities on random mixed states.

    (1) X-measure-then-dephase equals dephase-then-reset, per site.
    (2) Dephasing commutes with the feedback bond round, per site.
    For n = 1 the first identity collapses to: both sides send every state
    to the maximally mixed bit.
    """
    _check_n(n)
    rng = np.random.default_rng(seed)
    bonds = ring_bonds(n)
    dev1 = 0.0
    dev2 = 0.0
    dev_half = 0.0
    eye_half = np.eye(2 ** n) / 2 ** n
    for _ in range(trials):
        rho = random_density_matrix(n, rng)
        for site in range(n):
            a = channel_x(channel_d(rho), site)
            b = channel_d(channel_t(rho, site))
            dev1 = max(dev1, trace_norm(a - b))
            if n == 1:
                dev_half = max(dev_half, trace_norm(a - eye_half))
            c = channel_d(channel_f(rho, site, bonds))
            d = channel_f(channel_d(rho), site, bonds)
            dev2 = max(dev2, trace_norm(c - d))
    report = {
        "n": n,
        "trials": trials,
        "tolerance": tol,
        "max_dev_xd_dt": dev1,
        "max_dev_df_fd": dev2,
    }
    if n == 1:
        report["max_dev_single_qubit_half_identity"] = dev_half
    report["passed"] = bool(dev1 < tol and dev2 < tol
                            and (n != 1 or dev_half < tol))
    return report


def evolve_schedule(rho: np.ndarray, schedule: Schedule,
                    classical: bool) -> np.ndarray:
    """Apply the channel string of a schedule, quantum or classical flavor.

    Quantum: X events become X-measurement channels.  Classical: X events
    become bit resets.  Bond rounds are the same feedback channel in both.
    """
    lat = schedule.lattice
    bonds = ring_bonds(lat.n_sites) if lat.dimension == 1 else lat.bonds()
    for ev in schedule.events():
        if ev.kind == EVENT_X:
            rho = channel_t(rho, ev.site) if classical \
                else channel_x(rho, ev.site)
        else:
            rho = channel_f(rho, ev.site, bonds)
    return rho


def verify_reduction(n: int, p: float, sweeps: int = 6,
                     n_schedules: int = 100, seed: int = 0,
                     tol: float = 1e-9) -> dict:
    """Quantum vs classical evolution from the all-zero state, per schedule.

    For every sampled schedule the outcome-averaged quantum state must
    equal the classical majority-vote state in trace norm, the classical
    state must stay diagonal, and its diagonal must match the transition
    probabilities tracked by the classical module directly.
    """
    from .lattice import make_lattice
    from .mvc import schedule_distribution

    _check_n(n)
    if n >= 4:
        lattice = make_lattice(1, n)
    else:
        # degenerate small rings, below the production lattice minimum
        lattice = Lattice(dimension=1, L=n, n_sites=n,
                          neighbors=_ring_neighbors(n))
    rho0 = all_zero_rho(n)
    max_td = 0.0
    max_offdiag = 0.0
    max_dist_dev = 0.0
    for s in range(n_schedules):
        sched = Schedule(lattice=lattice, p=p, sweeps=sweeps, kinds=(
            RandomStream(seed, (s,)).generator(0).random((sweeps, n)) < p
        ).astype(np.uint8), stream=RandomStream(seed, (s,)))
        rho_q = evolve_schedule(rho0, sched, classical=False)
        rho_c = evolve_schedule(rho0, sched, classical=True)
        max_td = max(max_td, trace_norm(rho_q - rho_c))
        off = rho_c - np.diag(np.diag(rho_c))
        max_offdiag = max(max_offdiag, float(np.abs(off).max()))
        dist = schedule_distribution(sched)
        max_dist_dev = max(max_dist_dev,
                           float(np.abs(np.diag(rho_c).real - dist).max()))
    report = {
        "n": n,
        "p": p,
        "sweeps": sweeps,
        "n_schedules": n_schedules,
        "tolerance": tol,
        "max_trace_distance": max_td,
        "max_classical_offdiag": max_offdiag,
        "max_distribution_deviation": max_dist_dev,
    }
    report["passed"] = bool(max_td < tol and max_offdiag < tol
                            and max_dist_dev < 1e-9)
    return report


def _ring_neighbors(n: int) -> np.ndarray:
    neigh = np.empty((n, 2), dtype=np.int32)
    for i in range(n):
        neigh[i, 0] = (i - 1) % n
        neigh[i, 1] = (i + 1) % n
    return neigh


# -- bridge from the cluster representation ----------------------------------

def cluster_state_vector(state) -> np.ndarray:
    """Exact state vector of a ClusterState (small systems only)."""
    n = state.n_sites
    _check_n(n)
    bg = state.background_z()
    base = np.zeros(n, dtype=np.int64)
    for s, z in bg.items():
        base[s] = (1 - z) // 2
    clusters = []
    for slot in state.live_clusters():
        members = state.cluster_members(int(slot))
        bits = [state.relative_bit(s) for s in members]
        clusters.append((members, bits, state.cluster_sign(int(slot))))
    vec = np.zeros(2 ** n, dtype=complex)
    norm = 1 / np.sqrt(2) ** len(clusters)
    for choice in itertools.product((0, 1), repeat=len(clusters)):
        bits = base.copy()
        amp = norm
        for c, (members, rbits, sign) in zip(choice, clusters):
            if c:
                amp *= sign
            for s, b in zip(members, rbits):
                bits[s] = b ^ c
        idx = 0
        for k in range(n):
            idx = (idx << 1) | int(bits[k])
        vec[idx] += amp
    return vec


def states_equal_up_to_phase(u: np.ndarray, v: np.ndarray,
                             tol: float = 1e-10) -> bool:
    overlap = np.vdot(u, v)
    return abs(abs(overlap) - np.linalg.norm(u) * np.linalg.norm(v)) < tol
