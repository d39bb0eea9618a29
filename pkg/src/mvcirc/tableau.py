"""Exact stabilizer tableau oracle for small systems.

Each generator is stored as i^phase * X^x Z^z with x, z bit rows and the
phase a power of i mod 4 (products of X and Z can pick up Y factors, so a
plain sign bit is not enough during row multiplication).  A generator with
zero x.z overlap is Hermitian iff its phase is 0 or 2, encoding sign +1
or -1.

This engine replays trajectories recorded by the cluster engine and must
reproduce them exactly: anticommutation decides which outcomes are random,
GF(2) elimination computes the deterministic ones, and the X feedback only
touches phases.  It is an oracle, so clarity beats constant factors; rows
are vectorized uint8 and system sizes stay small.
"""

from __future__ import annotations

import numpy as np

from .lattice import Lattice
from .schedule import (DOMAIN_DYNAMICS, EVENT_X, REC_BOND, REC_COIN, REC_X,
                       OutcomeTape, RandomStream, Schedule, TapeCursor)

INITIAL_STATES = ("zero", "plus")


class NotGhzFormError(RuntimeError):
    """The tableau is not a product of Z eigenstates and GHZ factors."""


class Tableau:
    """n commuting independent generators over n qubits (pure state)."""

    def __init__(self, n: int, initial: str = "zero"):
        if n < 1:
            raise ValueError("need at least one qubit")
        if initial not in INITIAL_STATES:
            raise ValueError(f"initial must be one of {INITIAL_STATES}")
        self.n = n
        self.x = np.zeros((n, n), dtype=np.uint8)
        self.z = np.zeros((n, n), dtype=np.uint8)
        self.phase = np.zeros(n, dtype=np.uint8)
        if initial == "zero":
            self.z[:] = np.eye(n, dtype=np.uint8)
        else:
            self.x[:] = np.eye(n, dtype=np.uint8)

    # -- row algebra -------------------------------------------------------

    def _row_mul(self, k: int, q: int) -> None:
        """row_k <- row_k * row_q (rows commute, so order is immaterial)."""
        self.phase[k] = (self.phase[k] + self.phase[q]
                         + 2 * (int(self.z[k] @ self.x[q]) & 1)) % 4
        self.x[k] ^= self.x[q]
        self.z[k] ^= self.z[q]

    def row_sign(self, k: int) -> int:
        """Sign of generator k as +1 / -1 (it is Hermitian by construction)."""
        w = int(self.x[k] @ self.z[k])
        e = (int(self.phase[k]) - w) % 4
        if e % 2:
            raise AssertionError("non-Hermitian generator")
        return 1 if e == 0 else -1

    def generators(self) -> list[str]:
        """Human-readable sign + Pauli string per generator."""
        out = []
        for k in range(self.n):
            s = "+" if self.row_sign(k) == 1 else "-"
            chars = []
            for q in range(self.n):
                chars.append("IXZY"[self.x[k, q] + 2 * self.z[k, q]])
            out.append(s + "".join(chars))
        return out

    def _echelon(self):
        """Reduced row echelon over GF(2) with phase tracking (a copy)."""
        n = self.n
        x = self.x.copy()
        z = self.z.copy()
        ph = self.phase.copy().astype(np.int64)
        bits = np.concatenate([x, z], axis=1)

        def mul(k, q):
            ph[k] = (ph[k] + ph[q] + 2 * (int(bits[k, n:] @ bits[q, :n]) & 1)) % 4
            bits[k] ^= bits[q]

        pivots = []
        r = 0
        for col in range(2 * n):
            rows = np.nonzero(bits[r:, col])[0]
            if rows.size == 0:
                continue
            pr = r + int(rows[0])
            if pr != r:
                bits[[r, pr]] = bits[[pr, r]]
                ph[[r, pr]] = ph[[pr, r]]
            for k in np.nonzero(bits[:, col])[0]:
                if k != r:
                    mul(int(k), r)
            pivots.append((col, r))
            r += 1
            if r == n:
                break
        return bits, ph, pivots

    def _reduce(self, xp: np.ndarray, zp: np.ndarray, ech=None):
        """Express X^xp Z^zp as a product of generators.

        Returns the accumulated i-power (mod 4) or None when the operator
        is not in the stabilizer group.
        """
        n = self.n
        bits, ph, pivots = ech if ech is not None else self._echelon()
        res = np.concatenate([xp, zp]).astype(np.uint8)
        acc_z = np.zeros(n, dtype=np.uint8)
        acc_phase = 0
        for col, row in pivots:
            if res[col]:
                acc_phase = (acc_phase + int(ph[row])
                             + 2 * (int(acc_z @ bits[row, :n]) & 1)) % 4
                acc_z ^= bits[row, n:]
                res ^= bits[row]
        if res.any():
            return None
        return acc_phase

    def group_sign(self, xp: np.ndarray, zp: np.ndarray, ech=None):
        """Sign of a (zero-overlap) Pauli inside the group, else None."""
        acc = self._reduce(xp, zp, ech)
        if acc is None:
            return None
        if acc % 2:
            raise AssertionError("group element with imaginary phase")
        return 1 if acc == 0 else -1

    # -- dynamics ----------------------------------------------------------

    def _measure(self, xp, zp, kind: int, cursor: TapeCursor) -> int:
        anti = (self.x @ zp + self.z @ xp) % 2
        rows = np.nonzero(anti)[0]
        if rows.size:
            q = int(rows[0])
            mbit = cursor.resolve(kind, det=False)
            for k in rows[1:]:
                self._row_mul(int(k), q)
            self.x[q] = xp
            self.z[q] = zp
            self.phase[q] = 0 if mbit == 0 else 2
            return mbit
        sign = self.group_sign(xp, zp)
        if sign is None:
            raise AssertionError("commuting operator outside a full-rank group")
        return cursor.resolve(kind, det=True, detbit=(1 - sign) // 2)

    def measure_x(self, site: int, cursor: TapeCursor) -> int:
        xp = np.zeros(self.n, dtype=np.uint8)
        zp = np.zeros(self.n, dtype=np.uint8)
        xp[site] = 1
        return self._measure(xp, zp, REC_X, cursor)

    def measure_bond(self, i: int, j: int, cursor: TapeCursor) -> int:
        if i == j:
            raise ValueError("bond endpoints must differ")
        xp = np.zeros(self.n, dtype=np.uint8)
        zp = np.zeros(self.n, dtype=np.uint8)
        zp[i] = 1
        zp[j] = 1
        return self._measure(xp, zp, REC_BOND, cursor)

    def apply_x(self, site: int) -> None:
        """Conjugate by X: flips the sign of every generator with a Z there."""
        self.phase = (self.phase + 2 * self.z[:, site]) % 4

    def site_update(self, site: int, event_kind: int, lattice: Lattice,
                    cursor: TapeCursor) -> None:
        if event_kind == EVENT_X:
            self.measure_x(site, cursor)
            return
        deg = lattice.coordination
        nminus = 0
        for j in lattice.neighbors[site]:
            nminus += self.measure_bond(site, int(j), cursor)
        if 2 * nminus > deg:
            self.apply_x(site)
        elif 2 * nminus == deg:
            if cursor.resolve(REC_COIN, det=False) == 1:
                self.apply_x(site)

    def run(self, schedule: Schedule, stream: RandomStream | None = None,
            bits: np.ndarray | None = None,
            tape: OutcomeTape | None = None,
            record: bool = False) -> OutcomeTape | None:
        """Replay a tape, or run from the same bit stream the cluster
        engine would use (which yields the identical trajectory)."""
        if schedule.lattice.n_sites != self.n:
            raise ValueError("schedule lattice does not match tableau")
        if tape is not None:
            cursor = TapeCursor(tape=tape)
        else:
            if bits is None:
                src = stream if stream is not None else schedule.stream
                if src is None:
                    raise ValueError("no outcome source")
                bits = src.bits(schedule.max_draws(), DOMAIN_DYNAMICS)
            cursor = TapeCursor(bits=bits, record=record)
        for ev in schedule.events():
            self.site_update(ev.site, ev.kind, schedule.lattice, cursor)
        return cursor.finish(schedule)

    # -- observables ---------------------------------------------------------

    def pauli_expectation(self, xp: np.ndarray, zp: np.ndarray) -> int:
        """<P> for a Pauli with zero x.z overlap: +1/-1 in group, else 0."""
        anti = (self.x @ zp + self.z @ xp) % 2
        if anti.any():
            return 0
        sign = self.group_sign(np.asarray(xp, dtype=np.uint8),
                               np.asarray(zp, dtype=np.uint8))
        if sign is None:
            raise AssertionError("commuting operator outside a full-rank group")
        return sign

    def expectation_z(self, site: int) -> int:
        zp = np.zeros(self.n, dtype=np.uint8)
        zp[site] = 1
        return self.pauli_expectation(np.zeros(self.n, dtype=np.uint8), zp)

    def expectation_zz(self, i: int, j: int) -> int:
        zp = np.zeros(self.n, dtype=np.uint8)
        zp[i] ^= 1
        zp[j] ^= 1
        return self.pauli_expectation(np.zeros(self.n, dtype=np.uint8), zp)

    def expectation_u(self) -> int:
        """Global spin flip prod_i X_i."""
        return self.pauli_expectation(np.ones(self.n, dtype=np.uint8),
                                      np.zeros(self.n, dtype=np.uint8))

    def magnetization(self) -> int:
        return sum(self.expectation_z(i) for i in range(self.n))

    def entropy(self, region) -> int:
        """Entanglement entropy of a region in bits: rank of the region
        restriction of the generator matrix minus the region size."""
        mask = _region_mask(region, self.n)
        sub = np.concatenate([self.x[:, mask], self.z[:, mask]], axis=1)
        return int(gf2_rank(sub)) - int(mask.sum())

    # -- structure extraction -------------------------------------------------

    def extract_partition(self):
        """Recover the background + GHZ cluster structure, canonical form.

        Returns the same (background, clusters) shape as
        ClusterState.canonical().  Raises NotGhzFormError when the state is
        not of that form, which for this circuit class means an engine bug.
        """
        ech = self._echelon()
        zeros = np.zeros(self.n, dtype=np.uint8)
        bg = []
        rest = []
        for site in range(self.n):
            zp = zeros.copy()
            zp[site] = 1
            sign = self.group_sign(zeros, zp, ech)
            if sign is None:
                rest.append(site)
            else:
                bg.append((site, sign))
        clusters: list[tuple[list[int], list[int]]] = []
        for site in rest:
            for members, bits in clusters:
                rep = members[0]
                zp = zeros.copy()
                zp[rep] = 1
                zp[site] = 1
                sign = self.group_sign(zeros, zp, ech)
                if sign is not None:
                    members.append(site)
                    bits.append((1 - sign) // 2)
                    break
            else:
                clusters.append(([site], [0]))
        out = []
        for members, bits in clusters:
            xp = zeros.copy()
            xp[members] = 1
            sign = self.group_sign(xp, zeros, ech)
            if sign is None:
                raise NotGhzFormError(
                    f"sites {members} form no valid GHZ factor")
            out.append((tuple(members), tuple(bits), sign))
        return tuple(sorted(bg)), tuple(sorted(out))

    def rank_check(self) -> bool:
        """Generators independent over GF(2) (full rank)."""
        return gf2_rank(np.concatenate([self.x, self.z], axis=1)) == self.n


def init_tableau(n: int, initial: str = "zero") -> Tableau:
    return Tableau(n, initial=initial)


def gf2_rank(mat: np.ndarray) -> int:
    """Rank of a 0/1 matrix over GF(2), by in-place elimination on a copy."""
    m = mat.astype(np.uint8).copy()
    rows, cols = m.shape
    r = 0
    for c in range(cols):
        sel = np.nonzero(m[r:, c])[0]
        if sel.size == 0:
            continue
        pr = r + int(sel[0])
        if pr != r:
            m[[r, pr]] = m[[pr, r]]
        below = np.nonzero(m[r + 1:, c])[0]
        for k in below:
            m[r + 1 + int(k)] ^= m[r]
        r += 1
        if r == rows:
            break
    return r


def _region_mask(region, n: int) -> np.ndarray:
    mask = np.asarray(region)
    if mask.dtype == bool:
        if mask.size != n:
            raise ValueError("region mask has the wrong length")
        return mask
    out = np.zeros(n, dtype=bool)
    out[np.asarray(region, dtype=np.int64)] = True
    return out
