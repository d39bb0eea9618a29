"""Seeded measurement schedules and replayable outcome tapes.

All stochastic choices of one trajectory live in two places:

* the Schedule: which measurement (X or bond round) happens at each site of
  each sweep, drawn i.i.d. with P(bond round) = p;
* the OutcomeTape: every measurement outcome and every feedback coin, in
  canonical event order.

Randomness comes from counter-based Philox streams keyed by
(master seed, spawn key), so trajectories are reproducible independent of
thread scheduling and the same realization can be replayed through any
engine.  Sign convention throughout: bit 0 means +1, bit 1 means -1.

Deterministic measurement outcomes consume no randomness.  They are still
written to the tape, flagged deterministic, and a replaying engine must
*predict* them; disagreement is an engine bug and raises ReplayMismatch.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .lattice import Lattice, make_lattice

# Sub-stream domains: one Philox stream per (trajectory, purpose).
DOMAIN_SCHEDULE = 0
DOMAIN_DYNAMICS = 1

# Tape record kinds.
REC_X = 0
REC_BOND = 1
REC_COIN = 2

# Schedule event kinds.
EVENT_X = 0
EVENT_BOND = 1


@dataclass(frozen=True)
class Event:
    kind: int  # EVENT_X or EVENT_BOND
    site: int


@dataclass(frozen=True)
class RandomStream:
    """Counter-based random stream: (seed, key) -> independent Philox stream.

    Identical (seed, key, domain) always reproduces the same draws; distinct
    keys give statistically independent streams, so trajectories can be
    farmed out to workers in any order.
    """

    seed: int
    key: tuple[int, ...] = ()

    def generator(self, domain: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed,
                                    spawn_key=(*self.key, domain))
        return np.random.Generator(np.random.Philox(ss))

    def bits(self, n: int, domain: int = DOMAIN_DYNAMICS) -> np.ndarray:
        """n pre-drawn fair bits (uint8), consumed on demand by the engines."""
        return self.generator(domain).integers(0, 2, size=n, dtype=np.uint8)


@dataclass(frozen=True)
class Schedule:
    """One realization of the measurement choices for a whole run.

    kinds[t, i] is the event at site i of sweep t (EVENT_X / EVENT_BOND).
    order[t] is the site visit order within sweep t; None means raster
    order 0..N-1, the canonical choice.
    """

    lattice: Lattice
    p: float
    sweeps: int
    kinds: np.ndarray = field(repr=False)  # (sweeps, n_sites) uint8
    stream: RandomStream | None = None
    order: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_events(self) -> int:
        return self.sweeps * self.lattice.n_sites

    def site_at(self, t: int, slot: int) -> int:
        if self.order is None:
            return slot
        return int(self.order[t, slot])

    def events(self):
        """Yield Events in canonical execution order."""
        for t in range(self.sweeps):
            for slot in range(self.lattice.n_sites):
                site = self.site_at(t, slot)
                yield Event(int(self.kinds[t, site]), site)

    def max_draws(self) -> int:
        """Upper bound on random bits / tape records one run can consume.

        An X event uses at most one bit; a bond round uses at most one per
        bond plus one feedback coin.
        """
        n_bond = int(self.kinds.sum())
        n_x = self.n_events - n_bond
        return n_x + n_bond * (self.lattice.coordination + 1)


def generate_schedule(lattice: Lattice, p: float, sweeps: int,
                      stream: RandomStream,
                      site_order: str = "raster") -> Schedule:
    """Draw a schedule: each site of each sweep is a bond round w.p. p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if sweeps < 0:
        raise ValueError("sweeps must be >= 0")
    rng = stream.generator(DOMAIN_SCHEDULE)
    n = lattice.n_sites
    kinds = (rng.random((sweeps, n)) < p).astype(np.uint8)
    order = None
    if site_order == "random":
        order = np.empty((sweeps, n), dtype=np.int32)
        for t in range(sweeps):
            order[t] = rng.permutation(n)
    elif site_order != "raster":
        raise ValueError(f"unknown site_order {site_order!r}")
    kinds.setflags(write=False)
    return Schedule(lattice=lattice, p=p, sweeps=sweeps, kinds=kinds,
                    stream=stream, order=order)


class ReplayMismatch(Exception):
    """A replayed engine disagreed with the recorded trajectory."""


@dataclass
class OutcomeTape:
    """Recorded stochastic record of one trajectory.

    Parallel arrays: rec_kind (REC_*), rec_val (bit: 0 -> +1, 1 -> -1),
    rec_det (1 if the engine predicted the value deterministically).
    """

    rec_kind: np.ndarray
    rec_val: np.ndarray
    rec_det: np.ndarray
    schedule: Schedule | None = None

    def __len__(self) -> int:
        return int(self.rec_kind.size)

    def outcomes(self) -> np.ndarray:
        """Values as signs +1 / -1."""
        return (1 - 2 * self.rec_val.astype(np.int64))

    def __eq__(self, other) -> bool:
        if not isinstance(other, OutcomeTape):
            return NotImplemented
        return (np.array_equal(self.rec_kind, other.rec_kind)
                and np.array_equal(self.rec_val, other.rec_val)
                and np.array_equal(self.rec_det, other.rec_det))


class TapeCursor:
    """Record/replay resolver used by the pure-Python engines.

    In record mode, nondeterministic values are taken from the pre-drawn
    bit buffer and appended to the tape; in replay mode values come from
    the tape and any disagreement about determinism or a deterministic
    value raises ReplayMismatch.
    """

    def __init__(self, bits: np.ndarray | None = None,
                 tape: OutcomeTape | None = None, record: bool = False):
        if record and tape is not None:
            raise ValueError("record mode starts from an empty tape")
        self.bits = bits
        self.bit_pos = 0
        self.replay = tape
        self.pos = 0
        self.record = record
        if record:
            self._kinds: list[int] = []
            self._vals: list[int] = []
            self._dets: list[int] = []

    def resolve(self, kind: int, det: bool, detbit: int = 0) -> int:
        if self.replay is not None:
            t = self.replay
            if self.pos >= len(t):
                raise ReplayMismatch(f"tape exhausted at record {self.pos}")
            if int(t.rec_kind[self.pos]) != kind:
                raise ReplayMismatch(
                    f"record {self.pos}: kind {t.rec_kind[self.pos]} != {kind}")
            if bool(t.rec_det[self.pos]) != det:
                raise ReplayMismatch(
                    f"record {self.pos}: determinism flag mismatch")
            val = int(t.rec_val[self.pos])
            if det and val != detbit:
                raise ReplayMismatch(
                    f"record {self.pos}: deterministic outcome "
                    f"{1 - 2 * detbit} != recorded {1 - 2 * val}")
            self.pos += 1
            return detbit if det else val
        if det:
            val = detbit
        else:
            if self.bits is None or self.bit_pos >= self.bits.size:
                raise RuntimeError("random bit buffer exhausted")
            val = int(self.bits[self.bit_pos])
            self.bit_pos += 1
        if self.record:
            self._kinds.append(kind)
            self._vals.append(val)
            self._dets.append(int(det))
            self.pos += 1
        return val

    def finish(self, schedule: Schedule | None = None) -> OutcomeTape | None:
        if self.replay is not None:
            if self.pos != len(self.replay):
                raise ReplayMismatch(
                    f"replay consumed {self.pos} of {len(self.replay)} records")
            return None
        if not self.record:
            return None
        return OutcomeTape(
            rec_kind=np.asarray(self._kinds, dtype=np.uint8),
            rec_val=np.asarray(self._vals, dtype=np.uint8),
            rec_det=np.asarray(self._dets, dtype=np.uint8),
            schedule=schedule,
        )


def forced_bits(signs) -> np.ndarray:
    """Bit buffer forcing the given +1/-1 outcomes, for tests and examples."""
    return np.asarray([(1 - s) // 2 for s in signs], dtype=np.uint8)


# ---------------------------------------------------------------------------
# Tape serialization.  Binary layout (little endian), checksummed:
#
#   magic   4 bytes  b"MCT1"
#   dim     u8
#   L       u32
#   p       f64
#   seed    i64      (master seed; 0 if unknown)
#   nkey    u8       number of stream key words
#   key     nkey*u64
#   sweeps  u32
#   kinds   sweeps*N u8          (schedule event kinds, raster order)
#   nrec    u32
#   rec_kind nrec*u8
#   rec_val  nrec*u8             (bits)
#   rec_det  nrec*u8
#   crc32   u32      of everything above
# ---------------------------------------------------------------------------

_MAGIC = b"MCT1"


class TapeFormatError(Exception):
    """Corrupt or malformed tape file."""


def write_tape(path, tape: OutcomeTape) -> None:
    if tape.schedule is None:
        raise ValueError("tape has no attached schedule")
    sched = tape.schedule
    seed = sched.stream.seed if sched.stream is not None else 0
    key = sched.stream.key if sched.stream is not None else ()
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<BIdqB", sched.lattice.dimension, sched.lattice.L,
                        sched.p, seed, len(key))
    for k in key:
        blob += struct.pack("<Q", k)
    blob += struct.pack("<I", sched.sweeps)
    blob += np.ascontiguousarray(sched.kinds, dtype=np.uint8).tobytes()
    blob += struct.pack("<I", len(tape))
    blob += tape.rec_kind.astype(np.uint8).tobytes()
    blob += tape.rec_val.astype(np.uint8).tobytes()
    blob += tape.rec_det.astype(np.uint8).tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)))
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def read_tape(path) -> OutcomeTape:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8 or blob[:4] != _MAGIC:
        raise TapeFormatError("not a tape file (bad magic)")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise TapeFormatError("checksum mismatch, tape is corrupt")
    off = 4
    dim, L, p, seed, nkey = struct.unpack_from("<BIdqB", body, off)
    off += struct.calcsize("<BIdqB")
    key = struct.unpack_from(f"<{nkey}Q", body, off) if nkey else ()
    off += 8 * nkey
    (sweeps,) = struct.unpack_from("<I", body, off)
    off += 4
    lattice = make_lattice(dim, L)
    n = lattice.n_sites
    kinds = np.frombuffer(body, dtype=np.uint8, count=sweeps * n,
                          offset=off).reshape(sweeps, n).copy()
    off += sweeps * n
    (nrec,) = struct.unpack_from("<I", body, off)
    off += 4
    arrs = []
    for _ in range(3):
        arrs.append(np.frombuffer(body, dtype=np.uint8, count=nrec,
                                  offset=off).copy())
        off += nrec
    if off != len(body):
        raise TapeFormatError("trailing bytes in tape file")
    kinds.setflags(write=False)
    stream = RandomStream(seed=seed, key=tuple(int(k) for k in key))
    sched = Schedule(lattice=lattice, p=p, sweeps=sweeps, kinds=kinds,
                     stream=stream)
    return OutcomeTape(rec_kind=arrs[0], rec_val=arrs[1], rec_det=arrs[2],
                       schedule=sched)


def tape_to_json(tape: OutcomeTape) -> str:
    sched = tape.schedule
    doc = {
        "dimension": sched.lattice.dimension,
        "L": sched.lattice.L,
        "p": sched.p,
        "seed": sched.stream.seed if sched.stream else 0,
        "key": list(sched.stream.key) if sched.stream else [],
        "sweeps": sched.sweeps,
        "kinds": sched.kinds.ravel().tolist(),
        "rec_kind": tape.rec_kind.tolist(),
        "rec_val": tape.rec_val.tolist(),
        "rec_det": tape.rec_det.tolist(),
    }
    return json.dumps(doc)


def tape_from_json(text: str) -> OutcomeTape:
    doc = json.loads(text)
    lattice = make_lattice(doc["dimension"], doc["L"])
    kinds = np.asarray(doc["kinds"], dtype=np.uint8).reshape(
        doc["sweeps"], lattice.n_sites)
    kinds.setflags(write=False)
    sched = Schedule(lattice=lattice, p=doc["p"], sweeps=doc["sweeps"],
                     kinds=kinds,
                     stream=RandomStream(doc["seed"], tuple(doc["key"])))
    return OutcomeTape(rec_kind=np.asarray(doc["rec_kind"], dtype=np.uint8),
                       rec_val=np.asarray(doc["rec_val"], dtype=np.uint8),
                       rec_det=np.asarray(doc["rec_det"], dtype=np.uint8),
                       schedule=sched)
