"""Numba kernels for the background + GHZ-cluster engine.

State layout (all arrays preallocated, N = number of sites):

  site arrays
    tag[i]   0 background, 1 cluster member
    zbit[i]  background Z value as a bit (0 -> +1, 1 -> -1)
    rbit[i]  member's raw relative bit; effective bit is rbit[i] ^ cflip[c]
    cid[i]   cluster slot of a member, -1 for background
    nxt, prv doubly-linked member list within each cluster

  cluster slot arrays (at most N live clusters)
    csize[c]    members; 0 marks a dead slot
    csign[c]    cluster sign as a bit (0 -> +1, 1 -> -1)
    cflip[c]    lazy global flip of all relative bits (gauge bookkeeping)
    chead[c]    first member = representative; ctail[c] last member
    fstack      stack of free slots

Gauge invariant: the representative's effective bit is always 0, restored
in O(1) by toggling cflip.  The cluster sign is gauge independent.

Counters ctr = [bit cursor, tape cursor].  A measurement with a
deterministic outcome consumes no random bit; it is still written to /
checked against the tape, so tapes align across engines.

Performance notes, both measured, not guessed:
* helpers are force-inlined with a single return point; numba's IR
  inliner emits badly optimizable code for multi-exit helpers (~25x);
* the replay logic lives in a separately compiled kernel family; merely
  having the (untaken) replay branch inside the hot resolve costs ~20x,
  so the physics is written once in a factory and instantiated twice.
"""

import numpy as np
from numba import njit

# run modes (dispatch happens in Python, per kernel family)
MODE_RUN = 0
MODE_RECORD = 1
MODE_REPLAY = 2

# status codes
OK = 0
ERR_BITS = 1        # random bit buffer exhausted
ERR_TAPE_FULL = 2   # tape capacity exceeded while recording
ERR_TAPE_END = 3    # tape exhausted while replaying
ERR_TAPE_KIND = 4   # replay record kind mismatch
ERR_TAPE_DET = 5    # replay determinism flag mismatch
ERR_TAPE_VAL = 6    # deterministic outcome differs from recorded value

STATUS_MESSAGES = {
    ERR_BITS: "random bit buffer exhausted",
    ERR_TAPE_FULL: "tape capacity exceeded",
    ERR_TAPE_END: "tape exhausted during replay",
    ERR_TAPE_KIND: "replay record kind mismatch",
    ERR_TAPE_DET: "replay determinism flag mismatch",
    ERR_TAPE_VAL: "deterministic outcome mismatch on replay",
}

REPLAY_STATUSES = (ERR_TAPE_END, ERR_TAPE_KIND, ERR_TAPE_DET, ERR_TAPE_VAL)

# tape record kinds (must match schedule.REC_*)
REC_X = 0
REC_BOND = 1
REC_COIN = 2


@njit(cache=True)
def _merge_into(small, large, flip, rbit, cid, csize, csign, cflip,
                chead, ctail, nxt, prv, fstack, nfree):
    """Relabel the smaller cluster into the larger (cold path, outlined)."""
    if flip:
        cflip[small] ^= 1
    # fold so moved members keep their effective bits under the large
    # cluster's lazy flip
    fs = cflip[small] ^ cflip[large]
    s = chead[small]
    while s != -1:
        rbit[s] ^= fs
        cid[s] = large
        s = nxt[s]
    nxt[ctail[large]] = chead[small]
    prv[chead[small]] = ctail[large]
    ctail[large] = ctail[small]
    csize[large] += csize[small]
    csign[large] ^= csign[small]
    _free_cluster(small, csize, fstack, nfree)


@njit(cache=True)
def _kill_cluster(c, zj, rj, tag, zbit, rbit, cid, csize, chead, nxt,
                  fstack, nfree):
    """Collapse a cluster to Z eigenstates (cold path, outlined)."""
    s = chead[c]
    while s != -1:
        n = nxt[s]
        tag[s] = 0
        zbit[s] = zj ^ rbit[s] ^ rj
        cid[s] = -1
        s = n
    _free_cluster(c, csize, fstack, nfree)


@njit(cache=True, inline="always")
def _new_cluster(site, signbit, tag, rbit, cid, csize, csign, cflip,
                 chead, ctail, nxt, prv, fstack, nfree):
    slot = fstack[nfree[0] - 1]
    nfree[0] -= 1
    tag[site] = 1
    rbit[site] = 0
    cid[site] = slot
    csize[slot] = 1
    csign[slot] = signbit
    cflip[slot] = 0
    chead[slot] = site
    ctail[slot] = site
    nxt[site] = -1
    prv[site] = -1


@njit(cache=True, inline="always")
def _free_cluster(slot, csize, fstack, nfree):
    csize[slot] = 0
    fstack[nfree[0]] = slot
    nfree[0] += 1


@njit(cache=True, inline="always")
def _fix_gauge(slot, rbit, cflip, chead):
    # keep the representative's effective bit at 0
    if (rbit[chead[slot]] ^ cflip[slot]) & 1:
        cflip[slot] ^= 1


@njit(cache=True, inline="always")
def _apply_x(site, tag, zbit, rbit, cid, cflip, chead):
    """X on one site: flip background z or the member's relative bit."""
    if tag[site] == 0:
        zbit[site] ^= 1
    else:
        rbit[site] ^= 1
        _fix_gauge(cid[site], rbit, cflip, chead)


apply_x = _apply_x


def _jit(fn, name, inline=False):
    fn.__name__ = name
    fn.__qualname__ = name
    if inline:
        return njit(cache=True, inline="always")(fn)
    return njit(cache=True)(fn)


def _build_kernels(replay: bool):
    """Compile one kernel family; the flag picks the outcome resolver.

    Live family: nondeterministic values come from the pre-drawn bit
    buffer, optionally recorded onto the tape (runtime flag `record`).
    Replay family: values come from the tape with full consistency checks.
    """
    suffix = "replay" if replay else "live"

    if replay:
        def resolve(kind, det, detbit, bits, ctr, rkind, rval, rdet,
                    record):
            st = OK
            v = detbit
            tp = ctr[1]
            if tp >= rkind.size:
                st = ERR_TAPE_END
            elif rkind[tp] != kind:
                st = ERR_TAPE_KIND
            elif rdet[tp] != det:
                st = ERR_TAPE_DET
            elif det == 1 and rval[tp] != detbit:
                st = ERR_TAPE_VAL
            else:
                ctr[1] = tp + 1
                if det == 0:
                    v = rval[tp]
            return st, v
    else:
        def resolve(kind, det, detbit, bits, ctr, rkind, rval, rdet,
                    record):
            st = OK
            v = detbit
            if det == 0:
                bp = ctr[0]
                if bp >= bits.size:
                    st = ERR_BITS
                else:
                    v = bits[bp]
                    ctr[0] = bp + 1
            if st == OK and record == 1:
                tp = ctr[1]
                if tp >= rkind.size:
                    st = ERR_TAPE_FULL
                else:
                    rkind[tp] = kind
                    rval[tp] = v
                    rdet[tp] = det
                    ctr[1] = tp + 1
            return st, v

    resolve = _jit(resolve, f"_resolve_{suffix}", inline=True)

    def measure_x(site, tag, zbit, rbit, cid, csize, csign, cflip, chead,
                  ctail, nxt, prv, fstack, nfree,
                  bits, ctr, rkind, rval, rdet, record):
        if tag[site] == 0:
            # birth: background site becomes a fresh size-1 cluster
            st, m = resolve(REC_X, 0, 0, bits, ctr, rkind, rval, rdet,
                            record)
            if st == OK:
                _new_cluster(site, m, tag, rbit, cid, csize, csign, cflip,
                             chead, ctail, nxt, prv, fstack, nfree)
        else:
            c = cid[site]
            if csize[c] == 1:
                # X eigenstate: deterministic, state unchanged
                st, m = resolve(REC_X, 1, csign[c], bits, ctr, rkind, rval,
                                rdet, record)
            else:
                # split: the site leaves as a size-1 cluster with sign m,
                # the remainder keeps its pattern with sign (old) * m
                st, m = resolve(REC_X, 0, 0, bits, ctr, rkind, rval, rdet,
                                record)
                if st == OK:
                    p = prv[site]
                    n = nxt[site]
                    if p >= 0:
                        nxt[p] = n
                    else:
                        chead[c] = n
                    if n >= 0:
                        prv[n] = p
                    else:
                        ctail[c] = p
                    csize[c] -= 1
                    csign[c] ^= m
                    _fix_gauge(c, rbit, cflip, chead)
                    _new_cluster(site, m, tag, rbit, cid, csize, csign,
                                 cflip, chead, ctail, nxt, prv, fstack,
                                 nfree)
        return st, m

    measure_x = _jit(measure_x, f"_measure_x_{suffix}")

    def measure_bond(i, j, tag, zbit, rbit, cid, csize, csign, cflip,
                     chead, ctail, nxt, prv, fstack, nfree,
                     bits, ctr, rkind, rval, rdet, record):
        ti = tag[i]
        tj = tag[j]
        if ti == 0 and tj == 0:
            st, m = resolve(REC_BOND, 1, zbit[i] ^ zbit[j], bits, ctr,
                            rkind, rval, rdet, record)
        elif ti == 1 and tj == 1:
            ci = cid[i]
            cj = cid[j]
            if ci == cj:
                # same cluster: eigenstate (the lazy flips cancel)
                st, m = resolve(REC_BOND, 1, rbit[i] ^ rbit[j], bits, ctr,
                                rkind, rval, rdet, record)
            else:
                # merge: random outcome, combined sign is the product
                st, m = resolve(REC_BOND, 0, 0, bits, ctr, rkind, rval,
                                rdet, record)
                if st == OK:
                    cur = rbit[i] ^ cflip[ci] ^ rbit[j] ^ cflip[cj]
                    if csize[ci] < csize[cj]:
                        small, large = ci, cj
                    else:
                        small, large = cj, ci
                    # flipping either side realizes the outcome; flip the
                    # smaller so the relabel pass absorbs it
                    _merge_into(small, large, cur != m, rbit, cid, csize,
                                csign, cflip, chead, ctail, nxt, prv,
                                fstack, nfree)
        else:
            # death: one background site, one member; the whole cluster
            # collapses to Z eigenstates consistent with the outcome
            if ti == 0:
                b = i
                cs = j
            else:
                b = j
                cs = i
            st, m = resolve(REC_BOND, 0, 0, bits, ctr, rkind, rval, rdet,
                            record)
            if st == OK:
                _kill_cluster(cid[cs], m ^ zbit[b], rbit[cs], tag, zbit,
                              rbit, cid, csize, chead, nxt, fstack, nfree)
        return st, m

    measure_bond = _jit(measure_bond, f"_measure_bond_{suffix}")

    def site_update(site, evkind, neigh, tag, zbit, rbit, cid, csize,
                    csign, cflip, chead, ctail, nxt, prv, fstack, nfree,
                    bits, ctr, rkind, rval, rdet, record):
        st = OK
        if evkind == 0:
            st, _ = measure_x(site, tag, zbit, rbit, cid, csize, csign,
                              cflip, chead, ctail, nxt, prv, fstack, nfree,
                              bits, ctr, rkind, rval, rdet, record)
        else:
            deg = neigh.shape[1]
            nminus = 0
            for a in range(deg):
                st, m = measure_bond(site, neigh[site, a], tag, zbit, rbit,
                                     cid, csize, csign, cflip, chead,
                                     ctail, nxt, prv, fstack, nfree, bits,
                                     ctr, rkind, rval, rdet, record)
                if st != OK:
                    break
                nminus += m
            if st == OK:
                if 2 * nminus > deg:
                    _apply_x(site, tag, zbit, rbit, cid, cflip, chead)
                elif 2 * nminus == deg:
                    st, coin = resolve(REC_COIN, 0, 0, bits, ctr, rkind,
                                       rval, rdet, record)
                    if st == OK and coin == 1:
                        _apply_x(site, tag, zbit, rbit, cid, cflip, chead)
        return st

    site_update = _jit(site_update, f"_site_update_{suffix}")

    def run_events(kinds_flat, order_flat, e0, e1, neigh, tag, zbit, rbit,
                   cid, csize, csign, cflip, chead, ctail, nxt, prv,
                   fstack, nfree, bits, ctr, rkind, rval, rdet, record):
        n = tag.size
        st = OK
        at = -1
        use_order = order_flat.size > 0
        for e in range(e0, e1):
            if use_order:
                site = order_flat[e]
            else:
                site = e % n
            st = site_update(site, kinds_flat[e], neigh, tag, zbit, rbit,
                             cid, csize, csign, cflip, chead, ctail, nxt,
                             prv, fstack, nfree, bits, ctr, rkind, rval,
                             rdet, record)
            if st != OK:
                at = e
                break
        return st, at

    run_events = _jit(run_events, f"run_events_{suffix}")
    return {
        "resolve": resolve,
        "measure_x": measure_x,
        "measure_bond": measure_bond,
        "site_update": site_update,
        "run_events": run_events,
    }


_LIVE = _build_kernels(replay=False)
_REPLAY = _build_kernels(replay=True)

run_events_live = _LIVE["run_events"]
run_events_replay = _REPLAY["run_events"]
measure_x_live = _LIVE["measure_x"]
measure_bond_live = _LIVE["measure_bond"]
site_update_live = _LIVE["site_update"]
