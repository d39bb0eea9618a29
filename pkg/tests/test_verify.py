import numpy as np
import pytest

from mvcirc.cluster import ClusterState
from mvcirc.lattice import make_lattice
from mvcirc.schedule import (OutcomeTape, RandomStream, ReplayMismatch,
                             generate_schedule)
from mvcirc.tableau import Tableau
from mvcirc.verify import (compare_trajectory, engine_equivalence,
                           replay_tape)


def test_single_trajectory_every_event():
    rep = compare_trajectory(1, 8, 8, 0.5, RandomStream(1, (0,)),
                             check_every_event=True)
    assert rep["passed"]


def test_equivalence_batches():
    r1 = engine_equivalence(1, 12, 12, 30, [0.2, 0.4, 0.6, 0.8], seed=2)
    assert r1["passed"], r1["failures"][:1]
    r2 = engine_equivalence(2, 4, 8, 30, [0.2, 0.5, 0.8], seed=3)
    assert r2["passed"], r2["failures"][:1]


def test_equivalence_plus_initial():
    rep = engine_equivalence(1, 8, 8, 20, [0.3, 0.7], seed=4,
                             initial="plus")
    assert rep["passed"]


def test_tampered_tape_detected():
    lat = make_lattice(1, 8)
    sched = generate_schedule(lat, 0.5, 8, RandomStream(5, (0,)))
    st = ClusterState(lat, "zero")
    tape = st.run(sched, record=True)
    # flip a deterministic record's value: replay must fail loudly
    det = np.nonzero(tape.rec_det == 1)[0]
    if det.size == 0:
        pytest.skip("tape had no deterministic records")
    bad = OutcomeTape(tape.rec_kind.copy(), tape.rec_val.copy(),
                      tape.rec_det.copy(), schedule=sched)
    bad.rec_val[det[0]] ^= 1
    tab = Tableau(8, "zero")
    with pytest.raises(ReplayMismatch):
        tab.run(sched, tape=bad)
    st2 = ClusterState(lat, "zero")
    with pytest.raises(ReplayMismatch):
        st2.run(sched, tape=bad)


def test_truncated_tape_detected():
    lat = make_lattice(1, 8)
    sched = generate_schedule(lat, 0.5, 8, RandomStream(6, (0,)))
    st = ClusterState(lat, "zero")
    tape = st.run(sched, record=True)
    short = OutcomeTape(tape.rec_kind[:-4], tape.rec_val[:-4],
                        tape.rec_det[:-4], schedule=sched)
    st2 = ClusterState(lat, "zero")
    with pytest.raises(ReplayMismatch):
        st2.run(sched, tape=short)


def test_replay_tape_through_engines():
    lat = make_lattice(1, 8)
    sched = generate_schedule(lat, 0.5, 8, RandomStream(7, (0,)))
    st = ClusterState(lat, "zero")
    tape = st.run(sched, record=True)
    rc = replay_tape(tape, "cluster")
    rt = replay_tape(tape, "tableau")
    rp = replay_tape(tape, "percolation")
    for key in ("abs_U", "mag_per_site", "zz_half", "background_fraction"):
        assert rc["observables"][key] == rt["observables"][key]
    assert rp["observables"]["has_background"] == \
        (rc["observables"]["abs_U"] == 0)
    with pytest.raises(ValueError):
        replay_tape(tape, "dense")
