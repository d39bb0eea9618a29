import numpy as np
import pytest

from mvcirc.cluster import ClusterState
from mvcirc.dense import (cluster_state_vector, states_equal_up_to_phase,
                          x_op, zz_op)
from mvcirc.lattice import make_lattice
from mvcirc.observables import expectation_u, magnetization
from mvcirc.schedule import RandomStream, generate_schedule


def project(vec, op, m):
    out = ((np.eye(op.shape[0]) + m * op) / 2) @ vec
    return out / np.linalg.norm(out)


def test_init_states(ring8):
    lat = make_lattice(1, 4)
    zero = ClusterState(lat, "zero")
    assert zero.canonical() == (((0, 1), (1, 1), (2, 1), (3, 1)), ())
    plus = ClusterState(lat, "plus")
    bg, clusters = plus.canonical()
    assert bg == ()
    assert clusters == (((0,), (0,), 1), ((1,), (0,), 1),
                        ((2,), (0,), 1), ((3,), (0,), 1))
    assert expectation_u(plus) == 1


def test_measure_x_birth():
    lat = make_lattice(1, 4)
    st = ClusterState(lat, "zero")
    assert st.measure_x(0, forced=[+1]) == 1
    bg, cl = st.canonical()
    assert cl == (((0,), (0,), 1),)
    # dense check: |0> measured in X with outcome +1 gives |+>
    ref = ClusterState(lat, "zero")
    vec = project(cluster_state_vector(ref), x_op(4, 0), +1)
    assert states_equal_up_to_phase(vec, cluster_state_vector(st))


def test_measure_x_singleton_deterministic():
    lat = make_lattice(1, 4)
    st = ClusterState(lat, "zero")
    st.measure_x(0, forced=[-1])
    before = st.canonical()
    assert st.measure_x(0) == -1      # no randomness consumed
    assert st.canonical() == before


def test_split_sign_algebra_vs_dense_oracle():
    # 3-site cluster, sign +1; X on a member with forced outcome -1 must
    # leave singleton(-1) + 2-cluster with sign -1
    lat = make_lattice(1, 4)
    st = ClusterState(lat, "plus")
    st.measure_bond(0, 1, forced=[+1])
    st.measure_bond(1, 2, forced=[+1])
    (bg, cl) = st.canonical()
    assert cl == (((0, 1, 2), (0, 0, 0), 1), ((3,), (0,), 1))
    dense_before = cluster_state_vector(st)
    out = st.measure_x(1, forced=[-1])
    assert out == -1
    st.check_consistency()
    bg, cl = st.canonical()
    assert (((1,), (0,), -1) in cl)
    assert (((0, 2), (0, 0), -1) in cl)
    vec = project(dense_before, x_op(4, 1), -1)
    assert states_equal_up_to_phase(vec, cluster_state_vector(st))


@pytest.mark.parametrize("s1,s2,m", [(1, 1, 1), (1, -1, 1), (1, 1, -1),
                                     (-1, -1, -1)])
def test_merge_sign_vs_dense_oracle(s1, s2, m):
    lat = make_lattice(1, 4)
    st = ClusterState(lat, "zero")
    st.measure_x(0, forced=[s1])
    st.measure_x(1, forced=[s2])
    dense_before = cluster_state_vector(st)
    assert st.measure_bond(0, 1, forced=[m]) == m
    st.check_consistency()
    vec = project(dense_before, zz_op(4, 0, 1), m)
    assert states_equal_up_to_phase(vec, cluster_state_vector(st))
    # merged sign is the product of the signs
    bg, cl = st.canonical()
    pair = [c for c in cl if c[0] == (0, 1)][0]
    assert pair[2] == s1 * s2


def test_bell_from_two_plus_states():
    lat = make_lattice(1, 4)
    st = ClusterState(lat, "plus")
    st.measure_bond(0, 1, forced=[+1])
    bg, cl = st.canonical()
    assert (((0, 1), (0, 0), 1)) in cl


def test_death_values_match_spec_example():
    # background z=+1 next to a 2-cluster with pattern (0,0), outcome -1:
    # three background sites with z = (+1, -1, -1)
    lat = make_lattice(1, 4)
    st = ClusterState(lat, "zero")
    st.measure_x(1, forced=[+1])
    st.measure_x(2, forced=[+1])
    st.measure_bond(1, 2, forced=[+1])   # 2-cluster (1,2) pattern (0,0)
    dense_before = cluster_state_vector(st)
    assert st.measure_bond(0, 1, forced=[-1]) == -1
    st.check_consistency()
    bg, cl = st.canonical()
    assert cl == ()
    assert dict(bg)[0] == 1 and dict(bg)[1] == -1 and dict(bg)[2] == -1
    vec = project(dense_before, zz_op(4, 0, 1), -1)
    assert states_equal_up_to_phase(vec, cluster_state_vector(st))


def test_death_collapses_whole_cluster_at_distance():
    lat = make_lattice(1, 6)
    st = ClusterState(lat, "zero")
    for site in (1, 2, 3):
        st.measure_x(site, forced=[+1])
    st.measure_bond(1, 2, forced=[+1])
    st.measure_bond(2, 3, forced=[-1])  # pattern (0,0,1) on sites 1,2,3
    assert st.measure_bond(0, 1, forced=[+1]) == 1
    bg, cl = st.canonical()
    assert cl == ()
    z = dict(bg)
    # site 1 matches background z0=+1 via outcome +1; site 3 opposite parity
    assert (z[1], z[2], z[3]) == (1, 1, -1)


def test_same_cluster_bond_deterministic():
    lat = make_lattice(1, 4)
    st = ClusterState(lat, "plus")
    st.measure_bond(0, 1, forced=[-1])
    before = st.canonical()
    assert st.measure_bond(0, 1) == -1   # eigenstate, no randomness
    assert st.canonical() == before


def test_background_bond_deterministic():
    lat = make_lattice(1, 4)
    st = ClusterState(lat, "zero")
    st.apply_x_flip(1)
    assert st.measure_bond(0, 1) == -1
    assert st.measure_bond(1, 2) == -1
    assert st.measure_bond(2, 3) == 1


def test_apply_x_flip_cases():
    lat = make_lattice(1, 4)
    st = ClusterState(lat, "zero")
    st.apply_x_flip(0)
    assert st.background_z()[0] == -1
    # Bell pattern flip on the second site
    st2 = ClusterState(lat, "plus")
    st2.measure_bond(0, 1, forced=[+1])
    st2.apply_x_flip(1)
    bg, cl = st2.canonical()
    assert (((0, 1), (0, 1), 1)) in cl
    # flip of the representative re-gauges without changing the state
    st2.apply_x_flip(0)
    st2.check_consistency()
    bg, cl = st2.canonical()
    assert (((0, 1), (0, 0), 1)) in cl
    # singleton: state unchanged (global phase only)
    st3 = ClusterState(lat, "plus")
    before = st3.canonical()
    st3.apply_x_flip(2)
    assert st3.canonical() == before


def test_bond_errors():
    lat = make_lattice(1, 6)
    st = ClusterState(lat, "zero")
    with pytest.raises(ValueError):
        st.measure_bond(0, 0)
    with pytest.raises(ValueError):
        st.measure_bond(0, 2)


def test_site_update_feedback_1d():
    lat = make_lattice(1, 4)
    # both bonds -1 -> X applied deterministically (no coin consumed)
    st = ClusterState(lat, "zero")
    st.apply_x_flip(1)   # bonds (0,1) and (1,2) both -1 now
    st.site_update(1, 1, forced=[])
    assert magnetization(st) == 4
    # mixed outcomes -> coin decides
    st = ClusterState(lat, "zero")
    st.apply_x_flip(1)
    st.apply_x_flip(2)   # bond (0,1) = -1, bond (1,2) = +1
    st.site_update(1, 1, forced=[+1])  # coin bit 0 -> no flip
    assert st.background_z()[1] == -1
    st = ClusterState(lat, "zero")
    st.apply_x_flip(1)
    st.apply_x_flip(2)
    st.site_update(1, 1, forced=[-1])  # coin bit 1 -> flip
    assert st.background_z()[1] == 1


def test_1d_feedback_leaves_one_good_bond():
    # after any bond round + feedback, at least one adjacent bond is +1
    lat = make_lattice(1, 8)
    rng = np.random.default_rng(0)
    for trial in range(200):
        st = ClusterState(lat, "zero")
        for s in rng.integers(0, 8, size=6):
            st.apply_x_flip(int(s))
        site = int(rng.integers(0, 8))
        st.site_update(site, 1, rng=rng)
        left, right = (int(j) for j in lat.neighbors[site])
        vals = []
        for j in (left, right):
            cp = st.copy()
            vals.append(cp.measure_bond(site, j, forced=[+1, -1]))
        assert 1 in vals


def test_p1_fixed_point(ring8):
    sched = generate_schedule(ring8, 1.0, 8, RandomStream(3, (0,)))
    st = ClusterState(ring8, "zero")
    st.run(sched)
    assert magnetization(st) == 8
    assert st.canonical() == ClusterState(ring8, "zero").canonical()


def test_p0_all_singletons(ring8):
    sched = generate_schedule(ring8, 0.0, 3, RandomStream(4, (0,)))
    st = ClusterState(ring8, "zero")
    st.run(sched)
    bg, cl = st.canonical()
    assert bg == ()
    assert len(cl) == 8 and all(len(c[0]) == 1 for c in cl)
    assert abs(expectation_u(st)) == 1


def test_all_plus_symmetry_conserved_after_every_event(ring8):
    # no background ever appears and the sign product stays +1
    sched = generate_schedule(ring8, 0.6, 6, RandomStream(12, (0,)))
    st = ClusterState(ring8, "plus")
    scratch = {}
    for e in range(sched.n_events):
        st.run(sched, start_event=e, stop_event=e + 1, _scratch=scratch)
        assert expectation_u(st) == 1
    st.check_consistency()


def test_partition_integrity_along_trajectory(ring8):
    sched = generate_schedule(ring8, 0.5, 10, RandomStream(8, (0,)))
    st = ClusterState(ring8, "zero")
    scratch = {}
    for e in range(sched.n_events):
        st.run(sched, start_event=e, stop_event=e + 1, _scratch=scratch)
        st.check_consistency()


def test_gauge_invariance_of_canonical_form():
    lat = make_lattice(1, 4)
    st = ClusterState(lat, "plus")
    st.measure_bond(0, 1, forced=[-1])
    st.measure_bond(2, 3, forced=[+1])
    canon = st.canonical()
    # flipping all relative bits of a cluster is a gauge transformation
    slot = int(st.cid[0])
    st.cflip[slot] ^= 1
    st.rbit[0] ^= 1   # restore representative gauge by hand
    st.rbit[1] ^= 1
    assert st.canonical() == canon


def test_snapshot_json_roundtrip(ring8):
    sched = generate_schedule(ring8, 0.5, 10, RandomStream(17, (0,)))
    st = ClusterState(ring8, "zero")
    st.run(sched)
    back = ClusterState.from_json(st.to_json(), ring8)
    assert back.canonical() == st.canonical()


def test_cluster_size_bookkeeping(ring8):
    sched = generate_schedule(ring8, 0.5, 20, RandomStream(23, (0,)))
    st = ClusterState(ring8, "zero")
    st.run(sched)
    assert st.n_background() + int(st.csize.sum()) == ring8.n_sites
