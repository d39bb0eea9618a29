import numpy as np
import pytest

from mvcirc.cluster import ClusterState
from mvcirc.lattice import make_lattice, quarter_partition
from mvcirc.observables import (ensemble_reduce, entropy, expectation_u,
                                magnetization, spanning_cluster_count,
                                trajectory_observables,
                                tripartite_information, zz_correlator)


def synthetic_state(lattice, clusters, background_flips=()):
    """Build a ClusterState directly: clusters = [(sites, bits, sign)]."""
    import json

    member = {s for c in clusters for s in c[0]}
    doc = {
        "dimension": lattice.dimension, "L": lattice.L,
        "background": [[s, -1 if s in background_flips else 1]
                       for s in range(lattice.n_sites) if s not in member],
        "clusters": [[list(c[0]), list(c[1]), c[2]] for c in clusters],
    }
    return ClusterState.from_json(json.dumps(doc), lattice)


def test_entropy_background_zero(ring8):
    st = ClusterState(ring8, "zero")
    part = quarter_partition(ring8)
    for mask in part.masks:
        assert entropy(st, mask) == 0
    assert tripartite_information(st, part) == 0


def test_entropy_bell_across_cut(ring8):
    st = synthetic_state(ring8, [((3, 4), (0, 0), 1)])
    assert entropy(st, [0, 1, 2, 3]) == 1
    assert entropy(st, [3, 4]) == 0
    assert entropy(st, [4]) == 1


def test_tripartite_counting_rules(ring8):
    part = quarter_partition(ring8)  # regions of size 2
    # one cluster touching all four regions
    st = synthetic_state(ring8, [((0, 2, 4, 6), (0, 0, 0, 0), 1)])
    assert tripartite_information(st, part) == 1
    assert spanning_cluster_count(st, part) == 1
    # cluster touching only A, B, C
    st = synthetic_state(ring8, [((0, 2, 4), (0, 0, 0), 1)])
    assert tripartite_information(st, part) == 0
    # term-by-term: S_A..S_AC all equal 1 except S for regions containing
    # the cluster fully
    a, b, c, d = part.masks
    assert entropy(st, a) == 1 and entropy(st, b) == 1 and entropy(st, c) == 1
    assert entropy(st, a | b | c) == 0
    assert entropy(st, a | b) == 1 and entropy(st, b | c) == 1
    assert entropy(st, a | c) == 1
    # two spanning clusters count twice
    st = synthetic_state(ring8, [((0, 2, 4, 6), (0, 0, 0, 0), 1),
                                 ((1, 3, 5, 7), (0, 1, 0, 1), -1)])
    assert tripartite_information(st, part) == 2


def test_tripartite_equals_spanning_count_randomized():
    lat = make_lattice(1, 16)
    part = quarter_partition(lat)
    rng = np.random.default_rng(0)
    for _ in range(50):
        sites = list(rng.permutation(16))
        clusters = []
        pos = 0
        while pos < 16:
            size = int(rng.integers(1, 5))
            chunk = sorted(int(s) for s in sites[pos:pos + size])
            pos += size
            if rng.random() < 0.3:
                continue  # background the chunk instead
            bits = [0] + [int(b) for b in rng.integers(0, 2, len(chunk) - 1)]
            sign = int(1 - 2 * rng.integers(0, 2))
            clusters.append((tuple(chunk), tuple(bits), sign))
        st = synthetic_state(lat, clusters)
        assert tripartite_information(st, part) == \
            spanning_cluster_count(st, part)


def test_expectation_u_cases(ring8):
    assert expectation_u(ClusterState(ring8, "plus")) == 1
    assert expectation_u(ClusterState(ring8, "zero")) == 0
    st = synthetic_state(make_lattice(1, 4),
                         [((0, 1), (0, 0), 1), ((2, 3), (0, 0), -1)])
    assert expectation_u(st) == -1
    st2 = synthetic_state(make_lattice(1, 4), [((0, 1, 2, 3), (0,) * 4, -1)])
    assert expectation_u(st2) == -1


def test_magnetization_cases(ring8):
    assert magnetization(ClusterState(ring8, "zero")) == 8
    assert magnetization(ClusterState(ring8, "plus")) == 0
    st = synthetic_state(make_lattice(1, 4), [((3, 0), (0, 0), 1)],
                         background_flips=[2])
    # background sites 1, 2 with z = (+1, -1); cluster contributes 0
    assert magnetization(st) == 0
    st2 = synthetic_state(make_lattice(1, 6), [((4, 5), (0, 0), 1)],
                          background_flips=[2])
    assert magnetization(st2) == 2  # (+1 +1 -1 +1) background


def test_zz_correlator_cases(ring8):
    st = ClusterState(ring8, "zero")
    assert zz_correlator(st, 0, 4) == 1
    st.apply_x_flip(4)
    assert zz_correlator(st, 0, 4) == -1
    st2 = synthetic_state(ring8, [((0, 4), (0, 0), 1)])
    assert zz_correlator(st2, 0, 4) == 1
    st3 = synthetic_state(ring8, [((0, 4), (0, 1), 1)])
    assert zz_correlator(st3, 0, 4) == -1
    st4 = synthetic_state(ring8, [((0, 1), (0, 0), 1)])
    assert zz_correlator(st4, 0, 4) == 0  # cluster site x background


def test_trajectory_observables_consistency(ring8):
    part = quarter_partition(ring8)
    st = ClusterState(ring8, "zero")
    rec = trajectory_observables(st, part)
    assert rec["abs_U"] == 0 and rec["background_fraction"] == 1.0
    assert rec["mag_per_site"] == 1.0 and rec["zz_half"] == 1
    assert rec["tripartite_info"] == 0


def test_ensemble_reduce():
    records = [{"a": 1.0, "b": 2.0}] * 10
    red = ensemble_reduce(records)
    assert red["a"] == (1.0, 0.0)
    records = [{"a": float(v)} for v in (0, 1, 0, 1)]
    mean, err = ensemble_reduce(records)["a"]
    assert mean == 0.5
    assert err == pytest.approx(np.std([0, 1, 0, 1], ddof=1) / 2)
    with pytest.raises(ValueError):
        ensemble_reduce([])
