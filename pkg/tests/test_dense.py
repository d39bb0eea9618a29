import numpy as np
import pytest

from mvcirc.dense import (all_zero_rho, basis_ket, channel_d, channel_f,
                          channel_t, channel_x, check_density,
                          cluster_state_vector, incident_bonds,
                          kraus_completeness_defect, kraus_f,
                          random_density_matrix, ring_bonds, trace_norm,
                          verify_reduction, verify_relations, x_op, z_op)
from mvcirc.lattice import make_lattice
from mvcirc.schedule import RandomStream, Schedule, generate_schedule


def rho_of(vec):
    return np.outer(vec, vec.conj())


def test_channel_x_examples():
    rho = rho_of(basis_ket(1, [0]))
    out = channel_x(rho, 0)
    assert np.allclose(out, np.eye(2) / 2)
    plus = np.array([1, 1]) / np.sqrt(2)
    assert np.allclose(channel_x(rho_of(plus), 0), rho_of(plus))


def test_channel_t_examples():
    rho = rho_of(basis_ket(1, [1]))
    assert np.allclose(channel_t(rho, 0), np.eye(2) / 2)
    rng = np.random.default_rng(0)
    for _ in range(10):
        rho = random_density_matrix(2, rng)
        once = channel_t(rho, 0)
        assert np.allclose(channel_t(once, 0), once)          # idempotent
        ab = channel_t(channel_t(rho, 0), 1)
        ba = channel_t(channel_t(rho, 1), 0)
        assert np.allclose(ab, ba)                            # commuting


def test_channel_d_examples():
    plus = np.array([1, 1]) / np.sqrt(2)
    assert np.allclose(channel_d(rho_of(plus)), np.eye(2) / 2)
    rng = np.random.default_rng(1)
    for _ in range(10):
        rho = random_density_matrix(3, rng)
        out = channel_d(rho)
        assert np.allclose(out, np.diag(np.diag(out)))
        assert np.allclose(channel_d(out), out)
        diag = np.diag(np.diag(rho))
        assert np.allclose(channel_d(diag), diag)


def test_channel_f_fixed_point_and_correction():
    # all-zero ring: every outcome +1, nothing happens
    rho = all_zero_rho(4)
    bonds = ring_bonds(4)
    for i in range(4):
        assert np.allclose(channel_f(rho, i, bonds), rho)
    # |0100>: both bonds at site 1 read -1, deterministic X correction
    rho = rho_of(basis_ket(4, [0, 1, 0, 0]))
    out = channel_f(rho, 1, bonds)
    assert np.allclose(out, all_zero_rho(4))
    # |0110> at site 1: one bond -1, one +1 -> tie, half-half flip
    rho = rho_of(basis_ket(4, [0, 1, 1, 0]))
    out = channel_f(rho, 1, bonds)
    expect = (rho_of(basis_ket(4, [0, 1, 1, 0]))
              + rho_of(basis_ket(4, [0, 0, 1, 0]))) / 2
    assert np.allclose(out, expect)


def test_channels_trace_preserving_and_kraus_complete():
    rng = np.random.default_rng(2)
    bonds = ring_bonds(4)
    for _ in range(25):
        rho = random_density_matrix(4, rng, rank=3)
        for ch in (lambda r: channel_x(r, 2), lambda r: channel_t(r, 1),
                   channel_d, lambda r: channel_f(r, 0, bonds)):
            out = ch(rho)
            assert abs(np.trace(out).real - 1) < 1e-12
            check_density(out)
    for n in (2, 4, 5):
        for i in range(n):
            ops = kraus_f(n, i, ring_bonds(n))
            assert kraus_completeness_defect(ops) < 1e-12


def test_incident_bonds_degenerate_rings():
    assert ring_bonds(1) == []
    assert ring_bonds(2) == [(0, 1)]
    assert incident_bonds(ring_bonds(4), 0) == [(0, 1), (3, 0)]
    # no incident bonds: feedback round is the identity channel
    rng = np.random.default_rng(3)
    rho = random_density_matrix(1, rng)
    assert np.allclose(channel_f(rho, 0, ring_bonds(1)), rho)


def test_relations_on_special_states():
    # single qubit: both orders send everything to the maximally mixed bit
    rng = np.random.default_rng(4)
    for _ in range(20):
        rho = random_density_matrix(1, rng)
        a = channel_x(channel_d(rho), 0)
        b = channel_d(channel_t(rho, 0))
        assert trace_norm(a - np.eye(2) / 2) < 1e-12
        assert trace_norm(a - b) < 1e-12
    # pure product inputs on two qubits
    for bits in ([0, 0], [0, 1], [1, 0], [1, 1]):
        rho = rho_of(basis_ket(2, bits))
        for i in range(2):
            a = channel_x(channel_d(rho), i)
            b = channel_d(channel_t(rho, i))
            assert trace_norm(a - b) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 4])
def test_verify_relations(n):
    rep = verify_relations(n, trials=40, seed=5)
    assert rep["passed"]
    assert rep["max_dev_xd_dt"] < 1e-10
    assert rep["max_dev_df_fd"] < 1e-10


def test_reduction_p1_fixed_point():
    rep = verify_reduction(4, 1.0, sweeps=3, n_schedules=5, seed=6)
    assert rep["passed"]
    # both chains stay at the all-zero state for p=1
    lat = make_lattice(1, 4)
    sched = generate_schedule(lat, 1.0, 3, RandomStream(0, (0,)))
    from mvcirc.dense import evolve_schedule
    rho = evolve_schedule(all_zero_rho(4), sched, classical=False)
    assert trace_norm(rho - all_zero_rho(4)) < 1e-12


@pytest.mark.parametrize("p", [0.2, 0.5, 0.8])
def test_reduction_small(p):
    rep = verify_reduction(4, p, sweeps=4, n_schedules=15, seed=7)
    assert rep["passed"]
    assert rep["max_trace_distance"] < 1e-9


def test_cluster_state_vector_normalization():
    lat = make_lattice(1, 4)
    from mvcirc.cluster import ClusterState
    st = ClusterState(lat, "plus")
    st.measure_bond(0, 1, forced=[-1])
    vec = cluster_state_vector(st)
    assert abs(np.linalg.norm(vec) - 1) < 1e-12
    # explicit amplitudes: (|00> - |11>)/sqrt(2) on sites (0,1), |+>|+> rest
    z = z_op(4, 0) @ z_op(4, 1)
    assert np.real(vec.conj() @ z @ vec) == pytest.approx(-1.0)
