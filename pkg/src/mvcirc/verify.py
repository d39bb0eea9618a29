"""Cross-engine trajectory harness.

Records trajectories with the cluster engine, replays them through the
tableau oracle and the percolation forest, and demands exact agreement:
identical outcome tapes, identical background values / cluster patterns /
signs, identical observables, and a sign-blind partition match from
connectivity alone.  Any mismatch is an engine bug, not statistics.
"""

from __future__ import annotations

import numpy as np

from . import observables as obs
from .cluster import ClusterState
from .lattice import make_lattice, quarter_partition
from .percolation import (partition_matches_cluster_state,
                          percolation_observables, run_forest)
from .schedule import OutcomeTape, RandomStream, generate_schedule
from .tableau import Tableau


def tableau_observable_set(tab: Tableau, lattice, partition) -> dict:
    i, j = obs.antipodal_pair(lattice)
    u = tab.expectation_u()
    zz = tab.expectation_zz(i, j)
    mag = tab.magnetization()
    bg, _ = tab.extract_partition()
    n = lattice.n_sites
    out = {
        "abs_U": abs(u),
        "U_sign": u,
        "mag_per_site": mag / n,
        "abs_mag_per_site": abs(mag) / n,
        "zz_half": zz,
        "zz_half_sq": zz * zz,
        "background_fraction": len(bg) / n,
    }
    if partition is not None:
        a, b, c, _ = partition.masks
        out["tripartite_info"] = (
            tab.entropy(a) + tab.entropy(b) + tab.entropy(c)
            + tab.entropy(a | b | c) - tab.entropy(a | b)
            - tab.entropy(b | c) - tab.entropy(a | c))
    return out


def compare_trajectory(dimension: int, L: int, sweeps: int, p: float,
                       stream: RandomStream,
                       check_every_event: bool = False,
                       site_order: str = "raster",
                       initial: str = "zero") -> dict:
    """One recorded cluster trajectory vs tableau and percolation.

    Returns a report with per-check booleans; with check_every_event the
    tableau is compared after every single event (slow, test-scale only).
    """
    lattice = make_lattice(dimension, L)
    partition = quarter_partition(lattice) if L % 4 == 0 else None
    schedule = generate_schedule(lattice, p, sweeps, stream,
                                 site_order=site_order)
    n = lattice.n_sites

    state = ClusterState(lattice, initial=initial)
    tab = Tableau(n, initial=initial)

    if check_every_event:
        from .schedule import DOMAIN_DYNAMICS, TapeCursor
        bits = stream.bits(schedule.max_draws(), DOMAIN_DYNAMICS)
        cursor = TapeCursor(bits=bits, record=True)
        scratch: dict = {}
        for e, ev in enumerate(schedule.events()):
            state.run(schedule, bits=bits, start_event=e, stop_event=e + 1,
                      _scratch=scratch)
            tab.site_update(ev.site, ev.kind, lattice, cursor)
            state.check_consistency()
            if state.canonical() != tab.extract_partition():
                return {"p": p, "match_state": False, "failed_event": e,
                        "passed": False}
        tape = cursor.finish(schedule)
    else:
        tape = state.run(schedule, record=True)
        tab.run(schedule, tape=tape)

    state_match = state.canonical() == tab.extract_partition()
    obs_cluster = obs.trajectory_observables(state, partition)
    obs_tab = tableau_observable_set(tab, lattice, partition)
    obs_match = all(
        np.isclose(obs_cluster[k], obs_tab[k], rtol=0, atol=1e-12)
        for k in obs_cluster)

    forest = run_forest(schedule, initial=initial)
    perc_match = partition_matches_cluster_state(forest, state)
    perc = percolation_observables(forest)
    u_match = perc["has_background"] == (obs_cluster["abs_U"] == 0)

    # a second replay of the tape through a fresh cluster state must land
    # on the same state and reproduce the tape record for record
    state2 = ClusterState(lattice, initial=initial)
    state2.run(schedule, tape=tape)
    replay_match = state2.canonical() == state.canonical()

    return {
        "p": p,
        "match_state": bool(state_match),
        "match_observables": bool(obs_match),
        "match_percolation_partition": bool(perc_match),
        "match_background_flag": bool(u_match),
        "match_cluster_replay": bool(replay_match),
        "tape_records": len(tape),
        "passed": bool(state_match and obs_match and perc_match
                       and u_match and replay_match),
    }


def engine_equivalence(dimension: int, L: int, sweeps: int, n_tapes: int,
                       p_values, seed: int = 0,
                       check_every_event: bool = False,
                       initial: str = "zero") -> dict:
    """Run n_tapes trajectories cycling through p_values; zero mismatches
    allowed."""
    p_values = tuple(p_values)
    failures = []
    for t in range(n_tapes):
        p = p_values[t % len(p_values)]
        stream = RandomStream(seed, key=(dimension, L, t))
        rep = compare_trajectory(dimension, L, sweeps, p, stream,
                                 check_every_event=check_every_event,
                                 initial=initial)
        if not rep["passed"]:
            rep["tape_index"] = t
            failures.append(rep)
    return {
        "dimension": dimension,
        "L": L,
        "sweeps": sweeps,
        "n_tapes": n_tapes,
        "p_values": list(p_values),
        "initial": initial,
        "failures": failures,
        "passed": not failures,
    }


def replay_tape(tape: OutcomeTape, engine: str) -> dict:
    """Replay one recorded trajectory through the named engine."""
    schedule = tape.schedule
    if schedule is None:
        raise ValueError("tape has no schedule attached")
    lattice = schedule.lattice
    partition = quarter_partition(lattice) if lattice.L % 4 == 0 else None
    if engine == "cluster":
        state = ClusterState(lattice, initial="zero")
        state.run(schedule, tape=tape)
        rec = obs.trajectory_observables(state, partition)
        return {"engine": engine, "observables": rec}
    if engine == "tableau":
        tab = Tableau(lattice.n_sites, initial="zero")
        tab.run(schedule, tape=tape)
        return {"engine": engine,
                "observables": tableau_observable_set(tab, lattice,
                                                      partition)}
    if engine == "percolation":
        forest = run_forest(schedule)
        return {"engine": engine,
                "observables": percolation_observables(forest)}
    raise ValueError(f"unknown engine {engine!r}")
