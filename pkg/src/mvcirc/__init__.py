"""Monte Carlo suite for an adaptive monitored circuit.

Competing single-site X measurements and nearest-neighbor ZZ measurements
with majority-vote X feedback, on periodic chains and square tori.  Three
cross-validating trajectory engines (GHZ-cluster, stabilizer tableau,
space-time percolation), a dense channel-level oracle, the classical
majority-vote counterpart, and finite-size-scaling analysis tools.
"""

from .cluster import ClusterState, init_state
from .lattice import Lattice, RegionPartition, make_lattice, quarter_partition
from .schedule import (Event, OutcomeTape, RandomStream, ReplayMismatch,
                       Schedule, generate_schedule, read_tape, write_tape)
from .tableau import Tableau, init_tableau

__all__ = [
    "ClusterState", "Event", "Lattice", "OutcomeTape", "RandomStream",
    "RegionPartition", "ReplayMismatch", "Schedule", "Tableau",
    "generate_schedule", "init_state", "init_tableau", "make_lattice",
    "quarter_partition", "read_tape", "write_tape",
]

__version__ = "0.1.0"
