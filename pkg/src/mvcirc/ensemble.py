"""Trajectory-ensemble Monte Carlo harness.

Runs seeded independent trajectories over an (engine, dimension, L, p)
grid, reduces per-trajectory observables to means and standard errors, and
writes CSV + JSON-sidecar output.  Results are a pure function of the
RunConfig: every trajectory owns a counter-based stream keyed by
(engine, L, p-index, trajectory), and reduction happens in trajectory
order, so worker count and scheduling are invisible in the output.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import observables as obs
from .cluster import ClusterState
from .lattice import make_lattice, quarter_partition
from .mvc import run_mvc
from .percolation import percolation_observables, run_forest
from .schedule import RandomStream, generate_schedule

ENGINES = ("cluster", "mvc", "percolation")
_ENGINE_CODE = {name: k for k, name in enumerate(ENGINES)}

CLUSTER_COLUMNS = ("tripartite_info", "abs_U", "U_sign", "mag_per_site",
                   "abs_mag_per_site", "zz_half", "zz_half_sq",
                   "background_fraction")
MVC_COLUMNS = ("mag_per_site", "abs_mag_per_site", "zz_half", "zz_half_sq")
PERC_COLUMNS = ("has_background", "background_fraction",
                "largest_cluster_fraction", "n_clusters")

CSV_FIELDS = ("engine", "dimension", "L", "p", "sweeps", "n_traj",
              "observable", "mean", "stderr", "sampling_mode", "seed")


@dataclass(frozen=True)
class RunConfig:
    engine: str
    dimension: int
    sizes: tuple[int, ...]
    p_grid: tuple[float, ...]
    n_traj: int
    seed: int
    sweeps: int | None = None          # None -> 4 * L per size
    initial: str | None = None         # engine default when None
    sampling: str = "final"            # "final" or "timeavg"
    burn_in: int | None = None         # timeavg only; default 2 * L
    stride: int = 1
    site_order: str = "raster"
    workers: int = 0                   # 0 -> all available cores

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}")
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        if not self.sizes:
            raise ValueError("need at least one system size")
        if not self.p_grid:
            raise ValueError("need at least one p value")
        for p in self.p_grid:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"p={p} outside [0, 1]")
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")
        if self.sweeps is not None and self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.sampling not in ("final", "timeavg"):
            raise ValueError("sampling must be 'final' or 'timeavg'")

    def sweeps_for(self, L: int) -> int:
        return self.sweeps if self.sweeps is not None else 4 * L

    def initial_for_engine(self) -> str:
        if self.initial is not None:
            return self.initial
        return "up" if self.engine == "mvc" else "zero"

    def canonical_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass
class SweepRow:
    engine: str
    dimension: int
    L: int
    p: float
    sweeps: int
    n_traj: int
    observable: str
    mean: float
    stderr: float
    sampling_mode: str
    seed: int


@dataclass
class SweepResult:
    config: RunConfig
    rows: list[SweepRow]
    metadata: dict = field(default_factory=dict)

    def select(self, observable: str, L: int | None = None):
        """(p, mean, stderr) arrays for one observable, optionally one L."""
        rows = [r for r in self.rows if r.observable == observable
                and (L is None or r.L == L)]
        rows.sort(key=lambda r: (r.L, r.p))
        return (np.array([r.p for r in rows]),
                np.array([r.mean for r in rows]),
                np.array([r.stderr for r in rows]))

    def value(self, observable: str, L: int, p: float,
              tol: float = 1e-12) -> tuple[float, float]:
        for r in self.rows:
            if (r.observable == observable and r.L == L
                    and abs(r.p - p) < tol):
                return r.mean, r.stderr
        raise KeyError(f"no row for {observable} at L={L}, p={p}")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_FIELDS)
            for r in self.rows:
                w.writerow([r.engine, r.dimension, r.L, repr(r.p), r.sweeps,
                            r.n_traj, r.observable, repr(r.mean),
                            repr(r.stderr), r.sampling_mode, r.seed])

    def write(self, out_dir, stem: str = "sweep") -> tuple[str, str]:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, f"{stem}.csv")
        meta_path = os.path.join(out_dir, f"{stem}.meta.json")
        self.to_csv(csv_path)
        with open(meta_path, "w") as fh:
            json.dump(self.metadata, fh, indent=2, sort_keys=True)
        return csv_path, meta_path


def read_sweep_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"sweep CSV missing columns: {sorted(missing)}")
        out = []
        for rec in reader:
            rec["dimension"] = int(rec["dimension"])
            rec["L"] = int(rec["L"])
            rec["p"] = float(rec["p"])
            rec["sweeps"] = int(rec["sweeps"])
            rec["n_traj"] = int(rec["n_traj"])
            rec["mean"] = float(rec["mean"])
            rec["stderr"] = float(rec["stderr"])
            rec["seed"] = int(rec["seed"])
            out.append(rec)
        return out


# -- per-trajectory work ------------------------------------------------------

def _cluster_columns(dimension: int, L: int) -> tuple[str, ...]:
    if L % 4 == 0:
        return CLUSTER_COLUMNS
    return tuple(c for c in CLUSTER_COLUMNS if c != "tripartite_info")


def engine_columns(engine: str, dimension: int, L: int) -> tuple[str, ...]:
    if engine == "cluster":
        return _cluster_columns(dimension, L)
    if engine == "mvc":
        return MVC_COLUMNS
    return PERC_COLUMNS


def _sample_times(sweeps: int, sampling: str, burn_in: int | None,
                  stride: int, L: int) -> list[int]:
    if sampling == "final":
        return [sweeps]
    start = burn_in if burn_in is not None else min(2 * L, sweeps)
    times = list(range(max(start, 1), sweeps + 1, max(stride, 1)))
    return times or [sweeps]


def _run_chunk(payload) -> tuple[int, int, int, np.ndarray]:
    (engine, dimension, L, p_idx, p, sweeps, seed, t0, t1, initial,
     sampling, burn_in, stride, site_order) = payload
    lattice = make_lattice(dimension, L)
    partition = quarter_partition(lattice) if L % 4 == 0 else None
    columns = engine_columns(engine, dimension, L)
    times = _sample_times(sweeps, sampling, burn_in, stride, L)
    ecode = _ENGINE_CODE[engine]
    out = np.empty((t1 - t0, len(columns)))
    n = lattice.n_sites
    pair = obs.antipodal_pair(lattice)
    for t in range(t0, t1):
        stream = RandomStream(seed, key=(ecode, dimension, L, p_idx, t))
        if engine == "mvc":
            out[t - t0] = _mvc_trajectory(lattice, float(p), times, stream,
                                          initial, pair)
        elif engine == "cluster":
            schedule = generate_schedule(lattice, p, times[-1], stream,
                                         site_order=site_order)
            state = ClusterState(lattice, initial=initial)
            scratch: dict = {}
            acc = np.zeros(len(columns))
            prev = 0
            for tt in times:
                state.run(schedule, start_event=prev * n,
                          stop_event=tt * n, _scratch=scratch)
                prev = tt
                rec = obs.trajectory_observables(state, partition)
                acc += [rec[c] for c in columns]
            out[t - t0] = acc / len(times)
        else:  # percolation
            schedule = generate_schedule(lattice, p, times[-1], stream,
                                         site_order=site_order)
            forest = run_forest(schedule, initial=initial)
            rec = percolation_observables(forest)
            out[t - t0] = [float(rec[c]) for c in columns]
    return (L, p_idx, t0, out)


def _mvc_trajectory(lattice, p: float, times: list[int],
                    stream: RandomStream, initial: str,
                    pair: tuple[int, int]) -> np.ndarray:
    """One majority-vote trajectory sampled at the given sweep times."""
    from . import mvc as _mvc
    from .schedule import DOMAIN_DYNAMICS

    n = lattice.n_sites
    rng = stream.generator(DOMAIN_DYNAMICS)
    spins = _mvc.init_spins(lattice, initial, rng)
    total = times[-1]
    u = rng.random(total * n)
    ubits = rng.integers(0, 2, size=total * n, dtype=np.uint8)
    hist = np.empty(total, dtype=np.int64)
    i, j = pair
    acc = np.zeros(len(MVC_COLUMNS))
    prev = 0
    for tt in times:
        seg = tt - prev
        _mvc._run(spins, lattice.neighbors, 0, p, seg,
                  u[prev * n:tt * n], ubits[prev * n:tt * n],
                  hist[prev:tt])
        prev = tt
        m = hist[tt - 1] / n
        zz = int(spins[i]) * int(spins[j])
        acc += [m, abs(m), zz, zz * zz]
    return acc / len(times)


def _iter_payloads(config: RunConfig, chunk: int):
    initial = config.initial_for_engine()
    for L in config.sizes:
        sweeps = config.sweeps_for(L)
        for p_idx, p in enumerate(config.p_grid):
            for t0 in range(0, config.n_traj, chunk):
                t1 = min(t0 + chunk, config.n_traj)
                yield (config.engine, config.dimension, L, p_idx, float(p),
                       sweeps, config.seed, t0, t1, initial, config.sampling,
                       config.burn_in, config.stride, config.site_order)


def run_sweep(config: RunConfig) -> SweepResult:
    """Run the whole grid; deterministic for a fixed config."""
    workers = config.workers or os.cpu_count() or 1
    chunk = max(1, -(-config.n_traj // (workers * 4)))
    results: dict[tuple[int, int], np.ndarray] = {}
    for L in config.sizes:
        for p_idx in range(len(config.p_grid)):
            cols = engine_columns(config.engine, config.dimension, L)
            results[(L, p_idx)] = np.empty((config.n_traj, len(cols)))
    payloads = list(_iter_payloads(config, chunk))
    if workers == 1 or len(payloads) == 1:
        for L, p_idx, t0, arr in map(_run_chunk, payloads):
            results[(L, p_idx)][t0:t0 + arr.shape[0]] = arr
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for L, p_idx, t0, arr in pool.map(_run_chunk, payloads):
                results[(L, p_idx)][t0:t0 + arr.shape[0]] = arr
    rows = []
    for L in config.sizes:
        sweeps = config.sweeps_for(L)
        cols = engine_columns(config.engine, config.dimension, L)
        for p_idx, p in enumerate(config.p_grid):
            arr = results[(L, p_idx)]
            mean = arr.mean(axis=0)
            if config.n_traj > 1:
                stderr = arr.std(axis=0, ddof=1) / np.sqrt(config.n_traj)
            else:
                stderr = np.zeros(arr.shape[1])
            for k, name in enumerate(cols):
                rows.append(SweepRow(
                    engine=config.engine, dimension=config.dimension, L=L,
                    p=float(p), sweeps=sweeps, n_traj=config.n_traj,
                    observable=name, mean=float(mean[k]),
                    stderr=float(stderr[k]),
                    sampling_mode=config.sampling, seed=config.seed))
    metadata = {
        "config": config.canonical_dict(),
        "config_hash": config.config_hash(),
        "region_geometry": ("1d-arcs" if config.dimension == 1
                            else "2d-column-slabs"),
        "observable_columns": {
            str(L): list(engine_columns(config.engine, config.dimension, L))
            for L in config.sizes},
    }
    return SweepResult(config=config, rows=rows, metadata=metadata)


def convergence_check(config: RunConfig, multipliers=(1, 2, 4),
                      L: int | None = None,
                      p: float | None = None) -> dict:
    """Rerun one reference point with scaled sweep counts.

    Flags any observable whose mean moves by more than two combined
    standard errors between consecutive multipliers (a steady-state
    attainment check).
    """
    L = L if L is not None else max(config.sizes)
    p = p if p is not None else sorted(config.p_grid)[len(config.p_grid) // 2]
    base = config.sweeps_for(L)
    runs = {}
    for mult in multipliers:
        cfg = replace(config, sizes=(L,), p_grid=(p,),
                      sweeps=base * mult)
        runs[mult] = run_sweep(cfg)
    mults = sorted(multipliers)
    flagged = []
    table = {}
    for name in engine_columns(config.engine, config.dimension, L):
        vals = [runs[m].value(name, L, p) for m in mults]
        table[name] = {str(m): v for m, v in zip(mults, vals)}
        for (m1, (a, ae)), (m2, (b, be)) in zip(list(zip(mults, vals))[:-1],
                                                list(zip(mults, vals))[1:]):
            comb = float(np.hypot(ae, be))
            if abs(a - b) > 2 * comb and comb > 0:
                flagged.append({"observable": name, "from": m1, "to": m2,
                                "shift": a - b, "combined_stderr": comb})
    return {"L": L, "p": p, "multipliers": list(mults), "values": table,
            "flagged": flagged, "converged": not flagged}
