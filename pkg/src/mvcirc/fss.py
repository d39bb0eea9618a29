"""Finite-size scaling: crossing points and data collapse.

The collapse objective rescales every point to
x = (p - p_c) L^(1/nu), y' = y L^(beta/nu), then measures how far each
point sits from a local-linear master curve fit through its nearest
neighbors from the *other* system sizes (weighted by variances).  A value
near 1 means the scatter is explained by the error bars.  beta = 0 is the
dimensionless-observable branch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import brentq, minimize

MIN_BOOTSTRAP = 200


@dataclass(frozen=True)
class ScalingCurve:
    """Observable means vs p for one system size."""

    L: int
    p: np.ndarray
    y: np.ndarray
    yerr: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.size < 2 or (np.diff(p) <= 0).any():
            raise ValueError("p grid must be strictly increasing")
        if not (np.asarray(self.yerr) > 0).all():
            raise ValueError("fitted points need positive stderr")
        if not (p.size == len(self.y) == len(self.yerr)):
            raise ValueError("p, y, yerr lengths differ")

    def resampled(self, rng: np.random.Generator) -> "ScalingCurve":
        return ScalingCurve(self.L, self.p,
                            self.y + rng.normal(size=self.y.size) * self.yerr,
                            self.yerr)


def curves_from_rows(rows: list[dict], observable: str) -> list[ScalingCurve]:
    """Group sweep-CSV rows (see ensemble.read_sweep_csv) into curves."""
    sizes = sorted({r["L"] for r in rows if r["observable"] == observable})
    curves = []
    for L in sizes:
        sel = sorted((r["p"], r["mean"], r["stderr"]) for r in rows
                     if r["observable"] == observable and r["L"] == L)
        p, y, err = (np.array(v) for v in zip(*sel))
        err = np.where(err > 0, err, max(err.max(), 1e-12) * 1e-3 + 1e-15)
        curves.append(ScalingCurve(L, p, y, err))
    if not curves:
        raise ValueError(f"no rows for observable {observable!r}")
    return curves


# -- crossing finder ----------------------------------------------------------

@dataclass
class CrossingResult:
    p_c: float
    error: float
    pair_crossings: dict[tuple[int, int], float]
    spread: float


def _common_grid(c1: ScalingCurve, c2: ScalingCurve):
    common, i1, i2 = np.intersect1d(np.round(c1.p, 12), np.round(c2.p, 12),
                                    return_indices=True)
    if common.size < 2:
        raise ValueError(f"curves L={c1.L}, L={c2.L} share too few p points")
    return common, i1, i2


def _pair_crossing(p, d, derr):
    """Most significant sign change of the difference d(p), or None."""
    best = None
    best_score = 0.0
    for t in range(p.size - 1):
        if d[t] == 0.0 and d[t + 1] == 0.0:
            continue
        if d[t] * d[t + 1] < 0 or (d[t] == 0.0 and t > 0
                                   and d[t - 1] * d[t + 1] < 0):
            sig = max(derr[t], derr[t + 1], 1e-300)
            score = abs(d[t] - d[t + 1]) / sig
            if score > best_score:
                best_score = score
                best = t
    if best is None:
        return None
    lo = max(0, best - 1)
    hi = min(p.size, best + 3)
    deg = min(3, hi - lo - 1)
    coeffs = np.polyfit(p[lo:hi], d[lo:hi], deg)
    poly = np.poly1d(coeffs)
    a, b = p[best], p[best + 1]
    fa, fb = poly(a), poly(b)
    if fa == 0.0:
        return float(a)
    if fb == 0.0:
        return float(b)
    if fa * fb < 0:
        return float(brentq(poly, a, b))
    # the local fit smoothed the sign change away; fall back to linear
    return float(a + (b - a) * d[best] / (d[best] - d[best + 1]))


def find_crossing(curves: list[ScalingCurve], n_boot: int = MIN_BOOTSTRAP,
                  seed: int = 0) -> CrossingResult:
    """Aggregate pairwise curve crossings into one estimate with error.

    The error combines the spread of the pairwise crossings with a
    bootstrap over the observable noise.  Raises when some pair never
    changes sign inside the window (including identical curves).
    """
    if len(curves) < 2:
        raise ValueError("need at least two system sizes")
    pairs = [(i, j) for i in range(len(curves))
             for j in range(i + 1, len(curves))]

    def crossings(cs):
        vals = {}
        for i, j in pairs:
            p, i1, i2 = _common_grid(cs[i], cs[j])
            d = cs[i].y[i1] - cs[j].y[i2]
            derr = np.hypot(cs[i].yerr[i1], cs[j].yerr[i2])
            pc = _pair_crossing(p, d, derr)
            if pc is not None:
                vals[(cs[i].L, cs[j].L)] = pc
        return vals

    base = crossings(curves)
    if len(base) < len(pairs):
        missing = [f"L={curves[i].L}/L={curves[j].L}" for i, j in pairs
                   if (curves[i].L, curves[j].L) not in base]
        raise ValueError("no crossing in window for " + ", ".join(missing))
    center = float(np.mean(list(base.values())))
    spread = float(np.std(list(base.values())))
    rng = np.random.default_rng(seed)
    boot = []
    for _ in range(n_boot):
        cs = [c.resampled(rng) for c in curves]
        vals = crossings(cs)
        if vals:
            boot.append(np.mean(list(vals.values())))
    error = float(np.std(boot)) if boot else float("nan")
    return CrossingResult(p_c=center, error=max(error, spread / 2),
                          pair_crossings=base, spread=spread)


# -- collapse quality ---------------------------------------------------------

@njit(cache=True)
def _quality_raw(p, y, err, Lvals, cid, p_c, nu, beta, k):
    """Rescale, sort, and evaluate the collapse objective in one pass."""
    n = p.size
    x = np.empty(n)
    yy = np.empty(n)
    var = np.empty(n)
    for i in range(n):
        s = Lvals[i] ** (beta / nu)
        x[i] = (p[i] - p_c) * Lvals[i] ** (1.0 / nu)
        yy[i] = y[i] * s
        var[i] = (err[i] * s) ** 2
    order = np.argsort(x)
    return _quality_kernel(x[order], yy[order], var[order], cid[order], k)


@njit(cache=True)
def _quality_kernel(x, y, var, cid, k):
    """Houdayer-Hartmann style objective on points sorted by x.

    For each point, weighted-linear-fit through up to k nearest points per
    side drawn from other curves, then the variance-normalized squared
    residual.  Points without neighbors on both sides are skipped.
    """
    n = x.size
    total = 0.0
    cnt = 0
    for i in range(n):
        sw = 0.0
        swx = 0.0
        swy = 0.0
        swxx = 0.0
        swxy = 0.0
        npts = 0
        nl = 0
        j = i - 1
        while j >= 0 and nl < k:
            if cid[j] != cid[i]:
                w = 1.0 / var[j]
                sw += w
                swx += w * x[j]
                swy += w * y[j]
                swxx += w * x[j] * x[j]
                swxy += w * x[j] * y[j]
                nl += 1
                npts += 1
            j -= 1
        nr = 0
        j = i + 1
        while j < n and nr < k:
            if cid[j] != cid[i]:
                w = 1.0 / var[j]
                sw += w
                swx += w * x[j]
                swy += w * y[j]
                swxx += w * x[j] * x[j]
                swxy += w * x[j] * y[j]
                nr += 1
                npts += 1
            j += 1
        if nl == 0 or nr == 0:
            continue
        delta = sw * swxx - swx * swx
        if npts >= 2 and delta > 1e-12 * sw * swxx:
            a = (swxx * swy - swx * swxy) / delta
            b = (sw * swxy - swx * swy) / delta
            yhat = a + b * x[i]
            varhat = (swxx + x[i] * x[i] * sw - 2.0 * x[i] * swx) / delta
        else:
            yhat = swy / sw
            varhat = 1.0 / sw
        r = y[i] - yhat
        total += r * r / (var[i] + varhat)
        cnt += 1
    return total, cnt


def _pack(curves):
    p = np.concatenate([c.p for c in curves]).astype(float)
    y = np.concatenate([c.y for c in curves]).astype(float)
    err = np.concatenate([c.yerr for c in curves]).astype(float)
    Lvals = np.concatenate([np.full(c.p.size, float(c.L)) for c in curves])
    cid = np.concatenate([np.full(c.p.size, c.L, dtype=np.int64)
                          for c in curves])
    return p, y, err, Lvals, cid


def _rescale(curves, p_c, nu, beta):
    p, y, err, Lvals, cid = _pack(curves)
    scale = Lvals ** (beta / nu)
    x = (p - p_c) * Lvals ** (1.0 / nu)
    order = np.argsort(x, kind="stable")
    return (x[order], (y * scale)[order], ((err * scale) ** 2)[order],
            cid[order])


def collapse_quality(curves: list[ScalingCurve], p_c: float, nu: float,
                     beta: float = 0.0, k: int = 3) -> float:
    """Mean variance-normalized deviation from the local master curve."""
    if len(curves) < 2:
        raise ValueError("collapse needs at least two system sizes")
    if nu <= 0:
        raise ValueError("nu must be positive")
    packed = _pack(curves)
    total, cnt = _quality_raw(*packed, p_c, nu, beta, k)
    if cnt == 0:
        raise ValueError("rescaled curves do not overlap")
    return total / cnt


# -- collapse optimizer -------------------------------------------------------

@dataclass
class CollapseResult:
    p_c: float
    nu: float
    beta: float
    quality: float
    ci: dict[str, tuple[float, float]]
    n_boot: int
    converged: bool
    fixed: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "p_c": self.p_c, "nu": self.nu, "beta": self.beta,
            "quality": self.quality,
            "ci": {k: list(v) for k, v in self.ci.items()},
            "n_boot": self.n_boot, "converged": self.converged,
            "fixed": self.fixed,
        }


DEFAULT_BOUNDS = {"p_c": (0.0, 1.0), "nu": (0.3, 4.0), "beta": (0.0, 1.0)}


def optimize_collapse(curves: list[ScalingCurve],
                      bounds: dict | None = None,
                      fix_nu: float | None = None,
                      fix_beta: float | None = 0.0,
                      n_boot: int = MIN_BOOTSTRAP,
                      seed: int = 0,
                      ci_level: float = 0.99,
                      grid_points: int = 12, k: int = 3,
                      n_starts: int = 6) -> CollapseResult:
    """Coarse grid then multistart simplex refinement, with bootstrap CIs.

    fix_beta defaults to 0 (dimensionless observables); pass None to fit
    it.  The objective is only piecewise smooth (neighbor windows change
    discretely), so each refinement runs the simplex from several jittered
    starts and keeps the best; a single warm start systematically
    under-disperses the bootstrap.  The bootstrap resamples the observable
    means within their quoted errors (it does not re-run the simulation)
    and the reported intervals are percentile intervals at ci_level.
    """
    if n_boot < MIN_BOOTSTRAP:
        raise ValueError(f"need at least {MIN_BOOTSTRAP} bootstrap resamples")
    if len(curves) < 2:
        raise ValueError("collapse needs at least two system sizes")
    bnds = dict(DEFAULT_BOUNDS)
    if bounds:
        bnds.update(bounds)
    names = ["p_c"]
    if fix_nu is None:
        names.append("nu")
    if fix_beta is None:
        names.append("beta")
    fixed = {}
    if fix_nu is not None:
        fixed["nu"] = fix_nu
    if fix_beta is not None:
        fixed["beta"] = fix_beta
    p_all, y_all, err_all, L_all, cid_all = _pack(curves)
    scales = np.array([0.02 * (bnds[n][1] - bnds[n][0]) for n in names])

    def unpack(vec):
        d = dict(zip(names, vec))
        return (d["p_c"], d.get("nu", fix_nu), d.get("beta", fix_beta))

    def objective(vec, y_vec):
        for name, v in zip(names, vec):
            lo, hi = bnds[name]
            if not lo <= v <= hi:
                return 1e12
        p_c, nu, beta = unpack(vec)
        if nu <= 0:
            return 1e12
        total, cnt = _quality_raw(p_all, y_vec, err_all, L_all, cid_all,
                                  p_c, nu, beta, k)
        if cnt == 0:
            return 1e12
        return total / cnt

    def refine(starts, y_vec):
        best_x, best_f = None, np.inf
        for x0 in starts:
            res = minimize(objective, x0, args=(y_vec,),
                           method="Nelder-Mead",
                           options={"xatol": 1e-6, "fatol": 1e-9,
                                    "maxiter": 300 * len(names)})
            if res.fun < best_f:
                best_f, best_x = res.fun, res.x
        return best_x, best_f

    # seed from a coarse grid over the bounds
    axes = [np.linspace(bnds[n][0] + 1e-9, bnds[n][1] - 1e-9, grid_points)
            for n in names]
    mesh = np.meshgrid(*axes, indexing="ij")
    best_vec, best_val = None, np.inf
    for vec in zip(*(m.ravel() for m in mesh)):
        val = objective(np.asarray(vec), y_all)
        if val < best_val:
            best_val, best_vec = val, np.asarray(vec)
    if not np.isfinite(best_val) or best_val >= 1e12:
        raise ValueError("no parameter point in bounds gives an "
                         "overlapping collapse")

    rng = np.random.default_rng(seed)
    starts = [best_vec] + [best_vec + rng.normal(size=len(names)) * scales
                           for _ in range(n_starts - 1)]
    opt_vec, opt_val = refine(starts, y_all)
    p_c, nu, beta = unpack(opt_vec)

    converged = True
    for name, v in zip(names, opt_vec):
        lo, hi = bnds[name]
        margin = 0.01 * (hi - lo)
        if v < lo + margin or v > hi - margin:
            converged = False

    samples = {name: [] for name in names}
    for _ in range(n_boot):
        y_res = y_all + rng.normal(size=y_all.size) * err_all
        starts = [opt_vec] + [opt_vec + rng.normal(size=len(names)) * scales
                              for _ in range(n_starts - 1)]
        vec, _ = refine(starts, y_res)
        for name, v in zip(names, vec):
            samples[name].append(float(v))
    alpha = (1.0 - ci_level) / 2
    ci = {}
    for name in names:
        arr = np.asarray(samples[name])
        ci[name] = (float(np.quantile(arr, alpha)),
                    float(np.quantile(arr, 1 - alpha)))
    return CollapseResult(p_c=float(p_c), nu=float(nu), beta=float(beta),
                          quality=float(opt_val), ci=ci, n_boot=n_boot,
                          converged=converged, fixed=fixed)


def rescaled_points(curves: list[ScalingCurve], p_c: float, nu: float,
                    beta: float = 0.0) -> np.ndarray:
    """Plot-ready (L, x, y, yerr) rows of the rescaled data."""
    x, y, var, cid = _rescale(curves, p_c, nu, beta)
    return np.column_stack([cid.astype(float), x, y, np.sqrt(var)])


# -- synthetic scaling data (self-test oracle) --------------------------------

def synthetic_curves(p_c: float, nu: float, beta: float, sizes,
                     p_grid, noise: float, seed: int = 0,
                     shape: str = "peak") -> list[ScalingCurve]:
    """Curves drawn exactly from a scaling form, plus Gaussian noise.

    shape 'peak': asymmetric bump (dimensionless-observable flavor);
    shape 'step': smooth step rising with p (order-parameter flavor,
    combined with the L^(-beta/nu) amplitude).
    """
    rng = np.random.default_rng(seed)
    p = np.asarray(p_grid, dtype=float)
    curves = []
    for L in sizes:
        u = (p - p_c) * float(L) ** (1.0 / nu)
        if shape == "peak":
            # shifted bump: nonzero slope at u=0 so curves cross
            # transversally at p_c, like the spanning-cluster count
            f = 1.0 / (1.0 + (u + 0.4) ** 2)
        elif shape == "step":
            f = np.log1p(np.exp(u)) ** max(beta, 1e-9) if beta > 0 \
                else 1.0 / (1.0 + np.exp(-u))
        else:
            raise ValueError("shape must be 'peak' or 'step'")
        y = float(L) ** (-beta / nu) * f
        err = np.full(p.size, noise)
        y = y + rng.normal(size=p.size) * err
        curves.append(ScalingCurve(int(L), p, y, err))
    return curves
