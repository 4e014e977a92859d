"""Confronting sampled interfaces with the variational predictions.

A census classifies each sampled field's contours, names the largest loop
gamma0 and the runner-up gamma1, and issues a verdict: flat, one-monolayer,
two-monolayer, or other. Shape agreement is measured by the translation
optimized Hausdorff distance between gamma0 and the predicted optimal loop.
The sweep experiment drives replicate chains over a supersaturation grid and
tabulates verdict fractions against the phase-diagram prediction.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field

import numpy as np
from scipy.spatial.distance import cdist

from .config import thread_cap
from .contours import OrientedContour, extract_contours
from .lattice import HeightField, LatticeGeometry
from .measure import PhaseParams
from .phase import LAMBDA_C, minimize_free_energy
from .sampler import ChainConfig, EnsembleSpec, classify_contours, run_chain
from .wulff import WulffShape, restricted_cost

VERDICTS = ("flat", "one-monolayer", "two-monolayer", "other")


@dataclass(frozen=True)
class MonolayerReport:
    """Contour census of one sampled interface."""

    sample_id: int
    verdict: str
    epsilon: float
    counts: dict
    n_contours: int
    nesting_depth: int
    gamma0_sign: int        # 0 when no large contour exists
    gamma0_length: int
    gamma0_alpha: int
    gamma1_sign: int
    gamma1_length: int
    gamma1_alpha: int
    height_histogram: np.ndarray
    gamma0_bound: bool | None


def _order_key(c: OrientedContour):
    # permutation-invariant total order: area, then length, then geometry
    return (-c.interior_area, -c.length, c.canonical_key())


def _nesting_depth(large: list) -> int:
    """Longest containment chain among the large contours."""
    if not large:
        return 0
    cells = [c.interior_cells for c in large]
    order = sorted(range(len(large)), key=lambda i: len(cells[i]))
    depth = {}
    best = 1
    for i in order:
        depth[i] = 1
        for j in order:
            if j == i or len(cells[j]) > len(cells[i]):
                continue
            if j in depth and cells[j] < cells[i]:
                depth[i] = max(depth[i], depth[j] + 1)
        best = max(best, depth[i])
    return best


def monolayer_census(field: HeightField, geometry: LatticeGeometry,
                     epsilon: float = 1.0, params: PhaseParams | None = None,
                     delta: float | None = None,
                     sample_id: int = 0) -> MonolayerReport:
    """Classify contours, identify gamma0/gamma1, and issue a verdict.

    With params and delta given, the report also records whether gamma0
    clears the predicted volume floor (2 delta / (3 psv)) N^2.
    """
    family = extract_contours(field)
    classes = classify_contours(family, geometry, epsilon)
    counts = {k: len(classes[k]) for k in ("small", "intermediate", "large")}
    large = sorted(classes["large"], key=_order_key)

    g0 = large[0] if large else None
    g1 = large[1] if len(large) > 1 else None
    depth = _nesting_depth(large)

    if not large:
        verdict = "flat"
    elif len(large) == 1 and g0.sign == 1:
        verdict = "one-monolayer"
    elif (len(large) == 2 and g0.sign == 1 and g1.sign == 1
            and g1.interior_cells < g0.interior_cells):
        verdict = "two-monolayer"
    else:
        verdict = "other"

    bound = None
    if g0 is not None and params is not None and delta is not None:
        floor = 2.0 * delta * geometry.N ** 2 / (3.0 * params.psv)
        bound = bool(g0.signed_volume > floor)

    hmax = geometry.hmax
    inner = field.interior().ravel()
    hist = np.bincount(inner + hmax, minlength=2 * hmax + 1)

    def stats(c):
        return (c.sign, c.length, c.signed_volume) if c is not None else (0, 0, 0)

    s0 = stats(g0)
    s1 = stats(g1)
    return MonolayerReport(
        sample_id=sample_id, verdict=verdict, epsilon=epsilon, counts=counts,
        n_contours=len(family), nesting_depth=depth,
        gamma0_sign=s0[0], gamma0_length=s0[1], gamma0_alpha=s0[2],
        gamma1_sign=s1[0], gamma1_length=s1[1], gamma1_alpha=s1[2],
        height_histogram=hist, gamma0_bound=bound)


def _densify(polygon: np.ndarray, step: float = 0.5) -> np.ndarray:
    """Points along the polygon boundary at spacing <= step."""
    poly = np.asarray(polygon, dtype=float)
    if poly.ndim != 2 or len(poly) < 2:
        return poly.reshape(-1, 2)
    out = []
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        seg = b - a
        n = max(1, int(math.ceil(np.hypot(*seg) / step)))
        t = np.arange(n) / n
        out.append(a + t[:, None] * seg)
    return np.vstack(out)


def hausdorff_distance(pts_a: np.ndarray, pts_b: np.ndarray) -> float:
    """Symmetric discrete Hausdorff distance between two point sets."""
    a = np.asarray(pts_a, dtype=float).reshape(-1, 2)
    b = np.asarray(pts_b, dtype=float).reshape(-1, 2)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("point sets must be nonempty")
    d = cdist(a, b)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def fit_translation(pts_a: np.ndarray, pts_b: np.ndarray,
                    span: int = 3) -> tuple:
    """Shift t minimizing H(A, B + t); grid search plus local refinement.

    Returns (shift, distance). The search starts at the centroid offset,
    scans a lattice-resolution grid, then halves the step four times.
    """
    a = np.asarray(pts_a, dtype=float).reshape(-1, 2)
    b = np.asarray(pts_b, dtype=float).reshape(-1, 2)
    shift = a.mean(axis=0) - b.mean(axis=0)

    def dist(t):
        return hausdorff_distance(a, b + t)

    best = (dist(shift), shift)
    for dx in range(-span, span + 1):
        for dy in range(-span, span + 1):
            t = shift + (dx, dy)
            d = dist(t)
            if d < best[0]:
                best = (d, t)
    step = 0.5
    for _ in range(4):
        d0, t0 = best
        for dx in (-step, 0.0, step):
            for dy in (-step, 0.0, step):
                t = t0 + (dx, dy)
                d = dist(t)
                if d < best[0]:
                    best = (d, t)
        step *= 0.5
    return tuple(best[1]), best[0]


@dataclass(frozen=True)
class ShapeFit:
    """Best translation match of a sampled loop to a predicted polygon."""

    target: np.ndarray
    translation: tuple
    rho_h: float
    normalized: float       # rho_h / b^{1/3}
    b: int


def hausdorff_fit(contour: OrientedContour, target_polygon: np.ndarray,
                  step: float = 0.5) -> ShapeFit:
    """Fit the predicted polygon to a sampled contour by translation."""
    pts = contour.vertices / 2.0      # doubled dual coords to lattice units
    target = _densify(target_polygon, step)
    if len(target) == 0:
        raise ValueError("target polygon is empty")
    shift, rho = fit_translation(pts, target)
    b = contour.interior_area
    return ShapeFit(target=np.asarray(target_polygon, dtype=float),
                    translation=shift, rho_h=rho,
                    normalized=rho / b ** (1.0 / 3.0) if b > 0 else math.inf,
                    b=b)


def _convex_contains(polygon: np.ndarray, pts: np.ndarray,
                     tol: float = 1e-9) -> np.ndarray:
    """Inside mask for a counterclockwise convex polygon.

    Chunked over points: the pairwise cross-product table is points x
    vertices and loop polygons can carry thousands of arc vertices.
    """
    v = np.asarray(polygon, dtype=float)
    e = np.roll(v, -1, axis=0) - v
    out = np.empty(len(pts), dtype=bool)
    step = max(1, 4_000_000 // max(1, len(v)))
    for k in range(0, len(pts), step):
        blk = pts[k:k + step]
        dx = blk[:, None, 0] - v[None, :, 0]
        dy = blk[:, None, 1] - v[None, :, 1]
        cross = e[None, :, 0] * dy - e[None, :, 1] * dx
        out[k:k + step] = np.all(cross >= -tol, axis=1)
    return out


def predicted_interface(delta: float, params: PhaseParams, shape: WulffShape,
                        geometry: LatticeGeometry) -> HeightField:
    """Height field realizing the phase-diagram minimizer at this delta.

    Optimal loops live in the centered unit square; each is scaled to the
    box and rasterized, stacking one height unit per containing loop.
    """
    R = float(geometry.R)
    curve = minimize_free_energy(delta, params, shape, R, grid_points=2500)
    if curve.rho_star <= 0.0:
        return HeightField(geometry)
    sol = restricted_cost(shape, curve.rho_star / (R * R), with_loops=True)
    side = geometry.side
    xs = np.arange(1, side - 1)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    # site i sits at the center of cell i of the side-cell box
    upts = np.column_stack([(gx.ravel() + 0.5) / side - 0.5,
                            (gy.ravel() + 0.5) / side - 0.5])
    h = np.zeros((side, side), dtype=np.int64)
    levels = np.zeros(len(upts), dtype=np.int64)
    for loop in sol.loops:
        levels += _convex_contains(loop, upts)
    np.minimum(levels, geometry.hmax, out=levels)
    h[1:side - 1, 1:side - 1] = levels.reshape(side - 2, side - 2)
    return HeightField(geometry, h)


def predicted_loop_polygon(delta: float, params: PhaseParams,
                           shape: WulffShape,
                           geometry: LatticeGeometry) -> np.ndarray | None:
    """The outermost predicted loop in lattice coordinates, None when flat."""
    R = float(geometry.R)
    curve = minimize_free_energy(delta, params, shape, R, grid_points=2500)
    if curve.rho_star <= 0.0:
        return None
    sol = restricted_cost(shape, curve.rho_star / (R * R), with_loops=True)
    return (sol.loops[0] + 0.5) * geometry.side


def fit_exponent(x, y) -> tuple:
    """Least-squares exponent of y ~ x^p on positive data: (p, log-prefactor)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0)
    if keep.sum() < 2:
        raise ValueError("need at least two positive points")
    p, c = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
    return float(p), float(c)


@dataclass
class SweepConfig:
    geometry: LatticeGeometry
    params: PhaseParams
    beta: float
    shape: WulffShape
    deltas: np.ndarray
    replicates: int = 8
    sweeps: int = 2000
    burnin: int | None = None
    thinning: int = 1
    seed: int = 0
    epsilon: float = 1.0
    init: str = "predicted"        # or "flat"
    budget_seconds: float | None = None
    threads: int | None = None


@dataclass
class SweepRow:
    delta: float
    n_samples: int
    fractions: dict
    mean_gamma0_alpha: float
    gamma0_bound_fraction: float
    gamma0_alphas: tuple        # per one-monolayer sample, for slack studies
    predicted_rho: float
    predicted_alpha: float
    predicted_verdict: str


@dataclass
class SweepReport:
    rows: list
    partial: bool
    epsilon: float
    replicates: int
    seed: int

    def row_dicts(self) -> list:
        out = []
        for r in self.rows:
            d = {"delta": r.delta, "n_samples": r.n_samples,
                 "mean_gamma0_alpha": r.mean_gamma0_alpha,
                 "gamma0_bound_fraction": r.gamma0_bound_fraction,
                 "predicted_rho": r.predicted_rho,
                 "predicted_alpha": r.predicted_alpha,
                 "predicted_verdict": r.predicted_verdict}
            for v in VERDICTS:
                d[f"frac_{v}"] = r.fractions[v]
            out.append(d)
        return out


def _predicted_verdict(curve) -> str:
    if curve.rho_star <= 0.0:
        return "flat"
    return "one-monolayer" if curve.k_star == 1 else "two-monolayer"


def sweep_experiment(cfg: SweepConfig) -> SweepReport:
    """Replicate chains over a delta grid, censused against predictions.

    Chains start from the predicted interface (or flat) and sample the
    canonical ensemble at their delta. Seeds are spawned per (delta,
    replicate) index, so results do not depend on scheduling; aggregation
    runs in index order. A wall-clock budget marks the report partial and
    drops deltas with no finished replicate.
    """
    geo = cfg.geometry
    deltas = np.asarray(cfg.deltas, dtype=float)
    if deltas.size == 0:
        return SweepReport(rows=[], partial=False, epsilon=cfg.epsilon,
                           replicates=cfg.replicates, seed=cfg.seed)
    seeds = np.random.SeedSequence(cfg.seed).generate_state(
        deltas.size * cfg.replicates, dtype=np.uint64)
    start = time.monotonic()

    curves = {float(d): minimize_free_energy(float(d), cfg.params, cfg.shape,
                                             float(geo.R), grid_points=2500)
              for d in deltas}

    def run_one(task):
        i, j = task
        delta = float(deltas[i])
        init = None
        if cfg.init == "predicted":
            init = predicted_interface(delta, cfg.params, cfg.shape, geo)
        chain = ChainConfig(
            geometry=geo, beta=cfg.beta,
            ensemble=EnsembleSpec("canonical", delta=delta),
            params=cfg.params, sweeps=cfg.sweeps, burnin=cfg.burnin,
            thinning=cfg.thinning, seed=int(seeds[i * cfg.replicates + j]),
            init=init)
        result = run_chain(chain)
        return monolayer_census(result.final, geo, cfg.epsilon,
                                params=cfg.params, delta=delta,
                                sample_id=i * cfg.replicates + j)

    tasks = [(i, j) for i in range(deltas.size) for j in range(cfg.replicates)]
    reports = {}
    partial = False
    workers = cfg.threads if cfg.threads is not None else thread_cap()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pending = {}
            for t in tasks:
                if (cfg.budget_seconds is not None
                        and time.monotonic() - start > cfg.budget_seconds):
                    partial = True
                    break
                pending[pool.submit(run_one, t)] = t
            for fut, t in pending.items():
                reports[t] = fut.result()
    else:
        for t in tasks:
            if (cfg.budget_seconds is not None
                    and time.monotonic() - start > cfg.budget_seconds):
                partial = True
                break
            reports[t] = run_one(t)

    rows = []
    for i, delta in enumerate(deltas):
        done = [reports[(i, j)] for j in range(cfg.replicates)
                if (i, j) in reports]
        if not done:
            continue
        frac = {v: sum(r.verdict == v for r in done) / len(done)
                for v in VERDICTS}
        g0 = [r.gamma0_alpha for r in done if r.gamma0_sign != 0]
        mono = [r for r in done if r.verdict == "one-monolayer"]
        bound = [r.gamma0_bound for r in mono if r.gamma0_bound is not None]
        curve = curves[float(delta)]
        rows.append(SweepRow(
            delta=float(delta), n_samples=len(done), fractions=frac,
            mean_gamma0_alpha=float(np.mean(g0)) if g0 else math.nan,
            gamma0_bound_fraction=(sum(bound) / len(bound)) if bound else math.nan,
            gamma0_alphas=tuple(r.gamma0_alpha for r in mono),
            predicted_rho=curve.rho_star,
            predicted_alpha=curve.rho_star * geo.N ** 2,
            predicted_verdict=_predicted_verdict(curve)))
    return SweepReport(rows=rows, partial=partial, epsilon=cfg.epsilon,
                       replicates=cfg.replicates, seed=cfg.seed)
