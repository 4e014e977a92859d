"""Surface tension models, the optimal droplet shape, and square-constrained
droplet cost.

A surface tension assigns a positive cost per unit length to each boundary
direction. The optimal free droplet of unit area (costUnit, shape polygon) is
found by half-plane intersection over a direction grid. Inside a unit square
the droplet competes with the square's corners: the constrained minimizer is
a plaquette (square with quarter-shape corners of scale r), and for areas
above one square layer the mass splits into two stacked loops. The piecewise
solution w_rst(S) on S in [0, 2) with its square-root behavior near S = 1 is
what the droplet phase diagram consumes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dataclass_field
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

TENSION_MODELS = ("isotropic", "lattice-l1", "numeric-path")


@dataclass(frozen=True)
class SurfaceTension:
    """Direction-dependent boundary cost tau(n) >= 0, even and dihedral."""

    model: str
    beta: float
    _eval: object = dataclass_field(repr=False)

    def tau(self, n) -> float:
        nx, ny = float(n[0]), float(n[1])
        norm = math.hypot(nx, ny)
        if norm == 0.0:
            raise ValueError("direction must be nonzero")
        return float(self._eval(nx / norm, ny / norm))

    @property
    def tau_axis(self) -> float:
        return self.tau((1.0, 0.0))


def isotropic_tension(beta: float) -> SurfaceTension:
    """tau(n) = beta in every direction: the optimal droplet is a disc."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return SurfaceTension("isotropic", beta, lambda nx, ny: beta)


def lattice_l1_tension(beta: float) -> SurfaceTension:
    """tau(n) = beta (|n1| + |n2|): the optimal droplet is an axis square."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return SurfaceTension("lattice-l1", beta,
                          lambda nx, ny: beta * (abs(nx) + abs(ny)))


def tau_estimate(beta: float, direction, L: int = 64, warn: bool = True) -> float:
    """Directed-path estimate of the tension in a given normal direction.

    Counts east-marching paths of column jumps k with per-step weight
    exp(-beta (1 + |k|)) from the origin to the lattice point closest to
    L * (unit tangent), and returns -log(partition sum) / L. Backtracking
    paths are excluded, which is accurate at large beta and degrades toward
    the diagonal (a warning is emitted there).
    """
    if L < 8:
        raise ValueError("L must be at least 8")
    if beta <= 0:
        raise ValueError("beta must be positive")
    nx, ny = abs(float(direction[0])), abs(float(direction[1]))
    norm = math.hypot(nx, ny)
    if norm == 0.0:
        raise ValueError("direction must be nonzero")
    nx, ny = nx / norm, ny / norm
    if nx > ny:
        nx, ny = ny, nx
    # tangent (ny, -nx) mirrored into the first quadrant: X >= Y >= 0 steps
    X = int(round(L * ny))
    Y = int(round(L * nx))
    if warn and Y > 0.9 * X:
        warnings.warn("directed-path tension is a poor approximation near "
                      "the diagonal; prefer an analytic model there",
                      RuntimeWarning, stacklevel=2)
    kmax = int(math.ceil(42.0 / beta)) + 2
    lo, hi = -(kmax + 4), Y + kmax + 4
    width = hi - lo + 1
    v = np.full(width, -np.inf)
    v[-lo] = 0.0
    ks = np.arange(-kmax, kmax + 1)
    kw = -beta * (1.0 + np.abs(ks))
    for _ in range(X):
        stacked = np.full((len(ks), width), -np.inf)
        for j, k in enumerate(ks):
            if k >= 0:
                stacked[j, k:] = v[:width - k if k else width] + kw[j]
            else:
                stacked[j, :k] = v[-k:] + kw[j]
        v = logsumexp(stacked, axis=0)
    return float(-v[Y - lo] / L)


def numeric_path_tension(beta: float, L: int = 64,
                         warn: bool = False) -> SurfaceTension:
    """Tension model backed by the directed-path estimator, cached per angle."""

    @lru_cache(maxsize=None)
    def cached(key):
        nx, ny = key
        return tau_estimate(beta, (nx, ny), L=L, warn=warn)

    def evaluate(nx, ny):
        ax, ay = abs(nx), abs(ny)
        if ax > ay:
            ax, ay = ay, ax
        return cached((round(ax, 12), round(ay, 12)))

    return SurfaceTension("numeric-path", beta, evaluate)


def _shoelace(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _edge_cost(poly: np.ndarray, tension: SurfaceTension) -> float:
    d = np.roll(poly, -1, axis=0) - poly
    lens = np.hypot(d[:, 0], d[:, 1])
    total = 0.0
    for (dx, dy), ln in zip(d, lens):
        if ln == 0.0:
            continue
        total += tension.tau((dy, -dx)) * ln  # outward normal of a CCW edge
    return total


def _halfplane_intersection(tension: SurfaceTension, m: int) -> np.ndarray:
    """Intersection of {x . n_i <= tau(n_i)} over a uniform direction grid.

    Computed through polar duality: the intersection is the polar of the
    convex hull of the points n_i / tau_i, so each consecutive hull edge
    dualizes to one vertex (solve u . a = u . b = 1).
    """
    from scipy.spatial import ConvexHull

    thetas = 2.0 * math.pi * np.arange(m) / m
    taus = np.array([tension.tau((math.cos(t), math.sin(t))) for t in thetas])
    if np.any(taus <= 0.0):
        bad = thetas[np.argmin(taus)]
        raise ValueError(f"tension is not positive near angle {bad:.4f}")
    pts = np.column_stack([np.cos(thetas), np.sin(thetas)]) / taus[:, None]
    hull = ConvexHull(pts)
    v = pts[hull.vertices]  # counterclockwise
    w = np.roll(v, -1, axis=0)
    det = v[:, 0] * w[:, 1] - v[:, 1] * w[:, 0]
    poly = np.column_stack([(w[:, 1] - v[:, 1]) / det,
                            (v[:, 0] - w[:, 0]) / det])
    keep = np.hypot(*(poly - np.roll(poly, 1, axis=0)).T) > 1e-12
    return poly[keep]


@dataclass(frozen=True)
class WulffShape:
    """Unit-area optimal droplet for a tension, with square-fit metadata.

    polygon: convex CCW loop of area 1, centered at the origin.
    cost_unit: boundary cost of that loop (the w(1) scale).
    bounding_side: side of the smallest enclosing axis square.
    S1: area of the shape rescaled to bounding side 1, equal to
    1 / bounding_side^2; the largest droplet area fitting the unit square
    without deformation.
    """

    tension: SurfaceTension
    polygon: np.ndarray
    cost_unit: float
    bounding_side: float
    S1: float
    directions: int

    @property
    def k_hat(self) -> np.ndarray:
        """The shape rescaled to bounding side 1 (area S1), centered."""
        return self.polygon / self.bounding_side

    @property
    def tau_axis(self) -> float:
        return self.tension.tau_axis


def wulff_construct(tension: SurfaceTension, directions: int = 720,
                    refine_tol: float = 1e-6,
                    max_directions: int = 11520) -> WulffShape:
    """Half-plane intersection over a direction grid, refined by doubling.

    The grid doubles until cost_unit moves by less than refine_tol (or the
    direction cap is hit). The identity cost_unit = 2 sqrt(area of the raw
    intersection) pins the construction and is exposed to tests.
    """
    m = directions
    prev = None
    while True:
        raw = _halfplane_intersection(tension, m)
        area = _shoelace(raw)
        if area <= 0:
            raise ValueError("degenerate tension: empty droplet")
        cost_unit = 2.0 * math.sqrt(area)
        if (prev is not None and abs(cost_unit - prev) < refine_tol) \
                or m >= max_directions:
            break
        prev = cost_unit
        m *= 2
    poly = raw - raw.mean(axis=0)
    poly = poly / math.sqrt(area)
    # symmetric shapes are centered already; re-center for safety
    w_x = poly[:, 0].max() - poly[:, 0].min()
    w_y = poly[:, 1].max() - poly[:, 1].min()
    side = max(w_x, w_y)
    poly.setflags(write=False)
    return WulffShape(tension=tension, polygon=poly, cost_unit=cost_unit,
                      bounding_side=side, S1=1.0 / side ** 2, directions=m)


def wulff_cost(shape: WulffShape, S: float) -> float:
    """Optimal free cost at area S: sqrt(S) * cost_unit."""
    if S < 0:
        raise ValueError("area must be nonnegative")
    return math.sqrt(S) * shape.cost_unit


def _minkowski_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minkowski sum of two convex CCW polygons by edge merging."""

    def order(poly):
        i = np.lexsort((poly[:, 0], poly[:, 1]))[0]  # lowest y, then x
        return np.roll(poly, -i, axis=0)

    a, b = order(a), order(b)
    ea = np.roll(a, -1, axis=0) - a
    eb = np.roll(b, -1, axis=0) - b
    edges = np.concatenate([ea, eb])
    angles = np.mod(np.arctan2(edges[:, 1], edges[:, 0]), 2.0 * math.pi)
    edges = edges[np.argsort(angles, kind="stable")]
    pts = np.cumsum(edges, axis=0) + (a[0] + b[0])
    return pts


@dataclass(frozen=True)
class PlaquetteSolution:
    """Unit square with quarter-shape corners of scale r (the droplet frame).

    corner_radius r in [0, 1]: r = 0 is the bare square, r = 1 degenerates to
    the bounding-normalized droplet shape itself. area = 1 - r^2 (1 - S1).
    """

    corner_radius: float
    area: float
    cost: float
    polygon: np.ndarray


def plaquette(shape: WulffShape, r: float) -> PlaquetteSolution:
    """Square loop of side 1 with corners cut by the scaled droplet shape."""
    if not (0.0 <= r <= 1.0):
        raise ValueError(f"corner scale r={r} outside [0, 1]")
    k_hat = shape.k_hat
    if r == 0.0:
        s = 0.5
        poly = np.array([[-s, -s], [s, -s], [s, s], [-s, s]])
    elif r == 1.0:
        poly = k_hat.copy()
    else:
        half = 0.5 * (1.0 - r)
        square = np.array([[-half, -half], [half, -half],
                           [half, half], [-half, half]])
        poly = _minkowski_sum(square, r * k_hat)
    area = _shoelace(poly)
    cost = _edge_cost(poly, shape.tension)
    poly = poly.copy()
    poly.setflags(write=False)
    return PlaquetteSolution(corner_radius=r, area=area, cost=cost, polygon=poly)


def plaquette_area(shape: WulffShape, r: float) -> float:
    """Closed form: 1 - r^2 (1 - S1)."""
    return 1.0 - r * r * (1.0 - shape.S1)


def plaquette_cost(shape: WulffShape, r: float) -> float:
    """Closed form: 4 (1 - r) tau_axis + r cost_unit sqrt(S1)."""
    return (4.0 * (1.0 - r) * shape.tau_axis
            + r * shape.cost_unit * math.sqrt(shape.S1))


def corner_radius_for_area(shape: WulffShape, S: float) -> float:
    """Invert the strictly decreasing plaquette area law on [0, 1]."""
    if not (shape.S1 <= S <= 1.0):
        raise ValueError(f"area {S} outside the plaquette range "
                         f"[{shape.S1}, 1]")
    if shape.S1 == 1.0:
        return 0.0  # degenerate: every r gives area 1; pick the square
    return math.sqrt((1.0 - S) / (1.0 - shape.S1))


@dataclass(frozen=True)
class RestrictedSolution:
    """Cheapest loop system of total area S inside the unit square frame."""

    S: float
    value: float
    k: int
    regime: str
    corner_radius: float
    loops: tuple


def restricted_cost(shape: WulffShape, S: float,
                    with_loops: bool = False) -> RestrictedSolution:
    """Minimal boundary cost of loops of total area S in a two-layer square.

    Regimes: a free droplet while it fits (S <= S1), then one plaquette up to
    a full layer (S <= 1), a plaquette plus a second-layer droplet of the
    same corner scale (1 < S < 2 S1), and two identical plaquettes beyond.
    Boundary ties go to the branch with fewer loops.
    """
    s1 = shape.S1
    cu = shape.cost_unit
    if S < 0 or S >= 2.0:
        raise ValueError(f"area {S} outside the two-layer domain [0, 2)")
    loops = ()
    if S <= s1:
        value = math.sqrt(S) * cu
        if with_loops:
            loops = (shape.polygon * math.sqrt(S),)
        return RestrictedSolution(S, value, 1 if S > 0 else 0, "droplet",
                                  0.0, loops)
    if S <= 1.0:
        r = corner_radius_for_area(shape, S)
        value = plaquette_cost(shape, r)
        if with_loops:
            loops = (plaquette(shape, r).polygon,)
        return RestrictedSolution(S, value, 1, "plaquette", r, loops)
    if S < 2.0 * s1:
        r = math.sqrt((S - 1.0) / (2.0 * s1 - 1.0))
        value = plaquette_cost(shape, r) + r * cu * math.sqrt(s1)
        if with_loops:
            loops = (plaquette(shape, r).polygon, r * shape.k_hat)
        return RestrictedSolution(S, value, 2, "plaquette+droplet", r, loops)
    r = corner_radius_for_area(shape, S / 2.0)
    value = 2.0 * plaquette_cost(shape, r)
    if with_loops:
        poly = plaquette(shape, r).polygon
        loops = (poly, poly)
    return RestrictedSolution(S, value, 2, "two-plaquettes", r, loops)


def restricted_values(shape: WulffShape, S) -> np.ndarray:
    """Vectorized restricted_cost values over an array of areas in [0, 2)."""
    S = np.asarray(S, dtype=float)
    if np.any(S < 0) or np.any(S >= 2.0):
        raise ValueError("areas must lie in the two-layer domain [0, 2)")
    s1, cu, tax = shape.S1, shape.cost_unit, shape.tau_axis
    corner = cu * math.sqrt(s1)
    out = np.empty_like(S)

    m = S <= s1
    out[m] = np.sqrt(S[m]) * cu
    m = (S > s1) & (S <= 1.0)
    if m.any():
        r = np.sqrt((1.0 - S[m]) / (1.0 - s1)) if s1 < 1.0 else np.zeros(m.sum())
        out[m] = 4.0 * (1.0 - r) * tax + r * corner
    m = (S > 1.0) & (S < 2.0 * s1)
    if m.any():
        r = np.sqrt((S[m] - 1.0) / (2.0 * s1 - 1.0))
        out[m] = 4.0 * (1.0 - r) * tax + 2.0 * r * corner
    m = (S >= 2.0 * s1) & (S > 1.0)  # ties at a full layer stay with k=1
    if m.any():
        r = np.sqrt((1.0 - S[m] / 2.0) / (1.0 - s1))
        out[m] = 2.0 * (4.0 * (1.0 - r) * tax + r * corner)
    return out


def restricted_branch_jumps(shape: WulffShape) -> dict:
    """Gaps between adjacent branch values evaluated exactly at each seam.

    Finite differences would pick up the sqrt cusp at S = 1, so each branch
    formula is taken at its own limit instead; every gap should vanish.
    """
    s1, cu, tax = shape.S1, shape.cost_unit, shape.tau_axis
    corner = cu * math.sqrt(s1)  # boundary cost of the bounding-normalized shape
    out = {"S1": abs(math.sqrt(s1) * cu - plaquette_cost(shape, 1.0)),
           "layer": abs(plaquette_cost(shape, 0.0) - 4.0 * tax)}
    if 2.0 * s1 < 2.0:
        three = 4.0 * 0.0 * tax + 2.0 * corner  # branch-three limit at r = 1
        four = 2.0 * plaquette_cost(shape, 1.0)
        out["2S1"] = abs(three - four)
    return out


def singularity_exponents(shape: WulffShape, window=(1e-4, 1e-2),
                          points: int = 25):
    """Log-log slopes of |w_rst(1 +- eps) - w_rst(1)| on both sides of S=1.

    Nondegenerate corners required (S1 < 1); both slopes come out near 1/2
    because the corner scale enters as sqrt(|S - 1|).
    """
    if 1.0 - shape.S1 < 1e-9:
        raise ValueError("degenerate square shape: no corner singularity")
    lo, hi = window
    eps = np.exp(np.linspace(math.log(lo), math.log(hi), points))
    w1 = restricted_cost(shape, 1.0).value
    slopes = []
    for side in (-1.0, +1.0):
        gaps = np.array([abs(restricted_cost(shape, 1.0 + side * e).value - w1)
                         for e in eps])
        slope = np.polyfit(np.log(eps), np.log(gaps), 1)[0]
        slopes.append(float(slope))
    return slopes[0], slopes[1]
