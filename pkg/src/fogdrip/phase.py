"""Variational phase diagram of monolayer formation.

The droplet volume rho trades a quadratic particle-count penalty against the
boundary cost of the constrained droplet, through the free energy

    F_delta(rho) = (delta - psv rho)^2 / (2 D R^2) + R w_rst(rho / R^2)

on rho in [0, 2 R^2). Its global minimizer jumps from 0 to a macroscopic
droplet at the dew point delta_1, enters the plaquette regime at delta_15,
jumps across a full layer at delta_2, and reaches two equal plaquettes at
delta_25. The small-rho branch reduces to the one-parameter family
phi_kappa(lambda) = kappa (1 - lambda)^2 + sqrt(lambda), whose first-order
transition at kappa_c yields the dew point in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .measure import PhaseParams
from .wulff import WulffShape, restricted_cost, restricted_values

KAPPA_C = 0.5 * 1.5 ** 1.5  # = 3 sqrt(6) / 8, the first-order threshold
LAMBDA_C = 2.0 / 3.0


def free_energy(rho: float, delta: float, params: PhaseParams,
                shape: WulffShape, R: float) -> float:
    """Eq-22-style objective at a single droplet volume rho."""
    r2 = R * R
    if not (0.0 <= rho < 2.0 * r2):
        raise ValueError(f"rho={rho} outside [0, 2 R^2)")
    gap = delta - params.psv * rho
    return (gap * gap / (2.0 * params.D * r2)
            + R * restricted_cost(shape, rho / r2).value)


def _free_energy_grid(rhos: np.ndarray, delta: float, params: PhaseParams,
                      shape: WulffShape, R: float) -> np.ndarray:
    r2 = R * R
    gap = delta - params.psv * rhos
    return (gap * gap / (2.0 * params.D * r2)
            + R * restricted_values(shape, rhos / r2))


def phi(kappa: float, lam: float) -> float:
    """The reduced droplet functional kappa (1-lambda)^2 + sqrt(lambda)."""
    return kappa * (1.0 - lam) ** 2 + math.sqrt(lam)


def lambda_stationary(kappa: float) -> float:
    """Maximal root of the stationarity condition 4 kappa sqrt(l)(1-l) = 1.

    In t = sqrt(lambda) the condition reads t^3 - t + 1/(4 kappa) = 0; the
    relevant root lies in [1/sqrt(3), 1] and exists for kappa >= kappa_c
    (and a bit below, where it is only a local minimum).
    """
    lo = 1.0 / math.sqrt(3.0)
    f = lambda t: t ** 3 - t + 0.25 / kappa
    if f(lo) > 0.0:
        raise ValueError(f"no stationary droplet for kappa={kappa}")
    t = brentq(f, lo, 1.0, xtol=1e-15, rtol=8.9e-16)
    return t * t


def phi_minimizers(kappa: float, tie_tol: float = 1e-12) -> tuple:
    """Global minimizers of phi_kappa on [0, 1]."""
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    if kappa < KAPPA_C - tie_tol:
        return (0.0,)
    if kappa <= KAPPA_C + tie_tol:
        return (0.0, LAMBDA_C)
    return (lambda_stationary(kappa),)


def kappa_of(delta: float, params: PhaseParams, shape: WulffShape,
             R: float) -> float:
    """Dimensionless supersaturation kappa = delta^{3/2} sqrt(psv)/(2DR^2 w1)."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return (delta ** 1.5 * math.sqrt(params.psv)
            / (2.0 * params.D * R * R * shape.cost_unit))


def delta1_analytic(params: PhaseParams, shape: WulffShape, R: float) -> float:
    """Dew point: (3/2) cbrt(D^2 w1^2 / psv) R^{4/3}, inverse of kappa_c."""
    return 1.5 * (params.D ** 2 * shape.cost_unit ** 2
                  / params.psv) ** (1.0 / 3.0) * R ** (4.0 / 3.0)


def fitting_required_R(params: PhaseParams, shape: WulffShape) -> float:
    """Smallest R whose critical droplet still fits the free-droplet regime.

    The jump target rho_cr = (2/3) delta_1 / psv must not exceed S1 R^2.
    """
    x = (params.D ** 2 * shape.cost_unit ** 2 / params.psv) ** (1.0 / 3.0)
    return (x / (params.psv * shape.S1)) ** 1.5


@dataclass(frozen=True)
class FreeEnergyCurve:
    delta: float
    rho_grid: np.ndarray
    values: np.ndarray
    rho_star: float
    f_min: float
    minimizers: tuple
    multiplicity: int
    k_star: int
    regime: str


def _regime_cells(shape: WulffShape, R: float) -> list:
    r2 = R * R
    seams = [0.0, shape.S1 * r2, r2]
    if 2.0 * shape.S1 < 2.0:
        seams.append(2.0 * shape.S1 * r2)
    seams.append(2.0 * r2 * (1.0 - 1e-12))
    seams = sorted(set(s for s in seams if 0.0 <= s <= 2.0 * r2))
    return [(a, b) for a, b in zip(seams[:-1], seams[1:]) if b - a > 1e-12]


def minimize_free_energy(delta: float, params: PhaseParams, shape: WulffShape,
                         R: float, grid_points: int = 10_000,
                         tie_tol: float = 1e-9, rho_min: float = 0.0
                         ) -> FreeEnergyCurve:
    """Global minimum of the free energy by per-regime grid plus refinement.

    The objective is smooth inside each regime cell of the restricted
    problem, so each cell is scanned on a proportional grid share and every
    local basin is polished by bounded scalar minimization. Minimizers within
    tie_tol of the optimum are all reported (first-order coexistence).
    """
    r2 = R * R
    span = 2.0 * r2
    cells = [(max(a, rho_min), b) for a, b in _regime_cells(shape, R)
             if b > rho_min]
    grids, values, candidates = [], [], []
    for a, b in cells:
        n = max(24, int(round(grid_points * (b - a) / span)))
        xs = np.linspace(a, b, n)
        fs = _free_energy_grid(xs, delta, params, shape, R)
        grids.append(xs)
        values.append(fs)
        interior = np.where((fs[1:-1] <= fs[:-2]) & (fs[1:-1] <= fs[2:]))[0] + 1
        brackets = [(xs[i - 1], xs[i + 1]) for i in interior]
        # basins hugging a cell edge have no interior grid witness
        if fs[0] < fs[1]:
            brackets.append((xs[0], xs[1]))
        if fs[-1] < fs[-2]:
            brackets.append((xs[-2], xs[-1]))
        for a_br, b_br in brackets:
            res = minimize_scalar(
                lambda rho: free_energy(rho, delta, params, shape, R),
                bounds=(a_br, b_br), method="bounded",
                options={"xatol": 1e-12 * (1.0 + span)})
            candidates.append((float(res.x), float(res.fun)))
        candidates.append((float(xs[0]), float(fs[0])))
        candidates.append((float(xs[-1]), float(fs[-1])))

    f_min = min(f for _, f in candidates)
    ties = sorted((x, f) for x, f in candidates if f - f_min <= tie_tol)
    merged = []
    for x, f in ties:
        if merged and abs(x - merged[-1][0]) < 1e-7 * (1.0 + span):
            if f < merged[-1][1]:
                merged[-1] = (x, f)
            continue
        merged.append((x, f))
    rho_star = min(merged, key=lambda t: t[1])[0]
    sol = restricted_cost(shape, rho_star / r2)
    return FreeEnergyCurve(
        delta=delta, rho_grid=np.concatenate(grids),
        values=np.concatenate(values), rho_star=rho_star, f_min=f_min,
        minimizers=tuple(x for x, _ in merged), multiplicity=len(merged),
        k_star=sol.k, regime=sol.regime if rho_star > 0 else "flat")


def _rho_star(delta, params, shape, R, **kw) -> float:
    return minimize_free_energy(delta, params, shape, R,
                                grid_points=2500, **kw).rho_star


@dataclass(frozen=True)
class CriticalValues:
    """Critical supersaturations and droplet radii for one (params, shape, R).

    Radii are half bounding sides in lattice units of the R-square: r1 for
    the first-layer loop, r1_tilde for its plaquette corner scale, r2 for the
    second-layer loop. delta15 marks the plaquette regime entry
    (r1_tilde = R/2 there), delta2 the jump across one full layer, delta25
    the two-equal-plaquettes point (r2 = r1_tilde = R/2).

    r_cr is the dew-point droplet scale sqrt((2/3) delta1_numeric / psv);
    r_cr_jump is the area sqrt of the actual jump target, which falls below
    r_cr when the critical droplet does not fit the free regime (fits=False).
    """

    delta1_analytic: float
    delta1_numeric: float
    delta15: float
    delta2: float
    delta25: float
    rho_minus: float
    rho_plus: float
    r_cr: float
    r_cr_jump: float
    r_cr_analytic: float
    fits: bool
    required_R: float
    multiplicity_at_delta1: int
    multiplicity_at_delta2: int
    excluded_interval: tuple
    deltas: np.ndarray
    rho_star: np.ndarray
    k: np.ndarray
    r1: np.ndarray
    r1_tilde: np.ndarray
    r2: np.ndarray
    f_min: np.ndarray
    multiplicity: np.ndarray


def _radii_of(shape: WulffShape, rho: float, R: float) -> tuple:
    """(r1, r1_tilde, r2) conventions for the minimizing loop system."""
    if rho <= 0.0:
        return 0.0, 0.0, 0.0
    sol = restricted_cost(shape, rho / (R * R))
    half = 0.5 * R
    if sol.regime == "droplet":
        return half * math.sqrt(sol.S / shape.S1), 0.0, 0.0
    if sol.regime == "plaquette":
        return half, half * sol.corner_radius, 0.0
    # both two-loop regimes share the corner scale between layers
    return half, half * sol.corner_radius, half * sol.corner_radius


def critical_values(params: PhaseParams, shape: WulffShape, R: float,
                    strict: bool = False, tie_tol: float = 1e-9,
                    table_points: int = 120) -> CriticalValues:
    """Locate the critical supersaturations by bisection on the minimizer.

    With strict=True a geometry whose critical droplet does not fit the
    free-droplet regime is rejected; otherwise the numeric transitions are
    still computed and the analytic dew point keeps its (now approximate)
    closed form, with the mismatch left visible to the caller.
    """
    r2 = R * R
    d1a = delta1_analytic(params, shape, R)
    rho_cr_a = LAMBDA_C * d1a / params.psv
    req_R = fitting_required_R(params, shape)
    fits = bool(rho_cr_a <= shape.S1 * r2 * (1.0 + 1e-12))
    if strict and not fits:
        raise ValueError(
            f"critical droplet area {rho_cr_a:.4g} exceeds the free-droplet "
            f"regime bound {shape.S1 * r2:.4g}; need R >= {req_R:.4g}")

    rho_sep = 0.01 * r2

    def flat_minus_droplet(delta):
        flat = delta * delta / (2.0 * params.D * r2)
        best = minimize_free_energy(delta, params, shape, R,
                                    grid_points=2500, rho_min=rho_sep).f_min
        return flat - best

    lo, hi = 0.5 * d1a, 1.5 * d1a
    for _ in range(10):
        if flat_minus_droplet(hi) > 0:
            break
        hi *= 1.5
    else:
        raise RuntimeError("droplet transition not bracketed")
    d1n = brentq(flat_minus_droplet, lo, hi, xtol=1e-12, rtol=8.9e-16)
    rho_at_d1 = _rho_star(d1n * (1.0 + 1e-7), params, shape, R,
                          rho_min=rho_sep)
    m1 = minimize_free_energy(d1n, params, shape, R, grid_points=2500,
                              tie_tol=tie_tol).multiplicity

    # plaquette entry: the continuous crossing rho*(delta) = S1 R^2
    if rho_at_d1 >= shape.S1 * r2 * (1.0 - 1e-9):
        d15 = d1n  # droplet regime skipped entirely (small R)
    else:
        g15 = lambda d: _rho_star(d, params, shape, R,
                                  rho_min=rho_sep) - shape.S1 * r2
        hi15 = d1n * 1.2
        for _ in range(40):
            if g15(hi15) > 0:
                break
            hi15 *= 1.2
        d15 = brentq(g15, d1n * (1.0 + 1e-9), hi15, xtol=1e-10)

    # layer jump: binary search on the discontinuous predicate rho* > R^2
    lo2, hi2 = d15, d15 * 1.3
    for _ in range(60):
        if _rho_star(hi2, params, shape, R) > r2:
            break
        hi2 *= 1.3
    else:
        raise RuntimeError("layer transition not bracketed")
    for _ in range(70):
        mid = 0.5 * (lo2 + hi2)
        if _rho_star(mid, params, shape, R) > r2:
            hi2 = mid
        else:
            lo2 = mid
    d2 = 0.5 * (lo2 + hi2)
    rho_minus = _rho_star(lo2, params, shape, R)
    rho_plus = _rho_star(hi2, params, shape, R)
    m2 = minimize_free_energy(d2, params, shape, R, grid_points=2500,
                              tie_tol=tie_tol).multiplicity

    # two equal plaquettes: continuous crossing rho* = 2 S1 R^2
    if 2.0 * shape.S1 < 2.0 - 1e-9:
        g25 = lambda d: _rho_star(d, params, shape, R) - 2.0 * shape.S1 * r2
        if g25(d2 * (1.0 + 1e-9)) >= 0:
            d25 = d2  # the layer jump lands straight in the two-plaquette regime
        else:
            hi25 = d2 * 1.3
            for _ in range(40):
                if g25(hi25) > 0:
                    break
                hi25 *= 1.3
            d25 = brentq(g25, d2 * (1.0 + 1e-9), hi25, xtol=1e-10)
    else:
        d25 = math.inf  # square shape: the plaquette pair never degenerates

    top = min(d25 * 1.05 if math.isfinite(d25) else d2 * 1.4,
              _delta_cap(params, shape, R))
    deltas = np.linspace(0.3 * d1n, top, table_points)
    rows = [minimize_free_energy(d, params, shape, R, grid_points=2500,
                                 tie_tol=tie_tol) for d in deltas]
    rho_tab = np.array([c.rho_star for c in rows])
    radii = np.array([_radii_of(shape, rho, R) for rho in rho_tab])
    below = rho_tab[rho_tab < r2]
    above = rho_tab[rho_tab > r2]
    excluded = (float(below.max()) if below.size else 0.0,
                float(above.min()) if above.size else 2.0 * r2)

    return CriticalValues(
        delta1_analytic=d1a, delta1_numeric=d1n, delta15=d15, delta2=d2,
        delta25=d25, rho_minus=rho_minus, rho_plus=rho_plus,
        r_cr=math.sqrt(LAMBDA_C * d1n / params.psv),
        r_cr_jump=math.sqrt(rho_at_d1),
        r_cr_analytic=math.sqrt(rho_cr_a), fits=fits, required_R=req_R,
        multiplicity_at_delta1=m1, multiplicity_at_delta2=m2,
        excluded_interval=excluded, deltas=deltas, rho_star=rho_tab,
        k=np.array([c.k_star for c in rows]),
        r1=radii[:, 0], r1_tilde=radii[:, 1], r2=radii[:, 2],
        f_min=np.array([c.f_min for c in rows]),
        multiplicity=np.array([c.multiplicity for c in rows]))


def _delta_cap(params: PhaseParams, shape: WulffShape, R: float) -> float:
    """A delta beyond which the minimizer would leave the two-layer domain."""
    return 1.95 * params.psv * R * R


def gamma0_bound_crossover(params: PhaseParams, shape: WulffShape, R: float,
                           crit: CriticalValues | None = None) -> float:
    """Largest delta in (delta1, delta2) with psv rho*(delta) > (2/3) delta.

    Just above delta1 the minimizer satisfies lambda = psv rho* / delta >
    2/3, but rho* saturates near R^2 while delta keeps growing, so the
    inequality flips before delta2 whenever the monolayer window is long
    enough. Returns delta2 if the bound survives the whole window.
    """
    if crit is None:
        crit = critical_values(params, shape, R)
    d1, d2 = crit.delta1_numeric, crit.delta2

    def gap(delta):
        return params.psv * _rho_star(delta, params, shape, R) \
            - LAMBDA_C * delta

    hi = d2 * (1.0 - 1e-9)
    if gap(hi) >= 0.0:
        return d2
    lo = d1 * (1.0 + 1e-6)
    if gap(lo) <= 0.0:
        return d1
    return brentq(gap, lo, hi, xtol=1e-9 * d2)


@dataclass(frozen=True)
class CaseEnvelope:
    """Log-probability envelopes of the three volume regimes at one delta."""

    delta: float
    eta: float
    c8: float
    c9: float
    case1: tuple          # (lower, upper) at sub-window b
    case2_upper: float    # best upper bound over its window
    case3: tuple          # (lower, upper) at the optimal rho
    dominant: str
    typical_b: float
    rho_star: float


def envelope_bounds(delta: float, b: float, params: PhaseParams,
                    geometry, shape: WulffShape, eta: float = 0.25,
                    c8: float = 1.0, c9: float = 0.05) -> dict:
    """The printed envelope expressions for one volume value b.

    Returns the applicable case label with (lower, upper) log bounds; the
    middle regime carries only an upper bound. The two-sided droplet bounds
    differ by the factor two in the quadratic exponent, both are reported.
    """
    if not (0.0 < eta < 0.5):
        raise ValueError("eta must lie in (0, 1/2)")
    N, R = geometry.N, geometry.R
    D, psv = params.D, params.psv
    r2 = float(R * R)
    base = -delta * delta * N / (2.0 * D * r2)
    if b <= N ** (1.0 + eta):
        return {"case": 1, "lower": base - c8 * b * b / N ** 2, "upper": base}
    if b <= c9 * N * N:
        up = (base + delta * psv * b / (N * r2 * D)
              - c8 * min(b * b / N ** 2, N))
        return {"case": 2, "lower": -math.inf, "upper": up}
    rho = b / N ** 2
    w = restricted_cost(shape, rho / r2).value
    quad = (delta - psv * rho) ** 2 * N / (D * r2)
    surf = R * N * w
    return {"case": 3, "lower": -quad - surf, "upper": -0.5 * quad - surf}


def case_envelope(delta: float, params: PhaseParams, geometry,
                  shape: WulffShape, eta: float = 0.25, c8: float = 1.0,
                  c9: float = 0.05) -> CaseEnvelope:
    """Which volume regime dominates at supersaturation delta.

    Each case's envelope is evaluated at its own optimal b; the droplet case
    uses the free-energy minimizer, and the predicted typical volume is
    rho*(delta) N^2 (zero when the flat case dominates).
    """
    if not (0.0 < eta < 0.5):
        raise ValueError("eta must lie in (0, 1/2)")
    N, R = geometry.N, geometry.R
    curve = minimize_free_energy(delta, params, shape, float(R),
                                 grid_points=2500)
    c1 = envelope_bounds(delta, 0.0, params, geometry, shape, eta, c8, c9)
    # middle window: its upper bound is maximized at the quadratic vertex
    if N ** (1.0 + eta) < c9 * N * N:
        b_vertex = delta * params.psv * N / (2.0 * c8 * R * R * params.D)
        b_mid = min(max(b_vertex, N ** (1.0 + eta) * (1.0 + 1e-9)),
                    c9 * N * N)
        c2_upper = envelope_bounds(delta, b_mid, params, geometry, shape,
                                   eta, c8, c9)["upper"]
    else:
        c2_upper = -math.inf  # window empty at this box size
    rho = curve.rho_star
    if rho > c9 * R * R:
        c3 = envelope_bounds(delta, rho * N * N, params, geometry, shape,
                             eta, c8, c9)
        c3_pair = (c3["lower"], c3["upper"])
    else:
        c3_pair = (-math.inf, -math.inf)
    dominant = "case3" if c3_pair[1] > c1["upper"] else "case1"
    typical = rho * N * N if dominant == "case3" else 0.0
    return CaseEnvelope(delta=delta, eta=eta, c8=c8, c9=c9,
                        case1=(c1["lower"], c1["upper"]),
                        case2_upper=c2_upper, case3=c3_pair,
                        dominant=dominant, typical_b=typical, rho_star=rho)
