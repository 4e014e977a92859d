"""Particle-count statistics above and below the interface.

Cells of the bulk box (height N above and below the reference plane) are
filled independently: solid cells hold a particle with probability ps, vapour
cells with pv < ps. Conditional on an interface with signed volume alpha the
total particle count is a sum of two binomials, and the canonical ensemble at
supersaturation delta reweights interfaces by the probability that this count
hits a fixed target. The exact law is a convolution of binomials, evaluated
in log space over a saddle-point window; a local limit (Gaussian) form covers
the far tails where the exact sum underflows usefully.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import gammaln, logsumexp

from .lattice import LatticeGeometry

_BALANCE_TOL = 1e-12


@dataclass(frozen=True)
class PhaseParams:
    """Activities (a, b) of the vapour phase and (c, d) of the solid phase.

    Balance exp(-a) + exp(-b) = exp(-c) + exp(-d) = exp(-f) is required, so
    both phases share the free energy f. Occupation probabilities are
    pv = exp(f - a) and ps = exp(f - c), with pv < ps.
    """

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        ev = math.exp(-self.a) + math.exp(-self.b)
        es = math.exp(-self.c) + math.exp(-self.d)
        if abs(ev - es) > _BALANCE_TOL * max(ev, es):
            raise ValueError(f"phase balance broken: {ev} != {es}")
        pv, ps = math.exp(-self.a) / ev, math.exp(-self.c) / ev
        if not (0.0 < pv < ps < 1.0):
            raise ValueError(f"need 0 < pv < ps < 1, got pv={pv} ps={ps}")

    @classmethod
    def from_probabilities(cls, pv: float, ps: float, f: float = 0.0):
        if not (0.0 < pv < ps < 1.0):
            raise ValueError(f"need 0 < pv < ps < 1, got pv={pv} ps={ps}")
        return cls(a=f - math.log(pv), b=f - math.log1p(-pv),
                   c=f - math.log(ps), d=f - math.log1p(-ps))

    @cached_property
    def f(self) -> float:
        return -math.log(math.exp(-self.a) + math.exp(-self.b))

    @cached_property
    def pv(self) -> float:
        return math.exp(self.f - self.a)

    @cached_property
    def ps(self) -> float:
        return math.exp(self.f - self.c)

    @property
    def psv(self) -> float:
        return self.ps - self.pv

    @property
    def Ds(self) -> float:
        return self.ps * (1.0 - self.ps)

    @property
    def Dv(self) -> float:
        return self.pv * (1.0 - self.pv)

    @property
    def D(self) -> float:
        return self.Ds + self.Dv

    @property
    def rho0(self) -> float:
        return 0.5 * (self.ps + self.pv)


def bulk_cells(geometry: LatticeGeometry) -> int:
    """Cells on one side of the reference plane: N * side^2."""
    return geometry.N * geometry.side ** 2


def solid_vapour_counts(geometry: LatticeGeometry, alpha: int):
    """Cell counts (solid, vapour) for an interface of signed volume alpha."""
    bulk = bulk_cells(geometry)
    return bulk + alpha, bulk - alpha


def count_mean(params: PhaseParams, geometry: LatticeGeometry, alpha) -> float:
    """E(particle count | alpha) = 2 rho0 bulk + alpha (ps - pv)."""
    bulk = bulk_cells(geometry)
    return 2.0 * params.rho0 * bulk + np.asarray(alpha, dtype=float) * params.psv


def count_variance(params: PhaseParams, geometry: LatticeGeometry, alpha) -> float:
    ns, nv = solid_vapour_counts(geometry, np.asarray(alpha))
    return ns * params.Ds + nv * params.Dv


def target_count(params: PhaseParams, geometry: LatticeGeometry, delta: float) -> int:
    """Particle target at supersaturation delta: round(mean at flat + delta N^2)."""
    flat = 2.0 * params.rho0 * bulk_cells(geometry)
    return int(round(flat + delta * geometry.N ** 2))

def delta_effective(params: PhaseParams, geometry: LatticeGeometry, target: int) -> float:
    """Supersaturation actually realized by an integer particle target."""
    flat = 2.0 * params.rho0 * bulk_cells(geometry)
    return (target - flat) / geometry.N ** 2


def _log_binom_pmf(k, n, logp, log1mp, lgamma):
    """log C(n, k) + k log p + (n - k) log(1 - p); lgamma[i] = gammaln(i + 1)."""
    return (lgamma[n] - lgamma[k] - lgamma[n - k]
            + k * logp + (n - k) * log1mp)


def sigma_exact(params: PhaseParams, geometry: LatticeGeometry,
                alpha: int, target: int, *, _lgamma=None) -> float:
    """log P(count = target | alpha), exact binomial convolution.

    The sum over the solid-cell count k is restricted to a saddle-point
    window; the summand is log-concave in k, so the truncation error is far
    below double precision.
    """
    ns, nv = solid_vapour_counts(geometry, int(alpha))
    if target < 0 or target > ns + nv:
        return -math.inf
    ps, pv = params.ps, params.pv
    vs, vv = ns * params.Ds, nv * params.Dv
    mean = ns * ps + nv * pv
    if vs + vv <= 0.0:
        return 0.0 if target == round(mean) else -math.inf
    kstar = ns * ps + (target - mean) * vs / (vs + vv)
    sigma = math.sqrt(vs * vv / (vs + vv)) if vs > 0 and vv > 0 else 0.0
    half = int(9.5 * sigma) + 30
    klo = max(0, target - nv, int(kstar) - half)
    khi = min(ns, target, int(kstar) + half)
    if klo > khi:
        klo = max(0, target - nv)
        khi = min(ns, target)
        if klo > khi:
            return -math.inf
    if _lgamma is None:
        _lgamma = gammaln(np.arange(1, max(ns, nv) + 2, dtype=np.float64))
    k = np.arange(klo, khi + 1, dtype=np.int64)
    ls = _log_binom_pmf(k, ns, math.log(ps), math.log1p(-ps), _lgamma)
    lv = _log_binom_pmf(target - k, nv, math.log(pv), math.log1p(-pv), _lgamma)
    return float(logsumexp(ls + lv))


def sigma_llt(params: PhaseParams, geometry: LatticeGeometry,
              alpha, delta: float):
    """Gaussian local-limit form of log P(count = target | alpha).

    Uses the flat-interface variance D * box / 2, with box = 2 N side^2 the
    full bulk cell count; delta is the supersaturation defining the target.
    """
    box = 2 * bulk_cells(geometry)
    dev = np.asarray(alpha, dtype=float) * params.psv - delta * geometry.N ** 2
    return -0.5 * math.log(math.pi * params.D * box) - dev ** 2 / (params.D * box)


@dataclass(frozen=True)
class CanonicalWeights:
    """Table of log P(count = target | alpha) over the full alpha range."""

    alpha_min: int
    log_q: np.ndarray
    target: int
    delta_eff: float
    method: str

    def log_weight(self, alpha: int) -> float:
        return float(self.log_q[alpha - self.alpha_min])

    @property
    def alphas(self) -> np.ndarray:
        return np.arange(self.alpha_min, self.alpha_min + len(self.log_q))


def canonical_log_weights(params: PhaseParams, geometry: LatticeGeometry,
                          delta: float, method: str = "hybrid",
                          window_sigmas: float = 10.0) -> CanonicalWeights:
    """Canonical reweighting table for a supersaturation delta.

    method "exact" evaluates the binomial convolution at every alpha,
    "llt" uses the Gaussian form everywhere, and "hybrid" (default) is exact
    in a window of window_sigmas standard deviations of alpha around the
    peak of the table and Gaussian outside, where the weight is vanishingly
    small anyway.
    """
    if method not in ("exact", "llt", "hybrid"):
        raise ValueError(f"unknown method {method!r}")
    amax = geometry.alpha_max
    alphas = np.arange(-amax, amax + 1)
    target = target_count(params, geometry, delta)
    deff = delta_effective(params, geometry, target)
    log_q = sigma_llt(params, geometry, alphas, deff)
    if method != "llt":
        if method == "exact":
            lo, hi = -amax, amax
        else:
            sigma_alpha = math.sqrt(params.D * bulk_cells(geometry)) / params.psv
            peak = deff * geometry.N ** 2 / params.psv
            lo = max(-amax, int(peak - window_sigmas * sigma_alpha))
            hi = min(amax, int(peak + window_sigmas * sigma_alpha))
        lgamma = gammaln(np.arange(1, bulk_cells(geometry) + amax + 2,
                                   dtype=np.float64))
        for a in range(lo, hi + 1):
            log_q[a + amax] = sigma_exact(params, geometry, a, target,
                                          _lgamma=lgamma)
    return CanonicalWeights(alpha_min=-amax, log_q=log_q, target=target,
                            delta_eff=deff, method=method)
