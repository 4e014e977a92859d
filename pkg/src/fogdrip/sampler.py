"""Markov chain Monte Carlo over height fields.

Three ensembles share one single-site +-1 Metropolis move: grand (plain
Boltzmann weight in the perimeter energy), canonical (reweighted by the
particle-count law at a fixed target), and pinned (signed volume confined to
a window). A flat-histogram (Wang-Landau) mode estimates the log-probability
of signed-volume bins under the grand ensemble. Chains are bit-deterministic
for a fixed seed: proposal streams are pre-generated with numpy's PCG64 and
consumed identically by the compiled kernel and the pure-python reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import kernels
from .contours import ContourFamily
from .lattice import (
    HeightField,
    LatticeGeometry,
    perimeter_sum,
    propose_delta,
    signed_volume,
)
from .measure import PhaseParams, canonical_log_weights

ENSEMBLE_KINDS = ("grand", "canonical", "pinned")


@dataclass(frozen=True)
class EnsembleSpec:
    """Which stationary law the chain targets.

    kind "grand" needs nothing else; "canonical" needs delta (and optionally
    the weight-table method); "pinned" needs a closed alpha window (lo, hi).
    """

    kind: str
    delta: float = 0.0
    window: tuple | None = None
    method: str = "hybrid"

    def __post_init__(self):
        if self.kind not in ENSEMBLE_KINDS:
            raise ValueError(f"unknown ensemble {self.kind!r}")
        if self.kind == "pinned":
            if (self.window is None or len(self.window) != 2
                    or self.window[0] > self.window[1]):
                raise ValueError(f"pinned ensemble needs a window (lo, hi), "
                                 f"got {self.window!r}")

    def weight_table(self, params: PhaseParams | None,
                     geometry: LatticeGeometry):
        """(log-weight table indexed by alpha + offset, offset, use_flag)."""
        amax = geometry.alpha_max
        if self.kind == "grand":
            return np.zeros(1), 0, 0
        if self.kind == "canonical":
            if params is None:
                raise ValueError("canonical ensemble needs phase parameters")
            cw = canonical_log_weights(params, geometry, self.delta,
                                       method=self.method)
            return cw.log_q, -cw.alpha_min, 1
        lo, hi = self.window
        table = np.full(2 * amax + 1, -np.inf)
        lo = max(lo, -amax)
        hi = min(hi, amax)
        table[lo + amax:hi + amax + 1] = 0.0
        return table, amax, 1


@dataclass
class ChainState:
    field: HeightField
    energy: int
    alpha: int
    sweep: int
    rng: np.random.Generator

    @classmethod
    def fresh(cls, geometry: LatticeGeometry, seed, init=None):
        if init is None:
            f = HeightField(geometry)
        elif isinstance(init, HeightField):
            f = init.copy()
        else:
            f = HeightField(geometry, np.asarray(init))
        return cls(field=f, energy=perimeter_sum(f), alpha=signed_volume(f),
                   sweep=0, rng=np.random.default_rng(np.random.SeedSequence(seed)))

    def audit(self):
        """Recompute the incremental bookkeeping; abort on drift."""
        e = perimeter_sum(self.field)
        a = signed_volume(self.field)
        if e != self.energy or a != self.alpha:
            raise RuntimeError(
                f"checkpoint mismatch at sweep {self.sweep}: tracked "
                f"(energy={self.energy}, alpha={self.alpha}) vs recomputed "
                f"(energy={e}, alpha={a})")


@dataclass
class ChainConfig:
    geometry: LatticeGeometry
    beta: float
    ensemble: EnsembleSpec
    params: PhaseParams | None = None
    sweeps: int = 1000
    burnin: int | None = None       # default: sweeps // 10
    thinning: int = 1
    seed: int = 0
    checkpoint_every: int = 0       # 0: four audits per run
    snapshot_every: int = 0         # 0: no periodic snapshots
    init: object = None             # None: flat start
    use_kernel: bool = True

    def resolved_burnin(self) -> int:
        return self.sweeps // 10 if self.burnin is None else self.burnin


@dataclass
class ChainResult:
    config: ChainConfig
    sweeps: np.ndarray
    energies: np.ndarray
    alphas: np.ndarray
    final: HeightField
    acceptance_rate: float
    iat_alpha: float
    snapshots: list


def _python_alpha_trace(h, hmax, beta, xs, ys, dhs, us,
                        logw, w_off, use_w, alpha, energy,
                        per_sweep, alpha_out, energy_out):
    """Reference implementation with the exact semantics of the kernel."""
    accepted = 0
    k = 0
    for i in range(xs.shape[0]):
        x, y, dh = xs[i], ys[i], dhs[i]
        old = h[x, y]
        new = old + dh
        ok = -hmax <= new <= hmax
        if ok:
            de = 0
            for nx, ny in ((x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)):
                hn = h[nx, ny]
                de += abs(new - hn) - abs(old - hn)
            log_ratio = -beta * de
            if use_w != 0:
                lw_new = logw[alpha + dh + w_off]
                if lw_new == -math.inf:
                    ok = False
                else:
                    log_ratio += lw_new - logw[alpha + w_off]
            if ok and (log_ratio >= 0.0 or us[i] < math.exp(log_ratio)):
                h[x, y] = new
                alpha += dh
                energy += de
                accepted += 1
        if (i + 1) % per_sweep == 0:
            alpha_out[k] = alpha
            energy_out[k] = energy
            k += 1
    return alpha, energy, accepted


def make_move_acceptance(params, geometry, beta, spec: EnsembleSpec):
    """Per-move acceptance probability, for exact transition-matrix checks."""
    logw, w_off, use_w = spec.weight_table(params, geometry)

    def acceptance(f: HeightField, x: int, y: int, dh: int) -> float:
        d = propose_delta(f, x, y, dh)
        if not d.valid:
            return 0.0
        log_ratio = -beta * d.d_energy
        if use_w:
            a = signed_volume(f)
            lw_new = logw[a + d.d_alpha + w_off]
            if lw_new == -math.inf:
                return 0.0
            log_ratio += lw_new - logw[a + w_off]
        return min(1.0, math.exp(min(log_ratio, 0.0)))

    return acceptance


def initial_field(geometry: LatticeGeometry, spec: EnsembleSpec) -> HeightField:
    """Flat start, except pinned ensembles get a state inside their window.

    For a window excluding zero, interior sites are raised (or sunk) one unit
    at a time, row-major, until the signed volume reaches the window edge.
    """
    f = HeightField(geometry)
    if spec.kind != "pinned":
        return f
    lo, hi = spec.window
    target = min(max(0, lo), hi)
    if target == 0:
        return f
    need = abs(int(target))
    step = 1 if target > 0 else -1
    inner = f.interior()
    L = geometry.interior_side
    for level in range(geometry.hmax):
        for i in range(L * L):
            if need == 0:
                return f
            inner[i // L, i % L] += step
            need -= 1
    raise ValueError(f"window {spec.window} is outside the reachable volume")


def _draw_block(rng, n, side):
    xs = rng.integers(1, side - 1, size=n, dtype=np.int64)
    ys = rng.integers(1, side - 1, size=n, dtype=np.int64)
    dhs = rng.integers(0, 2, size=n, dtype=np.int64) * 2 - 1
    us = rng.random(n)
    return xs, ys, dhs, us


def run_chain(config: ChainConfig) -> ChainResult:
    """Run the chain; deterministic for a fixed config (seed included).

    The recorded series holds sweep 0 when burn-in is zero, then every
    thinning-th sweep after burn-in. Snapshots are taken at multiples of
    snapshot_every. Incremental energy/alpha bookkeeping is audited at
    checkpoints; drift aborts the run.
    """
    geo = config.geometry
    spec = config.ensemble
    init = config.init if config.init is not None else initial_field(geo, spec)
    state = ChainState.fresh(geo, config.seed, init)
    logw, w_off, use_w = spec.weight_table(config.params, geo)
    if use_w and not np.isfinite(logw[state.alpha + w_off]):
        raise ValueError("initial state has zero weight in this ensemble")

    burnin = config.resolved_burnin()
    per_sweep = max(geo.interior_sites, 1)
    total = config.sweeps
    checkpoint = config.checkpoint_every or max(1, total // 4)
    step = _python_alpha_trace if not config.use_kernel else kernels.metropolis_alpha_trace

    rec_sweeps, rec_e, rec_a = [], [], []
    if burnin == 0:
        rec_sweeps.append(0)
        rec_e.append(state.energy)
        rec_a.append(state.alpha)
    snapshots = []
    accepted = 0
    block_cap = max(1, (1 << 20) // per_sweep)

    done = 0
    while done < total:
        stops = [total, done + block_cap]
        if config.snapshot_every:
            stops.append((done // config.snapshot_every + 1) * config.snapshot_every)
        stops.append((done // checkpoint + 1) * checkpoint)
        stop = min(s for s in stops if s > done)
        bs = stop - done
        xs, ys, dhs, us = _draw_block(state.rng, bs * per_sweep, geo.side)
        a_out = np.empty(bs, dtype=np.int64)
        e_out = np.empty(bs, dtype=np.int64)
        alpha, energy, acc = step(state.field.h, geo.hmax, config.beta,
                                  xs, ys, dhs, us, logw, w_off, use_w,
                                  state.alpha, state.energy,
                                  per_sweep, a_out, e_out)
        state.alpha, state.energy = int(alpha), int(energy)
        accepted += int(acc)
        for j in range(bs):
            s = done + j + 1
            if s > burnin and (s - burnin) % config.thinning == 0:
                rec_sweeps.append(s)
                rec_e.append(int(e_out[j]))
                rec_a.append(int(a_out[j]))
        done = stop
        state.sweep = done
        if config.snapshot_every and done % config.snapshot_every == 0 and done <= total:
            snapshots.append((done, state.field.copy()))
        if done % checkpoint == 0 or done == total:
            state.audit()

    alphas = np.array(rec_a, dtype=np.int64)
    return ChainResult(
        config=config,
        sweeps=np.array(rec_sweeps, dtype=np.int64),
        energies=np.array(rec_e, dtype=np.int64),
        alphas=alphas,
        final=state.field,
        acceptance_rate=accepted / max(total * per_sweep, 1),
        iat_alpha=integrated_autocorrelation(alphas),
        snapshots=snapshots,
    )


def integrated_autocorrelation(series, c: float = 6.0) -> float:
    """Integrated autocorrelation time with Sokal's adaptive window."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 2:
        return 1.0
    x = x - x.mean()
    var = float(x @ x) / n
    if var == 0.0:
        return 1.0
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acf = np.fft.irfft(f * np.conj(f), nfft)[:n].real
    acf /= acf[0]
    tau = 1.0
    for t in range(1, n):
        tau += 2.0 * acf[t]
        if t >= c * tau or acf[t] <= 0.0:
            break
    return max(tau, 1.0)


@dataclass
class WangLandauConfig:
    geometry: LatticeGeometry
    beta: float
    bin_width: int = 4
    flatness: float = 0.8
    lnf_init: float = 1.0
    lnf_floor: float = 1e-8
    seed: int = 0
    stage_max_proposals: int = 200_000_000
    check_every_sweeps: int = 200
    # optional signed-volume window; None means the full reachable range.
    # Edges snap outward to whole bins so no bin is half-covered.
    alpha_lo: int | None = None
    alpha_hi: int | None = None


@dataclass
class DensityOfStates:
    """log Pr(signed volume in bin) up to a constant, on visited bins."""

    b_centers: np.ndarray
    log_g: np.ndarray
    visited: np.ndarray
    histogram: np.ndarray
    stages: list
    partial: bool

    def normalized(self):
        """log_g shifted so the bin containing b=0 sits at 0, visited only."""
        idx = np.argmin(np.abs(self.b_centers[self.visited]))
        out = self.log_g[self.visited].copy()
        return self.b_centers[self.visited], out - out[idx]


def wang_landau_alpha(config: WangLandauConfig) -> DensityOfStates:
    """Flat-histogram estimate of the signed-volume law of the grand ensemble.

    Stages halve the modification factor from lnf_init down to lnf_floor;
    each stage runs until the histogram over the bins visited in that stage
    is flat (min >= flatness * mean), or gives up at stage_max_proposals and
    flags the result partial.
    """
    geo = config.geometry
    amax = geo.alpha_max
    bin_w = config.bin_width
    nbins = (2 * amax) // bin_w + 1
    b_centers = np.arange(nbins) * bin_w - amax + (bin_w - 1) / 2.0

    a_lo = -amax if config.alpha_lo is None else max(int(config.alpha_lo), -amax)
    a_hi = amax if config.alpha_hi is None else min(int(config.alpha_hi), amax)
    if not a_lo <= 0 <= a_hi:
        raise ValueError(f"window [{a_lo}, {a_hi}] must contain the flat state")
    # snap outward to bin edges so the window covers whole bins
    a_lo = ((a_lo + amax) // bin_w) * bin_w - amax
    a_hi = min(((a_hi + amax) // bin_w + 1) * bin_w - amax - 1, amax)

    log_g = np.zeros(nbins)
    total_hist = np.zeros(nbins, dtype=np.int64)
    state = ChainState.fresh(geo, config.seed)
    per_sweep = max(geo.interior_sites, 1)
    block = max(1, config.check_every_sweeps) * per_sweep
    stages = []
    partial = False

    lnf = config.lnf_init
    while lnf >= config.lnf_floor:
        hist = np.zeros(nbins, dtype=np.int64)
        used = 0
        flat = False
        while not flat:
            if used >= config.stage_max_proposals:
                partial = True
                break
            xs, ys, dhs, us = _draw_block(state.rng, block, geo.side)
            alpha, energy, _ = kernels.wang_landau_block(
                state.field.h, geo.hmax, config.beta, xs, ys, dhs, us,
                log_g, hist, amax, bin_w, lnf, state.alpha, state.energy,
                a_lo, a_hi)
            state.alpha, state.energy = int(alpha), int(energy)
            used += block
            seen = hist[hist > 0]
            flat = bool(len(seen) > 0
                        and seen.min() >= config.flatness * seen.mean())
        stages.append({"lnf": lnf, "proposals": used, "flat": flat})
        total_hist += hist
        if partial:
            break
        lnf *= 0.5

    state.audit()
    visited = total_hist > 0
    return DensityOfStates(b_centers=b_centers, log_g=log_g, visited=visited,
                           histogram=total_hist, stages=stages, partial=partial)


def classify_contours(family: ContourFamily, geometry: LatticeGeometry,
                      epsilon: float = 1.0) -> dict:
    """Partition contours by length: small, intermediate, large.

    small: length <= log(N)/epsilon; large: length >= epsilon*N; the rest are
    intermediate. The small rule wins when the two thresholds cross.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    n = geometry.N
    out = {"small": [], "intermediate": [], "large": [], "epsilon": epsilon}
    for c in family:
        if c.length <= math.log(n) / epsilon:
            out["small"].append(c)
        elif c.length >= epsilon * n:
            out["large"].append(c)
        else:
            out["intermediate"].append(c)
    return out
