"""Exhaustive small-box reference laws.

For boxes small enough to enumerate every height configuration, these
routines compute ensemble laws exactly: grand-canonical Boltzmann weights,
canonical reweighting by the particle-count law, and volume-pinned windows.
They exist to confront the samplers and the count statistics with ground
truth, and to freeze golden summaries for regression tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .contours import extract_contours
from .lattice import HeightField, LatticeGeometry
from .measure import PhaseParams, sigma_exact, target_count

ENUMERATION_BUDGET = 100_000_000


def enumeration_count(geometry: LatticeGeometry) -> int:
    base = 2 * geometry.hmax + 1
    return base ** geometry.interior_sites


def _check_budget(geometry: LatticeGeometry, budget: int) -> int:
    count = enumeration_count(geometry)
    if count > budget:
        raise ValueError(
            f"enumeration of {count} configurations exceeds the budget {budget}; "
            "use the sampler instead")
    return count


def enumerate_interiors(geometry: LatticeGeometry, chunk: int = 1 << 16,
                        budget: int = ENUMERATION_BUDGET):
    """Yield (count, L*L) int8 arrays of interior heights, mixed-radix order.

    Configuration index i has digit j (little-endian, row-major site order)
    equal to (i // base**j) % base, shifted down by hmax.
    """
    count = _check_budget(geometry, budget)
    base = 2 * geometry.hmax + 1
    nsites = geometry.interior_sites
    powers = base ** np.arange(nsites, dtype=np.int64)
    for start in range(0, count, chunk):
        idx = np.arange(start, min(start + chunk, count), dtype=np.int64)
        digits = (idx[:, None] // powers[None, :]) % base
        yield (digits - geometry.hmax).astype(np.int8)


def field_from_index(geometry: LatticeGeometry, index: int) -> HeightField:
    base = 2 * geometry.hmax + 1
    L = geometry.interior_side
    digits = np.empty(L * L, dtype=np.int64)
    for j in range(L * L):
        digits[j] = index % base
        index //= base
    inner = digits.reshape(L, L) - geometry.hmax
    return HeightField.from_interior_array(geometry, inner)


def _batch_energy_alpha(interiors: np.ndarray, L: int):
    h = interiors.reshape(-1, L, L).astype(np.int32)
    energy = (np.abs(h[:, 0, :]).sum(1) + np.abs(h[:, -1, :]).sum(1)
              + np.abs(h[:, :, 0]).sum(1) + np.abs(h[:, :, -1]).sum(1)
              + np.abs(np.diff(h, axis=1)).sum((1, 2))
              + np.abs(np.diff(h, axis=2)).sum((1, 2)))
    alpha = h.sum((1, 2))
    return energy, alpha


@dataclass
class EnumeratedEnsemble:
    """Energies and signed volumes of every configuration of a small box."""

    geometry: LatticeGeometry
    energies: np.ndarray
    alphas: np.ndarray

    @classmethod
    def build(cls, geometry: LatticeGeometry, budget: int = ENUMERATION_BUDGET):
        count = _check_budget(geometry, budget)
        energies = np.empty(count, dtype=np.int32)
        alphas = np.empty(count, dtype=np.int32)
        pos = 0
        for block in enumerate_interiors(geometry, budget=budget):
            e, a = _batch_energy_alpha(block, geometry.interior_side)
            energies[pos:pos + len(e)] = e
            alphas[pos:pos + len(a)] = a
            pos += len(e)
        return cls(geometry=geometry, energies=energies, alphas=alphas)

    def __len__(self):
        return len(self.energies)

    # ensemble log weights, unnormalized

    def log_weights_grand(self, beta: float) -> np.ndarray:
        return -beta * self.energies.astype(np.float64)

    def log_weights_canonical(self, beta: float, params: PhaseParams,
                              delta: float) -> np.ndarray:
        target = target_count(params, self.geometry, delta)
        uniq = np.unique(self.alphas)
        table = {int(a): sigma_exact(params, self.geometry, int(a), target)
                 for a in uniq}
        logq = np.array([table[int(a)] for a in self.alphas])
        return -beta * self.energies + logq

    def log_weights_pinned(self, beta: float, window) -> np.ndarray:
        lo, hi = window
        out = -beta * self.energies.astype(np.float64)
        out[(self.alphas < lo) | (self.alphas > hi)] = -np.inf
        return out

    # exact laws

    def probabilities(self, log_weights: np.ndarray) -> np.ndarray:
        return np.exp(log_weights - logsumexp(log_weights))

    def log_partition(self, log_weights: np.ndarray) -> float:
        return float(logsumexp(log_weights))

    def alpha_law(self, probs: np.ndarray):
        """(alpha values, probabilities), aggregated and sorted by alpha."""
        uniq, inv = np.unique(self.alphas, return_inverse=True)
        mass = np.zeros(len(uniq))
        np.add.at(mass, inv, probs)
        return uniq, mass

    def mean_energy(self, probs: np.ndarray) -> float:
        return float(probs @ self.energies)

    def mean_alpha(self, probs: np.ndarray) -> float:
        return float(probs @ self.alphas)

    def contour_presence_law(self, probs: np.ndarray):
        """Probability that each distinct contour shape appears at least once.

        Returns dict canonical_key -> (length, probability). Walks every
        configuration, so only sensible for small enumerations.
        """
        out = {}
        for i in range(len(self)):
            if probs[i] == 0.0:
                continue
            fam = extract_contours(field_from_index(self.geometry, i))
            seen = set()
            for c in fam:
                key = c.canonical_key()
                if key in seen:
                    continue  # stacked copies count once for presence
                seen.add(key)
                if key not in out:
                    out[key] = [c.length, 0.0]
                out[key][1] += probs[i]
        return {k: (v[0], v[1]) for k, v in out.items()}


def peierls_worst_ratio(ens: EnumeratedEnsemble, beta: float) -> float:
    """max over contours of Pr(contour present) * exp(beta * length).

    The one-contour deletion map bounds this by 1 in the grand ensemble.
    """
    law = ens.contour_presence_law(ens.probabilities(ens.log_weights_grand(beta)))
    worst = 0.0
    for _, (length, prob) in law.items():
        worst = max(worst, prob * math.exp(beta * length))
    return worst


def transition_matrix(geometry: LatticeGeometry, move_acceptance,
                      budget: int = 1_000_000) -> np.ndarray:
    """Single-site chain kernel over all configurations of a small box.

    move_acceptance(field, x, y, dh) -> probability of accepting that move.
    Proposals pick an interior site uniformly and dh = +-1 with equal odds;
    rejected and invalid proposals stay put.
    """
    count = _check_budget(geometry, budget)
    base = 2 * geometry.hmax + 1
    L = geometry.interior_side
    nprop = 2 * L * L
    P = np.zeros((count, count))
    powers = base ** np.arange(L * L, dtype=np.int64)
    for s in range(count):
        f = field_from_index(geometry, s)
        for j in range(L * L):
            x, y = 1 + j // L, 1 + j % L
            for dh in (-1, 1):
                new = f.h[x, y] + dh
                if abs(new) > geometry.hmax:
                    P[s, s] += 1.0 / nprop
                    continue
                acc = move_acceptance(f, x, y, dh)
                s2 = s + dh * int(powers[j])
                P[s, s2] += acc / nprop
                P[s, s] += (1.0 - acc) / nprop
    return P
