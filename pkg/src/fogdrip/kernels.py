"""Compiled hot loops for the single-site Metropolis chain.

Each kernel consumes pre-generated proposal arrays (site coordinates, step
signs, uniform variates) so that runs are bit-deterministic for a fixed seed
and the pure-python reference implementation can be driven by the identical
stream. Heights are int64 arrays on the full padded grid; energy and signed
volume are tracked incrementally and returned for checkpoint audits.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NEG_INF = float("-inf")


@njit(cache=True)
def metropolis_block(h, hmax, beta, xs, ys, dhs, us,
                     logw, w_off, use_w, alpha, energy):
    """Run one block of proposals in place.

    logw is a table of ensemble log weights indexed by alpha + w_off (pass a
    one-element dummy with use_w=0 for the grand ensemble). Returns the
    updated (alpha, energy, accepted-count).
    """
    accepted = 0
    for i in range(xs.shape[0]):
        x = xs[i]
        y = ys[i]
        dh = dhs[i]
        old = h[x, y]
        new = old + dh
        if new > hmax or new < -hmax:
            continue
        de = 0
        hn = h[x - 1, y]
        de += abs(new - hn) - abs(old - hn)
        hn = h[x + 1, y]
        de += abs(new - hn) - abs(old - hn)
        hn = h[x, y - 1]
        de += abs(new - hn) - abs(old - hn)
        hn = h[x, y + 1]
        de += abs(new - hn) - abs(old - hn)
        log_ratio = -beta * de
        if use_w != 0:
            lw_new = logw[alpha + dh + w_off]
            if lw_new == NEG_INF:
                continue
            log_ratio += lw_new - logw[alpha + w_off]
        if log_ratio >= 0.0 or us[i] < np.exp(log_ratio):
            h[x, y] = new
            alpha += dh
            energy += de
            accepted += 1
    return alpha, energy, accepted


@njit(cache=True)
def metropolis_alpha_trace(h, hmax, beta, xs, ys, dhs, us,
                           logw, w_off, use_w, alpha, energy,
                           per_sweep, alpha_out, energy_out):
    """Metropolis block that records (alpha, energy) every per_sweep proposals.

    alpha_out/energy_out must hold xs.size // per_sweep entries. Returns the
    final (alpha, energy, accepted-count).
    """
    accepted = 0
    n = xs.shape[0]
    k = 0
    for i in range(n):
        x = xs[i]
        y = ys[i]
        dh = dhs[i]
        old = h[x, y]
        new = old + dh
        ok = True
        if new > hmax or new < -hmax:
            ok = False
        if ok:
            de = 0
            hn = h[x - 1, y]
            de += abs(new - hn) - abs(old - hn)
            hn = h[x + 1, y]
            de += abs(new - hn) - abs(old - hn)
            hn = h[x, y - 1]
            de += abs(new - hn) - abs(old - hn)
            hn = h[x, y + 1]
            de += abs(new - hn) - abs(old - hn)
            log_ratio = -beta * de
            if use_w != 0:
                lw_new = logw[alpha + dh + w_off]
                if lw_new == NEG_INF:
                    ok = False
                else:
                    log_ratio += lw_new - logw[alpha + w_off]
            if ok and (log_ratio >= 0.0 or us[i] < np.exp(log_ratio)):
                h[x, y] = new
                alpha += dh
                energy += de
                accepted += 1
        if (i + 1) % per_sweep == 0:
            alpha_out[k] = alpha
            energy_out[k] = energy
            k += 1
    return alpha, energy, accepted


@njit(cache=True)
def wang_landau_block(h, hmax, beta, xs, ys, dhs, us,
                      log_g, hist, bin_off, bin_w, lnf, alpha, energy,
                      a_lo, a_hi):
    """Flat-histogram block over signed-volume bins.

    Bin index of alpha is (alpha + bin_off) // bin_w. Every proposal updates
    log_g and hist at the current bin (standard Wang-Landau bookkeeping).
    Acceptance is min(1, exp(-beta dE + logG(old bin) - logG(new bin))).
    Proposals leaving [a_lo, a_hi] are rejected, confining the walk.
    """
    accepted = 0
    for i in range(xs.shape[0]):
        x = xs[i]
        y = ys[i]
        dh = dhs[i]
        old = h[x, y]
        new = old + dh
        a_new = alpha + dh
        ok = new <= hmax and new >= -hmax and a_new >= a_lo and a_new <= a_hi
        if ok:
            de = 0
            hn = h[x - 1, y]
            de += abs(new - hn) - abs(old - hn)
            hn = h[x + 1, y]
            de += abs(new - hn) - abs(old - hn)
            hn = h[x, y - 1]
            de += abs(new - hn) - abs(old - hn)
            hn = h[x, y + 1]
            de += abs(new - hn) - abs(old - hn)
            b_old = (alpha + bin_off) // bin_w
            b_new = (alpha + dh + bin_off) // bin_w
            log_ratio = -beta * de + log_g[b_old] - log_g[b_new]
            if log_ratio >= 0.0 or us[i] < np.exp(log_ratio):
                h[x, y] = new
                alpha += dh
                energy += de
                accepted += 1
        b = (alpha + bin_off) // bin_w
        log_g[b] += lnf
        hist[b] += 1
    return alpha, energy, accepted
