import math

import numpy as np
import pytest
from scipy.stats import binom

from fogdrip.lattice import LatticeGeometry
from fogdrip.measure import (
    PhaseParams,
    bulk_cells,
    canonical_log_weights,
    count_mean,
    count_variance,
    delta_effective,
    sigma_exact,
    sigma_llt,
    solid_vapour_counts,
    target_count,
)


def oracle_log_pmf(ns, ps, nv, pv, target):
    """Independent route: full linear-space convolution of the two pmfs."""
    a = binom.pmf(np.arange(ns + 1), ns, ps)
    b = binom.pmf(np.arange(nv + 1), nv, pv)
    return math.log(np.convolve(a, b)[target])


def std_params():
    return PhaseParams.from_probabilities(0.2, 0.8)


def test_phase_params_derived_quantities():
    p = std_params()
    assert p.f == pytest.approx(0.0, abs=1e-15)
    assert p.pv == pytest.approx(0.2, rel=1e-14)
    assert p.ps == pytest.approx(0.8, rel=1e-14)
    assert p.psv == pytest.approx(0.6, rel=1e-14)
    assert p.Ds == pytest.approx(0.16, rel=1e-14)
    assert p.Dv == pytest.approx(0.16, rel=1e-14)
    assert p.D == pytest.approx(0.32, rel=1e-14)
    assert p.rho0 == pytest.approx(0.5, rel=1e-14)


def test_phase_params_nonzero_f():
    p = PhaseParams.from_probabilities(0.3, 0.55, f=1.25)
    assert p.f == pytest.approx(1.25, rel=1e-13)
    assert p.pv == pytest.approx(0.3, rel=1e-13)
    assert p.ps == pytest.approx(0.55, rel=1e-13)


def test_phase_params_balance_enforced():
    p = std_params()
    with pytest.raises(ValueError):
        PhaseParams(p.a + 1e-6, p.b, p.c, p.d)
    with pytest.raises(ValueError):
        PhaseParams.from_probabilities(0.8, 0.2)  # needs pv < ps


def test_counting_identities():
    p = std_params()
    geo = LatticeGeometry(N=4, R=2, hmax=2)
    assert bulk_cells(geo) == 4 * 64
    ns, nv = solid_vapour_counts(geo, 17)
    assert (ns, nv) == (256 + 17, 256 - 17)
    alpha = 17
    assert count_mean(p, geo, alpha) == pytest.approx(ns * p.ps + nv * p.pv, rel=1e-14)
    assert count_variance(p, geo, alpha) == pytest.approx(
        ns * p.Ds + nv * p.Dv, rel=1e-14)


def test_target_count_and_delta_effective():
    p = std_params()
    geo = LatticeGeometry(N=4, R=1, hmax=1)
    t = target_count(p, geo, 0.5)
    assert t == round(64 + 0.5 * 16)
    assert delta_effective(p, geo, t) == pytest.approx((t - 64.0) / 16.0, rel=1e-14)


def test_sigma_exact_matches_convolution_oracle():
    p = std_params()
    geo = LatticeGeometry(N=4, R=1, hmax=1)  # bulk 64 per side
    cases = [
        (5, 70, -2.645385601444164),
        (0, 64, -2.428381108408729),
        (-3, 80, -10.105120219837463),
        (5, 100, -29.655301365405315),
    ]
    for alpha, target, frozen in cases:
        got = sigma_exact(p, geo, alpha, target)
        assert got == pytest.approx(frozen, rel=1e-12)
        ns, nv = solid_vapour_counts(geo, alpha)
        assert got == pytest.approx(oracle_log_pmf(ns, p.ps, nv, p.pv, target),
                                    rel=1e-12)


def test_sigma_exact_asymmetric_probabilities():
    p = PhaseParams.from_probabilities(0.3, 0.55)
    geo = LatticeGeometry(N=4, R=1, hmax=1)
    got = sigma_exact(p, geo, 2, 55)
    assert got == pytest.approx(-2.610788307997944, rel=1e-12)


def test_sigma_exact_out_of_range():
    p = std_params()
    geo = LatticeGeometry(N=4, R=1, hmax=1)
    assert sigma_exact(p, geo, 0, -1) == -math.inf
    assert sigma_exact(p, geo, 0, 129) == -math.inf
    assert sigma_exact(p, geo, 0, 128) == pytest.approx(
        64 * math.log(0.8) + 64 * math.log(0.2), rel=1e-12)


def test_sigma_exact_normalizes():
    p = PhaseParams.from_probabilities(0.25, 0.7)
    geo = LatticeGeometry(N=3, R=1, hmax=1)  # bulk 27
    alpha = 4
    ns, nv = solid_vapour_counts(geo, alpha)
    total = sum(math.exp(sigma_exact(p, geo, alpha, t)) for t in range(ns + nv + 1))
    assert total == pytest.approx(1.0, rel=1e-10)


def test_sigma_llt_close_to_exact_at_scale():
    p = std_params()
    geo = LatticeGeometry(N=12, R=2, hmax=3)
    delta = 0.8
    t = target_count(p, geo, delta)
    deff = delta_effective(p, geo, t)
    for alpha in (0, 60, 240, -150):
        exact = sigma_exact(p, geo, alpha, t)
        llt = float(sigma_llt(p, geo, alpha, deff))
        assert abs(exact - llt) < 5e-3
    for alpha in (0, 60):
        # tight agreement near the center of the law
        assert abs(sigma_exact(p, geo, alpha, t)
                   - float(sigma_llt(p, geo, alpha, deff))) < 1e-5


def test_canonical_weights_hybrid_is_exact_near_peak():
    p = std_params()
    geo = LatticeGeometry(N=6, R=1, hmax=2)
    delta = 0.4  # keeps the peak alpha inside the reachable range
    w = canonical_log_weights(p, geo, delta, method="hybrid")
    we = canonical_log_weights(p, geo, delta, method="exact")
    assert w.target == we.target == target_count(p, geo, delta)
    peak = int(round(w.delta_eff * geo.N ** 2 / p.psv))
    for alpha in range(max(-geo.alpha_max, peak - 40),
                       min(geo.alpha_max, peak + 40) + 1):
        assert w.log_weight(alpha) == pytest.approx(we.log_weight(alpha),
                                                    rel=1e-12)
    # the table peaks where the count deviation vanishes
    best = int(w.alphas[np.argmax(w.log_q)])
    assert abs(best - peak) <= 1


def test_canonical_weights_llt_method():
    p = std_params()
    geo = LatticeGeometry(N=4, R=1, hmax=1)
    w = canonical_log_weights(p, geo, 0.5, method="llt")
    deff = w.delta_eff
    expect = float(sigma_llt(p, geo, 3, deff))
    assert w.log_weight(3) == pytest.approx(expect, rel=1e-14)
    with pytest.raises(ValueError):
        canonical_log_weights(p, geo, 0.5, method="bogus")
