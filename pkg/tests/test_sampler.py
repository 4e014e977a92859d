import math

import numpy as np
import pytest

from fogdrip import kernels
from fogdrip.lattice import HeightField, LatticeGeometry, perimeter_sum, signed_volume
from fogdrip.measure import PhaseParams
from fogdrip.oracle import EnumeratedEnsemble
from fogdrip.sampler import (
    ChainConfig,
    ChainState,
    EnsembleSpec,
    WangLandauConfig,
    classify_contours,
    initial_field,
    integrated_autocorrelation,
    make_move_acceptance,
    run_chain,
    wang_landau_alpha,
)
from fogdrip.contours import extract_contours


GEO3 = LatticeGeometry.from_interior(3, hmax=1)
PARAMS = PhaseParams.from_probabilities(0.2, 0.8)


def tv_distance(law_a: dict, law_b: dict) -> float:
    keys = set(law_a) | set(law_b)
    return 0.5 * sum(abs(law_a.get(k, 0.0) - law_b.get(k, 0.0)) for k in keys)


def empirical_alpha_law(alphas) -> dict:
    vals, counts = np.unique(np.asarray(alphas), return_counts=True)
    return dict(zip(vals.tolist(), (counts / counts.sum()).tolist()))


def exact_alpha_law(ens, logw) -> dict:
    av, am = ens.alpha_law(ens.probabilities(logw))
    return dict(zip(av.tolist(), am.tolist()))


def test_ensemble_spec_validation():
    with pytest.raises(ValueError):
        EnsembleSpec("bogus")
    with pytest.raises(ValueError):
        EnsembleSpec("pinned")
    with pytest.raises(ValueError):
        EnsembleSpec("pinned", window=(3, 1))
    with pytest.raises(ValueError):
        EnsembleSpec("canonical", delta=0.5).weight_table(None, GEO3)


def test_flat_state_acceptance_closed_form():
    # raising any site of a flat field costs dE = 4
    beta = 2.0
    acc = make_move_acceptance(PARAMS, GEO3, beta, EnsembleSpec("grand"))
    f = HeightField(GEO3)
    assert acc(f, 2, 2, 1) == pytest.approx(math.exp(-4 * beta), rel=1e-14)
    assert acc(f, 2, 2, -1) == pytest.approx(math.exp(-4 * beta), rel=1e-14)
    # moves past the cutoff are auto-rejected
    f.h[2, 2] = 1
    assert acc(f, 2, 2, 1) == 0.0


def test_kernel_matches_python_reference():
    for spec in (EnsembleSpec("grand"),
                 EnsembleSpec("canonical", delta=0.5),
                 EnsembleSpec("pinned", window=(-2, 3))):
        base = dict(geometry=GEO3, beta=1.4, ensemble=spec, params=PARAMS,
                    sweeps=400, seed=99)
        rk = run_chain(ChainConfig(**base, use_kernel=True))
        rp = run_chain(ChainConfig(**base, use_kernel=False))
        assert np.array_equal(rk.final.h, rp.final.h)
        assert np.array_equal(rk.energies, rp.energies)
        assert np.array_equal(rk.alphas, rp.alphas)
        assert rk.acceptance_rate == rp.acceptance_rate


def test_same_seed_bit_identical():
    cfg = ChainConfig(geometry=GEO3, beta=1.5, ensemble=EnsembleSpec("grand"),
                      sweeps=300, seed=7, snapshot_every=100)
    r1, r2 = run_chain(cfg), run_chain(cfg)
    assert np.array_equal(r1.final.h, r2.final.h)
    assert np.array_equal(r1.energies, r2.energies)
    assert [s for s, _ in r1.snapshots] == [100, 200, 300]
    for (_, f1), (_, f2) in zip(r1.snapshots, r2.snapshots):
        assert f1 == f2


def test_zero_sweeps_initial_state_only():
    cfg = ChainConfig(geometry=GEO3, beta=1.5, ensemble=EnsembleSpec("grand"),
                      sweeps=0, burnin=0, seed=1)
    r = run_chain(cfg)
    assert r.sweeps.tolist() == [0]
    assert r.energies.tolist() == [0]
    assert r.alphas.tolist() == [0]
    assert r.final == HeightField(GEO3)


def test_burnin_and_thinning_schedule():
    cfg = ChainConfig(geometry=GEO3, beta=1.5, ensemble=EnsembleSpec("grand"),
                      sweeps=100, burnin=40, thinning=20, seed=3)
    r = run_chain(cfg)
    assert r.sweeps.tolist() == [60, 80, 100]


def test_audit_detects_tampering():
    state = ChainState.fresh(GEO3, seed=0)
    state.audit()
    state.alpha += 1
    with pytest.raises(RuntimeError):
        state.audit()


def test_initial_field_for_pinned_window():
    spec = EnsembleSpec("pinned", window=(5, 9))
    f = initial_field(GEO3, spec)
    assert signed_volume(f) == 5
    f.validate()
    spec = EnsembleSpec("pinned", window=(-9, -7))
    assert signed_volume(initial_field(GEO3, spec)) == -7
    with pytest.raises(ValueError):
        initial_field(GEO3, EnsembleSpec("pinned", window=(50, 60)))


def test_pinned_chain_stays_in_window():
    spec = EnsembleSpec("pinned", window=(1, 4))
    r = run_chain(ChainConfig(geometry=GEO3, beta=1.2, ensemble=spec,
                              sweeps=3000, burnin=0, seed=11))
    assert r.alphas.min() >= 1
    assert r.alphas.max() <= 4


def test_grand_chain_matches_oracle_law():
    ens = EnumeratedEnsemble.build(GEO3)
    beta = 1.5
    r = run_chain(ChainConfig(geometry=GEO3, beta=beta,
                              ensemble=EnsembleSpec("grand"),
                              sweeps=120_000, burnin=5000, seed=20260816))
    tv = tv_distance(empirical_alpha_law(r.alphas),
                     exact_alpha_law(ens, ens.log_weights_grand(beta)))
    assert tv < 0.03


def test_canonical_chain_matches_oracle_law():
    ens = EnumeratedEnsemble.build(GEO3)
    beta, delta = 1.5, 0.5
    spec = EnsembleSpec("canonical", delta=delta)
    r = run_chain(ChainConfig(geometry=GEO3, beta=beta, ensemble=spec,
                              params=PARAMS, sweeps=120_000, burnin=5000,
                              seed=4))
    tv = tv_distance(empirical_alpha_law(r.alphas),
                     exact_alpha_law(ens, ens.log_weights_canonical(beta, PARAMS, delta)))
    assert tv < 0.03


def test_shifted_weight_table_same_trajectory():
    # acceptance depends only on weight differences
    geo = GEO3
    spec = EnsembleSpec("canonical", delta=0.5)
    logw, off, use = spec.weight_table(PARAMS, geo)
    rng = np.random.default_rng(77)
    n = 200 * geo.interior_sites
    xs = rng.integers(1, geo.side - 1, size=n, dtype=np.int64)
    ys = rng.integers(1, geo.side - 1, size=n, dtype=np.int64)
    dhs = rng.integers(0, 2, size=n, dtype=np.int64) * 2 - 1
    us = rng.random(n)
    outs = []
    for shift in (0.0, 7.25):
        f = HeightField(geo)
        a_out = np.empty(200, dtype=np.int64)
        e_out = np.empty(200, dtype=np.int64)
        fin = kernels.metropolis_alpha_trace(
            f.h, geo.hmax, 1.5, xs, ys, dhs, us, logw + shift, off, use,
            0, 0, geo.interior_sites, a_out, e_out)
        outs.append((f.h.copy(), a_out.copy(), e_out.copy(), fin))
    assert np.array_equal(outs[0][0], outs[1][0])
    assert np.array_equal(outs[0][1], outs[1][1])
    assert outs[0][3] == outs[1][3]


def test_iat_on_known_series():
    rng = np.random.default_rng(123)
    iid = rng.normal(size=20000)
    assert integrated_autocorrelation(iid) == pytest.approx(1.0, abs=0.1)
    assert integrated_autocorrelation(np.ones(100)) == 1.0
    rho = 0.8
    ar = np.empty(200_000)
    ar[0] = 0.0
    noise = rng.normal(size=len(ar))
    for i in range(1, len(ar)):
        ar[i] = rho * ar[i - 1] + noise[i]
    want = (1 + rho) / (1 - rho)  # = 9
    assert integrated_autocorrelation(ar) == pytest.approx(want, rel=0.15)


def test_wang_landau_matches_exact_law():
    ens = EnumeratedEnsemble.build(GEO3)
    beta = 1.5
    wl = wang_landau_alpha(WangLandauConfig(geometry=GEO3, beta=beta,
                                            bin_width=1, lnf_floor=1e-6,
                                            seed=5))
    assert not wl.partial
    b, g = wl.normalized()
    law = exact_alpha_law(ens, ens.log_weights_grand(beta))
    ref0 = math.log(law[0])
    for bi, gi in zip(b.astype(int), g):
        assert abs(gi - (math.log(law[bi]) - ref0)) < 0.4
    # symmetric weights give a symmetric estimate, up to sampling noise
    got = dict(zip(b.astype(int), g))
    asym = np.mean([abs(got[a] - got[-a]) for a in got])
    assert asym < 0.5


def test_wang_landau_partial_flag():
    wl = wang_landau_alpha(WangLandauConfig(geometry=GEO3, beta=1.5,
                                            bin_width=1, seed=6,
                                            stage_max_proposals=500))
    assert wl.partial
    assert any(not s["flat"] for s in wl.stages)


def test_wang_landau_alpha_window():
    ens = EnumeratedEnsemble.build(GEO3)
    beta = 1.5
    wl = wang_landau_alpha(WangLandauConfig(geometry=GEO3, beta=beta,
                                            bin_width=1, lnf_floor=1e-6,
                                            seed=7, alpha_lo=-4, alpha_hi=4))
    assert not wl.partial
    b, g = wl.normalized()
    # the walk never leaves the window
    assert b.min() >= -4 and b.max() <= 4
    assert set(b.astype(int)) == set(range(-4, 5))
    law = exact_alpha_law(ens, ens.log_weights_grand(beta))
    ref0 = math.log(law[0])
    for bi, gi in zip(b.astype(int), g):
        assert abs(gi - (math.log(law[bi]) - ref0)) < 0.4
    with pytest.raises(ValueError, match="flat state"):
        wang_landau_alpha(WangLandauConfig(geometry=GEO3, beta=beta,
                                           alpha_lo=2, alpha_hi=5))


def test_classify_contours_thresholds():
    geo64 = LatticeGeometry(N=64, R=1, hmax=4)
    f = HeightField(geo64)
    f.h[10, 10] = 1
    fam = extract_contours(f)
    out = classify_contours(fam, geo64, epsilon=1.0)
    assert [c.length for c in out["small"]] == [4]  # 4 <= log(64) ~ 4.16
    assert not out["intermediate"] and not out["large"]

    geo40 = LatticeGeometry(N=40, R=1, hmax=4)
    f = HeightField(geo40)
    f.h[10, 10] = 1
    out = classify_contours(extract_contours(f), geo40, epsilon=1.0)
    assert [c.length for c in out["intermediate"]] == [4]  # log(40) ~ 3.7 < 4 < 40

    f = HeightField(geo40)
    f.h[5:25, 5:25] = 1  # perimeter 80 >= N
    out = classify_contours(extract_contours(f), geo40, epsilon=1.0)
    assert [c.length for c in out["large"]] == [80]

    out = classify_contours(extract_contours(HeightField(geo40)), geo40)
    assert not out["small"] and not out["intermediate"] and not out["large"]
    with pytest.raises(ValueError):
        classify_contours(fam, geo64, epsilon=0.0)


def test_canonical_ensemble_requires_finite_start():
    spec = EnsembleSpec("pinned", window=(2, 4))
    flat = HeightField(GEO3)
    with pytest.raises(ValueError):
        run_chain(ChainConfig(geometry=GEO3, beta=1.5, ensemble=spec,
                              sweeps=10, seed=0, init=flat))
