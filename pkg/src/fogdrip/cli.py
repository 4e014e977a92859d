"""Command-line surface.

Subcommands: simulate (run one chain, or Wang-Landau), phase-diagram
(critical supersaturations and the minimizer table), wulff (optimal shape
and the restricted cost curve), oracle-check (exact small-box validation),
sweep (replicated delta grid censused against predictions).

Every run directory gets a manifest.json with the full configuration, seed
and library versions. Exit codes: 0 success, 1 failed check, 2 bad
configuration, 3 budget or convergence flag.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config, thread_cap, write_manifest

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3

# half bounding side of the R-square; all radii columns use this convention
RADII_NOTE = ("radii are half bounding sides in lattice units: r1 outer loop, "
              "r1tilde plaquette corner scale, r2 second layer")


def _add_common_model_flags(sp):
    sp.add_argument("--config", help="INI settings file")
    sp.add_argument("--beta", type=float, help="inverse temperature")
    sp.add_argument("--pv", type=float, help="vapour occupation probability")
    sp.add_argument("--ps", type=float, help="solid occupation probability")
    sp.add_argument("--f", type=float, help="shared free energy of the phases")
    sp.add_argument("--seed", type=int)


def _add_tension_flags(sp):
    sp.add_argument("--tension", dest="tension_model",
                    choices=("isotropic", "lattice-l1", "numeric-path"))
    sp.add_argument("--tension-beta", type=float,
                    help="tension beta when different from the model beta")
    sp.add_argument("--directions", type=int,
                    help="initial direction count of the shape construction")


def _overrides(args, keys):
    return {k: getattr(args, k, None) for k in keys}


def _write_csv(path, header, rows, comments=()):
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _print(msg):
    sys.stdout.write(msg + "\n")


def cmd_simulate(args) -> int:
    from .contours import extract_contours, write_contours_json
    from .sampler import (ChainConfig, EnsembleSpec, WangLandauConfig,
                          run_chain, wang_landau_alpha)

    cfg = load_config(args.config, _overrides(args, (
        "N", "R", "hmax", "beta", "pv", "ps", "f", "delta",
        "sweeps", "burnin", "thinning", "seed")))
    geo = cfg.geometry()
    params = cfg.params()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.wang_landau:
        wl_cfg = WangLandauConfig(
            geometry=geo, beta=cfg.beta, bin_width=args.bin_width,
            flatness=args.flatness, lnf_floor=args.lnf_floor, seed=cfg.seed,
            alpha_lo=args.alpha_lo, alpha_hi=args.alpha_hi)
        if args.max_stage_proposals is not None:
            wl_cfg.stage_max_proposals = args.max_stage_proposals
        wl = wang_landau_alpha(wl_cfg)
        _write_csv(out / "dos.csv", ("b", "logG", "visited", "histogram"),
                   zip(wl.b_centers, wl.log_g, wl.visited.astype(int),
                       wl.histogram))
        with open(out / "wl_summary.json", "w") as fh:
            json.dump({"stages": wl.stages, "partial": wl.partial},
                      fh, indent=2)
        write_manifest(out, cfg, "simulate",
                       {"mode": "wang-landau", "partial": wl.partial})
        _print(f"density of states over {int(wl.visited.sum())} bins -> {out}")
        if wl.partial:
            _print("convergence budget exhausted; results flagged partial")
            return EXIT_BUDGET
        return EXIT_OK

    if args.ensemble == "pinned":
        if args.alpha_lo is None or args.alpha_hi is None:
            raise ConfigError("pinned ensemble needs --alpha-lo and --alpha-hi")
        spec = EnsembleSpec("pinned", window=(args.alpha_lo, args.alpha_hi))
    elif args.ensemble == "canonical":
        spec = EnsembleSpec("canonical", delta=cfg.delta)
    else:
        spec = EnsembleSpec("grand")

    result = run_chain(ChainConfig(
        geometry=geo, beta=cfg.beta, ensemble=spec, params=params,
        sweeps=cfg.sweeps, burnin=cfg.burnin, thinning=cfg.thinning,
        seed=cfg.seed, snapshot_every=args.snapshot_every))

    _write_csv(out / "series.csv", ("sweep", "energy", "alpha"),
               zip(result.sweeps, result.energies, result.alphas))
    np.savetxt(out / "final_field.csv", result.final.h, fmt="%d",
               delimiter=",")
    write_contours_json(extract_contours(result.final),
                        out / "contours.json")
    snapdir = out / "snapshots"
    for sweep, field in result.snapshots:
        snapdir.mkdir(exist_ok=True)
        np.savetxt(snapdir / f"snap_{sweep:08d}.csv", field.h, fmt="%d",
                   delimiter=",")
    write_manifest(out, cfg, "simulate", {
        "mode": args.ensemble,
        "acceptance_rate": result.acceptance_rate,
        "iat_alpha": result.iat_alpha})
    _print(f"{cfg.sweeps} sweeps, acceptance {result.acceptance_rate:.3f}, "
           f"alpha autocorrelation {result.iat_alpha:.1f} -> {out}")
    return EXIT_OK


def cmd_phase_diagram(args) -> int:
    from .phase import critical_values

    cfg = load_config(args.config, _overrides(args, (
        "beta", "pv", "ps", "f", "tension_model", "tension_beta",
        "directions")))
    params = cfg.params()
    shape = cfg.shape()
    R = args.R if args.R is not None else float(cfg.R)
    if R <= 0:
        raise ConfigError(f"R must be positive, got {R}")
    try:
        cv = critical_values(params, shape, R, strict=args.strict)
    except ValueError as e:
        raise ConfigError(str(e)) from e

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scalars = {k: getattr(cv, k) for k in (
        "delta1_analytic", "delta1_numeric", "delta15", "delta2", "delta25",
        "rho_minus", "rho_plus", "r_cr", "r_cr_jump", "r_cr_analytic",
        "fits", "required_R", "multiplicity_at_delta1",
        "multiplicity_at_delta2")}
    scalars["excluded_interval"] = list(cv.excluded_interval)
    scalars["R"] = R
    scalars["radii_convention"] = RADII_NOTE
    with open(out / "critical_values.json", "w") as fh:
        json.dump(scalars, fh, indent=2, default=float)
    _write_csv(out / "phase_table.csv",
               ("delta", "rhoStar", "k", "r1", "r1tilde", "r2", "Fmin",
                "multiplicity"),
               zip(cv.deltas, cv.rho_star, cv.k, cv.r1, cv.r1_tilde, cv.r2,
                   cv.f_min, cv.multiplicity),
               comments=(RADII_NOTE,))
    write_manifest(out, cfg, "phase-diagram", {"R": R})
    _print(f"dew point delta1 = {cv.delta1_numeric:.6g} "
           f"(analytic {cv.delta1_analytic:.6g}), layer jump at "
           f"{cv.delta2:.6g} -> {out}")
    if not cv.fits and args.strict:
        return EXIT_CONFIG
    return EXIT_OK


def cmd_wulff(args) -> int:
    from .wulff import restricted_cost

    cfg = load_config(args.config, _overrides(args, (
        "beta", "tension_model", "tension_beta", "directions")))
    shape = cfg.shape()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "shape.json", "w") as fh:
        json.dump({
            "model": shape.tension.model,
            "beta": shape.tension.beta,
            "costUnit": shape.cost_unit,
            "S1": shape.S1,
            "boundingSide": shape.bounding_side,
            "tauAxis": shape.tau_axis,
            "directions": shape.directions,
            "polygon": shape.polygon.tolist(),
        }, fh, indent=2)
    samples = max(2, args.samples)
    grid = np.linspace(0.0, 2.0 * (1.0 - 1e-9), samples)
    rows = []
    for s in grid:
        sol = restricted_cost(shape, float(s))
        rows.append((s, sol.value, sol.k, sol.regime, sol.corner_radius))
    _write_csv(out / "restricted.csv",
               ("S", "wrst", "k", "regime", "cornerRadius"), rows,
               comments=(f"S1 = {float(shape.S1)!r}, "
                         f"costUnit = {float(shape.cost_unit)!r}",
                         "cornerRadius is the plaquette corner scale in "
                         "units of the half box side"))
    write_manifest(out, cfg, "wulff")
    _print(f"cost unit {shape.cost_unit:.6f}, S1 {shape.S1:.6f} -> {out}")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    from .lattice import LatticeGeometry
    from .measure import PhaseParams
    from .oracle import EnumeratedEnsemble, transition_matrix
    from .sampler import EnsembleSpec, make_move_acceptance

    try:
        geo = LatticeGeometry.from_interior(args.L, hmax=args.hmax)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    params = PhaseParams.from_probabilities(args.pv, args.ps)
    ens = EnumeratedEnsemble.build(geo)
    failures = 0

    def check(name, ok, detail=""):
        nonlocal failures
        _print(f"{'PASS' if ok else 'FAIL'}  {name}{'  ' + detail if detail else ''}")
        failures += 0 if ok else 1

    probs = ens.probabilities(ens.log_weights_grand(args.beta))
    check("grand law normalizes", abs(probs.sum() - 1.0) < 1e-12)
    check("grand mean alpha vanishes", abs(ens.mean_alpha(probs)) < 1e-12,
          f"|mean| = {abs(ens.mean_alpha(probs)):.2e}")
    bs, law = ens.alpha_law(probs)
    sym = max(abs(law[i] - law[len(law) - 1 - i]) for i in range(len(law)))
    check("alpha law symmetric under height flip", sym < 1e-12)

    specs = [EnsembleSpec("grand")]
    if args.delta is not None:
        specs.append(EnsembleSpec("canonical", delta=args.delta))
    for spec in specs:
        if spec.kind == "grand":
            lw = ens.log_weights_grand(args.beta)
        else:
            lw = ens.log_weights_canonical(args.beta, params, spec.delta)
        pi = ens.probabilities(lw)
        P = transition_matrix(geo, make_move_acceptance(
            params, geo, args.beta, spec))
        flow = pi[:, None] * P
        db = np.abs(flow - flow.T).max()
        check(f"{spec.kind} detailed balance", db < 1e-12,
              f"max violation {db:.2e}")
        drift = np.abs(pi @ P - pi).max()
        check(f"{spec.kind} law is stationary", drift < 1e-12)

    from importlib import resources
    ref = resources.files("fogdrip").joinpath("data/golden_small_exact.json")
    golden = json.loads(ref.read_text())
    matched = 0
    for case in golden["cases"]:
        g = case["geometry"]
        e = case["ensemble"]
        if (g["N"], g["hmax"]) != (geo.N, geo.hmax):
            continue
        if abs(e["beta"] - args.beta) > 1e-12 or e["kind"] != "grand":
            continue
        matched += 1
        lw = ens.log_weights_grand(e["beta"])
        pr = ens.probabilities(lw)
        ok = abs(ens.log_partition(lw) - case["log_partition"]) < 1e-10
        ok = ok and abs(ens.mean_energy(pr) - case["mean_energy"]) < 1e-10
        check("golden file comparison", ok, f"N={g['N']} hmax={g['hmax']}")
    if not matched:
        _print(f"note: no stored golden case at L={args.L} hmax={args.hmax} "
               f"beta={args.beta}; exact checks above still apply")
    return EXIT_OK if failures == 0 else EXIT_FAIL


def _parse_deltas(args) -> np.ndarray:
    if args.deltas:
        try:
            return np.array([float(x) for x in args.deltas.split(",") if x])
        except ValueError as e:
            raise ConfigError(f"bad --deltas list: {args.deltas!r}") from e
    if args.delta_min is None or args.delta_max is None:
        raise ConfigError("sweep needs --deltas or --delta-min/--delta-max")
    if args.delta_points < 1:
        raise ConfigError("--delta-points must be >= 1")
    return np.linspace(args.delta_min, args.delta_max, args.delta_points)


def cmd_sweep(args) -> int:
    from .analysis import SweepConfig, sweep_experiment

    cfg = load_config(args.config, _overrides(args, (
        "N", "R", "hmax", "beta", "pv", "ps", "f", "sweeps", "burnin",
        "thinning", "seed", "replicates", "epsilon", "tension_model",
        "tension_beta", "directions")))
    geo = cfg.geometry()
    params = cfg.params()
    shape = cfg.shape()
    deltas = _parse_deltas(args)
    if args.init not in ("predicted", "flat"):
        raise ConfigError(f"unknown init mode {args.init!r}")

    report = sweep_experiment(SweepConfig(
        geometry=geo, params=params, beta=cfg.beta, shape=shape,
        deltas=deltas, replicates=cfg.replicates, sweeps=cfg.sweeps,
        burnin=cfg.burnin, thinning=cfg.thinning, seed=cfg.seed,
        epsilon=cfg.epsilon, init=args.init,
        budget_seconds=args.budget_seconds))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = report.row_dicts()
    header = list(rows[0].keys()) if rows else [
        "delta", "n_samples", "mean_gamma0_alpha", "gamma0_bound_fraction",
        "predicted_rho", "predicted_alpha", "predicted_verdict",
        "frac_flat", "frac_one-monolayer", "frac_two-monolayer", "frac_other"]
    _write_csv(out / "sweep.csv", header,
               [[r[k] for k in header] for r in rows])
    # strict JSON has no NaN literal, so missing aggregates become null
    clean = [{k: (None if isinstance(v, float) and math.isnan(v) else v)
              for k, v in r.items()} for r in rows]
    with open(out / "sweep_summary.json", "w") as fh:
        json.dump({"partial": report.partial, "epsilon": report.epsilon,
                   "replicates": report.replicates, "seed": report.seed,
                   "init": args.init, "rows": clean}, fh, indent=2,
                  default=float)
    write_manifest(out, cfg, "sweep",
                   {"deltas": list(map(float, deltas)),
                    "init": args.init, "partial": report.partial})
    for r in report.rows:
        top = max(r.fractions, key=r.fractions.get)
        _print(f"delta {r.delta:10.4f}  {top:>14} {r.fractions[top]:.2f}  "
               f"predicted {r.predicted_verdict}")
    if report.partial:
        _print("budget exhausted; partial results flagged")
        return EXIT_BUDGET
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="fogdrip",
        description="Interface simulator and droplet phase-diagram solver")
    sub = top.add_subparsers(dest="command")

    sp = sub.add_parser("simulate", help="run one sampling chain")
    _add_common_model_flags(sp)
    sp.add_argument("--ensemble", choices=("grand", "canonical", "pinned"),
                    default="grand")
    sp.add_argument("--N", type=int, help="box scale: side = R*N")
    sp.add_argument("--R", type=int, help="squares per side")
    sp.add_argument("--hmax", type=int, help="height cutoff")
    sp.add_argument("--delta", type=float, help="supersaturation (canonical)")
    sp.add_argument("--sweeps", type=int)
    sp.add_argument("--burnin", type=int)
    sp.add_argument("--thinning", type=int)
    sp.add_argument("--snapshot-every", type=int, default=0)
    sp.add_argument("--alpha-lo", type=int, help="volume window low edge")
    sp.add_argument("--alpha-hi", type=int, help="volume window high edge")
    sp.add_argument("--wang-landau", action="store_true",
                    help="estimate the volume law instead of sampling")
    sp.add_argument("--bin-width", type=int, default=4)
    sp.add_argument("--flatness", type=float, default=0.8)
    sp.add_argument("--lnf-floor", type=float, default=1e-8)
    sp.add_argument("--max-stage-proposals", type=int,
                    help="per-stage proposal cap; exceeding it flags partial")
    sp.add_argument("--out", default="fogdrip-run")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("phase-diagram",
                        help="critical supersaturations and minimizer table")
    _add_common_model_flags(sp)
    _add_tension_flags(sp)
    sp.add_argument("--R", type=float, help="squares per side")
    sp.add_argument("--strict", action="store_true",
                    help="reject geometries violating the fitting condition")
    sp.add_argument("--out", default="fogdrip-phase")
    sp.set_defaults(func=cmd_phase_diagram)

    sp = sub.add_parser("wulff",
                        help="optimal droplet shape and restricted cost")
    sp.add_argument("--config", help="INI settings file")
    sp.add_argument("--beta", type=float)
    _add_tension_flags(sp)
    sp.add_argument("--samples", type=int, default=200,
                    help="grid points of the restricted cost curve")
    sp.add_argument("--out", default="fogdrip-wulff")
    sp.set_defaults(func=cmd_wulff)

    sp = sub.add_parser("oracle-check",
                        help="exact checks on an enumerable box")
    sp.add_argument("--L", type=int, required=True, help="interior side")
    sp.add_argument("--hmax", type=int, default=1)
    sp.add_argument("--beta", type=float, default=1.5)
    sp.add_argument("--delta", type=float,
                    help="also check the canonical ensemble at this delta")
    sp.add_argument("--pv", type=float, default=0.2)
    sp.add_argument("--ps", type=float, default=0.8)
    sp.set_defaults(func=cmd_oracle_check)

    sp = sub.add_parser("sweep",
                        help="replicated delta grid vs phase diagram")
    _add_common_model_flags(sp)
    _add_tension_flags(sp)
    sp.add_argument("--N", type=int)
    sp.add_argument("--R", type=int)
    sp.add_argument("--hmax", type=int)
    sp.add_argument("--sweeps", type=int)
    sp.add_argument("--burnin", type=int)
    sp.add_argument("--thinning", type=int)
    sp.add_argument("--replicates", type=int)
    sp.add_argument("--epsilon", type=float,
                    help="large-contour threshold factor")
    sp.add_argument("--deltas", help="comma-separated supersaturations")
    sp.add_argument("--delta-min", type=float)
    sp.add_argument("--delta-max", type=float)
    sp.add_argument("--delta-points", type=int, default=12)
    sp.add_argument("--init", default="predicted",
                    help="chain start: predicted or flat")
    sp.add_argument("--budget-seconds", type=float)
    sp.add_argument("--out", default="fogdrip-sweep")
    sp.set_defaults(func=cmd_sweep)
    return top


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    # honor the thread cap early so a bad value fails before any work
    try:
        thread_cap()
        return args.func(args)
    except ConfigError as e:
        sys.stderr.write(f"configuration error: {e}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
