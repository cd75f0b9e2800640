"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``.  Tolerances are
fixed here and never adapted to measured values.
"""

import math
import time
import warnings

import numpy as np
import pytest

import conftest
from udnlab import cli
from udnlab.association import AssociationPolicy, Rule
from udnlab.channel import PathLossModel, los_probability, path_loss_db
from udnlab.mcengine import (Scenario, empirical_activation, run_fixed_layout, run_trials,
                             sample_deployment, window_for)
from udnlab.oracle import coverage_closed_form, isolated_cell_coverage
from udnlab.scaling import is_unimodal, log_grid, optimize_bs_density, optimize_ue_density

HEIGHT = PathLossModel.height_aware(8.5)
DS = PathLossModel.dual_slope()


def report(cid, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {cid}: {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def direct(batch):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return batch.coverage()


def test_c1_oracle_equivalence():
    oracle = coverage_closed_form(4.0, 1.0)
    t0 = time.perf_counter()
    vals = {}
    for lam in (1e2, 1e3, 1e4):
        scn = Scenario(lam, noise_dbm=None, path_loss_model=PathLossModel.single_slope(exponent=4.0),
                       association=AssociationPolicy(Rule.NEAREST), trials=100_000, master_seed=101)
        vals[lam] = direct(run_trials(scn)).probability
    elapsed = time.perf_counter() - t0
    ok = all(abs(v - 0.560) <= 0.010 for v in vals.values()) and elapsed < 120
    detail = ", ".join(f"lambda={k:g}: {v:.4f}" for k, v in vals.items())
    assert report(1, ok, f"{detail} (target 0.560 +- 0.010, oracle {oracle:.4f}); "
                         f"runtime {elapsed:.0f} s (< 120 s)")


def test_c2_isolated_cell():
    scn = Scenario(1.0, trials=100_000, master_seed=102)
    c = direct(run_fixed_layout(scn, [[1.0, 0.0]], los=[True]))
    exact = isolated_cell_coverage(1.0, 24.0, -95.0, DS, 1.0)
    ok = abs(c.probability - 0.970) <= 0.005
    assert report(2, ok, f"coverage {c.probability:.4f} (target 0.970 +- 0.005, exact {exact:.5f})")


def test_c3_ase_crawl():
    n = 50_000
    res = {}
    for lam in (1e2, 1e3, 1e4, 1e5):
        b = run_trials(Scenario(lam, path_loss_model=DS, trials=n, master_seed=103))
        res[lam] = (direct(b), b.ase())
    c2, c3 = res[1e2][0], res[1e3][0]
    gap = c2.probability - c3.probability
    joint = math.hypot(c2.ci95_halfwidth, c3.ci95_halfwidth)
    a = {k: v[1].ase_bps_hz_km2 for k, v in res.items()}
    crawl = a[1e3] / a[1e2]
    recover = a[1e5] / a[1e4]
    checks = {"coverage drop beyond joint CI": gap > joint,
              "ASE(1e3)/ASE(1e2) < 10": crawl < 10,
              "ASE(1e5)/ASE(1e4) in [8, 12]": 8 <= recover <= 12,
              "recovery ratio exceeds crawl ratio": recover > crawl}
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    assert report(3, ok, f"coverage 1e2 {c2.probability:.4f}, 1e3 {c3.probability:.4f} "
                         f"(gap {gap:.4f} vs joint CI {joint:.4f}); ASE ratio 1e3/1e2 {crawl:.2f}, "
                         f"1e5/1e4 {recover:.2f}" + (f"; failed: {failed}; model note: the "
                         "independent PGFL integrator gives coverage 0.1729 (1e4) and 0.1307 "
                         "(1e5), an ASE ratio of 7.56 for this LoS model" if failed else ""))


def test_c4_ase_crash():
    n = 20_000
    cov, ase, logc, dcov = {}, {}, {}, {}
    for lam in (1e4, 1e5, 1e6):
        b = run_trials(Scenario(lam, path_loss_model=HEIGHT, trials=n, master_seed=104),
                       conditional=True)
        cov[lam] = b.coverage(method="conditional")
        ase[lam] = b.ase(method="conditional")
        logc[lam] = b.log10_conditional_coverage()
        dcov[lam] = direct(b).probability
    strict = all(cov[a].probability - cov[a].ci95_halfwidth > cov[b].probability + cov[b].ci95_halfwidth
                 for a, b in ((1e4, 1e5), (1e5, 1e6)))
    log_strict = logc[1e4] > logc[1e5] > logc[1e6]
    crash = ase[1e6].ase_bps_hz_km2 < ase[1e5].ase_bps_hz_km2
    ok = strict and log_strict and crash
    detail = "; ".join(f"lambda={k:g}: coverage {cov[k].probability:.3g} +- {cov[k].ci95_halfwidth:.2g} "
                       f"(log10 {logc[k]:.1f}, direct count {dcov[k]:.4f})" for k in cov)
    assert report(4, ok, f"conditional estimator: {detail}; ASE 1e5 {ase[1e5].ase_bps_hz_km2:.3g}, "
                         f"1e6 {ase[1e6].ase_bps_hz_km2:.3g}")


def test_c5_near_field_locality():
    n = 20_000
    rel = {}
    for lam in (1e2, 1e3, 1e4, 1e5, 1e6):
        base = Scenario(lam, path_loss_model=DS, trials=n, master_seed=105)
        region = window_for(base).radius_km
        from udnlab.pointprocess import Region
        c_ds = direct(run_trials(base.replace(region=Region(region)))).probability
        nf = base.replace(path_loss_model=PathLossModel.near_field(1.0), region=Region(region))
        c_nf = direct(run_trials(nf)).probability
        rel[lam] = abs(c_nf - c_ds) / c_ds
    ok = (all(rel[k] < 0.01 for k in (1e2, 1e3, 1e4)) and rel[1e5] <= 0.05 and rel[1e6] > 0.05)
    detail = ", ".join(f"{k:g}: {100 * v:.2f}%" for k, v in rel.items())
    assert report(5, ok, f"relative coverage gap near-field vs dual-slope: {detail} "
                         f"(need < 1% up to 1e4, <= 5% at 1e5, > 5% at 1e6)"
                         + ("" if ok else "; model note: the independent PGFL integrator gives "
                            "1.61% at 1e4 and 62.9% at 1e5 for a 1 m distance cap"))


def test_c6_constant_scaling_law():
    n = 100_000
    out = {}
    for lam in (1e5, 1e6):
        scn = Scenario(lam, ue_density_per_km2=300.0, idle_mode=True, path_loss_model=HEIGHT,
                       trials=n, master_seed=106)
        b = run_trials(scn)
        out[lam] = (direct(b), b.ase())
    dc = abs(out[1e5][0].probability - out[1e6][0].probability)
    a5, a6 = out[1e5][1].ase_bps_hz_km2, out[1e6][1].ase_bps_hz_km2
    da = abs(a5 - a6) / a6
    ok = dc <= 0.02 and da <= 0.05
    assert report(6, ok, f"coverage 1e5 {out[1e5][0].probability:.4f}, 1e6 {out[1e6][0].probability:.4f} "
                         f"(|diff| {dc:.4f} <= 0.02); ASE 1e5 {a5:.1f}, 1e6 {a6:.1f} "
                         f"(rel diff {100 * da:.2f}% <= 5%); active density "
                         f"{out[1e5][1].active_bs_density_per_km2:.1f}, {out[1e6][1].active_bs_density_per_km2:.1f}")


def _imc(trials, seed):
    return Scenario(1e4, ue_density_per_km2=300.0, idle_mode=True, path_loss_model=HEIGHT,
                    trials=trials, master_seed=seed)


def test_c7_optima():
    lines, soft_ok, hard_ok = [], True, True
    ue_grid = log_grid(2e2, 4e3, 8)
    for lam, lo, hi, ref_rho, ref_ase in ((1e6, 500, 1200, 803.6, 928.2),
                                              (1e4, 400, 1000, 655.4, 753.6)):
        r = optimize_ue_density(lam, _imc(5000, 107), ue_grid)
        pts = r.points()
        uni = is_unimodal([p.ase.ase_bps_hz_km2 for p in pts], [p.ase.ci95_halfwidth for p in pts])
        in_rho = lo <= r.optimum_density <= hi
        in_ase = abs(r.peak_ase / ref_ase - 1) <= 0.20
        soft_ok &= in_rho and in_ase
        hard_ok &= uni
        lines.append(f"lambda={lam:g}: rho*={r.optimum_density:.0f} ([{lo}, {hi}], reference {ref_rho}) "
                     f"peak ASE {r.peak_ase:.1f} (reference {ref_ase} +- 20%), unimodal={uni}")
    r = optimize_bs_density(300.0, 0.05, _imc(10_000, 108), log_grid(1e3, 1e6, 5))
    in_lam = 33420 / 3 <= r.optimum_density <= 33420 * 3
    in_peak = abs(r.peak_ase / 784.4 - 1) <= 0.20
    # plateau: ASE at the top of the grid stays within 5% of the peak
    top = max(r.points(), key=lambda p: p.density)
    plateau = top.ase.ase_bps_hz_km2 >= 0.95 * r.peak_ase
    soft_ok &= in_lam and in_peak
    hard_ok &= plateau
    lines.append(f"rho=300: lambda*={r.optimum_density:.0f} (33420 x/ 3) peak ASE {r.peak_ase:.1f} "
                 f"(784.4 +- 20%), plateau={plateau}")
    assert report(7, soft_ok and hard_ok, "; ".join(lines))


def test_c8_structural_properties(tmp_path):
    checks = {}
    scn = Scenario(3e3, ue_density_per_km2=300.0, idle_mode=True, path_loss_model=HEIGHT, trials=1)
    bounded = True
    for seed in range(30):
        _, dep = sample_deployment(scn.replace(bs_density_per_km2=[3e2, 3e3, 3e4][seed % 3]),
                                   np.random.default_rng(seed))
        bounded &= int(dep.active.sum()) <= min(dep.bs_points.shape[0], dep.ue_points.shape[0])
    checks["active <= min(BS, UE)"] = bounded
    b = run_trials(Scenario(1e3, trials=3000, master_seed=8))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        probs = [b.coverage(t).probability for t in np.linspace(-30, 40, 71)]
    checks["coverage in [0,1], non-increasing in threshold"] = (
        all(0 <= p <= 1 for p in probs) and all(x >= y for x, y in zip(probs, probs[1:])))
    r = np.geomspace(1e-6, 100.0, 200_001)
    p = los_probability(r)
    checks["LoS probability in [0,1], non-increasing"] = bool(np.all((p >= 0) & (p <= 1))
                                                            and np.all(np.diff(p) <= 0))
    rr = np.geomspace(0.0032, 100.0, 100_001)
    checks["PL_NLoS >= PL_LoS from 3.2 m"] = bool(np.all(path_loss_db(rr, False, DS)
                                                         >= path_loss_db(rr, True, DS)))
    outs = []
    for w in ("1", "4"):
        out = tmp_path / f"w{w}.csv"
        cli.main(["sweep", "--bs-density-min", "100", "--bs-density-max", "1e4",
                  "--points-per-decade", "1", "--trials", "300", "--seed", "7", "--workers", w,
                  "--out", str(out)])
        outs.append(out.read_bytes())
    checks["byte-identical CSV for --workers 1 and 4"] = outs[0] == outs[1] and len(outs[0]) > 0
    ok = all(checks.values())
    assert report(8, ok, "; ".join(f"{k}: {'ok' if v else 'VIOLATED'}" for k, v in checks.items()))


def test_c9_activation():
    v = empirical_activation(300.0, 300.0, 10_000, rng=109)
    ok = abs(v - 0.576) <= 0.03
    assert report(9, ok, f"empirical activation at lambda=rho: {v:.4f} (0.576 +- 0.03; "
                         f"q=3.5 formula evaluates to {1 - (1 + 1 / 3.5) ** -3.5:.4f})")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
